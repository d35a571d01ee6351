//! Scalar curvature of toric Kahler metrics in symplectic coordinates.
//!
//! With G = D^2 u and U = G^{-1}, the scalar curvature of the metric
//! determined by u is S(x) = -sum_{jk} d_j d_k U^{jk}, evaluated here from
//! third and fourth derivatives of u. Two structural facts serve as oracles:
//! S is constant (= 4/Vol-normalized values) for the round metrics, and
//! int_P S dx = 2 * lattice perimeter of P for every admissible potential.
//!
//! Numerical caveat, measured not guessed: assembling S at a point closer
//! than ~1e-7 to a slanted facet (normal with two nonzero entries) loses all
//! significant digits to cancellation between the inverse-Hessian terms,
//! while axis-aligned facets stay stable down to ~1e-10. Curvature integrals
//! therefore use plain Gauss-Legendre panels, whose nodes keep O(1/m^2)
//! clearance; S is analytic up to the boundary, so convergence is spectral.

use crate::error::Result;
use crate::exact::rat_to_f64;
use crate::geom::polytope::DelzantPolytope;
use crate::geom::potential::{invert_metric, Mat2, SymplecticPotential};
use crate::quad::{BoundaryMap, Quadrature};

fn mat_mul(a: &Mat2, b: &Mat2, dim: usize) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Abreu scalar curvature at an interior point.
pub fn abreu_scalar(pot: &SymplecticPotential, x: [f64; 2]) -> Result<f64> {
    let dim = pot.dim();
    let g = pot.hessian(x);
    let t = pot.third(x);
    let q = pot.fourth(x);
    let u = invert_metric(&g, dim)?;
    // d_j d_k U = -U (d_jk G) U + U (d_j G) U (d_k G) U + U (d_k G) U (d_j G) U
    let mut s = 0.0;
    for j in 0..dim {
        for k in 0..dim {
            let mut djk_g = [[0.0; 2]; 2];
            let mut dj_g = [[0.0; 2]; 2];
            let mut dk_g = [[0.0; 2]; 2];
            for a in 0..dim {
                for b in 0..dim {
                    djk_g[a][b] = q[a][b][j][k];
                    dj_g[a][b] = t[a][b][j];
                    dk_g[a][b] = t[a][b][k];
                }
            }
            let term1 = mat_mul(&mat_mul(&u, &djk_g, dim), &u, dim);
            let uju = mat_mul(&mat_mul(&u, &dj_g, dim), &u, dim);
            let uku = mat_mul(&mat_mul(&u, &dk_g, dim), &u, dim);
            let term2 = mat_mul(&uju, &mat_mul(&dk_g, &u, dim), dim);
            let term3 = mat_mul(&uku, &mat_mul(&dj_g, &u, dim), dim);
            s -= -term1[j][k] + term2[j][k] + term3[j][k];
        }
    }
    Ok(s)
}

/// Quadrature rule reserved for curvature integrands: plain panels so no
/// node enters the cancellation zone near the facets.
pub fn curvature_rule(polytope: &DelzantPolytope, m: usize) -> Quadrature {
    if polytope.dim == 1 {
        let v = polytope.vertices();
        Quadrature::interval(rat_to_f64(&v[0][0]), rat_to_f64(&v[1][0]), m, BoundaryMap::Plain)
    } else {
        Quadrature::from_slabs(&polytope.slabs(), m, BoundaryMap::Plain)
    }
}

/// Scalar curvature sampled on a curvature rule, with its basic integrals.
#[derive(Debug, Clone)]
pub struct ScalarCurvatureSamples {
    pub rule: Quadrature,
    pub values: Vec<f64>,
}

impl ScalarCurvatureSamples {
    pub fn new(pot: &SymplecticPotential, m: usize) -> Result<Self> {
        let rule = curvature_rule(&pot.polytope, m);
        let values: Result<Vec<f64>> =
            rule.nodes.iter().map(|&x| abreu_scalar(pot, x)).collect();
        Ok(ScalarCurvatureSamples {
            rule,
            values: values?,
        })
    }

    /// int_P S dx. Oracle: equals 2 * lattice perimeter for any potential.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.rule.weights)
            .map(|(s, w)| s * w)
            .sum()
    }

    /// Volume average S-bar.
    pub fn mean(&self) -> f64 {
        self.integral() / self.rule.total_weight()
    }

    /// L^2 norm of S - S-bar with respect to dx on P.
    pub fn l2_norm_centered(&self) -> f64 {
        let mean = self.mean();
        self.values
            .iter()
            .zip(&self.rule.weights)
            .map(|(s, w)| w * (s - mean) * (s - mean))
            .sum::<f64>()
            .sqrt()
    }

    /// L^2 norm of S - target for a given constant target.
    pub fn l2_norm_to(&self, target: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.rule.weights)
            .map(|(s, w)| w * (s - target) * (s - target))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polytope::{
        hirzebruch_surface, product_of_lines, projective_line, projective_plane,
    };
    use approx::assert_relative_eq;

    #[test]
    fn round_metrics_have_constant_curvature() {
        // Guillemin potential of [0,1] is the round sphere of area 1: S = 4.
        let pot = SymplecticPotential::guillemin(projective_line());
        for i in 1..=9 {
            let s = abreu_scalar(&pot, [i as f64 / 10.0, 0.0]).unwrap();
            assert_relative_eq!(s, 4.0, max_relative = 1e-11);
        }
        // Product of round lines: S = 4 + 4 = 8.
        let pot2 = SymplecticPotential::guillemin(product_of_lines());
        let s2 = abreu_scalar(&pot2, [0.3, 0.62]).unwrap();
        assert_relative_eq!(s2, 8.0, max_relative = 1e-10);
        // Fubini-Study on CP^2 (unit triangle): S = 12.
        let pot3 = SymplecticPotential::guillemin(projective_plane());
        let s3 = abreu_scalar(&pot3, [0.25, 0.4]).unwrap();
        assert_relative_eq!(s3, 12.0, max_relative = 1e-10);
    }

    #[test]
    fn curvature_integral_equals_twice_lattice_perimeter() {
        // Structural identity int_P S dx = 2 Per(P), potential-independent.
        let cases: Vec<(SymplecticPotential, f64)> = vec![
            (SymplecticPotential::guillemin(projective_line()), 4.0),
            (SymplecticPotential::guillemin(product_of_lines()), 8.0),
            (SymplecticPotential::guillemin(hirzebruch_surface()), 10.0),
            (
                {
                    let mut poly = std::collections::BTreeMap::new();
                    poly.insert((2, 1), 0.04);
                    poly.insert((3, 0), -0.02);
                    SymplecticPotential::with_polynomial(hirzebruch_surface(), poly)
                },
                10.0,
            ),
        ];
        for (pot, expect) in cases {
            let s = ScalarCurvatureSamples::new(&pot, 64).unwrap();
            assert_relative_eq!(s.integral(), expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn abreu_scalar_matches_finite_differences_of_inverse_hessian() {
        // Independent oracle: compute -d_j d_k U^{jk} by central differences.
        let mut poly = std::collections::BTreeMap::new();
        poly.insert((2, 2), 0.1);
        let pot = SymplecticPotential::with_polynomial(hirzebruch_surface(), poly);
        let x = [0.8, 0.35];
        let h = 1e-4;
        let u_at = |p: [f64; 2]| invert_metric(&pot.hessian(p), 2).unwrap();
        let mut fd = 0.0;
        for j in 0..2 {
            for k in 0..2 {
                let mut pts = [[x, x], [x, x]];
                pts[0][0][j] += h;
                pts[0][0][k] += h;
                pts[0][1][j] += h;
                pts[0][1][k] -= h;
                pts[1][0][j] -= h;
                pts[1][0][k] += h;
                pts[1][1][j] -= h;
                pts[1][1][k] -= h;
                let d2 = (u_at(pts[0][0])[j][k] - u_at(pts[0][1])[j][k]
                    - u_at(pts[1][0])[j][k]
                    + u_at(pts[1][1])[j][k])
                    / (4.0 * h * h);
                fd -= d2;
            }
        }
        let s = abreu_scalar(&pot, x).unwrap();
        assert_relative_eq!(s, fd, max_relative = 1e-5);
    }

    #[test]
    fn hirzebruch_guillemin_curvature_norm_is_pinned() {
        // ||S - S-bar||_{L^2} on the Hirzebruch surface, Guillemin metric.
        // Stable to 7 digits across panel orders 32..96.
        let pot = SymplecticPotential::guillemin(hirzebruch_surface());
        let s = ScalarCurvatureSamples::new(&pot, 48).unwrap();
        assert_relative_eq!(s.l2_norm_centered(), 1.6820355, max_relative = 1e-6);
        assert_relative_eq!(s.mean(), 20.0 / 3.0, max_relative = 1e-9);
    }
}
