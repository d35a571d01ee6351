//! Symplectic potentials on moment polytopes.
//!
//! u(x) = u_G(x) + p(x), where u_G = 1/2 sum_i l_i log l_i is the Guillemin
//! potential of the polytope and p is a smooth polynomial perturbation. The
//! toric metric is the Hessian G = D^2 u on the interior; admissibility is
//! strict convexity plus the fixed boundary behaviour carried by u_G.
//!
//! Derivatives are needed through fourth order: the scalar curvature of the
//! associated Kahler metric is second derivatives of the inverse Hessian.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::polytope::DelzantPolytope;

/// Dense small tensors over the active dimension; unused slots stay zero.
pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];
pub type Ten3 = [[[f64; 2]; 2]; 2];
pub type Ten4 = [[[[f64; 2]; 2]; 2]; 2];

#[derive(Debug, Clone)]
pub struct SymplecticPotential {
    pub polytope: DelzantPolytope,
    /// Monomial perturbation: (i, j) -> coefficient of x^i y^j.
    pub poly: BTreeMap<(u32, u32), f64>,
}

impl SymplecticPotential {
    /// The canonical Guillemin potential of the polytope.
    pub fn guillemin(polytope: DelzantPolytope) -> Self {
        SymplecticPotential {
            polytope,
            poly: BTreeMap::new(),
        }
    }

    pub fn with_polynomial(polytope: DelzantPolytope, poly: BTreeMap<(u32, u32), f64>) -> Self {
        SymplecticPotential { polytope, poly }
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim
    }

    /// Evaluate the perturbation differentiated along the axes in `dx`.
    fn poly_deriv(&self, x: Vec2, dx: &[usize]) -> f64 {
        let mut out = 0.0;
        'mono: for (&(i, j), &c) in &self.poly {
            let mut exp = [i as i64, j as i64];
            let mut coef = c;
            for &axis in dx {
                if exp[axis] == 0 {
                    continue 'mono;
                }
                coef *= exp[axis] as f64;
                exp[axis] -= 1;
            }
            out += coef * x[0].powi(exp[0] as i32) * x[1].powi(exp[1] as i32);
        }
        out
    }

    pub fn value(&self, x: Vec2) -> f64 {
        let guillemin: f64 = self
            .polytope
            .facet_values(x)
            .iter()
            .map(|&l| 0.5 * l * l.ln())
            .sum();
        guillemin + self.poly_deriv(x, &[])
    }

    pub fn gradient(&self, x: Vec2) -> Vec2 {
        let ells = self.polytope.facet_values(x);
        let mut g = [0.0; 2];
        for (n, &l) in self.polytope.normals.iter().zip(&ells) {
            let factor = 0.5 * (l.ln() + 1.0);
            g[0] += factor * n[0] as f64;
            g[1] += factor * n[1] as f64;
        }
        for a in 0..self.dim() {
            g[a] += self.poly_deriv(x, &[a]);
        }
        g
    }

    pub fn hessian(&self, x: Vec2) -> Mat2 {
        let ells = self.polytope.facet_values(x);
        let mut h = [[0.0; 2]; 2];
        for (n, &l) in self.polytope.normals.iter().zip(&ells) {
            for a in 0..self.dim() {
                for b in 0..self.dim() {
                    h[a][b] += 0.5 * n[a] as f64 * n[b] as f64 / l;
                }
            }
        }
        for a in 0..self.dim() {
            for b in 0..self.dim() {
                h[a][b] += self.poly_deriv(x, &[a, b]);
            }
        }
        h
    }

    pub fn third(&self, x: Vec2) -> Ten3 {
        let ells = self.polytope.facet_values(x);
        let mut t = [[[0.0; 2]; 2]; 2];
        for (n, &l) in self.polytope.normals.iter().zip(&ells) {
            let nf = [n[0] as f64, n[1] as f64];
            for a in 0..self.dim() {
                for b in 0..self.dim() {
                    for c in 0..self.dim() {
                        t[a][b][c] += -0.5 * nf[a] * nf[b] * nf[c] / (l * l);
                    }
                }
            }
        }
        for a in 0..self.dim() {
            for b in 0..self.dim() {
                for c in 0..self.dim() {
                    t[a][b][c] += self.poly_deriv(x, &[a, b, c]);
                }
            }
        }
        t
    }

    pub fn fourth(&self, x: Vec2) -> Ten4 {
        let ells = self.polytope.facet_values(x);
        let mut q = [[[[0.0; 2]; 2]; 2]; 2];
        for (n, &l) in self.polytope.normals.iter().zip(&ells) {
            let nf = [n[0] as f64, n[1] as f64];
            for a in 0..self.dim() {
                for b in 0..self.dim() {
                    for c in 0..self.dim() {
                        for d in 0..self.dim() {
                            q[a][b][c][d] += nf[a] * nf[b] * nf[c] * nf[d] / (l * l * l);
                        }
                    }
                }
            }
        }
        for a in 0..self.dim() {
            for b in 0..self.dim() {
                for c in 0..self.dim() {
                    for d in 0..self.dim() {
                        q[a][b][c][d] += self.poly_deriv(x, &[a, b, c, d]);
                    }
                }
            }
        }
        q
    }

    /// Moment-to-complex Legendre map y = grad u (per angular sector).
    pub fn legendre(&self, x: Vec2) -> Vec2 {
        self.gradient(x)
    }

    /// Strict convexity probe on an interior grid: every leading minor of
    /// the Hessian must be positive at each sample point.
    pub fn convexity_check(&self, delta: f64, per_axis: usize) -> Result<()> {
        for x in self.polytope.interior_grid(delta, per_axis) {
            let h = self.hessian(x);
            let minors = if self.dim() == 1 {
                [h[0][0], 1.0]
            } else {
                [h[0][0], h[0][0] * h[1][1] - h[0][1] * h[1][0]]
            };
            if minors[0] <= 0.0 || minors[1] <= 0.0 {
                return Err(Error::ConvexityFailure { x, minors });
            }
        }
        Ok(())
    }
}

/// Product of sparse polynomials in the monomial basis.
fn poly_mul(
    a: &BTreeMap<(u32, u32), f64>,
    b: &BTreeMap<(u32, u32), f64>,
) -> BTreeMap<(u32, u32), f64> {
    let mut out = BTreeMap::new();
    for (&(i, j), &ca) in a {
        for (&(p, q), &cb) in b {
            *out.entry((i + p, j + q)).or_insert(0.0) += ca * cb;
        }
    }
    out
}

/// Seeded random admissible potential: Guillemin plus (prod_i l_i)^2 q with
/// q a random quadratic of the given amplitude. The squared facet product
/// vanishes to second order on the boundary, so the Guillemin asymptotics
/// survive; convexity is probed on an interior grid and the amplitude is
/// halved on failure, at most eight times.
pub fn random_admissible(
    polytope: DelzantPolytope,
    seed: u64,
    amplitude: f64,
) -> Result<SymplecticPotential> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);

    let mut bump = BTreeMap::from([((0, 0), 1.0)]);
    for (n, c) in polytope.normals.iter().zip(&polytope.offsets) {
        let ell = BTreeMap::from([
            ((0, 0), crate::exact::rat_to_f64(c)),
            ((1, 0), n[0] as f64),
            ((0, 1), n[1] as f64),
        ]);
        bump = poly_mul(&bump, &ell);
    }
    bump = poly_mul(&bump, &bump);

    let monomials: &[(u32, u32)] = if polytope.dim == 1 {
        &[(0, 0), (1, 0), (2, 0)]
    } else {
        &[(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    };
    let mut quad = BTreeMap::new();
    for &m in monomials {
        quad.insert(m, amplitude * rng.gen_range(-1.0..1.0));
    }
    let shape = poly_mul(&bump, &quad);

    let mut scale = 1.0;
    for attempt in 0..=8 {
        let poly: BTreeMap<(u32, u32), f64> =
            shape.iter().map(|(&m, &c)| (m, scale * c)).collect();
        let pot = SymplecticPotential::with_polynomial(polytope.clone(), poly);
        match pot.convexity_check(0.02, 32) {
            Ok(()) => return Ok(pot),
            Err(e) if attempt == 8 => return Err(e),
            Err(_) => scale *= 0.5,
        }
    }
    unreachable!("convexity retry loop returns on the last attempt")
}

/// Invert the active block of a Hessian. Dim 1 inverts the scalar; dim 2
/// uses the adjugate. Fails on non-positive determinant.
pub fn invert_metric(h: &Mat2, dim: usize) -> Result<Mat2> {
    if dim == 1 {
        if h[0][0] <= 0.0 || !h[0][0].is_finite() {
            return Err(Error::SingularMetric(format!("G00 = {}", h[0][0])));
        }
        let mut u = [[0.0; 2]; 2];
        u[0][0] = 1.0 / h[0][0];
        return Ok(u);
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if det <= 0.0 || !det.is_finite() {
        return Err(Error::SingularMetric(format!("det G = {det}")));
    }
    Ok([
        [h[1][1] / det, -h[0][1] / det],
        [-h[1][0] / det, h[0][0] / det],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polytope::{hirzebruch_surface, projective_line};
    use approx::assert_relative_eq;

    fn fd_gradient(pot: &SymplecticPotential, x: Vec2, h: f64) -> Vec2 {
        let mut g = [0.0; 2];
        for a in 0..pot.dim() {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            g[a] = (pot.value(xp) - pot.value(xm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut poly = BTreeMap::new();
        poly.insert((2, 1), 0.05);
        poly.insert((0, 3), -0.02);
        let pot = SymplecticPotential::with_polynomial(hirzebruch_surface(), poly);
        let x = [0.7, 0.4];
        let h = 1e-5;
        let g = pot.gradient(x);
        let gfd = fd_gradient(&pot, x, h);
        for a in 0..2 {
            assert_relative_eq!(g[a], gfd[a], max_relative = 1e-8);
        }
        // Hessian vs differenced gradient.
        let hess = pot.hessian(x);
        for b in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += h;
            xm[b] -= h;
            let gp = pot.gradient(xp);
            let gm = pot.gradient(xm);
            for a in 0..2 {
                assert_relative_eq!(
                    hess[a][b],
                    (gp[a] - gm[a]) / (2.0 * h),
                    max_relative = 1e-7
                );
            }
        }
        // Third and fourth vs differenced Hessian / third.
        let t = pot.third(x);
        let q = pot.fourth(x);
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let hp = pot.hessian(xp);
            let hm = pot.hessian(xm);
            let tp = pot.third(xp);
            let tm = pot.third(xm);
            for a in 0..2 {
                for b in 0..2 {
                    assert_relative_eq!(
                        t[a][b][c],
                        (hp[a][b] - hm[a][b]) / (2.0 * h),
                        max_relative = 1e-6
                    );
                    assert_relative_eq!(
                        q[a][b][c][c],
                        (tp[a][b][c] - tm[a][b][c]) / (2.0 * h),
                        epsilon = 1e-4,
                        max_relative = 1e-5
                    );
                }
            }
        }
    }

    #[test]
    fn guillemin_is_convex_and_soft_perturbation_stays_convex() {
        SymplecticPotential::guillemin(hirzebruch_surface())
            .convexity_check(1e-3, 41)
            .unwrap();
        let mut poly = BTreeMap::new();
        poly.insert((2, 0), 0.05);
        SymplecticPotential::with_polynomial(hirzebruch_surface(), poly)
            .convexity_check(1e-3, 41)
            .unwrap();
    }

    #[test]
    fn violent_perturbation_fails_convexity() {
        let mut poly = BTreeMap::new();
        poly.insert((2, 0), -5.0);
        let err = SymplecticPotential::with_polynomial(projective_line(), poly)
            .convexity_check(0.05, 31)
            .unwrap_err();
        assert!(matches!(err, Error::ConvexityFailure { .. }));
    }

    #[test]
    fn legendre_map_is_monotone_on_the_interval() {
        let pot = SymplecticPotential::guillemin(projective_line());
        let mut last = f64::NEG_INFINITY;
        for i in 1..20 {
            let x = [i as f64 / 20.0, 0.0];
            let y = pot.legendre(x)[0];
            assert!(y > last);
            last = y;
        }
    }
}
