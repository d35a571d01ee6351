//! Quadrature rules over intervals and convex polygons.
//!
//! Two boundary treatments coexist on purpose:
//!
//! * `SinSquared` composes Gauss-Legendre with s = sin^2(theta), clustering
//!   nodes near the boundary. Section weights vanish like l^k at a facet, so
//!   this map is what makes high-k norms converge.
//! * `Plain` keeps the affine Gauss-Legendre rule. Curvature integrands are
//!   analytic up to the boundary but their pointwise evaluation loses all
//!   precision within ~1e-7 of a slanted facet (catastrophic cancellation in
//!   the inverse-Hessian assembly), so curvature integrals must keep their
//!   nodes away from facets. Plain Gauss nodes sit >= O(1/m^2) inside.
//!
//! Polygons are integrated by decomposing into horizontal slabs with affine
//! left/right bounds, a product rule per slab.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Accurate to machine precision for m <= a few thousand.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // p0, p1 walk the three-term recurrence up to degree m.
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x.abs();
        weights[i] = w;
        nodes[m - 1 - i] = x.abs();
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// How 1D panels treat the interval endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMap {
    /// Affine Gauss-Legendre; nodes stay O(1/m^2) from the endpoints.
    Plain,
    /// s = sin^2(theta) substitution; nodes cluster like 1/m^2 toward both
    /// endpoints with weights vanishing there, resolving l^k vanishing.
    SinSquared,
}

/// Nodes and weights for integral over [0, 1] under the chosen map.
pub fn unit_rule(m: usize, map: BoundaryMap) -> (Vec<f64>, Vec<f64>) {
    let (t, wt) = gauss_legendre(m);
    match map {
        BoundaryMap::Plain => (
            t.iter().map(|&x| 0.5 * (x + 1.0)).collect(),
            wt.iter().map(|&w| 0.5 * w).collect(),
        ),
        BoundaryMap::SinSquared => {
            let mut s = Vec::with_capacity(m);
            let mut w = Vec::with_capacity(m);
            for i in 0..m {
                let th = (t[i] + 1.0) * PI / 4.0;
                s.push(th.sin() * th.sin());
                w.push(wt[i] * (PI / 4.0) * (2.0 * th).sin());
            }
            (s, w)
        }
    }
}

/// Horizontal slab of a convex polygon: y in [y0, y1], x in [lo(y), hi(y)]
/// with affine bounds lo(y) = lo0 + lo1*y, hi(y) = hi0 + hi1*y.
#[derive(Debug, Clone, Copy)]
pub struct AffineSlab {
    pub y0: f64,
    pub y1: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl AffineSlab {
    fn lo_at(&self, y: f64) -> f64 {
        self.lo[0] + self.lo[1] * y
    }
    fn hi_at(&self, y: f64) -> f64 {
        self.hi[0] + self.hi[1] * y
    }
}

/// A discrete measure: nodes with positive weights, dim 1 or 2.
/// For dim 1 the second coordinate is identically zero.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub dim: usize,
    /// Panel order used to build the rule; refinement doubles this.
    pub order: usize,
    pub map: BoundaryMap,
}

impl Quadrature {
    pub fn interval(a: f64, b: f64, m: usize, map: BoundaryMap) -> Self {
        let (s, w) = unit_rule(m, map);
        let nodes = s.iter().map(|&si| [a + (b - a) * si, 0.0]).collect();
        let weights = w.iter().map(|&wi| (b - a) * wi).collect();
        Quadrature {
            nodes,
            weights,
            dim: 1,
            order: m,
            map,
        }
    }

    /// Product rule over horizontal slabs; m nodes per axis per slab.
    pub fn from_slabs(slabs: &[AffineSlab], m: usize, map: BoundaryMap) -> Self {
        let (s, ws) = unit_rule(m, map);
        let mut nodes = Vec::with_capacity(slabs.len() * m * m);
        let mut weights = Vec::with_capacity(slabs.len() * m * m);
        for slab in slabs {
            let dy = slab.y1 - slab.y0;
            for j in 0..m {
                let y = slab.y0 + dy * s[j];
                let (a, b) = (slab.lo_at(y), slab.hi_at(y));
                let dx = b - a;
                if dx <= 0.0 {
                    continue;
                }
                for i in 0..m {
                    nodes.push([a + dx * s[i], y]);
                    weights.push(dx * ws[i] * dy * ws[j]);
                }
            }
        }
        Quadrature {
            nodes,
            weights,
            dim: 2,
            order: m,
            map,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Integrate with one refinement (order doubled) and insist the two values
/// agree to `rel_tol` relative to scale max(1, |fine|).
pub fn integrate_checked(
    build: impl Fn(usize) -> Quadrature,
    f: impl Fn([f64; 2]) -> f64,
    m: usize,
    rel_tol: f64,
    context: &str,
) -> Result<f64> {
    let coarse = build(m).integrate(&f);
    let fine = build(2 * m).integrate(&f);
    let scale = fine.abs().max(1.0);
    if (coarse - fine).abs() > rel_tol * scale {
        return Err(Error::QuadratureFailure {
            context: context.to_string(),
            coarse,
            fine,
        });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        // Degree 2m-1 exactness: integrate x^9 over [-1,1] with m = 5.
        let (x, w) = gauss_legendre(5);
        let val: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(8)).sum();
        assert_relative_eq!(val, 2.0 / 9.0, max_relative = 1e-14);
        let odd: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(9)).sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn sin_squared_map_handles_endpoint_singularity() {
        // int_0^1 s^20 (1-s)^20 ds = B(21,21) = (20!)^2/41!, exact rational.
        let fact = |n: u32| (1..=n as u128).map(|i| i as f64).product::<f64>();
        let exact = fact(20) * fact(20) / fact(41);
        let q = Quadrature::interval(0.0, 1.0, 48, BoundaryMap::SinSquared);
        let val = q.integrate(|p| p[0].powi(20) * (1.0 - p[0]).powi(20));
        assert_relative_eq!(val, exact, max_relative = 1e-12);
    }

    #[test]
    fn slab_rule_integrates_monomials_over_trapezoid() {
        // Trapezoid y in [0,1], x in [0, 2-y]: area 3/2, int x dA = 7/6.
        let slab = AffineSlab {
            y0: 0.0,
            y1: 1.0,
            lo: [0.0, 0.0],
            hi: [2.0, -1.0],
        };
        for map in [BoundaryMap::Plain, BoundaryMap::SinSquared] {
            let q = Quadrature::from_slabs(&[slab], 32, map);
            assert_relative_eq!(q.total_weight(), 1.5, max_relative = 1e-12);
            assert_relative_eq!(q.integrate(|p| p[0]), 7.0 / 6.0, max_relative = 1e-11);
        }
    }

    #[test]
    fn refinement_check_flags_disagreement() {
        // x^30 is exact for the 16-point rule but not the 8-point rule, so
        // the two refinements must visibly disagree and trip the check.
        let res = integrate_checked(
            |m| Quadrature::interval(0.0, 1.0, m, BoundaryMap::Plain),
            |p| p[0].powi(30),
            8,
            1e-12,
            "stiff monomial",
        );
        assert!(matches!(res, Err(Error::QuadratureFailure { .. })));
        // The same integrand passes once the coarse rule is itself exact.
        let ok = integrate_checked(
            |m| Quadrature::interval(0.0, 1.0, m, BoundaryMap::Plain),
            |p| p[0].powi(30),
            16,
            1e-12,
            "stiff monomial",
        );
        assert!((ok.unwrap() - 1.0 / 31.0).abs() < 1e-15);
    }
}
