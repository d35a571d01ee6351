//! Quantum spaces of toric manifolds via peak sections.
//!
//! On a toric manifold the k-th quantum space has a canonical basis indexed
//! by lattice points lambda of kP. In symplectic coordinates the squared
//! pointwise norm of the lambda-section is
//!
//!   w_lambda(x) = exp(2[k u(x) + <lambda - k x, grad u(x)>]),
//!
//! and the L^2 norm is ||s_lambda||^2 = k^n int_P w_lambda dx (fiber angle
//! measure normalized to 1, volume measure (k omega)^n/n! <-> k^n dx).
//! Distinct lattice points are exactly orthogonal by angular integration, so
//! the Gram matrix is diagonal and orthonormalization is a rescaling.
//!
//! Everything is held in log scale: w_lambda spans thousands of orders of
//! magnitude at moderate k, but log w is affine in lambda and smooth in x.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::rat_to_f64;
use crate::geom::potential::SymplecticPotential;
use crate::quad::{BoundaryMap, Quadrature};

/// log(sum exp(v)) with max subtraction; -inf on empty.
pub fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return f64::NEG_INFINITY;
    }
    mx + v.map(|x| (x - mx).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone)]
pub struct ToricQuantumSpace {
    pub potential: SymplecticPotential,
    pub k: u32,
    pub quad: Quadrature,
    /// Lattice points of kP: the section labels.
    pub lattice: Vec<[i64; 2]>,
    /// log w_lambda at each quadrature node; one row per lattice point.
    pub log_weights: Vec<Vec<f64>>,
    /// log ||s_lambda||^2, including the k^n volume factor.
    pub log_norms2: Vec<f64>,
}

impl ToricQuantumSpace {
    /// Build with an m-point-per-axis boundary-clustered rule.
    pub fn new(potential: SymplecticPotential, k: u32, m: usize) -> Result<Self> {
        let quad = section_rule(&potential, m);
        Self::with_rule(potential, k, quad)
    }

    pub fn with_rule(potential: SymplecticPotential, k: u32, quad: Quadrature) -> Result<Self> {
        let lattice = potential.polytope.lattice_points(k);
        if lattice.is_empty() {
            return Err(Error::IncompleteBasis(format!(
                "no lattice points in {k}P"
            )));
        }
        let node_data: Vec<([f64; 2], f64)> = quad
            .nodes
            .iter()
            .map(|&x| {
                let u = potential.value(x);
                let gu = potential.gradient(x);
                // Per-node part of log w: 2k(u - <x, grad u>); the lambda
                // part 2<lambda, grad u> is added per section.
                (gu, 2.0 * k as f64 * (u - (x[0] * gu[0] + x[1] * gu[1])))
            })
            .collect();
        let dim_factor = potential.dim() as f64;
        let log_weights: Vec<Vec<f64>> = lattice
            .par_iter()
            .map(|lam| {
                node_data
                    .iter()
                    .map(|(gu, base)| {
                        base + 2.0 * (lam[0] as f64 * gu[0] + lam[1] as f64 * gu[1])
                    })
                    .collect()
            })
            .collect();
        let log_k_vol = dim_factor * (k as f64).ln();
        let mut log_norms2 = Vec::with_capacity(lattice.len());
        for (li, row) in log_weights.iter().enumerate() {
            let ln = log_k_vol
                + log_sum_exp(
                    row.iter()
                        .zip(&quad.weights)
                        .map(|(lw, w)| lw + w.ln()),
                );
            if !ln.is_finite() {
                let worst = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                return Err(Error::UnderflowAtNode {
                    node: quad.nodes[worst],
                    log_weight: row[worst],
                });
            }
            let _ = li;
            log_norms2.push(ln);
        }
        Ok(ToricQuantumSpace {
            potential,
            k,
            quad,
            lattice,
            log_weights,
            log_norms2,
        })
    }

    /// Number of sections, N + 1.
    pub fn dim(&self) -> usize {
        self.lattice.len()
    }

    /// log of the normalized profile w_lambda / ||s_lambda||^2 at the nodes.
    pub fn log_profile(&self, li: usize) -> impl Iterator<Item = f64> + '_ {
        self.log_weights[li]
            .iter()
            .map(move |lw| lw - self.log_norms2[li])
    }

    /// log w_lambda at an arbitrary interior point, all sections at once.
    pub fn log_weights_at(&self, x: [f64; 2]) -> Vec<f64> {
        let u = self.potential.value(x);
        let gu = self.potential.gradient(x);
        let base = 2.0 * self.k as f64 * (u - (x[0] * gu[0] + x[1] * gu[1]));
        self.lattice
            .iter()
            .map(|lam| base + 2.0 * (lam[0] as f64 * gu[0] + lam[1] as f64 * gu[1]))
            .collect()
    }

    /// Bergman density at an arbitrary interior point.
    pub fn bergman_at(&self, x: [f64; 2]) -> f64 {
        let lw = self.log_weights_at(x);
        log_sum_exp(
            lw.iter()
                .zip(&self.log_norms2)
                .map(|(w, n)| w - n),
        )
        .exp()
    }

    /// Bergman density at every quadrature node.
    pub fn bergman_at_nodes(&self) -> Vec<f64> {
        (0..self.quad.len())
            .into_par_iter()
            .map(|j| {
                log_sum_exp(
                    (0..self.dim()).map(|li| self.log_weights[li][j] - self.log_norms2[li]),
                )
                .exp()
            })
            .collect()
    }

    /// Exact norms oracle check for the round line: on [0,1] at level k the
    /// section norms are the Bernstein integrals k j!(k-j)!/(k+1)!.
    pub fn norm2(&self, li: usize) -> f64 {
        self.log_norms2[li].exp()
    }

    /// Rebuild on a doubled rule and compare section norms; disagreement
    /// means the rule has not resolved the sharpest section profile.
    pub fn verify_norm_convergence(&self, rel_tol: f64) -> Result<()> {
        let fine = ToricQuantumSpace::new(
            self.potential.clone(),
            self.k,
            self.quad.order * 2,
        )?;
        for (li, (a, b)) in self
            .log_norms2
            .iter()
            .zip(&fine.log_norms2)
            .enumerate()
        {
            if (a - b).abs() > rel_tol {
                return Err(Error::QuadratureFailure {
                    context: format!(
                        "norm of section {:?} (index {li}) unconverged",
                        self.lattice[li]
                    ),
                    coarse: *a,
                    fine: *b,
                });
            }
        }
        Ok(())
    }
}

/// Boundary-clustered product rule sized for section-weight integrands.
pub fn section_rule(potential: &SymplecticPotential, m: usize) -> Quadrature {
    let p = &potential.polytope;
    if p.dim == 1 {
        let v = p.vertices();
        Quadrature::interval(
            rat_to_f64(&v[0][0]),
            rat_to_f64(&v[1][0]),
            m,
            BoundaryMap::SinSquared,
        )
    } else {
        Quadrature::from_slabs(&p.slabs(), m, BoundaryMap::SinSquared)
    }
}
