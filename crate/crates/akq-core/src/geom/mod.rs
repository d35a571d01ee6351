//! Model geometries: moment polytopes, symplectic potentials, curvature,
//! and Hamiltonians of torus actions.

pub mod curvature;
pub mod hamiltonian;
pub mod polytope;
pub mod potential;

pub use curvature::{abreu_scalar, curvature_rule, ScalarCurvatureSamples};
pub use hamiltonian::Hamiltonian;
pub use polytope::DelzantPolytope;
pub use potential::{invert_metric, SymplecticPotential};

use crate::error::{Error, Result};

/// Sanity check of the metric data on an interior sample: the Hessian must
/// be symmetric, positive definite, and consistent with its inverse. Numbers
/// here are conditioning guards, not discretization tolerances.
pub fn metric_compatibility_check(pot: &SymplecticPotential, delta: f64, per_axis: usize) -> Result<()> {
    let dim = pot.dim();
    for x in pot.polytope.interior_grid(delta, per_axis) {
        let g = pot.hessian(x);
        if (g[0][1] - g[1][0]).abs() > 1e-12 * (1.0 + g[0][1].abs()) {
            return Err(Error::SingularMetric(format!(
                "asymmetric Hessian at {x:?}: {} vs {}",
                g[0][1], g[1][0]
            )));
        }
        let u = invert_metric(&g, dim)?;
        // || U G - I ||_max over the active block.
        let mut err: f64 = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                let mut s = 0.0;
                for c in 0..dim {
                    s += u[a][c] * g[c][b];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                err = err.max((s - target).abs());
            }
        }
        if err > 1e-9 {
            return Err(Error::SingularMetric(format!(
                "inverse inconsistency {err:.3e} at {x:?}"
            )));
        }
    }
    Ok(())
}
