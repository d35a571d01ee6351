//! Quantum spaces H_k by two interchangeable backends: exact toric section
//! bases with quadrature norms, and sparse magnetic lattice Laplacians with
//! low-eigencluster extraction.

pub mod container;
pub mod eigen;
pub mod spectral;
pub mod toric;

pub use container::{load, save, QuantumSpaceRecord};
pub use eigen::{dense_low_eigen, lobpcg, CsrHermitian, EigenPairs};
pub use spectral::{
    assemble_laplacian, dim_count, landau_links, low_cluster, rephased_problem,
    resolution_adequate, LinkField, SpectralCluster, SpectralProblem, SpectralQuantumSpace,
};
pub use toric::{log_sum_exp, section_rule, ToricQuantumSpace};

use num::rational::BigRational;

use crate::error::Result;
use crate::exact::{interpolate_integer_samples, rat_int, RationalPoly};
use crate::geom::polytope::DelzantPolytope;

/// Ehrhart polynomial of the polytope: the exact lattice count of kP as a
/// degree-n polynomial in k, interpolated from n+1 counts and usable as a
/// dimension oracle at any level.
pub fn ehrhart_polynomial(polytope: &DelzantPolytope) -> Result<RationalPoly> {
    let n = polytope.dim;
    let ks: Vec<i64> = (1..=(n as i64 + 1)).collect();
    let values: Vec<BigRational> = ks
        .iter()
        .map(|&k| rat_int(polytope.lattice_points(k as u32).len() as i64))
        .collect();
    interpolate_integer_samples(&ks, &values, n, "Ehrhart polynomial")
}
