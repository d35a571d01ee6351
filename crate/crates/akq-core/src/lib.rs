//! Numerical geometric quantization on model manifolds.
//!
//! The pipeline quantizes compact symplectic manifolds given by moment
//! polytopes (toric) or flat tori, producing for each level k:
//!
//! * the quantum space H_k with its natural L^2 inner product,
//! * the Bergman density and its large-k expansion coefficients,
//! * the projective embedding by sections and its pulled-back geometry,
//! * exact weight-matrix invariants of torus actions (traces, Futaki-type
//!   obstruction, norms), and
//! * degeneration flows t -> f(t) along one-parameter subgroups, assembled
//!   into lower bounds for the L^2 distance from curvature to its mean.
//!
//! Exact rational arithmetic backs every quantity that is a polynomial in k;
//! floating point enters only through quadrature and eigensolves, and each
//! floating path is tested against a rational oracle.

pub mod bergman;
pub mod degeneration;
pub mod embed;
pub mod error;
pub mod exact;
pub mod geom;
pub mod invariants;
pub mod quad;
pub mod quantize;

pub use error::{Error, Result};
