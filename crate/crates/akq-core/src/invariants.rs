//! Torus-action weight matrices and the symplectic Futaki invariant.
//!
//! A lattice direction xi acts diagonally on H_k with the integer weights
//! -<xi, lambda> at the lattice points lambda of kP. Writing A_k for the
//! generator and A-bar_k for its trace-free part, the exact lattice traces
//! expand polynomially,
//!
//!   dim H_k   = a0 k^n     + a1 k^{n-1} + ...
//!   Tr(A_k)   = b0 k^{n+1} + b1 k^n     + ...
//!
//! and F = (a1/a0) b0 - b1 is the Futaki invariant of the action. The
//! quotient Tr(A-bar_k^2) = Tr(A_k^2) - Tr(A_k)^2 / dim H_k is rational in
//! k rather than polynomial, but its k^{n+2} limit coefficient ||chi||^2
//! is still exact once the three polynomial pieces are interpolated
//! separately. Every coefficient here is an exact rational number; floats
//! appear only in the curvature-quadrature oracle and in the final bound
//! -4 pi F / ||chi||, the destabilizing lower bound for the calibrated L^2
//! distance from the scalar curvature to its mean.

use num::rational::BigRational;
use num::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{interpolate_integer_samples, rat_int, rat_to_f64, rational_rel_gap};
use crate::geom::polytope::DelzantPolytope;
use crate::geom::{Hamiltonian, ScalarCurvatureSamples, SymplecticPotential};
use crate::quantize::ehrhart_polynomial;

/// Calibration constant relating the lattice trace expansion to curvature
/// quadrature: the k^n coefficient of Tr(A_k) equals -kappa int_P h S dx
/// with kappa = 1/4, fixed by the same convention measurement that pins
/// the curvature unit.
pub const KAPPA: f64 = 0.25;

/// Diagonal generator of a one-parameter subaction on H_k, in the lattice
/// basis. All traces are exact.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    pub k: u32,
    pub direction: [i64; 2],
    /// Integer weights -<xi, lambda> in the lexicographic lattice order.
    pub weights: Vec<i64>,
    pub trace: BigRational,
    /// Tr(A_k^2), the raw sum of squared weights.
    pub square_trace: BigRational,
    /// Tr(A-bar_k^2) of the trace-free part A - (Tr A / N) I.
    pub centered_square_trace: BigRational,
}

impl WeightMatrix {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Trace-free diagonal entries; they sum to zero exactly.
    pub fn centered_weights(&self) -> Vec<BigRational> {
        let mean = &self.trace / rat_int(self.dim() as i64);
        self.weights
            .iter()
            .map(|&w| rat_int(w) - &mean)
            .collect()
    }

    /// Frobenius norm of the trace-free part.
    pub fn centered_norm(&self) -> f64 {
        rat_to_f64(&self.centered_square_trace).sqrt()
    }

    /// The same action under a lift shifted by the integer constant c:
    /// every weight moves by c, the trace by c N, and the trace-free part
    /// not at all.
    pub fn lifted(&self, c: i64) -> WeightMatrix {
        let weights: Vec<i64> = self.weights.iter().map(|&w| w + c).collect();
        from_weights(self.k, self.direction, weights)
    }
}

fn from_weights(k: u32, direction: [i64; 2], weights: Vec<i64>) -> WeightMatrix {
    let trace: BigRational = weights.iter().map(|&w| rat_int(w)).sum();
    let square_trace: BigRational = weights.iter().map(|&w| rat_int(w * w)).sum();
    let n = rat_int(weights.len() as i64);
    let centered_square_trace = &square_trace - &trace * &trace / n;
    WeightMatrix {
        k,
        direction,
        weights,
        trace,
        square_trace,
        centered_square_trace,
    }
}

/// Weight matrix of a lattice direction at level k. The basis is the
/// lexicographically ordered lattice points of kP, matching the section
/// basis of the quantum space.
pub fn weight_matrix(polytope: &DelzantPolytope, direction: [i64; 2], k: u32) -> WeightMatrix {
    let weights: Vec<i64> = polytope
        .lattice_points(k)
        .into_iter()
        .map(|lam| -(direction[0] * lam[0] + direction[1] * lam[1]))
        .collect();
    from_weights(k, direction, weights)
}

/// Weight matrix of a rational direction num/den. Only integer directions
/// act on the quantum spaces; anything else is a lift obstruction.
pub fn weight_matrix_fraction(
    polytope: &DelzantPolytope,
    num: [i64; 2],
    den: i64,
    k: u32,
) -> Result<WeightMatrix> {
    let ham = Hamiltonian::from_fraction(polytope, num, den)?;
    Ok(weight_matrix(polytope, ham.direction, k))
}

/// Leading and subleading coefficients of Tr(A_k), exact.
#[derive(Debug, Clone)]
pub struct TraceCoefficients {
    pub b0: BigRational,
    pub b1: BigRational,
}

/// Interpolate Tr(A_k) over low levels and read off the two leading
/// coefficients. The degree must be exactly n+1, b0 must equal -int_P h dx,
/// and b1 must equal -1/2 int_dP h dsigma; any mismatch means the lattice
/// sums and the exact geometry disagree and is reported as an anomaly.
pub fn trace_coefficients(
    polytope: &DelzantPolytope,
    direction: [i64; 2],
) -> Result<TraceCoefficients> {
    if direction == [0, 0] {
        return Ok(TraceCoefficients {
            b0: BigRational::zero(),
            b1: BigRational::zero(),
        });
    }
    let n = polytope.dim;
    let ks: Vec<i64> = (1..=(n as i64 + 3)).collect();
    let values: Vec<BigRational> = ks
        .iter()
        .map(|&k| weight_matrix(polytope, direction, k as u32).trace)
        .collect();
    let poly = interpolate_integer_samples(&ks, &values, n + 1, "weight trace")?;
    let b0 = poly.coeff(n + 1);
    let b1 = poly.coeff(n);
    let zero = BigRational::zero();
    let volume_term = -polytope.linear_integral(direction, &zero);
    if b0 != volume_term {
        return Err(Error::TraceAnomaly(format!(
            "trace leading coefficient {b0} differs from -int h = {volume_term}"
        )));
    }
    let boundary_term = -polytope.boundary_linear_integral(direction, &zero) / rat_int(2);
    if b1 != boundary_term {
        return Err(Error::TraceAnomaly(format!(
            "trace subleading coefficient {b1} differs from -1/2 int_dP h = {boundary_term}"
        )));
    }
    Ok(TraceCoefficients { b0, b1 })
}

/// Norm of the trace-free generator: the k^{n+2} coefficient of
/// Tr(A-bar_k^2), exact.
#[derive(Debug, Clone)]
pub struct ChiNorm {
    pub chi_squared: BigRational,
    pub chi: f64,
}

/// Tr(A-bar_k^2) itself is a rational function of k (the centering divides
/// by the dimension polynomial), so its limit coefficient is assembled
/// from the honest polynomials: the k^{n+2} coefficient of Tr(A_k^2) minus
/// b0^2 / a0. The result must match int_P (h - h-bar)^2 dx exactly.
pub fn chi_norm(polytope: &DelzantPolytope, direction: [i64; 2]) -> Result<ChiNorm> {
    if direction == [0, 0] {
        return Ok(ChiNorm {
            chi_squared: BigRational::zero(),
            chi: 0.0,
        });
    }
    let n = polytope.dim;
    let ks: Vec<i64> = (1..=(n as i64 + 4)).collect();
    let values: Vec<BigRational> = ks
        .iter()
        .map(|&k| weight_matrix(polytope, direction, k as u32).square_trace)
        .collect();
    let square_poly = interpolate_integer_samples(&ks, &values, n + 2, "squared weight trace")?;
    let coeffs = trace_coefficients(polytope, direction)?;
    let a0 = ehrhart_polynomial(polytope)?.coeff(n);
    let chi_squared = square_poly.coeff(n + 2) - &coeffs.b0 * &coeffs.b0 / a0;
    let moment = polytope.centered_quadratic_integral(direction);
    if chi_squared != moment {
        return Err(Error::TraceAnomaly(format!(
            "||chi||^2 = {chi_squared} differs from int (h - h-bar)^2 = {moment}"
        )));
    }
    if chi_squared.is_negative() {
        return Err(Error::TraceAnomaly(format!(
            "negative ||chi||^2 = {chi_squared}"
        )));
    }
    let chi = rat_to_f64(&chi_squared).sqrt();
    Ok(ChiNorm { chi_squared, chi })
}

/// Futaki invariant F = (a1/a0) b0 - b1 of a lattice direction, exact.
pub fn futaki(polytope: &DelzantPolytope, direction: [i64; 2]) -> Result<BigRational> {
    if direction == [0, 0] {
        return Ok(BigRational::zero());
    }
    let ehrhart = ehrhart_polynomial(polytope)?;
    let n = polytope.dim;
    let a0 = ehrhart.coeff(n);
    let a1 = ehrhart.coeff(n - 1);
    let coeffs = trace_coefficients(polytope, direction)?;
    Ok(a1 / a0 * coeffs.b0 - coeffs.b1)
}

/// Two independent evaluations of the invariant: exact boundary geometry
/// and curvature quadrature.
#[derive(Debug, Clone)]
pub struct FutakiOracle {
    /// 1/2 int_dP (h - h-bar) dsigma, exact.
    pub boundary: BigRational,
    /// kappa int_P (S - S-bar)(h - h-bar) dx by product quadrature.
    pub curvature: f64,
    /// Agreement of the last two quadrature refinements, for reporting.
    pub quadrature_gap: f64,
}

/// Evaluate both oracle routes. The curvature quadrature is refined until
/// two consecutive levels agree; one extra refinement is allowed before
/// the failure is reported.
pub fn futaki_oracle(pot: &SymplecticPotential, direction: [i64; 2]) -> Result<FutakiOracle> {
    let polytope = &pot.polytope;
    if direction == [0, 0] {
        return Ok(FutakiOracle {
            boundary: BigRational::zero(),
            curvature: 0.0,
            quadrature_gap: 0.0,
        });
    }
    let ham = Hamiltonian::new(polytope, direction);
    let zero = BigRational::zero();
    let boundary = (polytope.boundary_linear_integral(direction, &zero)
        - &ham.mean * polytope.lattice_perimeter())
        / rat_int(2);

    let level = |m: usize| -> Result<f64> {
        let samples = ScalarCurvatureSamples::new(pot, m)?;
        let s_mean = samples.mean();
        let value = samples
            .values
            .iter()
            .zip(samples.rule.nodes.iter().zip(&samples.rule.weights))
            .map(|(s, (x, w))| w * (s - s_mean) * ham.centered(*x))
            .sum::<f64>();
        Ok(KAPPA * value)
    };
    let mut coarse = level(96)?;
    let mut fine = level(192)?;
    let tol = |v: f64| 5e-8 * v.abs().max(1.0);
    if (fine - coarse).abs() > tol(fine) {
        coarse = fine;
        fine = level(384)?;
        if (fine - coarse).abs() > tol(fine) {
            return Err(Error::BoundaryQuadratureFailure(format!(
                "curvature quadrature for the invariant did not settle: \
                 {coarse:.12e} vs {fine:.12e} after refinement"
            )));
        }
    }
    Ok(FutakiOracle {
        boundary,
        curvature: fine,
        quadrature_gap: (fine - coarse).abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleValues {
    pub curvature: f64,
    /// Exact rational, rendered as a fraction string.
    pub boundary: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleDeviations {
    /// |curvature route - F|, absolute.
    pub curvature: f64,
    /// Relative gap between the boundary route and F; zero when exact.
    pub boundary: f64,
}

/// Full invariant record of one action on one geometry. Exact rationals
/// are serialized as fraction strings; floats carry quadrature values and
/// the final bound.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub polytope: serde_json::Value,
    pub direction: [i64; 2],
    pub a0: String,
    pub a1: String,
    pub b0: String,
    pub b1: String,
    pub chi_norm: f64,
    pub futaki: String,
    pub futaki_value: f64,
    /// -4 pi F / ||chi||; the destabilizing lower bound when positive.
    pub lower_bound: f64,
    /// A nonpositive bound carries no obstruction; flagged rather than
    /// suppressed.
    pub informative: bool,
    pub oracle_futaki: OracleValues,
    pub deviations: OracleDeviations,
}

/// Assemble the invariant report for one direction: exact coefficients,
/// both oracle routes, their deviations, and the lower bound.
pub fn invariant_report(
    pot: &SymplecticPotential,
    direction: [i64; 2],
) -> Result<InvariantReport> {
    let polytope = &pot.polytope;
    let n = polytope.dim;
    let ehrhart = ehrhart_polynomial(polytope)?;
    let a0 = ehrhart.coeff(n);
    let a1 = ehrhart.coeff(n - 1);
    let coeffs = trace_coefficients(polytope, direction)?;
    let chi = chi_norm(polytope, direction)?;
    let f = futaki(polytope, direction)?;
    let oracle = futaki_oracle(pot, direction)?;

    let futaki_value = rat_to_f64(&f);
    let trivial = direction == [0, 0] || chi.chi == 0.0;
    let lower_bound = if trivial {
        0.0
    } else {
        -4.0 * std::f64::consts::PI * futaki_value / chi.chi
    };
    let deviations = OracleDeviations {
        curvature: (oracle.curvature - futaki_value).abs(),
        boundary: rational_rel_gap(&oracle.boundary, &f),
    };
    Ok(InvariantReport {
        polytope: serde_json::to_value(polytope)
            .map_err(|e| Error::ContainerError(e.to_string()))?,
        direction,
        a0: a0.to_string(),
        a1: a1.to_string(),
        b0: coeffs.b0.to_string(),
        b1: coeffs.b1.to_string(),
        chi_norm: chi.chi,
        futaki: f.to_string(),
        futaki_value,
        lower_bound,
        informative: lower_bound > 0.0,
        oracle_futaki: OracleValues {
            curvature: oracle.curvature,
            boundary: oracle.boundary.to_string(),
        },
        deviations,
    })
}

/// Calibrated L^2 distance from the scalar curvature to its mean, the
/// quantity the lower bound constrains.
pub fn calibrated_curvature_distance(pot: &SymplecticPotential, m: usize) -> Result<f64> {
    let samples = ScalarCurvatureSamples::new(pot, m)?;
    Ok(crate::embed::CURVATURE_UNIT * samples.l2_norm_centered())
}
