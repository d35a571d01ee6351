//! Exact rational arithmetic helpers.
//!
//! Dimension counts and weight-matrix traces are integer-valued polynomials
//! in the quantization level k, so their coefficients are recovered exactly
//! by Newton divided differences over `BigRational`. Keeping this path
//! rational end to end is what lets downstream tests pin equalities instead
//! of tolerances.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    // BigRational::to_f64 can overflow for huge numerators; split as a guard.
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// A polynomial with exact rational coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalPoly {
    pub coeffs: Vec<BigRational>,
}

impl RationalPoly {
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| !c.is_zero())
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_i64(&self, x: i64) -> BigRational {
        self.eval(&rat_int(x))
    }

    /// Leading (highest-degree) coefficient.
    pub fn leading(&self) -> BigRational {
        self.coeffs
            .iter()
            .rposition(|c| !c.is_zero())
            .map(|i| self.coeffs[i].clone())
            .unwrap_or_else(BigRational::zero)
    }

    pub fn coeff(&self, i: usize) -> BigRational {
        self.coeffs.get(i).cloned().unwrap_or_else(BigRational::zero)
    }
}

/// Interpolate the unique polynomial of degree < samples.len() through
/// (x_i, y_i), by Newton divided differences. Nodes must be distinct.
pub fn newton_interpolate(xs: &[BigRational], ys: &[BigRational]) -> Result<RationalPoly> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::FitError(format!(
            "interpolation needs matching nonempty samples, got {} xs / {} ys",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    // Divided-difference table, column by column.
    let mut dd: Vec<BigRational> = ys.to_vec();
    let mut newton_coeffs: Vec<BigRational> = Vec::with_capacity(n);
    newton_coeffs.push(dd[0].clone());
    for level in 1..n {
        for i in 0..(n - level) {
            let denom = &xs[i + level] - &xs[i];
            if denom.is_zero() {
                return Err(Error::FitError("repeated interpolation node".into()));
            }
            dd[i] = (&dd[i + 1] - &dd[i]) / denom;
        }
        newton_coeffs.push(dd[0].clone());
    }
    // Expand the Newton form into monomial coefficients.
    let mut coeffs = vec![BigRational::zero(); n];
    let mut basis = vec![BigRational::zero(); n]; // product of (x - x_0)..(x - x_{j-1})
    basis[0] = BigRational::one();
    for (j, c) in newton_coeffs.iter().enumerate() {
        if j > 0 {
            // basis *= (x - xs[j-1])
            let shift = -xs[j - 1].clone();
            let mut next = vec![BigRational::zero(); n];
            for (i, b) in basis.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                next[i] = &next[i] + &(b * &shift);
                if i + 1 < n {
                    next[i + 1] = &next[i + 1] + b;
                }
            }
            basis = next;
        }
        for i in 0..n {
            coeffs[i] = &coeffs[i] + &(c * &basis[i]);
        }
    }
    Ok(RationalPoly { coeffs })
}

/// Interpolate integer samples at integer nodes and verify the result has
/// the expected degree; used for Ehrhart and trace polynomials where the
/// degree is known a priori and a mismatch signals an upstream bug.
pub fn interpolate_integer_samples(
    ks: &[i64],
    values: &[BigRational],
    expected_degree: usize,
    context: &str,
) -> Result<RationalPoly> {
    let xs: Vec<BigRational> = ks.iter().map(|&k| rat_int(k)).collect();
    let poly = newton_interpolate(&xs, values)?;
    if poly.degree() != expected_degree {
        return Err(Error::TraceAnomaly(format!(
            "{context}: interpolant has degree {}, expected {}",
            poly.degree(),
            expected_degree
        )));
    }
    Ok(poly)
}

/// Relative gap |a - b| / max(1, |a|, |b|) for rationals, as f64.
pub fn rational_rel_gap(a: &BigRational, b: &BigRational) -> f64 {
    let diff = (a - b).abs();
    let scale = a.abs().max(b.abs()).max(BigRational::one());
    rat_to_f64(&(diff / scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_cubic_exactly() {
        // p(x) = (x+1)(x+2)(x+3)/6, the [0,1]-interval dimension count in 3D.
        let ks = [1i64, 2, 3, 4];
        let vals: Vec<BigRational> = ks
            .iter()
            .map(|&k| rat_int((k + 1) * (k + 2) * (k + 3) / 6))
            .collect();
        let p = interpolate_integer_samples(&ks, &vals, 3, "cubic test").unwrap();
        assert_eq!(p.eval_i64(10), rat_int(11 * 12 * 13 / 6));
        assert_eq!(p.leading(), rat(1, 6));
    }

    #[test]
    fn degree_mismatch_is_a_trace_anomaly() {
        let ks = [1i64, 2, 3];
        let vals = vec![rat_int(1), rat_int(4), rat_int(9)];
        let err = interpolate_integer_samples(&ks, &vals, 1, "square test").unwrap_err();
        assert!(matches!(err, Error::TraceAnomaly(_)));
    }
}
