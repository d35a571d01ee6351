//! Hamiltonians of torus subactions.
//!
//! A one-parameter subgroup with integer direction xi acts with Hamiltonian
//! h(x) = <xi, x> on the moment polytope. Only integer directions lift to
//! the prequantum line; the constant ambiguity of the lift is the offset.
//! The centered representative h - h-bar (mean removed, exactly) is the one
//! entering every invariant downstream.

use num::rational::BigRational;

use crate::error::{Error, Result};
use crate::exact::{rat_int, rat_to_f64};
use crate::geom::polytope::DelzantPolytope;

#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub direction: [i64; 2],
    /// Exact mean of <xi, x> over the polytope.
    pub mean: BigRational,
    mean_f64: f64,
}

impl Hamiltonian {
    pub fn new(polytope: &DelzantPolytope, direction: [i64; 2]) -> Self {
        let mean = polytope.mean_linear(direction);
        let mean_f64 = rat_to_f64(&mean);
        Hamiltonian {
            direction,
            mean,
            mean_f64,
        }
    }

    /// A rational direction num/den lifts only if den divides both entries.
    pub fn from_fraction(
        polytope: &DelzantPolytope,
        num: [i64; 2],
        den: i64,
    ) -> Result<Self> {
        if den == 0 {
            return Err(Error::LiftObstruction("zero denominator".into()));
        }
        if num[0] % den != 0 || num[1] % den != 0 {
            return Err(Error::LiftObstruction(format!(
                "direction ({}, {})/{} is not an integer vector",
                num[0], num[1], den
            )));
        }
        Ok(Self::new(polytope, [num[0] / den, num[1] / den]))
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.direction[0] as f64 * x[0] + self.direction[1] as f64 * x[1]
    }

    /// h(x) - h-bar; averages to zero over the polytope by construction.
    pub fn centered(&self, x: [f64; 2]) -> f64 {
        self.value(x) - self.mean_f64
    }

    /// Exact value of <xi, lambda> - k * h-bar at a lattice point of kP.
    pub fn centered_at_lattice(&self, lam: [i64; 2], k: u32) -> BigRational {
        rat_int(self.direction[0] * lam[0] + self.direction[1] * lam[1])
            - rat_int(k as i64) * &self.mean
    }

    /// Exact L^2 norm squared of the centered Hamiltonian over P.
    pub fn norm_squared(&self, polytope: &DelzantPolytope) -> BigRational {
        polytope.centered_quadratic_integral(self.direction)
    }

    pub fn is_trivial(&self) -> bool {
        self.direction == [0, 0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::geom::polytope::{hirzebruch_surface, projective_line};
    use num::Zero;

    #[test]
    fn centering_is_idempotent_and_exact() {
        let h = Hamiltonian::new(&hirzebruch_surface(), [0, 1]);
        // mean of x2 over the Hirzebruch polytope: (2/3) / (3/2) = 4/9.
        assert_eq!(h.mean, rat(4, 9));
        // Mean of the centered function is exactly zero.
        let p = hirzebruch_surface();
        let recentered =
            p.linear_integral(h.direction, &(-h.mean.clone())) / p.volume();
        assert!(recentered.is_zero());
    }

    #[test]
    fn interval_direction_norm() {
        // On [0,1], h = x: ||h - 1/2||^2 = int_0^1 (x - 1/2)^2 = 1/12.
        let p = projective_line();
        let h = Hamiltonian::new(&p, [1, 0]);
        assert_eq!(h.norm_squared(&p), rat(1, 12));
    }

    #[test]
    fn fractional_direction_needs_divisibility() {
        let p = hirzebruch_surface();
        assert!(Hamiltonian::from_fraction(&p, [2, 4], 2).is_ok());
        let err = Hamiltonian::from_fraction(&p, [1, 2], 2).unwrap_err();
        assert!(matches!(err, Error::LiftObstruction(_)));
    }
}
