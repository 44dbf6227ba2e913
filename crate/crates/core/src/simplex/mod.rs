//! Weight optimization on the probability simplex.
//!
//! The inner problem picks donor weights `W` minimizing a `V`-weighted
//! squared distance in predictor space; the outer problem searches `V` to
//! minimize the pre-period outcome MSPE of the resulting synthetic unit.

mod inner;
mod nested;

pub use inner::{project_to_simplex, solve_w, InnerSolution};
pub use nested::{solve_nested, standardize, NestedDiagnostics, NestedFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Simplex tolerance for weight vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

fn check_simplex<T: Scalar>(w: &[T], nonneg_only: bool) -> bool {
    let tol = T::tol(SIMPLEX_TOL);
    let sum: T = w.iter().copied().sum();
    w.iter()
        .all(|&x| x >= T::zero() && (nonneg_only || x <= T::one() + tol))
        && (sum - T::one()).abs() <= tol
}

/// Donor weights `W`, aligned with the labels of the donor pool.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitWeights<T> {
    pub units: Vec<String>,
    pub weights: Vec<T>,
}

impl<T: Scalar> UnitWeights<T> {
    pub fn new(units: Vec<String>, weights: Vec<T>) -> Result<Self> {
        if units.len() != weights.len() {
            return Err(Error::WeightLength {
                got: weights.len(),
                expected: units.len(),
            });
        }
        Ok(Self { units, weights })
    }

    pub fn is_valid(&self) -> bool {
        check_simplex(&self.weights, false)
    }

    pub fn get(&self, unit: &str) -> Option<T> {
        self.units
            .iter()
            .position(|u| u == unit)
            .map(|i| self.weights[i])
    }

    /// Donors with weight above `threshold`, in pool order.
    pub fn active(&self, threshold: T) -> Vec<&str> {
        self.units
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > threshold)
            .map(|(u, _)| u.as_str())
            .collect()
    }
}

/// Predictor importance weights `V`, aligned with predictor names.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights<T> {
    pub names: Vec<String>,
    pub weights: Vec<T>,
}

impl<T: Scalar> PredictorWeights<T> {
    pub fn equal(names: Vec<String>) -> Self {
        let k = T::lit(names.len() as f64);
        let weights = vec![T::one() / k; names.len()];
        Self { names, weights }
    }

    pub fn is_valid(&self) -> bool {
        check_simplex(&self.weights, true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Projected-gradient norm at which the inner solve stops.
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
    /// Spread of outcome MSPE across the search simplex at which a start stops.
    pub outer_tolerance: f64,
    /// Evaluation budget per start.
    pub outer_max_evaluations: usize,
    pub multistart_count: usize,
    pub rng_seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            inner_tolerance: 1e-10,
            inner_max_iterations: 100_000,
            outer_tolerance: 1e-10,
            outer_max_evaluations: 400,
            multistart_count: 5,
            rng_seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Settings(m.to_owned()));
        if !(self.inner_tolerance > 0.0) || !(self.outer_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.inner_max_iterations == 0
            || self.outer_max_evaluations == 0
            || self.multistart_count == 0
        {
            return bad("iteration, evaluation and multistart counts must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_reject_nonpositive_values() {
        assert!(SolverSettings::default().validate().is_ok());
        let s = SolverSettings {
            inner_tolerance: 0.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let s = SolverSettings {
            multistart_count: 0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn weight_validity() {
        let w = UnitWeights::new(vec!["a".into(), "b".into()], vec![0.25, 0.75]).unwrap();
        assert!(w.is_valid());
        assert_eq!(w.active(1e-6), vec!["a", "b"]);
        let bad = UnitWeights::new(vec!["a".into(), "b".into()], vec![-0.1, 1.1]).unwrap();
        assert!(!bad.is_valid());
        assert!(UnitWeights::new(vec!["a".into()], vec![0.5_f64, 0.5]).is_err());
        let v = PredictorWeights::<f32>::equal(vec!["x".into(), "y".into(), "z".into()]);
        assert!(v.is_valid());
    }
}
