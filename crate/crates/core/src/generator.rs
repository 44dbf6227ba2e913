//! Seeded factor-model panels with optional planted synthetic controls.
//!
//! Donor outcomes follow `Y_jt = trend_t + lambda_j . f_t + noise * e_jt`.
//! When planted weights are given, the treated unit is the exact convex
//! combination of the first donors (outcomes and covariates alike), so the
//! true counterfactual and effect are known.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{CovariateTable, OutcomeKind, Panel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EffectProfile {
    Constant(f64),
    Series(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    /// Total units, treated included.
    pub units: usize,
    pub periods: usize,
    pub t0: usize,
    pub factors: usize,
    pub noise: f64,
    pub covariates: usize,
    /// Weights over the first donors; the treated unit is built from them.
    pub planted_weights: Option<Vec<f64>>,
    /// Added to the treated unit after `t0`.
    pub effect: Option<EffectProfile>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            units: 21,
            periods: 46,
            t0: 27,
            factors: 3,
            noise: 0.01,
            covariates: 8,
            planted_weights: None,
            effect: None,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Generator(m));
        if self.units < 3 {
            return bad(format!("need at least 3 units, got {}", self.units));
        }
        if self.t0 == 0 || self.t0 >= self.periods {
            return bad(format!("t0 must lie in 1..{}, got {}", self.periods, self.t0));
        }
        if self.factors == 0 {
            return bad("need at least one latent factor".into());
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise scale must be non-negative, got {}", self.noise));
        }
        if let Some(w) = &self.planted_weights {
            let sum: f64 = w.iter().sum();
            if w.is_empty() || w.len() > self.units - 1 {
                return bad(format!(
                    "planted weights cover {} donors; the pool has {}",
                    w.len(),
                    self.units - 1
                ));
            }
            if w.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                return bad("planted weights must lie on the simplex".into());
            }
        }
        if let Some(EffectProfile::Series(s)) = &self.effect {
            if s.len() != self.periods - self.t0 {
                return bad(format!(
                    "effect series has {} values for {} post periods",
                    s.len(),
                    self.periods - self.t0
                ));
            }
        }
        Ok(())
    }

    /// Per-period effect, zero before `t0`.
    pub fn effects(&self) -> Vec<f64> {
        (0..self.periods)
            .map(|t| match (&self.effect, t >= self.t0) {
                (Some(EffectProfile::Constant(c)), true) => *c,
                (Some(EffectProfile::Series(s)), true) => s[t - self.t0],
                _ => 0.0,
            })
            .collect()
    }

    pub fn unit_label(&self, i: usize) -> String {
        let width = (self.units - 1).to_string().len().max(2);
        format!("r{i:0width$}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub treated_unit: String,
    /// `(donor, weight)` for every donor, zeros included, when planted.
    pub planted_weights: Option<Vec<(String, f64)>>,
    /// True gap per period.
    pub effects: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub panel: Panel<T>,
    pub covariates: CovariateTable<T>,
    pub truth: GroundTruth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a panel; identical specs give identical panels.
pub fn generate_panel<T: Scalar>(spec: &GeneratorSpec) -> Result<Generated<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, periods, f) = (spec.units, spec.periods, spec.factors);
    let amp = 0.05 / (f as f64).sqrt();

    let loadings: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let factors: Vec<Vec<f64>> = (0..periods)
        .map(|_| (0..f).map(|_| amp * normal(&mut rng)).collect())
        .collect();
    let cov_loadings: Vec<Vec<f64>> = (0..spec.covariates)
        .map(|_| (0..f).map(|_| normal(&mut rng) / (f as f64).sqrt()).collect())
        .collect();

    let trend = |t: usize| 0.25 + 0.5 * t as f64 / (periods - 1).max(1) as f64;
    let mut y = Array2::<f64>::zeros((n, periods));
    let mut x = Array2::<f64>::zeros((n, spec.covariates));
    for j in 0..n {
        for t in 0..periods {
            let common: f64 = (0..f).map(|k| loadings[j][k] * factors[t][k]).sum();
            y[[j, t]] = trend(t) + common + spec.noise * normal(&mut rng);
        }
        for c in 0..spec.covariates {
            let signal: f64 = (0..f).map(|k| cov_loadings[c][k] * loadings[j][k]).sum();
            x[[j, c]] = signal + spec.noise * normal(&mut rng);
        }
    }

    let planted = spec.planted_weights.as_ref().map(|w| {
        let mut full = vec![0.0; n - 1];
        full[..w.len()].copy_from_slice(w);
        full
    });
    if let Some(w) = &planted {
        for t in 0..periods {
            y[[0, t]] = (0..n - 1).map(|j| w[j] * y[[j + 1, t]]).sum();
        }
        for c in 0..spec.covariates {
            x[[0, c]] = (0..n - 1).map(|j| w[j] * x[[j + 1, c]]).sum();
        }
    }
    let effects = spec.effects();
    for (t, e) in effects.iter().enumerate() {
        y[[0, t]] += e;
    }

    let kind = if y.iter().all(|v| (0.0..=1.0).contains(v)) {
        OutcomeKind::Share
    } else {
        OutcomeKind::Real
    };
    let units: Vec<String> = (0..n).map(|i| spec.unit_label(i)).collect();
    let period_ids = (1..=periods).map(|t| t.to_string()).collect();
    let cov_names = (1..=spec.covariates).map(|c| format!("cov{c}")).collect();

    let panel = Panel::new(units.clone(), period_ids, y.mapv(T::lit), kind)?;
    let covariates = CovariateTable::new(units.clone(), cov_names, x.mapv(T::lit))?;
    let truth = GroundTruth {
        treated_unit: units[0].clone(),
        planted_weights: planted
            .map(|w| units[1..].iter().cloned().zip(w).collect()),
        effects,
    };
    Ok(Generated {
        panel,
        covariates,
        truth,
    })
}
