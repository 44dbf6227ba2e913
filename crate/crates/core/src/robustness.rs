//! Leave-one-donor-out re-estimation and the lag-specification search.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{synthesize, GapSeries, MspeSummary};
use crate::lags::{build_predictor_matrix, LagScheme, LagSpec};
use crate::panel::{validate_panel, CovariateTable, Panel, StudyDesign};
use crate::placebo::{placebo_in_space, PlaceboTable, RowStatus};
use crate::scalar::Scalar;
use crate::simplex::{solve_nested, NestedFit, SolverSettings};

/// Donors weighted above this count as contributing to the synthetic unit.
pub const ACTIVE_WEIGHT_THRESHOLD: f64 = 1e-6;

/// A full nested estimate together with its gap series.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub fit: NestedFit<T>,
    pub gaps: GapSeries<T>,
    pub mspe: MspeSummary<T>,
}

/// Runs the nested solve for `design` and synthesizes the gap series.
pub fn estimate<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    covs: Option<&CovariateTable<T>>,
    lagspec: &LagSpec<T>,
    settings: &SolverSettings,
) -> Result<Estimate<T>> {
    validate_panel(panel, design, covs).into_result()?;
    let pm = build_predictor_matrix(panel, design, covs, lagspec)?;
    let fit = solve_nested(panel, design, &pm, settings)?;
    let gaps = synthesize(panel, design, &fit.w)?;
    let mspe = gaps.summary()?;
    Ok(Estimate { fit, gaps, mspe })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooResult<T> {
    pub omitted_unit: String,
    /// Re-estimated with both `W` and `V` re-optimized on the reduced pool.
    pub estimate: Estimate<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooAnalysis<T> {
    pub baseline: Estimate<T>,
    /// One entry per contributing donor, in donor-pool order.
    pub results: Vec<LooResult<T>>,
}

/// Re-estimates with `unit` removed from the donor pool.
pub fn leave_out<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    covs: Option<&CovariateTable<T>>,
    lagspec: &LagSpec<T>,
    settings: &SolverSettings,
    unit: &str,
) -> Result<LooResult<T>> {
    if panel.unit_index(unit).is_none() || unit == design.treated_unit {
        return Err(Error::UnknownUnit(unit.to_owned()));
    }
    let reduced = design.clone().excluding([unit]);
    reduced.donor_pool(panel)?;
    Ok(LooResult {
        omitted_unit: unit.to_owned(),
        estimate: estimate(panel, &reduced, covs, lagspec, settings)?,
    })
}

/// Baseline estimate, then one re-estimate per donor whose baseline weight
/// exceeds [`ACTIVE_WEIGHT_THRESHOLD`]. Zero-weight donors are skipped.
pub fn leave_one_out<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    covs: Option<&CovariateTable<T>>,
    lagspec: &LagSpec<T>,
    settings: &SolverSettings,
) -> Result<LooAnalysis<T>> {
    let baseline = estimate(panel, design, covs, lagspec, settings)?;
    let active: Vec<String> = baseline
        .fit
        .w
        .active(T::lit(ACTIVE_WEIGHT_THRESHOLD))
        .into_iter()
        .map(str::to_owned)
        .collect();
    let results = active
        .par_iter()
        .map(|u| leave_out(panel, design, covs, lagspec, settings, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(LooAnalysis { baseline, results })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpecOutcome<T> {
    Ranked(PlaceboTable<T>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecRow<T> {
    /// `1a` through `7b`.
    pub label: String,
    pub scheme: LagScheme,
    pub include_covariates: bool,
    pub outcome: SpecOutcome<T>,
}

impl<T: Scalar> SpecRow<T> {
    pub fn treated_rank(&self) -> Option<usize> {
        match &self.outcome {
            SpecOutcome::Ranked(t) => Some(t.treated_rank),
            SpecOutcome::Failed(_) => None,
        }
    }

    pub fn p_value(&self) -> Option<T> {
        match &self.outcome {
            SpecOutcome::Ranked(t) => Some(t.p_value),
            SpecOutcome::Failed(_) => None,
        }
    }

    /// `ok`, `nonconverged`, or the failure message.
    pub fn status(&self) -> String {
        match &self.outcome {
            SpecOutcome::Ranked(t) if t.any_nonconverged() => "nonconverged".into(),
            SpecOutcome::Ranked(t) if t.rows.iter().any(|r| matches!(r.status, RowStatus::Failed(_))) => {
                "partial".into()
            }
            SpecOutcome::Ranked(_) => "ok".into(),
            SpecOutcome::Failed(e) => format!("failed: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecSearchResult<T> {
    /// Exactly 14 rows in grid order.
    pub rows: Vec<SpecRow<T>>,
}

impl<T: Scalar> SpecSearchResult<T> {
    pub fn row(&self, label: &str) -> Option<&SpecRow<T>> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Runs the placebo analysis once per lag specification in the 14-variant
/// grid with one shared settings object. A failing variant keeps its row.
pub fn spec_search<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    covs: Option<&CovariateTable<T>>,
    proxy: Option<Arc<Panel<T>>>,
    settings: &SolverSettings,
) -> SpecSearchResult<T> {
    let rows = LagSpec::grid(proxy)
        .into_par_iter()
        .map(|spec| {
            let outcome = match placebo_in_space(panel, design, covs, &spec, settings) {
                Ok(t) => SpecOutcome::Ranked(t),
                Err(e) => SpecOutcome::Failed(e.to_string()),
            };
            SpecRow {
                label: spec.label(),
                scheme: spec.scheme,
                include_covariates: spec.include_covariates,
                outcome,
            }
        })
        .collect();
    SpecSearchResult { rows }
}
