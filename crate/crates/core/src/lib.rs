//! Synthetic control estimation with placebo-based inference.
//!
//! The pipeline runs bottom-up through these modules:
//!
//! - [`panel`]: outcome panel, study design and covariates, with validation.
//! - [`lags`]: predictor matrices from covariates and pre-period outcome lags.
//! - [`simplex`]: nested donor-weight / predictor-weight optimization.
//! - [`estimator`]: synthetic counterfactuals, gaps and MSPE.
//! - [`placebo`]: in-space placebos, permutation p-values, between-group
//!   differences and the paired descriptive interval.
//! - [`robustness`]: leave-one-donor-out and the 14-variant lag grid.
//! - [`generator`]: seeded factor-model panels with planted ground truth.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below name the double-precision instantiations the
//! command-line tool uses.

pub mod error;
pub mod estimator;
pub mod generator;
pub mod lags;
pub mod panel;
pub mod placebo;
pub mod robustness;
pub mod scalar;
pub mod simplex;

pub use error::{Error, Result};
pub use estimator::{mspe, synthesize, GapSeries, MspeSummary, Window};
pub use generator::{generate_panel, EffectProfile, Generated, GeneratorSpec, GroundTruth};
pub use lags::{build_predictor_matrix, LagScheme, LagSpec, PredictorMatrix};
pub use panel::{
    validate_panel, CovariateTable, OutcomeKind, Panel, StudyDesign, ValidationReport, Violation,
};
pub use placebo::{
    diff_in_effects, paired_difference_ci, placebo_diff_in_effects, placebo_in_space,
    placebo_p_value, rank_by_post_mspe, DiffEffects, DiffPlacebo, GroupInputs, OriginRule,
    PairedInterval, PlaceboRow, PlaceboTable, RowStatus,
};
pub use robustness::{
    estimate, leave_one_out, leave_out, spec_search, Estimate, LooAnalysis, LooResult,
    SpecOutcome, SpecRow, SpecSearchResult, ACTIVE_WEIGHT_THRESHOLD,
};
pub use scalar::Scalar;
pub use simplex::{
    solve_nested, solve_w, InnerSolution, NestedDiagnostics, NestedFit, PredictorWeights,
    SolverSettings, UnitWeights,
};

pub type Panel64 = Panel<f64>;
pub type Panel32 = Panel<f32>;
pub type CovariateTable64 = CovariateTable<f64>;
pub type LagSpec64 = LagSpec<f64>;
pub type PredictorMatrix64 = PredictorMatrix<f64>;
pub type UnitWeights64 = UnitWeights<f64>;
pub type PredictorWeights64 = PredictorWeights<f64>;
pub type GapSeries64 = GapSeries<f64>;
pub type GapSeries32 = GapSeries<f32>;
pub type PlaceboTable64 = PlaceboTable<f64>;
pub type NestedFit64 = NestedFit<f64>;
pub type Estimate64 = Estimate<f64>;
pub type LooAnalysis64 = LooAnalysis<f64>;
pub type SpecSearchResult64 = SpecSearchResult<f64>;
pub type DiffEffects64 = DiffEffects<f64>;
