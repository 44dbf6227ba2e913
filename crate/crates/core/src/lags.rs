//! Predictor construction from covariates and lagged pre-period outcomes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{CovariateTable, Panel, StudyDesign};
use crate::scalar::Scalar;

/// How pre-period outcomes enter the predictor set.
///
/// Discriminants are the specification numbers of the 14-variant grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagScheme {
    AllLags = 1,
    FirstThreeFourths = 2,
    FirstHalf = 3,
    OddLags = 4,
    EvenLags = 5,
    PretreatmentMean = 6,
    ThreeValues = 7,
}

impl LagScheme {
    pub const ALL: [LagScheme; 7] = [
        LagScheme::AllLags,
        LagScheme::FirstThreeFourths,
        LagScheme::FirstHalf,
        LagScheme::OddLags,
        LagScheme::EvenLags,
        LagScheme::PretreatmentMean,
        LagScheme::ThreeValues,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            LagScheme::AllLags => "all_lags",
            LagScheme::FirstThreeFourths => "first_three_fourths",
            LagScheme::FirstHalf => "first_half",
            LagScheme::OddLags => "odd_lags",
            LagScheme::EvenLags => "even_lags",
            LagScheme::PretreatmentMean => "pretreatment_mean",
            LagScheme::ThreeValues => "three_values",
        }
    }

    /// Zero-based pre-period indices used as individual lag columns, or
    /// `None` for the single pre-period mean column.
    pub fn lag_indices(self, t0: usize) -> Option<Vec<usize>> {
        let leading = |num: usize, den: usize| (0..((t0 * num) / den).max(1).min(t0)).collect();
        Some(match self {
            LagScheme::AllLags => (0..t0).collect(),
            LagScheme::FirstThreeFourths => leading(3, 4),
            LagScheme::FirstHalf => leading(1, 2),
            // 1-based odd positions are 0-based even indices.
            LagScheme::OddLags => (0..t0).step_by(2).collect(),
            LagScheme::EvenLags => (1..t0).step_by(2).collect(),
            LagScheme::PretreatmentMean => return None,
            LagScheme::ThreeValues => {
                if t0 == 0 {
                    Vec::new()
                } else {
                    vec![0, t0.div_ceil(2) - 1, t0 - 1]
                }
            }
        })
    }

    /// Number of outcome-derived columns for `t0` pre-periods.
    pub fn lag_columns(self, t0: usize) -> usize {
        self.lag_indices(t0).map_or(1, |ix| ix.len())
    }
}

impl fmt::Display for LagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LagScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LagScheme::ALL
            .into_iter()
            .find(|sch| sch.name() == s || sch.number().to_string() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = LagScheme::ALL.iter().map(|s| s.name()).collect();
                format!("unknown lag scheme `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone)]
pub struct LagSpec<T> {
    pub scheme: LagScheme,
    pub include_covariates: bool,
    /// Alternative outcome panel whose pre-period values replace the
    /// outcome lags, for groups whose own pre-period is degenerate.
    pub proxy: Option<Arc<Panel<T>>>,
}

impl<T: Scalar> LagSpec<T> {
    pub fn new(scheme: LagScheme, include_covariates: bool) -> Self {
        Self {
            scheme,
            include_covariates,
            proxy: None,
        }
    }

    pub fn with_proxy(mut self, proxy: Arc<Panel<T>>) -> Self {
        self.proxy = Some(proxy);
        self
    }

    /// Specification label such as `6b`: scheme number, then `a` without
    /// covariates or `b` with them.
    pub fn label(&self) -> String {
        format!(
            "{}{}",
            self.scheme.number(),
            if self.include_covariates { 'b' } else { 'a' }
        )
    }

    /// The 14 specifications in grid order `1a, 1b, 2a, ..., 7b`, sharing `proxy`.
    pub fn grid(proxy: Option<Arc<Panel<T>>>) -> Vec<LagSpec<T>> {
        LagScheme::ALL
            .into_iter()
            .flat_map(|scheme| {
                let proxy = proxy.clone();
                [false, true].into_iter().map(move |cov| LagSpec {
                    scheme,
                    include_covariates: cov,
                    proxy: proxy.clone(),
                })
            })
            .collect()
    }

    pub fn column_count(&self, t0: usize, n_covariates: usize) -> usize {
        self.scheme.lag_columns(t0) + if self.include_covariates { n_covariates } else { 0 }
    }
}

/// Raw (unstandardized) predictors for every panel unit, plus the
/// pre-period series the outer weight search is scored on.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMatrix<T> {
    pub unit_ids: Vec<String>,
    pub predictor_names: Vec<String>,
    /// unit x predictor
    pub values: Array2<T>,
    /// unit x pre-period; the proxy series when one is configured.
    pub fit_series: Array2<T>,
}

impl<T: Scalar> PredictorMatrix<T> {
    pub fn n_predictors(&self) -> usize {
        self.predictor_names.len()
    }

    pub fn row(&self, unit: usize) -> Vec<T> {
        self.values.row(unit).to_vec()
    }
}

/// Pre-period outcome rows aligned to `panel`'s units, taken from the proxy
/// panel when present.
fn pre_period_source<T: Scalar>(
    panel: &Panel<T>,
    t0: usize,
    proxy: Option<&Panel<T>>,
) -> Result<Array2<T>> {
    let n = panel.n_units();
    let Some(proxy) = proxy else {
        return Ok(panel.outcomes().slice(ndarray::s![.., ..t0]).to_owned());
    };
    let cols: Vec<usize> = panel.period_ids()[..t0]
        .iter()
        .map(|p| {
            proxy
                .period_index(p)
                .ok_or_else(|| Error::ProxyMissingPeriod(p.clone()))
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((n, t0));
    for (u, unit) in panel.unit_ids().iter().enumerate() {
        let pu = proxy
            .unit_index(unit)
            .ok_or_else(|| Error::ProxyMissingUnit(unit.clone()))?;
        let series = proxy.series(pu);
        for (t, &c) in cols.iter().enumerate() {
            out[[u, t]] = series[c];
        }
    }
    Ok(out)
}

/// Assembles the predictor matrix: covariates first (when requested), then
/// the outcome summaries selected by the lag scheme.
pub fn build_predictor_matrix<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    covs: Option<&CovariateTable<T>>,
    lagspec: &LagSpec<T>,
) -> Result<PredictorMatrix<T>> {
    let t0 = design.t0;
    let n = panel.n_units();
    let pre = pre_period_source(panel, t0, lagspec.proxy.as_deref())?;
    let source = if lagspec.proxy.is_some() { "proxy" } else { "outcome" };

    let mut names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<T>> = Vec::new();

    if lagspec.include_covariates {
        let covs = covs.ok_or(Error::MissingCovariates)?;
        let rows: Vec<Vec<T>> = panel
            .unit_ids()
            .iter()
            .map(|u| {
                covs.row_of(u)
                    .ok_or_else(|| Error::CovariatesMissingUnit(u.clone()))
            })
            .collect::<Result<_>>()?;
        for (k, name) in covs.predictor_names().iter().enumerate() {
            names.push(name.clone());
            columns.push(rows.iter().map(|r| r[k]).collect());
        }
    }

    match lagspec.scheme.lag_indices(t0) {
        Some(ix) => {
            for t in ix {
                names.push(format!("{source}@{}", panel.period_ids()[t]));
                columns.push(pre.column(t).to_vec());
            }
        }
        None => {
            names.push(format!("{source}_mean"));
            let denom = T::lit(t0 as f64);
            columns.push(
                pre.rows()
                    .into_iter()
                    .map(|r| r.iter().copied().sum::<T>() / denom)
                    .collect(),
            );
        }
    }

    if columns.is_empty() {
        return Err(Error::NoPredictors);
    }
    let values = Array2::from_shape_fn((n, columns.len()), |(u, k)| columns[k][u]);
    Ok(PredictorMatrix {
        unit_ids: panel.unit_ids().to_vec(),
        predictor_names: names,
        values,
        fit_series: pre,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::OutcomeKind;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn panel(units: usize, periods: usize) -> Panel<f64> {
        let y = Array2::from_shape_fn((units, periods), |(u, t)| (t + 1) as f64 + 100.0 * u as f64);
        Panel::new(ids("u", units), ids("p", periods), y, OutcomeKind::Real).unwrap()
    }

    fn covariates(units: usize, k: usize) -> CovariateTable<f64> {
        let v = Array2::from_shape_fn((units, k), |(u, j)| (u * 10 + j) as f64);
        CovariateTable::new(ids("u", units), ids("c", k), v).unwrap()
    }

    #[test]
    fn mean_with_eight_covariates_has_nine_columns() {
        let p = panel(21, 46);
        let pm = build_predictor_matrix(
            &p,
            &StudyDesign::new("u1", 27),
            Some(&covariates(21, 8)),
            &LagSpec::new(LagScheme::PretreatmentMean, true),
        )
        .unwrap();
        assert_eq!(pm.n_predictors(), 9);
        assert_eq!(pm.predictor_names[8], "outcome_mean");
        // mean of 1..=27
        assert_eq!(pm.values[[0, 8]], 14.0);
        assert_eq!(pm.values[[2, 3]], 23.0);
    }

    #[test]
    fn all_lags_without_covariates() {
        let p = panel(21, 46);
        let pm = build_predictor_matrix(
            &p,
            &StudyDesign::new("u1", 27),
            None,
            &LagSpec::new(LagScheme::AllLags, false),
        )
        .unwrap();
        assert_eq!(pm.n_predictors(), 27);
        assert_eq!(pm.fit_series.dim(), (21, 27));
    }

    #[test]
    fn three_values_picks_first_middle_last() {
        let p = panel(3, 8);
        let pm = build_predictor_matrix(
            &p,
            &StudyDesign::new("u1", 5),
            None,
            &LagSpec::new(LagScheme::ThreeValues, false),
        )
        .unwrap();
        assert_eq!(pm.row(0), vec![1.0, 3.0, 5.0]);
        assert_eq!(pm.predictor_names, vec!["outcome@p1", "outcome@p3", "outcome@p5"]);
    }

    #[test]
    fn fractional_and_parity_schemes() {
        assert_eq!(LagScheme::FirstThreeFourths.lag_indices(27).unwrap().len(), 20);
        assert_eq!(LagScheme::FirstHalf.lag_indices(27).unwrap().len(), 13);
        assert_eq!(LagScheme::FirstHalf.lag_indices(1).unwrap(), vec![0]);
        assert_eq!(LagScheme::OddLags.lag_indices(5).unwrap(), vec![0, 2, 4]);
        assert_eq!(LagScheme::EvenLags.lag_indices(5).unwrap(), vec![1, 3]);
    }

    #[test]
    fn covariates_required_when_requested() {
        let p = panel(3, 8);
        let err = build_predictor_matrix(
            &p,
            &StudyDesign::new("u1", 5),
            None,
            &LagSpec::new(LagScheme::AllLags, true),
        );
        assert!(matches!(err, Err(Error::MissingCovariates)));
    }

    #[test]
    fn empty_even_lags_is_an_error() {
        let p = panel(3, 4);
        let err = build_predictor_matrix(
            &p,
            &StudyDesign::new("u1", 1),
            None,
            &LagSpec::new(LagScheme::EvenLags, false),
        );
        assert!(matches!(err, Err(Error::NoPredictors)));
    }

    #[test]
    fn proxy_series_replaces_outcome_lags() {
        let main = panel(3, 6);
        // Proxy lists units and periods in a different order and has extras.
        let y = Array2::from_shape_fn((4, 7), |(u, t)| (u * 7 + t) as f64 / 100.0);
        let proxy = Panel::new(
            vec!["u3".into(), "u1".into(), "x".into(), "u2".into()],
            vec!["p0".into(), "p1".into(), "p2".into(), "p3".into(), "p4".into(), "p5".into(), "p6".into()],
            y,
            OutcomeKind::Share,
        )
        .unwrap();
        let spec = LagSpec::new(LagScheme::AllLags, false).with_proxy(Arc::new(proxy));
        let pm = build_predictor_matrix(&main, &StudyDesign::new("u1", 3), None, &spec).unwrap();
        assert_eq!(pm.predictor_names, vec!["proxy@p1", "proxy@p2", "proxy@p3"]);
        assert_eq!(pm.row(0), vec![0.08, 0.09, 0.10]);
        assert_eq!(pm.fit_series.row(2).to_vec(), vec![0.01, 0.02, 0.03]);
    }

    #[test]
    fn proxy_missing_unit_or_period() {
        let main = panel(3, 6);
        let short = Arc::new(panel(2, 6));
        let spec = LagSpec::new(LagScheme::AllLags, false).with_proxy(short);
        let err = build_predictor_matrix(&main, &StudyDesign::new("u1", 3), None, &spec);
        assert!(matches!(err, Err(Error::ProxyMissingUnit(u)) if u == "u3"));

        let few = Arc::new(panel(3, 2));
        let spec = LagSpec::new(LagScheme::AllLags, false).with_proxy(few);
        let err = build_predictor_matrix(&main, &StudyDesign::new("u1", 3), None, &spec);
        assert!(matches!(err, Err(Error::ProxyMissingPeriod(p)) if p == "p3"));
    }

    #[test]
    fn grid_has_fourteen_labels_in_order() {
        let labels: Vec<String> = LagSpec::<f64>::grid(None).iter().map(|s| s.label()).collect();
        assert_eq!(labels.len(), 14);
        assert_eq!(labels[0], "1a");
        assert_eq!(labels[11], "6b");
        assert_eq!(labels[13], "7b");
    }

    #[test]
    fn scheme_parses_by_name_or_number() {
        assert_eq!("odd_lags".parse::<LagScheme>().unwrap(), LagScheme::OddLags);
        assert_eq!("6".parse::<LagScheme>().unwrap(), LagScheme::PretreatmentMean);
        assert!("lags".parse::<LagScheme>().is_err());
    }

    proptest! {
        #[test]
        fn column_count_is_a_function_of_t0_scheme_and_covariates(
            t0 in 4usize..=60,
            scheme_ix in 0usize..7,
            with_cov in any::<bool>(),
        ) {
            let scheme = LagScheme::ALL[scheme_ix];
            let p = panel(4, t0 + 3);
            let c = covariates(4, 8);
            let spec = LagSpec::new(scheme, with_cov);
            let pm = build_predictor_matrix(&p, &StudyDesign::new("u1", t0), Some(&c), &spec).unwrap();
            let expected_lags = match scheme {
                LagScheme::AllLags => t0,
                LagScheme::FirstThreeFourths => (3 * t0) / 4,
                LagScheme::FirstHalf => t0 / 2,
                LagScheme::OddLags => t0.div_ceil(2),
                LagScheme::EvenLags => t0 / 2,
                LagScheme::PretreatmentMean => 1,
                LagScheme::ThreeValues => 3,
            };
            prop_assert_eq!(pm.n_predictors(), expected_lags + if with_cov { 8 } else { 0 });
            prop_assert_eq!(pm.n_predictors(), spec.column_count(t0, 8));
        }

        #[test]
        fn permuting_units_permutes_rows(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let p = panel(6, 10);
            let c = covariates(6, 3);
            let mut order: Vec<usize> = (0..6).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let spec = LagSpec::new(LagScheme::OddLags, true);
            let design = StudyDesign::new("u1", 7);
            let base = build_predictor_matrix(&p, &design, Some(&c), &spec).unwrap();
            let perm = build_predictor_matrix(&p.select_units(&order), &design, Some(&c), &spec).unwrap();
            prop_assert_eq!(&perm.predictor_names, &base.predictor_names);
            for (row, &src) in order.iter().enumerate() {
                prop_assert_eq!(&perm.unit_ids[row], &base.unit_ids[src]);
                prop_assert_eq!(perm.row(row), base.row(src));
            }
        }
    }
}
