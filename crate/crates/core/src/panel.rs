//! Panel data model: outcome matrix, study design and covariate table.
//!
//! Constructors only check that matrix shapes agree with the label lists.
//! Semantic invariants (unique labels, share range, a usable design) are
//! checked by [`validate_panel`], which reports every violation at once and
//! leaves the decision to abort to the caller.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Fractions in `[0, 1]`, e.g. the share of a population vaccinated.
    #[default]
    Share,
    Real,
}

/// Outcomes observed for every unit in every period.
///
/// Suppressed source cells are expected to arrive as literal zeros; no
/// imputation happens anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel<T> {
    unit_ids: Vec<String>,
    period_ids: Vec<String>,
    outcomes: Array2<T>,
    kind: OutcomeKind,
}

impl<T: Scalar> Panel<T> {
    pub fn new(
        unit_ids: Vec<String>,
        period_ids: Vec<String>,
        outcomes: Array2<T>,
        kind: OutcomeKind,
    ) -> Result<Self> {
        let (rows, cols) = outcomes.dim();
        if rows != unit_ids.len() || cols != period_ids.len() {
            return Err(Error::Shape {
                rows,
                cols,
                units: unit_ids.len(),
                periods: period_ids.len(),
            });
        }
        // Row slices are handed out directly, so keep standard layout.
        let outcomes = outcomes.as_standard_layout().into_owned();
        Ok(Self {
            unit_ids,
            period_ids,
            outcomes,
            kind,
        })
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_ids(&self) -> &[String] {
        &self.period_ids
    }

    pub fn outcomes(&self) -> &Array2<T> {
        &self.outcomes
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.period_ids.len()
    }

    pub fn unit_index(&self, label: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == label)
    }

    pub fn period_index(&self, label: &str) -> Option<usize> {
        self.period_ids.iter().position(|p| p == label)
    }

    /// Outcome series of the unit at row `unit`.
    pub fn series(&self, unit: usize) -> &[T] {
        let cols = self.n_periods();
        let flat = self.outcomes.as_slice().expect("standard layout");
        &flat[unit * cols..(unit + 1) * cols]
    }

    /// Same panel with rows in `order` (a permutation or subset of row indices).
    pub fn select_units(&self, order: &[usize]) -> Self {
        let unit_ids = order.iter().map(|&i| self.unit_ids[i].clone()).collect();
        let outcomes = self.outcomes.select(ndarray::Axis(0), order);
        Self {
            unit_ids,
            period_ids: self.period_ids.clone(),
            outcomes,
            kind: self.kind,
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Panel<U> {
        Panel {
            unit_ids: self.unit_ids.clone(),
            period_ids: self.period_ids.clone(),
            outcomes: self.outcomes.mapv(|v| U::lit(v.as_f64())),
            kind: self.kind,
        }
    }
}

/// Which unit is treated, when, and which units never serve as donors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub treated_unit: String,
    /// Number of pre-treatment periods; periods `t0+1..=T` form the post window.
    pub t0: usize,
    #[serde(default)]
    pub excluded_donors: BTreeSet<String>,
}

impl StudyDesign {
    pub fn new(treated_unit: impl Into<String>, t0: usize) -> Self {
        Self {
            treated_unit: treated_unit.into(),
            t0,
            excluded_donors: BTreeSet::new(),
        }
    }

    pub fn excluding<I, S>(mut self, units: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.excluded_donors
            .extend(units.into_iter().map(Into::into));
        self
    }

    /// The same design with another unit cast as treated.
    pub fn with_treated(&self, unit: &str) -> Self {
        Self {
            treated_unit: unit.to_owned(),
            ..self.clone()
        }
    }

    pub fn treated_index<T: Scalar>(&self, panel: &Panel<T>) -> Result<usize> {
        panel
            .unit_index(&self.treated_unit)
            .ok_or_else(|| Error::UnknownUnit(self.treated_unit.clone()))
    }

    /// Row indices of every unit not excluded, in panel order.
    pub fn analysis_units<T: Scalar>(&self, panel: &Panel<T>) -> Vec<usize> {
        (0..panel.n_units())
            .filter(|&i| !self.excluded_donors.contains(&panel.unit_ids()[i]))
            .collect()
    }

    /// Row indices of the donor pool, in panel order.
    pub fn donor_pool<T: Scalar>(&self, panel: &Panel<T>) -> Result<Vec<usize>> {
        let treated = self.treated_index(panel)?;
        let pool: Vec<usize> = self
            .analysis_units(panel)
            .into_iter()
            .filter(|&i| i != treated)
            .collect();
        if pool.len() < 2 {
            return Err(Error::DonorPoolTooSmall(pool.len()));
        }
        Ok(pool)
    }
}

/// Time-invariant predictors, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable<T> {
    unit_ids: Vec<String>,
    predictor_names: Vec<String>,
    values: Array2<T>,
}

impl<T: Scalar> CovariateTable<T> {
    pub fn new(
        unit_ids: Vec<String>,
        predictor_names: Vec<String>,
        values: Array2<T>,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != unit_ids.len() || cols != predictor_names.len() {
            return Err(Error::Shape {
                rows,
                cols,
                units: unit_ids.len(),
                periods: predictor_names.len(),
            });
        }
        Ok(Self {
            unit_ids,
            predictor_names,
            values,
        })
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn n_predictors(&self) -> usize {
        self.predictor_names.len()
    }

    pub fn row_of(&self, unit: &str) -> Option<Vec<T>> {
        let i = self.unit_ids.iter().position(|u| u == unit)?;
        Some(self.values.row(i).to_vec())
    }

    pub fn select_units(&self, order: &[usize]) -> Self {
        Self {
            unit_ids: order.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            predictor_names: self.predictor_names.clone(),
            values: self.values.select(ndarray::Axis(0), order),
        }
    }

    /// Multiplies one predictor column by `factor`.
    pub fn scale_column(&mut self, column: usize, factor: T) {
        self.values.column_mut(column).mapv_inplace(|v| v * factor);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateUnit(String),
    DuplicatePeriod(String),
    NonFiniteOutcome { unit: String, period: String },
    ShareOutOfRange { unit: String, period: String, value: f64 },
    TreatedMissing(String),
    TreatedExcluded(String),
    ExcludedUnknown(String),
    NoPrePeriod,
    NoPostPeriod { t0: usize, periods: usize },
    DonorPoolTooSmall(usize),
    DuplicatePredictor(String),
    CovariatesMissingUnit(String),
    CovariatesExtraUnit(String),
    DuplicateCovariateUnit(String),
    NonFiniteCovariate { unit: String, predictor: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateUnit(u) => write!(f, "duplicate unit label `{u}`"),
            Self::DuplicatePeriod(p) => write!(f, "duplicate period label `{p}`"),
            Self::NonFiniteOutcome { unit, period } => {
                write!(f, "non-finite outcome at ({unit}, {period})")
            }
            Self::ShareOutOfRange {
                unit,
                period,
                value,
            } => write!(f, "share outcome {value} outside [0, 1] at ({unit}, {period})"),
            Self::TreatedMissing(u) => write!(f, "treated unit `{u}` not in panel"),
            Self::TreatedExcluded(u) => write!(f, "treated unit `{u}` is in the excluded set"),
            Self::ExcludedUnknown(u) => write!(f, "excluded unit `{u}` not in panel"),
            Self::NoPrePeriod => write!(f, "no pre-period: t0 must be at least 1"),
            Self::NoPostPeriod { t0, periods } => {
                write!(f, "no post-period: t0 = {t0} with {periods} periods")
            }
            Self::DonorPoolTooSmall(n) => {
                write!(f, "donor pool has {n} member(s); at least 2 are required")
            }
            Self::DuplicatePredictor(p) => write!(f, "duplicate predictor name `{p}`"),
            Self::CovariatesMissingUnit(u) => write!(f, "covariate table has no row for `{u}`"),
            Self::CovariatesExtraUnit(u) => {
                write!(f, "covariate table row `{u}` is not a panel unit")
            }
            Self::DuplicateCovariateUnit(u) => write!(f, "covariate table repeats unit `{u}`"),
            Self::NonFiniteCovariate { unit, predictor } => {
                write!(f, "non-finite covariate `{predictor}` for `{unit}`")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&lines.join("; "))
    }
}

fn duplicates(labels: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for l in labels {
        if !seen.insert(l.as_str()) && !dups.contains(l) {
            dups.push(l.clone());
        }
    }
    dups
}

/// Checks every panel, design and covariate invariant and lists the violations.
pub fn validate_panel<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    covs: Option<&CovariateTable<T>>,
) -> ValidationReport {
    let mut out = Vec::new();

    out.extend(duplicates(panel.unit_ids()).into_iter().map(Violation::DuplicateUnit));
    out.extend(
        duplicates(panel.period_ids())
            .into_iter()
            .map(Violation::DuplicatePeriod),
    );

    for (u, unit) in panel.unit_ids().iter().enumerate() {
        for (t, &v) in panel.series(u).iter().enumerate() {
            let period = &panel.period_ids()[t];
            if !v.is_finite() {
                out.push(Violation::NonFiniteOutcome {
                    unit: unit.clone(),
                    period: period.clone(),
                });
            } else if panel.kind() == OutcomeKind::Share && (v < T::zero() || v > T::one()) {
                out.push(Violation::ShareOutOfRange {
                    unit: unit.clone(),
                    period: period.clone(),
                    value: v.as_f64(),
                });
            }
        }
    }

    let treated_known = panel.unit_index(&design.treated_unit).is_some();
    if !treated_known {
        out.push(Violation::TreatedMissing(design.treated_unit.clone()));
    }
    if design.excluded_donors.contains(&design.treated_unit) {
        out.push(Violation::TreatedExcluded(design.treated_unit.clone()));
    }
    for ex in &design.excluded_donors {
        if panel.unit_index(ex).is_none() {
            out.push(Violation::ExcludedUnknown(ex.clone()));
        }
    }
    if design.t0 == 0 {
        out.push(Violation::NoPrePeriod);
    }
    if design.t0 >= panel.n_periods() {
        out.push(Violation::NoPostPeriod {
            t0: design.t0,
            periods: panel.n_periods(),
        });
    }
    let pool = panel
        .unit_ids()
        .iter()
        .filter(|u| **u != design.treated_unit && !design.excluded_donors.contains(*u))
        .count();
    if pool < 2 {
        out.push(Violation::DonorPoolTooSmall(pool));
    }

    if let Some(covs) = covs {
        out.extend(
            duplicates(covs.predictor_names())
                .into_iter()
                .map(Violation::DuplicatePredictor),
        );
        out.extend(
            duplicates(covs.unit_ids())
                .into_iter()
                .map(Violation::DuplicateCovariateUnit),
        );
        let rows: HashMap<&str, usize> = covs
            .unit_ids()
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        for unit in panel.unit_ids() {
            if !rows.contains_key(unit.as_str()) {
                out.push(Violation::CovariatesMissingUnit(unit.clone()));
            }
        }
        for (i, unit) in covs.unit_ids().iter().enumerate() {
            if panel.unit_index(unit).is_none() {
                out.push(Violation::CovariatesExtraUnit(unit.clone()));
            }
            for (k, name) in covs.predictor_names().iter().enumerate() {
                if !covs.values()[[i, k]].is_finite() {
                    out.push(Violation::NonFiniteCovariate {
                        unit: unit.clone(),
                        predictor: name.clone(),
                    });
                }
            }
        }
    }

    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i:02}")).collect()
    }

    fn share_panel(units: usize, periods: usize) -> Panel<f64> {
        let y = Array2::from_shape_fn((units, periods), |(u, t)| {
            (t as f64 / periods as f64) * (0.5 + 0.02 * u as f64)
        });
        Panel::new(labels("r", units), labels("w", periods), y, OutcomeKind::Share).unwrap()
    }

    fn covs(units: usize) -> CovariateTable<f64> {
        let names = vec!["foreign_born".into(), "high_education".into()];
        let v = Array2::from_shape_fn((units, 2), |(u, k)| (u * 3 + k) as f64 * 0.01);
        CovariateTable::new(labels("r", units), names, v).unwrap()
    }

    #[test]
    fn well_formed_inputs_pass() {
        let panel = share_panel(21, 46);
        let design = StudyDesign::new("r01", 27);
        let report = validate_panel(&panel, &design, Some(&covs(21)));
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn share_out_of_range_is_flagged() {
        let mut y = Array2::from_elem((3, 4), 0.5);
        y[[1, 2]] = 1.2;
        let panel = Panel::new(labels("r", 3), labels("w", 4), y, OutcomeKind::Share).unwrap();
        let report = validate_panel(&panel, &StudyDesign::new("r01", 2), None);
        assert_eq!(
            report.violations,
            vec![Violation::ShareOutOfRange {
                unit: "r02".into(),
                period: "w03".into(),
                value: 1.2
            }]
        );
    }

    #[test]
    fn real_outcomes_are_unbounded() {
        let y = Array2::from_elem((3, 4), 7.5);
        let panel = Panel::new(labels("r", 3), labels("w", 4), y, OutcomeKind::Real).unwrap();
        assert!(validate_panel(&panel, &StudyDesign::new("r01", 2), None).is_ok());
    }

    #[test]
    fn t0_equal_to_horizon_has_no_post_period() {
        let panel = share_panel(5, 10);
        let report = validate_panel(&panel, &StudyDesign::new("r01", 10), None);
        assert_eq!(
            report.violations,
            vec![Violation::NoPostPeriod { t0: 10, periods: 10 }]
        );
        assert!(report.to_string().contains("no post-period"));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut units = labels("r", 3);
        units[2] = "r01".into();
        let y = Array2::from_elem((3, 2), f64::NAN);
        let panel = Panel::new(units, labels("w", 2), y, OutcomeKind::Share).unwrap();
        let design = StudyDesign::new("zz", 0).excluding(["r02", "nope"]);
        let report = validate_panel(&panel, &design, None);
        let v = &report.violations;
        assert!(v.contains(&Violation::DuplicateUnit("r01".into())));
        assert!(v.contains(&Violation::TreatedMissing("zz".into())));
        assert!(v.contains(&Violation::ExcludedUnknown("nope".into())));
        assert!(v.contains(&Violation::NoPrePeriod));
        assert_eq!(
            v.iter()
                .filter(|x| matches!(x, Violation::NonFiniteOutcome { .. }))
                .count(),
            6
        );
    }

    #[test]
    fn excluding_donors_can_empty_the_pool() {
        let panel = share_panel(4, 6);
        let design = StudyDesign::new("r01", 3).excluding(["r02", "r03"]);
        let report = validate_panel(&panel, &design, None);
        assert_eq!(report.violations, vec![Violation::DonorPoolTooSmall(1)]);
        assert!(matches!(
            design.donor_pool(&panel),
            Err(Error::DonorPoolTooSmall(1))
        ));

        let excluded_treated = StudyDesign::new("r01", 3).excluding(["r01"]);
        assert!(validate_panel(&panel, &excluded_treated, None)
            .violations
            .contains(&Violation::TreatedExcluded("r01".into())));
    }

    #[test]
    fn covariate_mismatches_are_flagged() {
        let panel = share_panel(4, 6);
        let names = vec!["a".into(), "a".into()];
        let units = vec!["r01".into(), "r02".into(), "r03".into(), "x".into()];
        let table = CovariateTable::new(units, names, Array2::zeros((4, 2))).unwrap();
        let report = validate_panel(&panel, &StudyDesign::new("r01", 3), Some(&table));
        assert!(report
            .violations
            .contains(&Violation::DuplicatePredictor("a".into())));
        assert!(report
            .violations
            .contains(&Violation::CovariatesMissingUnit("r04".into())));
        assert!(report
            .violations
            .contains(&Violation::CovariatesExtraUnit("x".into())));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = Panel::new(labels("r", 2), labels("w", 3), Array2::<f64>::zeros((3, 3)), OutcomeKind::Real);
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn donor_pool_keeps_panel_order() {
        let panel = share_panel(5, 6);
        let design = StudyDesign::new("r03", 3).excluding(["r05"]);
        assert_eq!(design.donor_pool(&panel).unwrap(), vec![0, 1, 3]);
        assert_eq!(design.analysis_units(&panel), vec![0, 1, 2, 3]);
    }
}
