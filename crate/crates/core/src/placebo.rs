//! In-space placebo inference.
//!
//! Every analysis unit is cast in turn as treated, with all other analysis
//! units (the truly treated one included) as its donor pool. Units are
//! ranked by post-period MSPE and the treated unit's p-value is its rank
//! divided by the number of ranked units.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimator::{synthesize, GapSeries, MspeSummary};
use crate::lags::{build_predictor_matrix, LagSpec, PredictorMatrix};
use crate::panel::{validate_panel, CovariateTable, Panel, StudyDesign};
use crate::scalar::Scalar;
use crate::simplex::{solve_nested, NestedFit, SolverSettings};

/// Placebo p-value of a unit ranked `rank` (1-based) among `units`.
pub fn placebo_p_value(rank: usize, units: usize) -> f64 {
    rank as f64 / units as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    /// The inner solve at the chosen weights hit its iteration cap; the
    /// best iterate was used and the row is still ranked.
    NonConverged,
    /// No estimate could be produced; the row is left out of the ranking.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboRow<T> {
    pub unit: String,
    pub pre_mspe: T,
    pub post_mspe: T,
    /// `post / pre`, reported for diagnostics only.
    pub ratio: Option<T>,
    /// 1-based rank by post-period MSPE; `None` for failed rows.
    pub rank: Option<usize>,
    pub p_value: Option<T>,
    pub status: RowStatus,
    pub gaps: Option<GapSeries<T>>,
    pub fit: Option<NestedFit<T>>,
}

impl<T: Scalar> PlaceboRow<T> {
    pub fn from_gaps(unit: String, gaps: GapSeries<T>, fit: Option<NestedFit<T>>) -> Result<Self> {
        let MspeSummary {
            pre_mspe,
            post_mspe,
            ratio,
        } = gaps.summary()?;
        let converged = fit
            .as_ref()
            .is_none_or(|f| f.diagnostics.inner_converged);
        Ok(Self {
            unit,
            pre_mspe,
            post_mspe,
            ratio,
            rank: None,
            p_value: None,
            status: if converged {
                RowStatus::Ok
            } else {
                RowStatus::NonConverged
            },
            gaps: Some(gaps),
            fit,
        })
    }

    pub fn failed(unit: String, reason: String) -> Self {
        Self {
            unit,
            pre_mspe: T::nan(),
            post_mspe: T::nan(),
            ratio: None,
            rank: None,
            p_value: None,
            status: RowStatus::Failed(reason),
            gaps: None,
            fit: None,
        }
    }

    fn ranked(&self) -> bool {
        !matches!(self.status, RowStatus::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboTable<T> {
    /// Ranked rows in rank order, then failed rows in input order.
    pub rows: Vec<PlaceboRow<T>>,
    pub treated_unit: String,
    pub treated_rank: usize,
    pub p_value: T,
}

impl<T: Scalar> PlaceboTable<T> {
    pub fn ranked_units(&self) -> usize {
        self.rows.iter().filter(|r| r.rank.is_some()).count()
    }

    pub fn row(&self, unit: &str) -> Option<&PlaceboRow<T>> {
        self.rows.iter().find(|r| r.unit == unit)
    }

    pub fn any_nonconverged(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.status == RowStatus::NonConverged)
    }
}

/// Orders rows by post-period MSPE, largest first, ties by unit label, and
/// fills in ranks and p-values.
pub fn rank_by_post_mspe<T: Scalar>(
    rows: Vec<PlaceboRow<T>>,
    treated_unit: &str,
) -> Result<PlaceboTable<T>> {
    let (mut ranked, failed): (Vec<_>, Vec<_>) = rows.into_iter().partition(PlaceboRow::ranked);
    ranked.sort_by(|a, b| {
        b.post_mspe
            .partial_cmp(&a.post_mspe)
            .expect("finite MSPE")
            .then_with(|| a.unit.cmp(&b.unit))
    });
    let n = ranked.len();
    for (i, row) in ranked.iter_mut().enumerate() {
        row.rank = Some(i + 1);
        row.p_value = Some(T::lit(placebo_p_value(i + 1, n)));
    }
    let treated = ranked
        .iter()
        .find(|r| r.unit == treated_unit)
        .ok_or_else(|| Error::UnknownUnit(treated_unit.to_owned()))?;
    let (treated_rank, p_value) = (treated.rank.unwrap(), treated.p_value.unwrap());
    ranked.extend(failed);
    Ok(PlaceboTable {
        rows: ranked,
        treated_unit: treated_unit.to_owned(),
        treated_rank,
        p_value,
    })
}

fn estimate_unit<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    pm: &PredictorMatrix<T>,
    settings: &SolverSettings,
) -> Result<PlaceboRow<T>> {
    let fit = solve_nested(panel, design, pm, settings)?;
    let gaps = synthesize(panel, design, &fit.w)?;
    PlaceboRow::from_gaps(design.treated_unit.clone(), gaps, Some(fit))
}

/// Re-runs the full nested estimation with every analysis unit as the
/// pseudo-treated unit. Units run in parallel; the table does not depend
/// on scheduling.
pub fn placebo_in_space<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    covs: Option<&CovariateTable<T>>,
    lagspec: &LagSpec<T>,
    settings: &SolverSettings,
) -> Result<PlaceboTable<T>> {
    validate_panel(panel, design, covs).into_result()?;
    settings.validate()?;
    let pm = build_predictor_matrix(panel, design, covs, lagspec)?;
    let units = design.analysis_units(panel);
    let rows: Vec<PlaceboRow<T>> = units
        .into_par_iter()
        .map(|u| {
            let label = panel.unit_ids()[u].clone();
            let d = design.with_treated(&label);
            estimate_unit(panel, &d, &pm, settings)
                .unwrap_or_else(|e| PlaceboRow::failed(label, e.to_string()))
        })
        .collect();
    if let Some(PlaceboRow {
        status: RowStatus::Failed(reason),
        ..
    }) = rows.iter().find(|r| r.unit == design.treated_unit)
    {
        return Err(Error::TreatedFailed(reason.clone()));
    }
    rank_by_post_mspe(rows, &design.treated_unit)
}

/// Two gap series re-indexed to event time and differenced.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffEffects<T> {
    /// Periods relative to each series' origin, ascending.
    pub event_times: Vec<i64>,
    /// `a - b` at each event time.
    pub diffs: Vec<T>,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub origin_a: String,
    pub origin_b: String,
    /// Number of leading event times at which either series is still pre-period.
    pub pre_len: usize,
}

impl<T: Scalar> DiffEffects<T> {
    /// As a gap series: `actual` holds `a`, `synthetic` holds `b`.
    pub fn to_gap_series(&self) -> Result<GapSeries<T>> {
        GapSeries::new(
            self.event_times.iter().map(|e| e.to_string()).collect(),
            self.a.clone(),
            self.b.clone(),
            self.pre_len,
        )
    }
}

/// Aligns both gap series on event time (period position minus origin
/// position), keeps the common support and differences them.
pub fn diff_in_effects<T: Scalar>(
    gaps_a: &GapSeries<T>,
    gaps_b: &GapSeries<T>,
    origin_a: &str,
    origin_b: &str,
) -> Result<DiffEffects<T>> {
    let locate = |g: &GapSeries<T>, origin: &str| {
        g.period_ids()
            .iter()
            .position(|p| p == origin)
            .map(|i| i as i64)
            .ok_or_else(|| Error::UnknownPeriod(origin.to_owned()))
    };
    let (oa, ob) = (locate(gaps_a, origin_a)?, locate(gaps_b, origin_b)?);
    let lo = (-oa).max(-ob);
    let hi = (gaps_a.len() as i64 - 1 - oa).min(gaps_b.len() as i64 - 1 - ob);
    if lo > hi {
        return Err(Error::NoOverlap);
    }
    let event_times: Vec<i64> = (lo..=hi).collect();
    let a: Vec<T> = event_times
        .iter()
        .map(|&e| gaps_a.gaps()[(oa + e) as usize])
        .collect();
    let b: Vec<T> = event_times
        .iter()
        .map(|&e| gaps_b.gaps()[(ob + e) as usize])
        .collect();
    let diffs = a.iter().zip(&b).map(|(&x, &y)| x - y).collect();
    let post_from = (gaps_a.t0() as i64 - oa).max(gaps_b.t0() as i64 - ob);
    let pre_len = (post_from - lo).clamp(0, event_times.len() as i64) as usize;
    Ok(DiffEffects {
        event_times,
        diffs,
        a,
        b,
        origin_a: origin_a.to_owned(),
        origin_b: origin_b.to_owned(),
        pre_len,
    })
}

/// First period in which `unit` has a strictly positive outcome.
pub fn first_positive_period<T: Scalar>(panel: &Panel<T>, unit: &str) -> Option<String> {
    let i = panel.unit_index(unit)?;
    panel
        .series(i)
        .iter()
        .position(|&v| v > T::zero())
        .map(|t| panel.period_ids()[t].clone())
}

/// How event-time origins are chosen for each unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OriginRule {
    /// Each unit's first period with a positive outcome, separately in each
    /// panel; the first period when a unit never turns positive.
    FirstPositive,
    /// The same pair of origin periods for every unit.
    Fixed { a: String, b: String },
}

impl OriginRule {
    fn origins<T: Scalar>(&self, a: &Panel<T>, b: &Panel<T>, unit: &str) -> (String, String) {
        match self {
            OriginRule::Fixed { a, b } => (a.clone(), b.clone()),
            OriginRule::FirstPositive => {
                let pick = |p: &Panel<T>| {
                    first_positive_period(p, unit).unwrap_or_else(|| p.period_ids()[0].clone())
                };
                (pick(a), pick(b))
            }
        }
    }
}

/// One group's inputs to a between-group comparison.
#[derive(Debug, Clone)]
pub struct GroupInputs<'a, T> {
    pub panel: &'a Panel<T>,
    pub design: &'a StudyDesign,
    pub lagspec: &'a LagSpec<T>,
}

#[derive(Debug, Clone)]
pub struct DiffPlacebo<T> {
    pub table: PlaceboTable<T>,
    /// The treated unit's differenced series.
    pub treated: DiffEffects<T>,
}

/// Difference in effects between two groups for every unit, with the
/// treated unit ranked among placebos by post-period MSPE of the difference.
pub fn placebo_diff_in_effects<T: Scalar>(
    group_a: GroupInputs<'_, T>,
    group_b: GroupInputs<'_, T>,
    covs: Option<&CovariateTable<T>>,
    origins: &OriginRule,
    settings: &SolverSettings,
) -> Result<DiffPlacebo<T>> {
    let table_a = placebo_in_space(group_a.panel, group_a.design, covs, group_a.lagspec, settings)?;
    let table_b = placebo_in_space(group_b.panel, group_b.design, covs, group_b.lagspec, settings)?;
    let treated = &group_a.design.treated_unit;

    let mut rows = Vec::new();
    let mut treated_diff = None;
    for u in group_a.design.analysis_units(group_a.panel) {
        let unit = group_a.panel.unit_ids()[u].clone();
        let (Some(ra), Some(rb)) = (table_a.row(&unit), table_b.row(&unit)) else {
            continue;
        };
        let row = match (&ra.gaps, &rb.gaps) {
            (Some(ga), Some(gb)) => {
                let (oa, ob) = origins.origins(group_a.panel, group_b.panel, &unit);
                diff_in_effects(ga, gb, &oa, &ob).and_then(|d| {
                    let row = PlaceboRow::from_gaps(unit.clone(), d.to_gap_series()?, None)?;
                    if &unit == treated {
                        treated_diff = Some(d);
                    }
                    Ok(row)
                })
            }
            _ => Err(Error::EstimateMissing(unit.clone())),
        };
        let mut row = row.unwrap_or_else(|e| PlaceboRow::failed(unit.clone(), e.to_string()));
        if row.status == RowStatus::Ok
            && (ra.status == RowStatus::NonConverged || rb.status == RowStatus::NonConverged)
        {
            row.status = RowStatus::NonConverged;
        }
        rows.push(row);
    }
    let treated_diff = treated_diff.ok_or_else(|| Error::UnknownUnit(treated.clone()))?;
    Ok(DiffPlacebo {
        table: rank_by_post_mspe(rows, treated)?,
        treated: treated_diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedInterval<T> {
    pub mean_diff: T,
    pub lo: T,
    pub hi: T,
}

/// Mean of pairwise differences `treated - neighbor` with a two-sided
/// Student-t interval at `level`.
pub fn paired_difference_ci<T: Scalar>(
    treated: &[T],
    neighbor: &[T],
    level: f64,
) -> Result<PairedInterval<T>> {
    if treated.len() != neighbor.len() || treated.len() < 2 {
        return Err(Error::TooFewPairs {
            left: treated.len(),
            right: neighbor.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Level(level));
    }
    let d: Vec<f64> = treated
        .iter()
        .zip(neighbor)
        .map(|(&a, &b)| (a - b).as_f64())
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = if var > 0.0 {
        let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
        t.inverse_cdf(1.0 - (1.0 - level) / 2.0) * (var / n).sqrt()
    } else {
        0.0
    };
    Ok(PairedInterval {
        mean_diff: T::lit(mean),
        lo: T::lit(mean - half),
        hi: T::lit(mean + half),
    })
}
