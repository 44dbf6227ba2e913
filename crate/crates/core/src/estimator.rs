//! Synthetic counterfactual, gap series and MSPE summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Panel, StudyDesign};
use crate::scalar::Scalar;
use crate::simplex::UnitWeights;

/// Treated outcomes, their synthetic counterfactual, and the difference.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries<T> {
    period_ids: Vec<String>,
    actual: Vec<T>,
    synthetic: Vec<T>,
    gaps: Vec<T>,
    t0: usize,
}

impl<T: Scalar> GapSeries<T> {
    /// Gaps are computed here as `actual - synthetic`, never supplied.
    pub fn new(period_ids: Vec<String>, actual: Vec<T>, synthetic: Vec<T>, t0: usize) -> Result<Self> {
        if actual.len() != period_ids.len() || synthetic.len() != period_ids.len() {
            return Err(Error::WeightLength {
                got: actual.len().max(synthetic.len()),
                expected: period_ids.len(),
            });
        }
        let gaps = actual.iter().zip(&synthetic).map(|(&a, &s)| a - s).collect();
        Ok(Self {
            period_ids,
            actual,
            synthetic,
            gaps,
            t0,
        })
    }

    pub fn period_ids(&self) -> &[String] {
        &self.period_ids
    }

    pub fn actual(&self) -> &[T] {
        &self.actual
    }

    pub fn synthetic(&self) -> &[T] {
        &self.synthetic
    }

    pub fn gaps(&self) -> &[T] {
        &self.gaps
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn window(&self, window: Window) -> &[T] {
        let t0 = self.t0.min(self.gaps.len());
        match window {
            Window::Pre => &self.gaps[..t0],
            Window::Post => &self.gaps[t0..],
        }
    }

    pub fn summary(&self) -> Result<MspeSummary<T>> {
        Ok(MspeSummary::new(mspe(self, Window::Pre)?, mspe(self, Window::Post)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periods `1..=t0`.
    Pre,
    /// Periods `t0+1..=T`, the intervention period included.
    Post,
}

impl Window {
    fn name(self) -> &'static str {
        match self {
            Window::Pre => "pre",
            Window::Post => "post",
        }
    }
}

/// Mean squared gap over a window.
pub fn mspe<T: Scalar>(gaps: &GapSeries<T>, window: Window) -> Result<T> {
    mean_square(gaps.window(window)).ok_or(Error::EmptyWindow(window.name()))
}

pub(crate) fn mean_square<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().map(|&g| g * g).sum::<T>() / T::lit(xs.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MspeSummary<T> {
    pub pre_mspe: T,
    pub post_mspe: T,
    /// `post / pre`; `None` when the pre-period fit is exact.
    pub ratio: Option<T>,
}

impl<T: Scalar> MspeSummary<T> {
    pub fn new(pre_mspe: T, post_mspe: T) -> Self {
        let ratio = (pre_mspe > T::zero()).then(|| post_mspe / pre_mspe);
        Self {
            pre_mspe,
            post_mspe,
            ratio,
        }
    }
}

/// Builds the counterfactual `sum_j w_j Y_jt` for every period and the
/// treated-minus-synthetic gaps.
pub fn synthesize<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    w: &UnitWeights<T>,
) -> Result<GapSeries<T>> {
    let treated = design.treated_index(panel)?;
    let pool = design.donor_pool(panel)?;
    let rows: Vec<usize> = w
        .units
        .iter()
        .map(|u| {
            panel
                .unit_index(u)
                .filter(|i| pool.contains(i))
                .ok_or_else(|| Error::UnknownUnit(u.clone()))
        })
        .collect::<Result<_>>()?;

    let periods = panel.n_periods();
    let synthetic = (0..periods)
        .map(|t| {
            rows.iter()
                .zip(&w.weights)
                .map(|(&r, &wj)| wj * panel.series(r)[t])
                .sum()
        })
        .collect();
    GapSeries::new(
        panel.period_ids().to_vec(),
        panel.series(treated).to_vec(),
        synthetic,
        design.t0,
    )
}
