use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inner::{solve_w, InnerSolution};
use super::{PredictorWeights, SolverSettings, UnitWeights};
use crate::error::{Error, Result};
use crate::lags::PredictorMatrix;
use crate::panel::{Panel, StudyDesign};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedDiagnostics {
    /// Inner objective in standardized predictor space at `(W*, V*)`.
    pub predictor_loss: f64,
    /// Pre-period outcome MSPE of the synthetic unit.
    pub pre_mspe: f64,
    pub projected_gradient: f64,
    pub optimality_gap: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
    /// Inner solves during the search that hit the iteration cap.
    pub nonconverged_inner_solves: usize,
    pub outer_evaluations: usize,
    /// False when the winning start exhausted its evaluation budget.
    pub outer_converged: bool,
    /// Zero-based index of the winning start; start 0 is equal weights.
    pub best_start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedFit<T> {
    pub w: UnitWeights<T>,
    pub v: PredictorWeights<T>,
    pub diagnostics: NestedDiagnostics,
}

/// Z-scores each column over `rows` (sample standard deviation) and returns
/// those rows in the given order. Constant columns become zero.
pub fn standardize<T: Scalar>(values: ArrayView2<'_, T>, rows: &[usize]) -> Array2<T> {
    let k = values.ncols();
    let n = T::lit(rows.len() as f64);
    let mut out = Array2::zeros((rows.len(), k));
    for c in 0..k {
        let mean = rows.iter().map(|&r| values[[r, c]]).sum::<T>() / n;
        let var = rows
            .iter()
            .map(|&r| (values[[r, c]] - mean).powi(2))
            .sum::<T>()
            / (n - T::one()).max(T::one());
        let sd = var.sqrt();
        let scale = if sd > T::zero() { sd } else { T::one() };
        for (i, &r) in rows.iter().enumerate() {
            out[[i, c]] = (values[[r, c]] - mean) / scale;
        }
    }
    out
}

fn softmax<T: Scalar>(theta: &[T]) -> Vec<T> {
    // The last logit is pinned at zero.
    let m = theta.iter().copied().fold(T::zero(), T::max);
    let mut e: Vec<T> = theta.iter().map(|&t| (t - m).exp()).collect();
    e.push((-m).exp());
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

struct SearchOutcome {
    evaluations: usize,
    converged: bool,
}

/// Nelder-Mead on an unconstrained vector. The evaluation budget is checked
/// between iterations, so a final iteration may overrun it by at most
/// `dim + 1` evaluations.
fn nelder_mead<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    x0: &[T],
    step: T,
    max_evals: usize,
    tol: T,
) -> SearchOutcome {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut evals = 0;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut pts: Vec<Vec<T>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] = p[i] + step;
        pts.push(p);
    }
    let mut vals: Vec<T> = pts.iter().map(|p| eval(p, &mut evals)).collect();

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).expect("finite objective"));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(&a, &b)| (a - b).abs()))
            .fold(T::zero(), T::max);
        if spread <= tol || size <= T::tol(1e-10) {
            return SearchOutcome {
                evaluations: evals,
                converged: true,
            };
        }
        if evals >= max_evals {
            return SearchOutcome {
                evaluations: evals,
                converged: false,
            };
        }

        let nn = T::lit(n as f64);
        let centroid: Vec<T> = (0..n)
            .map(|d| pts[..n].iter().map(|p| p[d]).sum::<T>() / nn)
            .collect();
        let along = |from: &[T], coef: T| -> Vec<T> {
            centroid
                .iter()
                .zip(from)
                .map(|(&c, &x)| c + coef * (x - c))
                .collect()
        };

        let xr = along(&pts[n], -alpha);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(&xr, gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < vals[n] {
            let xc = along(&xr, rho);
            let fc = eval(&xc, &mut evals);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = along(&pts[n], rho);
            let fc = eval(&xc, &mut evals);
            let ok = fc < vals[n];
            (xc, fc, ok)
        };
        if accept {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        let best = pts[0].clone();
        for i in 1..=n {
            pts[i] = best
                .iter()
                .zip(&pts[i])
                .map(|(&b, &x)| b + sigma * (x - b))
                .collect();
            vals[i] = eval(&pts[i], &mut evals);
        }
    }
}

fn outcome_mspe<T: Scalar>(treated: &[T], donors: ArrayView2<'_, T>, w: &[T]) -> T {
    let t0 = treated.len();
    let sse: T = (0..t0)
        .map(|t| {
            let synth: T = w.iter().enumerate().map(|(j, &wj)| wj * donors[[j, t]]).sum();
            (treated[t] - synth).powi(2)
        })
        .sum();
    sse / T::lit(t0 as f64)
}

struct Candidate<T> {
    mspe: T,
    v: Vec<T>,
    inner: InnerSolution<T>,
    start: usize,
}

/// Jointly chooses donor weights `W` and predictor weights `V`.
///
/// For a given `V`, `W(V)` solves the inner problem on predictors z-scored
/// over the treated unit and its donor pool. `V` is searched by
/// Nelder-Mead on softmax logits to minimize the pre-period MSPE of the
/// predictor matrix's fit series. Start 0 is equal weights; further starts
/// draw logits from a generator seeded with `settings.rng_seed`. The best
/// evaluation across all starts wins, earlier evaluations on ties.
pub fn solve_nested<T: Scalar>(
    panel: &Panel<T>,
    design: &StudyDesign,
    pm: &PredictorMatrix<T>,
    settings: &SolverSettings,
) -> Result<NestedFit<T>> {
    settings.validate()?;
    let treated = design.treated_index(panel)?;
    let pool = design.donor_pool(panel)?;

    let pm_row = |unit: usize| -> Result<usize> {
        let label = &panel.unit_ids()[unit];
        pm.unit_ids
            .iter()
            .position(|u| u == label)
            .ok_or_else(|| Error::UnknownUnit(label.clone()))
    };
    let mut rows = vec![pm_row(treated)?];
    for &d in &pool {
        rows.push(pm_row(d)?);
    }

    let z = standardize(pm.values.view(), &rows);
    let x_treated = z.row(0).to_vec();
    let x_donors = z.slice(ndarray::s![1.., ..]);
    let fit = pm.fit_series.select(ndarray::Axis(0), &rows);
    let y_treated = fit.row(0).to_vec();
    let y_donors = fit.slice(ndarray::s![1.., ..]);

    let k = pm.n_predictors();
    let mut nonconverged = 0;
    let mut evaluations = 0;
    let mut best: Option<Candidate<T>> = None;
    let mut outer_converged = true;

    let mut evaluate = |v: Vec<T>, start: usize, best: &mut Option<Candidate<T>>| -> T {
        let inner = solve_w(&x_treated, x_donors, &v, settings);
        if !inner.converged {
            nonconverged += 1;
        }
        let mspe = outcome_mspe(&y_treated, y_donors, &inner.weights);
        if best.as_ref().is_none_or(|b| mspe < b.mspe) {
            *best = Some(Candidate {
                mspe,
                v,
                inner,
                start,
            });
        }
        mspe
    };

    if k == 1 {
        evaluate(vec![T::one()], 0, &mut best);
        evaluations = 1;
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.rng_seed);
        let starts: Vec<Vec<T>> = (0..settings.multistart_count)
            .map(|s| {
                (0..k - 1)
                    .map(|_| {
                        if s == 0 {
                            T::zero()
                        } else {
                            T::lit(rng.random_range(-2.0..2.0))
                        }
                    })
                    .collect()
            })
            .collect();
        let tol = T::tol(settings.outer_tolerance);
        let mut converged_by_start = Vec::new();
        for (s, x0) in starts.iter().enumerate() {
            let outcome = nelder_mead(
                |theta| evaluate(softmax(theta), s, &mut best),
                x0,
                T::one(),
                settings.outer_max_evaluations,
                tol,
            );
            evaluations += outcome.evaluations;
            converged_by_start.push(outcome.converged);
        }
        let winner = best.as_ref().expect("at least one evaluation").start;
        outer_converged = converged_by_start[winner];
    }

    let best = best.expect("at least one evaluation");
    let donor_ids: Vec<String> = pool.iter().map(|&d| panel.unit_ids()[d].clone()).collect();
    let w = UnitWeights::new(donor_ids, best.inner.weights.clone())?;
    let v = PredictorWeights {
        names: pm.predictor_names.clone(),
        weights: best.v.clone(),
    };
    assert!(w.is_valid(), "inner solve left the simplex");
    assert!(v.is_valid(), "predictor weights left the simplex");

    Ok(NestedFit {
        w,
        v,
        diagnostics: NestedDiagnostics {
            predictor_loss: best.inner.objective.as_f64(),
            pre_mspe: best.mspe.as_f64(),
            projected_gradient: best.inner.projected_gradient.as_f64(),
            optimality_gap: best.inner.optimality_gap.as_f64(),
            inner_iterations: best.inner.iterations,
            inner_converged: best.inner.converged,
            nonconverged_inner_solves: nonconverged,
            outer_evaluations: evaluations,
            outer_converged,
            best_start: best.start,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_on_simplex_with_pinned_last_logit() {
        let v = softmax(&[0.0f64, 0.0]);
        assert_eq!(v, vec![1.0 / 3.0; 3]);
        let v = softmax(&[800.0f64, -5.0]);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(v[0] > 0.999);
    }

    #[test]
    fn standardize_centers_and_scales() {
        let x = ndarray::array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [100.0, 0.0]];
        let z = standardize(x.view(), &[2, 0, 1]);
        assert_eq!(z.column(0).to_vec(), vec![1.0, -1.0, 0.0]);
        assert_eq!(z.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn nelder_mead_minimizes_a_quadratic() {
        let mut calls = 0;
        let out = nelder_mead(
            |x: &[f64]| {
                calls += 1;
                (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2)
            },
            &[0.0, 0.0],
            1.0,
            2000,
            1e-14,
        );
        assert!(out.converged);
        assert_eq!(out.evaluations, calls);
    }

    #[test]
    fn nelder_mead_reports_exhausted_budget() {
        let out = nelder_mead(
            |x: &[f64]| x.iter().map(|v| (v - 3.0).powi(2)).sum(),
            &[0.0; 4],
            1.0,
            10,
            1e-14,
        );
        assert!(!out.converged);
        assert!(out.evaluations >= 10 && out.evaluations <= 10 + 5 + 1);
    }
}
