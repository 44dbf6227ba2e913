//! CSV and JSON report files. Floats are written in shortest round-trip
//! form, so reloading a file reproduces the values bit for bit.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use csv::Writer;
use synthctl_core::{
    DiffEffects64, Estimate64, GapSeries64, LooAnalysis64, PlaceboTable64, PredictorMatrix64,
    RowStatus, SpecSearchResult64, UnitWeights64,
};

use crate::load::GAPS_HEADER;

fn num(x: f64) -> String {
    if x.is_finite() {
        // Debug is shortest round-trip and switches to exponents at the extremes.
        format!("{x:?}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn status_label(status: &RowStatus) -> String {
    match status {
        RowStatus::Ok => "ok".into(),
        RowStatus::NonConverged => "nonconverged".into(),
        RowStatus::Failed(e) => format!("failed: {e}"),
    }
}

/// Collects files written into one output directory, in write order.
pub struct Reports {
    dir: PathBuf,
    written: Vec<String>,
}

impl Reports {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = Writer::from_path(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(name.to_owned());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        self.written.push(name.to_owned());
        Ok(())
    }

    /// Donor weights, then predictor weights with the treated value, its
    /// synthetic counterpart and the donor-pool mean.
    pub fn weights(&mut self, est: &Estimate64, pm: &PredictorMatrix64, treated: &str) -> Result<()> {
        let UnitWeights64 { units, weights } = &est.fit.w;
        let mut rows: Vec<Vec<String>> = units
            .iter()
            .zip(weights)
            .map(|(u, &w)| vec!["unit".into(), u.clone(), num(w), String::new(), String::new(), String::new()])
            .collect();
        let row = |unit: &str| pm.unit_ids.iter().position(|u| u == unit);
        let t = row(treated).context("treated unit missing from predictors")?;
        let donors: Vec<usize> = units.iter().filter_map(|u| row(u)).collect();
        for (k, (name, &v)) in est.fit.v.names.iter().zip(&est.fit.v.weights).enumerate() {
            let synthetic: f64 = donors.iter().zip(weights).map(|(&d, &w)| w * pm.values[[d, k]]).sum();
            let mean = donors.iter().map(|&d| pm.values[[d, k]]).sum::<f64>() / donors.len() as f64;
            rows.push(vec![
                "predictor".into(),
                name.clone(),
                num(v),
                num(pm.values[[t, k]]),
                num(synthetic),
                num(mean),
            ]);
        }
        self.csv(
            "weights.csv",
            &["kind", "name", "weight", "treated", "synthetic", "donor_mean"],
            rows,
        )
    }

    pub fn gaps(&mut self, name: &str, gaps: &GapSeries64) -> Result<()> {
        let rows = (0..gaps.len())
            .map(|i| {
                vec![
                    gaps.period_ids()[i].clone(),
                    num(gaps.actual()[i]),
                    num(gaps.synthetic()[i]),
                    num(gaps.gaps()[i]),
                    window(i, gaps.t0()).into(),
                ]
            })
            .collect();
        self.csv(name, &GAPS_HEADER, rows)
    }

    pub fn placebo(&mut self, name: &str, table: &PlaceboTable64) -> Result<()> {
        let rows = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.unit.clone(),
                    num(r.pre_mspe),
                    num(r.post_mspe),
                    opt(r.ratio),
                    r.rank.map(|k| k.to_string()).unwrap_or_default(),
                    opt(r.p_value),
                    status_label(&r.status),
                ]
            })
            .collect();
        self.csv(
            name,
            &["unit", "pre_mspe", "post_mspe", "ratio", "rank", "p_value", "status"],
            rows,
        )
    }

    /// Long format: the baseline (blank `omitted`) followed by each
    /// re-estimate, one row per period.
    pub fn loo(&mut self, loo: &LooAnalysis64) -> Result<()> {
        let mut rows = Vec::new();
        let runs = std::iter::once(("", &loo.baseline))
            .chain(loo.results.iter().map(|r| (r.omitted_unit.as_str(), &r.estimate)));
        for (omitted, est) in runs {
            let g = &est.gaps;
            for i in 0..g.len() {
                rows.push(vec![
                    omitted.to_owned(),
                    g.period_ids()[i].clone(),
                    num(g.actual()[i]),
                    num(g.synthetic()[i]),
                    num(g.gaps()[i]),
                    window(i, g.t0()).into(),
                ]);
            }
        }
        self.csv(
            "loo.csv",
            &["omitted", "period", "actual", "synthetic", "gap", "window"],
            rows,
        )
    }

    pub fn specsearch(&mut self, result: &SpecSearchResult64) -> Result<()> {
        let rows = result
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    r.scheme.to_string(),
                    r.include_covariates.to_string(),
                    r.treated_rank().map(|k| k.to_string()).unwrap_or_default(),
                    opt(r.p_value()),
                    r.status(),
                ]
            })
            .collect();
        self.csv(
            "specsearch.csv",
            &["spec", "scheme", "with_covariates", "treated_rank", "p_value", "status"],
            rows,
        )
    }

    pub fn diff(&mut self, d: &DiffEffects64) -> Result<()> {
        let rows = (0..d.event_times.len())
            .map(|i| {
                vec![
                    d.event_times[i].to_string(),
                    num(d.a[i]),
                    num(d.b[i]),
                    num(d.diffs[i]),
                    window(i, d.pre_len).into(),
                ]
            })
            .collect();
        self.csv("diff.csv", &["event_time", "a", "b", "diff", "window"], rows)
    }
}

fn window(i: usize, t0: usize) -> &'static str {
    if i < t0 {
        "pre"
    } else {
        "post"
    }
}
