//! Subcommand execution.

use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use synthctl_core::{
    build_predictor_matrix, estimate, generate_panel, leave_one_out, paired_difference_ci,
    placebo_diff_in_effects, placebo_in_space, spec_search, validate_panel, CovariateTable64,
    Estimate64, GeneratorSpec, GroupInputs, LagSpec, OriginRule, OutcomeKind, Panel64,
    StudyDesign,
};

use crate::config::RunConfig;
use crate::load::{load_covariates, load_panel};
use crate::report::Reports;

/// What a finished run wrote and whether any solve hit its iteration cap.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<String>,
    pub nonconverged: bool,
    pub summary: String,
}

struct Inputs {
    panel: Panel64,
    covs: Option<CovariateTable64>,
    proxy: Option<Arc<Panel64>>,
    design: StudyDesign,
    lagspec: LagSpec<f64>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let panel = load_panel(&cfg.panel)?;
    let covs = cfg.covariates.as_deref().map(load_covariates).transpose()?;
    let proxy = cfg
        .proxy_panel
        .as_deref()
        .map(|p| load_panel(p).map(Arc::new))
        .transpose()?;
    let design = StudyDesign::new(cfg.treated.clone(), cfg.t0).excluding(cfg.exclude.iter());
    validate_panel(&panel, &design, covs.as_ref()).into_result()?;
    let mut lagspec = LagSpec::new(cfg.scheme, cfg.with_covariates);
    if let Some(p) = &proxy {
        lagspec = lagspec.with_proxy(p.clone());
    }
    Ok(Inputs {
        panel,
        covs,
        proxy,
        design,
        lagspec,
    })
}

fn readout(panel: &Panel64, est: &Estimate64, treated: &str) -> String {
    let g = &est.gaps;
    let last = g.len() - 1;
    let (actual, synthetic, gap) = (g.actual()[last], g.synthetic()[last], g.gaps()[last]);
    let gap = match panel.kind() {
        OutcomeKind::Share => format!("{:+.1} pp", gap * 100.0),
        OutcomeKind::Real => format!("{gap:+.4}"),
    };
    format!(
        "{treated}, period {}: actual {actual:.4}, synthetic {synthetic:.4}, gap {gap}\n\
         pre-MSPE {:.3e}, post-MSPE {:.3e}",
        g.period_ids()[last],
        est.mspe.pre_mspe,
        est.mspe.post_mspe,
    )
}

pub fn run_analysis(cfg: &RunConfig, command: &str) -> Result<Outcome> {
    let inputs = load_inputs(cfg)?;
    let Inputs {
        panel,
        covs,
        proxy,
        design,
        lagspec,
    } = &inputs;
    let covs = covs.as_ref();
    let settings = &cfg.solver;
    let mut out = Reports::create(&cfg.out)?;
    let mut nonconverged = false;
    let mut meta = serde_json::Map::new();

    let est = estimate(panel, design, covs, lagspec, settings)?;
    let pm = build_predictor_matrix(panel, design, covs, lagspec)?;
    nonconverged |= !est.fit.diagnostics.inner_converged;
    out.weights(&est, &pm, &cfg.treated)?;
    out.gaps("gaps.csv", &est.gaps)?;
    let mut summary = readout(panel, &est, &cfg.treated);
    meta.insert("diagnostics".into(), serde_json::to_value(&est.fit.diagnostics)?);
    meta.insert(
        "mspe".into(),
        json!({"pre": est.mspe.pre_mspe, "post": est.mspe.post_mspe, "ratio": est.mspe.ratio}),
    );

    if cfg.placebo {
        let table = placebo_in_space(panel, design, covs, lagspec, settings)?;
        nonconverged |= table.any_nonconverged();
        out.placebo("placebo.csv", &table)?;
        summary += &format!(
            "\nplacebo: rank {} of {}, p = {:.3}",
            table.treated_rank,
            table.ranked_units(),
            table.p_value
        );
        meta.insert(
            "placebo".into(),
            json!({
                "treated_rank": table.treated_rank,
                "ranked_units": table.ranked_units(),
                "p_value": table.p_value,
            }),
        );
    }

    if cfg.loo {
        let loo = leave_one_out(panel, design, covs, lagspec, settings)?;
        nonconverged |= loo
            .results
            .iter()
            .any(|r| !r.estimate.fit.diagnostics.inner_converged);
        out.loo(&loo)?;
        let runs: Vec<Value> = loo
            .results
            .iter()
            .map(|r| {
                json!({
                    "omitted": r.omitted_unit,
                    "pre_mspe": r.estimate.mspe.pre_mspe,
                    "post_mspe": r.estimate.mspe.post_mspe,
                })
            })
            .collect();
        meta.insert("loo".into(), json!({"reoptimizes_v": true, "runs": runs}));
    }

    if cfg.specsearch {
        let result = spec_search(panel, design, covs, proxy.clone(), settings);
        nonconverged |= result.rows.iter().any(|r| r.status() == "nonconverged");
        out.specsearch(&result)?;
        let failed = result.rows.iter().filter(|r| r.treated_rank().is_none()).count();
        summary += &format!("\nspecification search: {} variants, {failed} failed", result.rows.len());
    }

    if let Some(diff) = &cfg.diff {
        let panel_b = load_panel(&diff.panel_b)?;
        let design_b = StudyDesign::new(cfg.treated.clone(), diff.t0_b).excluding(cfg.exclude.iter());
        validate_panel(&panel_b, &design_b, covs).into_result()?;
        let origins = match &diff.origins {
            Some((a, b)) => OriginRule::Fixed {
                a: a.clone(),
                b: b.clone(),
            },
            None => OriginRule::FirstPositive,
        };
        let result = placebo_diff_in_effects(
            GroupInputs {
                panel,
                design,
                lagspec,
            },
            GroupInputs {
                panel: &panel_b,
                design: &design_b,
                lagspec,
            },
            covs,
            &origins,
            settings,
        )?;
        nonconverged |= result.table.any_nonconverged();
        out.diff(&result.treated)?;
        out.placebo("diff_placebo.csv", &result.table)?;
        let d = &result.treated;
        let interval = paired_difference_ci(&d.a[d.pre_len..], &d.b[d.pre_len..], 0.95)
            .map(|ci| json!({"level": 0.95, "mean_diff": ci.mean_diff, "lo": ci.lo, "hi": ci.hi}))
            .unwrap_or(Value::Null);
        summary += &format!(
            "\ndifference in effects: rank {} of {}, p = {:.3}",
            result.table.treated_rank,
            result.table.ranked_units(),
            result.table.p_value
        );
        meta.insert(
            "diff".into(),
            json!({
                "origin_a": d.origin_a,
                "origin_b": d.origin_b,
                "treated_rank": result.table.treated_rank,
                "p_value": result.table.p_value,
                "post_interval": interval,
            }),
        );
    }

    meta.insert("tool".into(), json!({"name": "synthctl", "version": env!("CARGO_PKG_VERSION")}));
    meta.insert("command".into(), json!(command));
    meta.insert("config".into(), serde_json::to_value(cfg)?);
    meta.insert("seed".into(), json!(cfg.solver.rng_seed));
    meta.insert("nonconverged".into(), json!(nonconverged));
    let mut files = out.written().to_vec();
    files.push("run_metadata.json".into());
    meta.insert("files".into(), json!(files));
    out.json("run_metadata.json", &Value::Object(meta))?;

    if nonconverged {
        summary += "\nwarning: at least one inner solve hit its iteration cap; see run_metadata.json";
    }
    Ok(Outcome {
        files: out.written().to_vec(),
        nonconverged,
        summary,
    })
}

/// Writes `panel.csv`, `covariates.csv` and `truth.json`.
pub fn run_generate(spec: &GeneratorSpec, dir: &Path) -> Result<Outcome> {
    let g = generate_panel::<f64>(spec)?;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let write = |name: &str, header: [&str; 3], cols: &[String], rows: &[String], values: &ndarray::Array2<f64>| -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        w.write_record(header)?;
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                w.write_record([r.as_str(), c.as_str(), &format!("{:?}", values[[i, j]])])?;
            }
        }
        w.flush()?;
        Ok(())
    };
    write("panel.csv", crate::load::PANEL_HEADER, g.panel.period_ids(), g.panel.unit_ids(), g.panel.outcomes())?;
    write(
        "covariates.csv",
        crate::load::COVARIATE_HEADER,
        g.covariates.predictor_names(),
        g.covariates.unit_ids(),
        g.covariates.values(),
    )?;
    let truth = json!({"spec": spec, "truth": g.truth});
    let mut f = std::fs::File::create(dir.join("truth.json"))?;
    serde_json::to_writer_pretty(&mut f, &truth)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    Ok(Outcome {
        files: vec!["panel.csv".into(), "covariates.csv".into(), "truth.json".into()],
        nonconverged: false,
        summary: format!(
            "{} units x {} periods, treated {}",
            spec.units, spec.periods, g.truth.treated_unit
        ),
    })
}

