use std::time::Instant;

use synthctl_core::{
    build_predictor_matrix, generate_panel, solve_nested, synthesize, GeneratorSpec, LagScheme,
    LagSpec, Panel, SolverSettings, StudyDesign, Window,
};

fn planted(seed: u64) -> (GeneratorSpec, Vec<f64>) {
    let w = vec![0.133, 0.539, 0.224, 0.104];
    let spec = GeneratorSpec {
        factors: 20,
        noise: 0.0,
        planted_weights: Some(w.clone()),
        seed,
        ..Default::default()
    };
    (spec, w)
}

#[test]
fn planted_weights_are_recovered() {
    let (spec, w) = planted(1);
    let g = generate_panel::<f64>(&spec).unwrap();
    let design = StudyDesign::new("r00", spec.t0);
    let lag = LagSpec::new(LagScheme::AllLags, false);
    let pm = build_predictor_matrix(&g.panel, &design, Some(&g.covariates), &lag).unwrap();
    let start = Instant::now();
    let fit = solve_nested(&g.panel, &design, &pm, &SolverSettings::default()).unwrap();
    eprintln!("nested solve took {:?}: {:?}", start.elapsed(), fit.diagnostics);

    let gaps = synthesize(&g.panel, &design, &fit.w).unwrap();
    let pre = synthctl_core::mspe(&gaps, Window::Pre).unwrap();
    assert!(pre < 1e-8, "pre-MSPE {pre}");
    for (i, &got) in fit.w.weights.iter().enumerate() {
        let want = w.get(i).copied().unwrap_or(0.0);
        assert!((got - want).abs() < 1e-3, "donor {i}: {got} vs {want}");
    }
    assert!(fit.w.is_valid() && fit.v.is_valid());
}

#[test]
fn single_predictor_forces_unit_v() {
    let g = generate_panel::<f64>(&GeneratorSpec { seed: 5, ..Default::default() }).unwrap();
    let design = StudyDesign::new("r00", 27);
    let lag = LagSpec::new(LagScheme::PretreatmentMean, false);
    let pm = build_predictor_matrix(&g.panel, &design, None, &lag).unwrap();
    let fit = solve_nested(&g.panel, &design, &pm, &SolverSettings::default()).unwrap();
    assert_eq!(fit.v.weights, vec![1.0]);
    assert_eq!(fit.diagnostics.outer_evaluations, 1);

    let z = synthctl_core::simplex::standardize(pm.values.view(), &(0..21).collect::<Vec<_>>());
    let inner = synthctl_core::solve_w(
        &z.row(0).to_vec(),
        z.slice(ndarray::s![1.., ..]),
        &[1.0],
        &SolverSettings::default(),
    );
    assert_eq!(fit.w.weights, inner.weights);
}

#[test]
fn identical_runs_are_bit_identical() {
    let g = generate_panel::<f64>(&GeneratorSpec { seed: 9, ..Default::default() }).unwrap();
    let design = StudyDesign::new("r00", 27);
    let lag = LagSpec::new(LagScheme::PretreatmentMean, true);
    let pm = build_predictor_matrix(&g.panel, &design, Some(&g.covariates), &lag).unwrap();
    let s = SolverSettings { rng_seed: 17, ..Default::default() };
    let a = solve_nested(&g.panel, &design, &pm, &s).unwrap();
    let b = solve_nested(&g.panel, &design, &pm, &s).unwrap();
    assert_eq!(a, b);
    assert!(a.diagnostics.inner_converged);
}

#[test]
fn rescaling_a_predictor_leaves_w_unchanged() {
    let g = generate_panel::<f64>(&GeneratorSpec { seed: 21, ..Default::default() }).unwrap();
    let design = StudyDesign::new("r00", 27);
    let lag = LagSpec::new(LagScheme::ThreeValues, true);
    let s = SolverSettings::default();
    let pm = build_predictor_matrix(&g.panel, &design, Some(&g.covariates), &lag).unwrap();
    let base = solve_nested(&g.panel, &design, &pm, &s).unwrap();
    for (col, factor) in [(0, 1000.0), (3, 0.001), (7, 37.5)] {
        let mut covs = g.covariates.clone();
        covs.scale_column(col, factor);
        let pm = build_predictor_matrix(&g.panel, &design, Some(&covs), &lag).unwrap();
        let fit = solve_nested(&g.panel, &design, &pm, &s).unwrap();
        for (a, b) in base.w.weights.iter().zip(&fit.w.weights) {
            assert!((a - b).abs() <= 1e-6, "column {col} x{factor}: {a} vs {b}");
        }
    }
}

#[test]
fn single_precision_pipeline_runs() {
    let g = generate_panel::<f32>(&GeneratorSpec { seed: 2, ..Default::default() }).unwrap();
    let design = StudyDesign::new("r00", 27);
    let lag = LagSpec::new(LagScheme::PretreatmentMean, true);
    let pm = build_predictor_matrix(&g.panel, &design, Some(&g.covariates), &lag).unwrap();
    let fit = solve_nested(&g.panel, &design, &pm, &SolverSettings::default()).unwrap();
    assert!(fit.w.is_valid() && fit.v.is_valid());

    let g64: Panel<f64> = g.panel.cast();
    assert_eq!(g64.n_units(), 21);
}
