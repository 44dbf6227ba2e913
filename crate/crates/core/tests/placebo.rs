use synthctl_core::{
    generate_panel, paired_difference_ci, placebo_diff_in_effects, placebo_in_space,
    EffectProfile, GeneratorSpec, GroupInputs, LagScheme, LagSpec, OriginRule, Panel,
    SolverSettings, StudyDesign,
};

fn quick() -> SolverSettings {
    SolverSettings {
        multistart_count: 2,
        outer_max_evaluations: 150,
        ..Default::default()
    }
}

fn spec(seed: u64, effect: f64) -> GeneratorSpec {
    GeneratorSpec {
        units: 8,
        periods: 14,
        t0: 9,
        covariates: 3,
        effect: Some(EffectProfile::Constant(effect)),
        seed,
        ..Default::default()
    }
}

#[test]
fn strong_effect_ranks_first() {
    let g = generate_panel::<f64>(&spec(1, 0.2)).unwrap();
    let design = StudyDesign::new("r00", 9);
    let lag = LagSpec::new(LagScheme::PretreatmentMean, true);
    let table = placebo_in_space(&g.panel, &design, Some(&g.covariates), &lag, &quick()).unwrap();
    assert_eq!(table.rows.len(), 8);
    assert_eq!(table.treated_rank, 1);
    assert_eq!(table.p_value, 1.0 / 8.0);
    let ranks: Vec<usize> = table.rows.iter().map(|r| r.rank.unwrap()).collect();
    assert_eq!(ranks, (1..=8).collect::<Vec<_>>());
}

#[test]
fn ranks_do_not_depend_on_unit_order() {
    let g = generate_panel::<f64>(&spec(2, 0.03)).unwrap();
    let design = StudyDesign::new("r00", 9);
    let lag = LagSpec::new(LagScheme::ThreeValues, true);
    let base = placebo_in_space(&g.panel, &design, Some(&g.covariates), &lag, &quick()).unwrap();

    let order = [5, 2, 7, 0, 3, 6, 1, 4];
    let panel: Panel<f64> = g.panel.select_units(&order);
    let covs = g.covariates.select_units(&order);
    let shuffled = placebo_in_space(&panel, &design, Some(&covs), &lag, &quick()).unwrap();
    assert_eq!(base.treated_rank, shuffled.treated_rank);
    for row in &base.rows {
        let other = shuffled.row(&row.unit).unwrap();
        // W need not be unique here, so only the ranking is compared.
        assert_eq!(row.rank, other.rank, "{}", row.unit);
    }
}

#[test]
fn excluded_units_leave_the_reference_set() {
    let g = generate_panel::<f64>(&spec(3, 0.0)).unwrap();
    let design = StudyDesign::new("r00", 9).excluding(["r03"]);
    let lag = LagSpec::new(LagScheme::PretreatmentMean, false);
    let table = placebo_in_space(&g.panel, &design, None, &lag, &quick()).unwrap();
    assert_eq!(table.rows.len(), 7);
    assert!(table.row("r03").is_none());
    for row in &table.rows {
        let fit = row.fit.as_ref().unwrap();
        assert!(fit.w.get("r03").is_none());
    }
}

#[test]
fn diff_placebo_cancels_a_shared_effect() {
    // Same effect in both groups: the treated unit's difference is small.
    let a = generate_panel::<f64>(&spec(4, 0.15)).unwrap();
    let b = generate_panel::<f64>(&GeneratorSpec {
        seed: 40,
        ..spec(4, 0.15)
    })
    .unwrap();
    let design = StudyDesign::new("r00", 9);
    let lag = LagSpec::new(LagScheme::PretreatmentMean, false);
    let group = |p| GroupInputs {
        panel: p,
        design: &design,
        lagspec: &lag,
    };
    let out = placebo_diff_in_effects(
        group(&a.panel),
        group(&b.panel),
        None,
        &OriginRule::FirstPositive,
        &quick(),
    )
    .unwrap();
    assert_eq!(out.table.rows.len(), 8);
    assert_eq!(out.treated.event_times.first(), Some(&0));
    assert_eq!(out.treated.diffs.len(), 14);
    let post = &out.treated.diffs[9..];
    let mean = post.iter().sum::<f64>() / post.len() as f64;
    assert!(mean.abs() < 0.05, "mean post difference {mean}");

    let ci = paired_difference_ci(&out.treated.a[9..], &out.treated.b[9..], 0.95).unwrap();
    assert!(ci.lo <= ci.mean_diff && ci.mean_diff <= ci.hi);
    assert!((ci.mean_diff - mean).abs() < 1e-12);
}

#[test]
fn diff_placebo_flags_a_group_specific_effect() {
    let a = generate_panel::<f64>(&spec(5, 0.25)).unwrap();
    let b = generate_panel::<f64>(&GeneratorSpec {
        seed: 50,
        ..spec(5, 0.0)
    })
    .unwrap();
    let design = StudyDesign::new("r00", 9);
    let lag = LagSpec::new(LagScheme::AllLags, false);
    let out = placebo_diff_in_effects(
        GroupInputs { panel: &a.panel, design: &design, lagspec: &lag },
        GroupInputs { panel: &b.panel, design: &design, lagspec: &lag },
        None,
        &OriginRule::Fixed { a: "1".into(), b: "1".into() },
        &quick(),
    )
    .unwrap();
    assert_eq!(out.table.treated_rank, 1);
}
