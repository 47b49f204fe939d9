//! Full-size solver workflows on the 2-D triangle benchmark: all solvers
//! from one shared init, penalty limits, and default stopping behavior.

use archetypal_core::{
    fit_altmin, fit_palm, fit_sgd, gen_toy_2d, risk_lagrangian, successive_projections_init,
    HullProjector, SolverConfig,
};

#[test]
fn three_solvers_land_within_five_percent_risk_on_the_triangle() {
    let ds = gen_toy_2d(500, 0).unwrap();
    let init = successive_projections_init(&ds.x, 3).unwrap();
    let lambda = 1.0;

    let palm = fit_palm(
        &ds.x,
        &init.archetypes,
        &SolverConfig { lambda, max_iter: 2000, ..Default::default() },
    )
    .unwrap();
    let sgd = fit_sgd(
        &ds.x,
        &init.archetypes,
        &SolverConfig { lambda, max_iter: 800, ..Default::default() },
    )
    .unwrap();
    let alt = fit_altmin(
        &ds.x,
        &init.archetypes,
        &SolverConfig { lambda, max_iter: 400, ..Default::default() },
    )
    .unwrap();

    let risks = [
        risk_lagrangian(&ds.x, &palm.archetypes, lambda).unwrap().total,
        risk_lagrangian(&ds.x, &sgd.archetypes, lambda).unwrap().total,
        risk_lagrangian(&ds.x, &alt.archetypes, lambda).unwrap().total,
    ];
    let top = risks.iter().cloned().fold(f64::MIN, f64::max);
    let bottom = risks.iter().cloned().fold(f64::MAX, f64::min);
    assert!(top <= bottom * 1.05, "risks diverge beyond 5%: {risks:?}");
}

#[test]
fn huge_penalty_pins_palm_archetypes_to_the_data_hull() {
    let ds = gen_toy_2d(500, 1).unwrap();
    let init = successive_projections_init(&ds.x, 3).unwrap();
    let cfg = SolverConfig { lambda: 1e6, max_iter: 500, ..Default::default() };
    let report = fit_palm(&ds.x, &init.archetypes, &cfg).unwrap();

    let hull = HullProjector::new(&ds.x.values).unwrap();
    for l in 0..3 {
        let row = report.archetypes.values.row(l).transpose();
        let proj = hull.project(&row, 1e-12, 20_000, None).unwrap();
        let dist = proj.sq_distance.max(0.0).sqrt();
        assert!(dist <= 1e-3, "archetype {l} ended {dist} outside the hull");
    }
}

#[test]
fn constrained_altmin_final_archetypes_stay_in_the_hull() {
    let ds = gen_toy_2d(500, 2).unwrap();
    let init = successive_projections_init(&ds.x, 3).unwrap();
    let cfg = SolverConfig { max_iter: 400, ..SolverConfig::with_infinite_lambda() };
    let report = fit_altmin(&ds.x, &init.archetypes, &cfg).unwrap();

    let hull = HullProjector::new(&ds.x.values).unwrap();
    for l in 0..3 {
        let row = report.archetypes.values.row(l).transpose();
        let proj = hull.project(&row, 1e-12, 20_000, None).unwrap();
        let dist = proj.sq_distance.max(0.0).sqrt();
        assert!(dist <= 1e-9, "archetype {l} ended {dist} outside the hull");
    }
}

#[test]
fn small_penalty_fit_exhausts_the_default_budget() {
    // At lambda = 0.0166 the risk surface is nearly flat along directions
    // that keep the data enclosed; the relative risk change decays roughly
    // like k^-1.65, so the 1e-9 stall rule cannot fire within the default
    // 5000-iteration cap. The run must report that honestly.
    let ds = gen_toy_2d(500, 0).unwrap();
    let init = successive_projections_init(&ds.x, 3).unwrap();
    let report =
        fit_palm(&ds.x, &init.archetypes, &SolverConfig::with_lambda(0.0166)).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 5000);
    for win in report.risk_trace.windows(2) {
        assert!(win[1] <= win[0] + 1e-12 * win[0].abs().max(1.0));
    }
}

#[test]
fn stochastic_fit_on_the_triangle_descends_and_replays() {
    let ds = gen_toy_2d(500, 4).unwrap();
    let init = successive_projections_init(&ds.x, 3).unwrap();
    let cfg = SolverConfig { lambda: 1.0, max_iter: 300, seed: 9, ..Default::default() };

    let first = fit_sgd(&ds.x, &init.archetypes, &cfg).unwrap();
    for win in first.risk_trace.windows(2) {
        assert!(win[1] <= win[0] + 1e-12 * win[0].abs().max(1.0));
    }
    let second = fit_sgd(&ds.x, &init.archetypes, &cfg).unwrap();
    assert_eq!(first.risk_trace, second.risk_trace, "same seed must replay exactly");
}
