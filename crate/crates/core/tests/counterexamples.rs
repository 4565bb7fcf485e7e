use driftlab::counterexamples::{
    nonexistence_diagnostic, nonexistence_eps_invariance, nonuniqueness_gap, radial_drift_threshold, stay_on_side, NonexistenceConfig,
    NonuniquenessConfig, RadialConfig,
};
use driftlab::rng::derive_seed;
use driftlab::sde::DriftPolicy;

fn halvings(h0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| h0 * 0.5f64.powi(i as i32)).collect()
}

fn nonexistence_cfg() -> NonexistenceConfig {
    NonexistenceConfig {
        alpha: 0.5,
        beta: 0.5,
        eps: 1.0,
        dim: 2,
        horizon: 1.0,
        h_ladder: halvings(1e-2, 5),
        n_paths: 4000,
        seed: 5,
        policy: DriftPolicy::default(),
        threshold: 1.5,
        min_rungs: 4,
    }
}

fn gap_cfg(sign: f64) -> NonuniquenessConfig {
    NonuniquenessConfig {
        q: 1.5,
        dim: 1,
        deltas: vec![0.1, 0.03, 0.01, 0.003, 0.001],
        t0: None,
        t0_ladder: vec![1e-2, 5e-3],
        pilot_target: 0.75,
        h: 1e-4,
        steps_per_delta: 3.0,
        n_paths: 3000,
        seed: 3,
        sign,
        policy: DriftPolicy::CapDisplacement { kappa: 1e3 },
        threshold: 0.45,
        z: 3.0,
    }
}

#[test]
fn nonexistence_ladder_and_brownian_control() {
    let r = nonexistence_diagnostic(&nonexistence_cfg()).unwrap();
    let d: Vec<f64> = r.drift.ladder.iter().map(|p| p.estimate).collect();
    let slope = r.log_growth.as_ref().unwrap().slope;
    eprintln!(
        "drift D(h) {d:?} ratios {:?} ln(1/h) slope {slope:.4} verdict {}",
        r.drift.ratios, r.drift.pass
    );
    eprintln!(
        "control ratios {:?} extrapolated {:?} oracle {:.5}",
        r.control.ratios, r.control_extrapolated, r.control_oracle
    );
    assert!(d.windows(2).all(|w| w[1] > w[0] + 0.3));
    assert!(slope > 0.5);
    assert!(r.control.pass);
    assert!(r.control.ratios.iter().all(|q| (q - 1.0).abs() <= 0.1));
    let rel = (r.control_extrapolated.unwrap() - r.control_oracle).abs() / r.control_oracle;
    assert!(rel < 0.02, "{rel}");
}

#[test]
fn eps_rescaling_reproduces_the_unit_ladder() {
    let cfg = NonexistenceConfig {
        n_paths: 1000,
        h_ladder: halvings(1e-2, 4),
        ..nonexistence_cfg()
    };
    let r = nonexistence_eps_invariance(&cfg, &[1.0, 0.25]).unwrap();
    eprintln!("max relative gap {:e}", r.max_rel_gap);
    assert!(r.verdict.pass);
    assert_eq!(r.runs[0].2.pass, r.runs[1].2.pass);
}

#[test]
fn nonuniqueness_gap_and_symmetric_control() {
    let cfg = gap_cfg(1.0);
    let r = nonuniqueness_gap(&cfg).unwrap();
    eprintln!("t0 {} gap limit {:.4} +- {:.4}", r.t0, r.gap_limit, r.gap_limit_se);
    assert!(r.pilot.iter().any(|p| p.t0 == r.t0 && p.p_a >= 0.75));
    assert!(r.verdict.pass);
    let last = r.rows.last().unwrap();
    assert_eq!(last.delta, 1e-3);
    assert!(last.p_plus >= 0.7);

    let c = nonuniqueness_gap(&gap_cfg(0.0)).unwrap();
    eprintln!("control limit {:.4} +- {:.4}", c.gap_limit, c.gap_limit_se);
    assert!(!c.verdict.pass);
    assert!(c.gap_limit.abs() <= 0.05);

    // x -> -x maps the start -delta to +delta and keeps the drift
    let seed = derive_seed(cfg.seed, 99);
    let (below, se_b) = stay_on_side(&cfg, 0.01, r.t0, seed, true).unwrap();
    let minus = &r.rows[2];
    assert!((below - minus.p_minus).abs() <= 4.0 * (se_b.powi(2) + minus.std_error.powi(2)).sqrt() + 1e-3);
}

#[test]
fn radial_drift_separates_large_and_small_eps() {
    let cfg = RadialConfig {
        eps: vec![1.0, 0.05, 0.0],
        dim: 3,
        horizon: 1.0,
        h_ladder: halvings(1e-2, 5),
        n_paths: 3000,
        seed: 9,
        policy: DriftPolicy::default(),
        eps_small: 0.05,
        divergence_threshold: 1.5,
        bounded_threshold: 1.1,
    };
    let r = radial_drift_threshold(&cfg).unwrap();
    for (e, div, bnd) in &r.rows {
        eprintln!("eps {e}: ratios {:?} divergent {} bounded {}", div.ratios, div.pass, bnd.pass);
    }
    let (_, big, _) = &r.rows[0];
    assert!(big.ratios.iter().all(|q| *q > 1.2));
    assert!(r.rows[1].2.pass && !r.rows[1].1.pass);
    assert!(r.rows[2].1.ladder.iter().all(|p| p.estimate == 0.0));
    assert!(!r.rows[2].1.pass && r.rows[2].2.pass);
}

#[test]
fn verdicts_replay() {
    let cfg = NonexistenceConfig {
        n_paths: 300,
        h_ladder: halvings(1e-2, 3),
        ..nonexistence_cfg()
    };
    let a = serde_json::to_string(&nonexistence_diagnostic(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&nonexistence_diagnostic(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}
