use driftlab::estimators::{exit_mean, exit_tail, potential_many, yukawa_potential};
use driftlab::sde::SimSpec;
use driftlab::{ScalarField, ScalarKind};

fn ball(center: [f64; 3], radius: f64) -> ScalarField {
    ScalarField::new(
        3,
        ScalarKind::IndicatorBall {
            center: center.to_vec(),
            radius,
        },
    )
    .unwrap()
}

fn bump(center: [f64; 3], width: f64) -> ScalarField {
    ScalarField::new(
        3,
        ScalarKind::GaussianBump {
            center: center.to_vec(),
            width,
            amplitude: 1.0,
        },
    )
    .unwrap()
}

#[test]
fn brownian_exit_from_the_unit_disc() {
    let spec = SimSpec::brownian(vec![0.0, 0.0], 6.0, 1e-3, 100_000, 20_240_601);
    let corrected = exit_mean(&spec, 1.0, true).unwrap();
    let raw = exit_mean(&spec, 1.0, false).unwrap();
    eprintln!(
        "E tau: corrected {:.5} +- {:.5}, raw {:.5}, censored {}",
        corrected.estimate.value, corrected.estimate.std_error, raw.estimate.value, corrected.n_censored
    );
    assert!((corrected.estimate.value - 0.5).abs() <= 0.01);
    assert!(raw.estimate.value > corrected.estimate.value);

    let tail_spec = SimSpec::brownian(vec![0.0, 0.0], 2.5, 1e-3, 100_000, 20_240_602);
    let ts: Vec<f64> = (0..9).map(|i| 0.5 + 0.25 * i as f64).collect();
    let tail = exit_tail(&tail_spec, 1.0, &ts, &[0.05, 0.1, 0.15, 0.2]).unwrap();
    let fit = tail.fit.unwrap();
    eprintln!("tail rate {:.4} r2 {:.5} p0 {:.4}", tail.rate, fit.r2, tail.p0_hat);
    assert!(fit.r2 >= 0.99);
    // principal Dirichlet eigenvalue of -Laplace/2 on the unit disc is j_{0,1}^2 / 2
    assert!((tail.rate - 2.891_592).abs() < 0.1);
}

#[test]
fn resolvent_potential_matches_the_yukawa_kernel() {
    let x0 = [0.0, 0.0, 0.0];
    let fs = vec![
        ball([0.0, 0.0, 0.0], 0.5),
        ball([0.0, 0.0, 0.0], 1.0),
        ball([0.6, 0.0, 0.0], 0.4),
        ball([1.0, 1.0, 0.0], 0.7),
        ball([0.0, -1.5, 0.5], 1.0),
        bump([0.0, 0.0, 0.0], 0.3),
        bump([0.0, 0.0, 0.0], 1.0),
        bump([0.8, 0.0, 0.0], 0.5),
        bump([1.0, -1.0, 1.0], 0.6),
        bump([0.0, 2.0, 0.0], 1.5),
    ];
    let lambda = 1.0;
    let spec = SimSpec::brownian(x0.to_vec(), 14.0, 1e-3, 20_000, 77);
    let mc = potential_many(&spec, &fs, lambda, None).unwrap();
    for (f, r) in fs.iter().zip(&mc) {
        let exact = yukawa_potential(f, &x0, lambda).unwrap();
        let z = (r.value - exact) / r.std_error;
        eprintln!(
            "{:?}: mc {:.5} +- {:.5} oracle {:.5} z {:.2}",
            f.kind, r.value, r.std_error, exact, z
        );
        assert!(z.abs() <= 3.0);
    }
}
