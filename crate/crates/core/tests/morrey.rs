use driftlab::grid::GridDomain;
use driftlab::morrey::{hat_b, MixedNormSpec, NormOrder, SearchPolicy};
use driftlab::{DriftKind, VectorField};

fn drifts() -> Vec<VectorField> {
    let kinds = vec![
        DriftKind::GaussianBump {
            amplitude: 2.0,
            width: 0.3,
            center: vec![0.2, -0.1],
            direction: vec![1.0, 0.0],
        },
        DriftKind::MixedSingular { c: 1.0, gamma: 0.5 },
        DriftKind::Example3221 {
            alpha: 0.5,
            beta: 0.5,
            eps: 1.0,
        },
        DriftKind::Example3222 { q: 1.5, sign: 1.0 },
    ];
    kinds.into_iter().map(|k| VectorField::new(2, k).unwrap()).collect()
}

/// `[0, s^2] x [-s, s]^2` with a fixed cell count, so the scaled boxes share one index grid.
fn boxed(s: f64) -> GridDomain {
    GridDomain::centered((0.0, s * s), 16, 2, s, 32).unwrap()
}

#[test]
fn hat_b_is_dilation_covariant() {
    let spec = MixedNormSpec::new(4.0, 4.0, NormOrder::TimeOuter).unwrap();
    let policy = SearchPolicy::default();
    let rho = 0.5;
    for b in drifts() {
        for c in [0.25, 0.5] {
            let lhs = hat_b(&b.dilate(c).unwrap(), &spec, rho, boxed(1.0), &policy).unwrap().value;
            let rhs = hat_b(&b, &spec, c * rho, boxed(c), &policy).unwrap().value;
            let rel = (lhs - rhs).abs() / rhs;
            eprintln!("{} c={c}: {lhs:.6} vs {rhs:.6} rel {rel:.2e}", b.kind_name());
            assert!(rel <= 0.03);
        }
    }
}

#[test]
fn example_3_22_2_hat_b_blows_up_at_small_radii() {
    // boxes [0, r^2] x [-r, r] with a fixed cell count; the drift is x-independent on |x^1| <= 1
    let q = 1.5;
    let b = VectorField::new(1, DriftKind::Example3222 { q, sign: 1.0 }).unwrap();
    let policy = SearchPolicy::default();
    for qb in [1.2, 1.4] {
        let spec = MixedNormSpec::new(qb, 2.0, NormOrder::TimeOuter).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = (1..=4)
            .map(|k| {
                let r = 0.5f64.powi(k);
                let dom = GridDomain::centered((0.0, r * r), 64, 1, r, 16).unwrap();
                (r.ln(), hat_b(&b, &spec, r, dom, &policy).unwrap().value.ln())
            })
            .unzip();
        let fit = driftlab::stats::linear_fit(&x, &y).unwrap();
        eprintln!("q_b {qb}: slope {:.4}, 1 - 2/q = {:.4}", fit.slope, 1.0 - 2.0 / q);
        assert!((fit.slope - (1.0 - 2.0 / q)).abs() <= 0.05);
    }
}
