use driftlab::gehring::{
    g_bar, greedy_select, improved_exponent, random_input, reverse_holder_constant, tau_lambda_decompose, CellField, ExponentConfig,
};

fn inverse_power(depth: u32) -> CellField<f64> {
    CellField::separable(2, depth, |_| 1.0, |x| (x[0] * x[0] + x[1] * x[1]).powf(-0.15), 4).unwrap()
}

#[test]
fn inverse_power_reverse_holder_and_exponent() {
    let fs: Vec<_> = (5..=7).map(inverse_power).collect();
    let a6 = reverse_holder_constant(&fs[1], 2.0, None).unwrap();
    let a7 = reverse_holder_constant(&fs[2], 2.0, None).unwrap();
    eprintln!("A depth 6 = {:.5} at {}, depth 7 = {:.5}", a6.a, a6.argmax.label(), a7.a);
    assert!(a6.a.is_finite() && a6.a > 1.0);
    assert!((a7.a - a6.a).abs() <= 0.05 * a6.a);

    let r = improved_exponent([&fs[0], &fs[1], &fs[2]], 2.0, a6.a, a6.a, &ExponentConfig::default()).unwrap();
    eprintln!(
        "empirical q {:.4} (N_hat {:.4}), theory q {:.4}",
        r.empirical_q, r.n_hat, r.theory_q
    );
    assert!(r.empirical_q >= 2.5 && r.empirical_q <= 2.0 / 0.3);
    assert!(r.theory_q > 2.0);
    assert!(r.violated_boxes.is_empty());
}

#[test]
fn weak_type_and_covering_hold_on_fifty_inputs() {
    let mut checked = 0;
    for seed in 0..50u64 {
        let (d, depth) = if seed % 2 == 0 { (1, 4) } else { (2, 3) };
        let g = random_input(d, depth, 2.0, 1000 + seed).unwrap();
        let gb = g_bar(&g);
        for m in [1.001, 1.5, 3.0, 10.0] {
            let r = greedy_select(tau_lambda_decompose(&g, gb * m).unwrap());
            assert!(r.weak_type_holds, "seed {seed} lambda {}", r.lambda);
            assert!(r.covering_holds, "seed {seed} lambda {}", r.lambda);
            assert_eq!(r.cover_violations, 0);
            assert_eq!(r.sandwich_violations, 0);
            checked += 1;
        }
    }
    assert_eq!(checked, 200);
}
