use driftlab::chaos::{chaos_terms, default_dipole, rotation_experiment, ChaosConfig};
use driftlab::{MatrixField, ScalarField, ScalarKind};

#[test]
fn quadratic_terms_match_gaussian_moments() {
    let f = ScalarField::new(2, ScalarKind::CoordinateSquare { axis: 0 }).unwrap();
    let cfg = ChaosConfig::default();
    let t = chaos_terms(&f, &MatrixField::identity(2), &[1.0, 0.0], 1.0, &cfg).unwrap();
    eprintln!("{t:?}");
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    assert!(rel(t.v, 6.0) < 1e-3);
    assert!(rel(t.s[0], 4.0) < 1e-3);
    assert!(rel(t.s[1], 2.0) < 1e-3);
    assert!(t.remainder[1].abs() < 6e-3);
    assert!(t.s[2].abs() < 1e-3);
}

#[test]
fn rotation_signature() {
    let cfg = ChaosConfig::default();
    let r = rotation_experiment(&default_dipole(), &[vec![0.0, 0.0], vec![4.0, 0.0]], 1.0, &cfg).unwrap();
    for row in &r.rows {
        eprintln!("{:?} rot {:?} id {:?}", row.x0, row.rotation.ratios(), row.identity.ratios());
    }
    let at0 = r.rows[0].rotation.ratios()[2];
    let far = r.rows[1].rotation.ratios()[2];
    assert!(at0 >= 2.0 * far, "{at0} vs {far}");
}
