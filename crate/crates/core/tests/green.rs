use driftlab::geometry::Cylinder;
use driftlab::green::{
    analytic_green_bm, doubling_scan, green_histogram, max_interior_z, negative_power_integral, reverse_holder_scan, CylinderFamily,
};
use driftlab::grid::{GridDomain, GridFunction};
use driftlab::sde::SimSpec;

#[test]
fn brownian_histogram_matches_the_kernel() {
    let dom = GridDomain::new((0.0, 1.0), 8, vec![-2.0, -2.0], vec![2.0, 2.0], vec![10, 10]).unwrap();
    let spec = SimSpec::brownian(vec![0.0, 0.0], 1.0, 1.0 / 400.0, 1_000_000, 2024);
    let mc = green_histogram(&spec, 1.0, dom.clone()).unwrap();
    let oracle = analytic_green_bm(1.0, &[0.0, 0.0], dom).unwrap();
    let (z, n) = max_interior_z(&mc, &oracle).unwrap();
    eprintln!("max interior z {z:.3} over {n} cells");
    assert!(n > 0);
    assert!(z < 4.0);
}

#[test]
fn reverse_holder_doubling_and_negative_power() {
    let coarse = GridDomain::new((0.0, 2.0), 16, vec![-2.0, -2.0], vec![2.0, 2.0], vec![32, 32]).unwrap();
    let fine = GridDomain::new((0.0, 2.0), 32, vec![-2.0, -2.0], vec![2.0, 2.0], vec![64, 64]).unwrap();
    let fam = CylinderFamily::default();
    let gc = analytic_green_bm(1.0, &[0.0, 0.0], coarse.clone()).unwrap();
    let gf = analytic_green_bm(1.0, &[0.0, 0.0], fine).unwrap();
    let a = reverse_holder_scan(&gc.density, 3.0, &fam).unwrap();
    let b = reverse_holder_scan(&gf.density, 3.0, &fam).unwrap();
    eprintln!(
        "reverse-Hölder sup {:.4} -> {:.4} over {} cylinders",
        a.sup_ratio,
        b.sup_ratio,
        a.rows.len()
    );
    assert_eq!(a.rows.len(), 100);
    assert!(a.sup_ratio.is_finite() && b.sup_ratio.is_finite());
    assert!((b.sup_ratio - a.sup_ratio).abs() <= 0.1 * a.sup_ratio);

    let ones = GridFunction::new(coarse.clone(), vec![1.0; coarse.len()], "one").unwrap();
    assert_eq!(doubling_scan(&ones, None).unwrap().sup_ratio, 4.0);

    let np = negative_power_integral(&gc.density, 0.2, &Cylinder::new(0.0, vec![0.0, 0.0], 1.0).unwrap(), 0.05).unwrap();
    eprintln!("negative power integral {:.5} over {} cells", np.value, np.n_cells);
    assert!(np.value.is_finite() && np.value > 0.0);
    assert_eq!(np.n_zero, 0);
}
