use subelliptic_core::calculus::{cc_sandwich, check_estimates, sample_cloud};
use subelliptic_core::{make_space, SpaceKind};

#[test]
fn kaplan_identity_holds_on_a_cloud() {
    let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
    let cloud = sample_cloud(&h, 2000, 0.1, 10.0, 5).unwrap();
    let report = check_estimates(&h, 1.0, &cloud, 1e-3).unwrap();
    let lower = report.entry("grad_lower").unwrap();
    let upper = report.entry("grad_upper").unwrap();
    assert!((lower.min_ratio - 1.0).abs() < 1e-5 && (upper.max_ratio - 1.0).abs() < 1e-5);
}

#[test]
fn estimate_ratios_are_finite_beyond_heisenberg() {
    for (kind, alpha) in [
        (SpaceKind::Grushin { n: 2, m: 1, eta: 2.0 }, 2.0),
        (SpaceKind::Filiform { n: 3 }, 2.0),
        (SpaceKind::Greiner { n: 1, zeta: 2 }, 3.0),
    ] {
        let space = make_space(kind).unwrap();
        let cloud = sample_cloud(&space, 1000, 0.1, 10.0, 11).unwrap();
        let report = check_estimates(&space, alpha, &cloud, 1e-3).unwrap();
        assert!(report.all_finite(), "{report:?}");
        assert!(report.entry("grad_lower").unwrap().min_ratio > 0.0);
    }
}

#[test]
fn path_lengths_sandwich_the_gauge() {
    let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
    let cloud = sample_cloud(&h, 200, 0.1, 10.0, 2).unwrap();
    let mut ratios = Vec::new();
    for p in &cloud {
        let (lo, hi) = cc_sandwich(&h, p, 64).unwrap();
        assert!(lo <= hi + 1e-9);
        ratios.push(h.hom_norm(p) / hi);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min > 0.05 && max < 20.0, "{min} {max}");
}
