use subelliptic_core::isoperimetry::*;
use subelliptic_core::measures::*;
use subelliptic_core::{make_space, SpaceKind};

#[test]
fn one_dimensional_estimator_matches_the_model() {
    for r in [1.0, 1.5, 2.0] {
        let model = ModelProfile::new(r).unwrap();
        for t in [0.1, 0.3, 0.5] {
            let est = model_halfline_surface(r, t, &DEFAULT_EPS_GRID, 1_000_000, 7).unwrap();
            let exact = model.evaluate(t);
            assert!(est.reliable);
            assert!((est.mu_plus / exact - 1.0).abs() < 0.05, "r={r} t={t}: {} vs {exact}", est.mu_plus);
        }
    }
}

#[test]
fn complements_and_sublevel_masses() {
    let spec = MeasureSpec::new(make_space(SpaceKind::heisenberg(1, 16.0)).unwrap(), 2.0).unwrap();
    let set = sample(&spec, 100_000, 3).unwrap();
    let a = SetSpec::NormSublevel { c: 1.2 };
    let inside = surface_measure(&spec, &a, &DEFAULT_EPS_GRID, &set).unwrap();
    let outside = surface_measure(&spec, &a.complement(), &DEFAULT_EPS_GRID, &set).unwrap();
    let combined = (inside.stderr.powi(2) + outside.stderr.powi(2)).sqrt();
    assert!((inside.mu_plus - outside.mu_plus).abs() < 3.0 * combined);
    assert!((inside.mass + outside.mass - 1.0).abs() < 1e-12);
    let mut last = 0.0;
    for c in [0.5, 1.0, 1.5, 2.0] {
        let m = surface_measure(&spec, &SetSpec::NormSublevel { c }, &DEFAULT_EPS_GRID, &set)
            .unwrap()
            .mass;
        assert!(m > last);
        last = m;
    }
    let everything = surface_measure(&spec, &SetSpec::NormSublevel { c: 1e6 }, &DEFAULT_EPS_GRID, &set).unwrap();
    assert_eq!((everything.mass, everything.mu_plus), (1.0, 0.0));
}

#[test]
fn eps_grid_is_validated() {
    assert!(model_halfline_surface(1.5, 0.3, &[0.08, 0.04], 10_000, 1).is_err());
    assert!(model_halfline_surface(1.5, 0.3, &[0.02, 0.04, 0.08], 10_000, 1).is_err());
}
