use proptest::prelude::*;
use subelliptic_core::{make_space, Space, SpaceKind};

fn spaces() -> Vec<Space> {
    [
        SpaceKind::heisenberg(1, 16.0),
        SpaceKind::heisenberg(2, 16.0),
        SpaceKind::Grushin { n: 2, m: 1, eta: 2.0 },
        SpaceKind::Greiner { n: 1, zeta: 2 },
        SpaceKind::Filiform { n: 3 },
    ]
    .into_iter()
    .map(|k| make_space(k).unwrap())
    .collect()
}

fn point(space: &Space, raw: &[f64]) -> Vec<f64> {
    raw.iter().take(space.ambient_dim()).cloned().collect()
}

proptest! {
    #[test]
    fn norm_is_homogeneous(raw in prop::collection::vec(-3.0..3.0f64, 5), lambda in 0.05..20.0f64) {
        for space in spaces() {
            let p = point(&space, &raw);
            let n = space.hom_norm(&p);
            let scaled = space.hom_norm(&space.dilate(lambda, &p).unwrap());
            prop_assert!((scaled - lambda * n).abs() <= 1e-10 * (1.0 + lambda * n));
        }
    }

    #[test]
    fn group_law_is_associative_with_inverses(
        a in prop::collection::vec(-2.0..2.0f64, 5),
        b in prop::collection::vec(-2.0..2.0f64, 5),
        c in prop::collection::vec(-2.0..2.0f64, 5),
    ) {
        for space in spaces() {
            if space.kind().name() != "step_two" {
                continue;
            }
            let (a, b, c) = (point(&space, &a), point(&space, &b), point(&space, &c));
            let left = space.group_mul(&space.group_mul(&a, &b).unwrap(), &c).unwrap();
            let right = space.group_mul(&a, &space.group_mul(&b, &c).unwrap()).unwrap();
            for (l, r) in left.iter().zip(&right) {
                prop_assert!((l - r).abs() < 1e-12);
            }
            let e = space.group_mul(&a, &space.inverse(&a).unwrap()).unwrap();
            prop_assert!(e.iter().all(|v| v.abs() < 1e-14));
            prop_assert!((space.hom_norm(&space.inverse(&a).unwrap()) - space.hom_norm(&a)).abs() < 1e-12);
        }
    }

    #[test]
    fn quasi_distance_is_translation_invariant(
        a in prop::collection::vec(-2.0..2.0f64, 3),
        b in prop::collection::vec(-2.0..2.0f64, 3),
        g in prop::collection::vec(-2.0..2.0f64, 3),
    ) {
        let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
        let d = h.quasi_distance(&a, &b);
        let d_moved = h.quasi_distance(&h.translate(&g, &a), &h.translate(&g, &b));
        prop_assert!((d - d_moved).abs() < 1e-10 * (1.0 + d));
    }
}

#[test]
fn descriptors_round_trip_through_json() {
    for space in spaces() {
        let json = serde_json::to_string(&space).unwrap();
        let back: Space = serde_json::from_str(&json).unwrap();
        assert_eq!(back, space);
    }
}

#[test]
fn derived_constants() {
    let h = make_space(SpaceKind::heisenberg(1, 16.0)).unwrap();
    assert_eq!((h.homogeneous_dim(), h.alpha()), (4.0, 1.0));
    let g = make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap();
    assert_eq!((g.homogeneous_dim(), g.alpha()), (3.0, 1.0));
    let gr = make_space(SpaceKind::Grushin { n: 2, m: 1, eta: 2.0 }).unwrap();
    assert_eq!(gr.alpha(), 2.0);
    let f = make_space(SpaceKind::Filiform { n: 3 }).unwrap();
    assert_eq!(f.alpha(), 2.0);
}
