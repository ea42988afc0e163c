use subelliptic_core::inequalities::*;
use subelliptic_core::measures::*;
use subelliptic_core::quadrature::Tolerance;
use subelliptic_core::{make_space, LabError, SpaceKind};

// Closed forms on H^1 (κ = 16) from E[|x|^a N^b] = radial Gamma ratio times
// an angular Beta ratio.
const U1_H1_P3: f64 = 0.854_173_868_067_142_7;
const CKN_CONST_H1_P3: f64 = 1.138_791_569_180_726;
const HARDY_CONST_H1_P3: f64 = 1.869_307_931_169_368_8;
const MERGED_CONST_H1_P4: f64 = 0.906_402_477_055_477;
const LN2_POW_3_8: f64 = 0.871_584_599_568_554_4;

fn h1(p: f64) -> MeasureSpec {
    MeasureSpec::new(make_space(SpaceKind::heisenberg(1, 16.0)).unwrap(), p).unwrap()
}

fn quad() -> Integrator<'static> {
    Integrator::Quadrature(Tolerance {
        rel: 1e-7,
        ..Tolerance::default()
    })
}

fn one() -> TestFunction {
    TestFunction::new(Family::Constant)
}

#[test]
fn constant_function_ratios_match_closed_forms() {
    let q = quad();
    let u = ubound_ratio(&h1(3.0), 1.0, &one(), &q).unwrap();
    assert!((u.ratio - U1_H1_P3).abs() < 1e-6, "{u:?}");
    let c = ckn_ratio(&h1(3.0), 1.0, &one(), &q).unwrap();
    assert!((c.ratio - CKN_CONST_H1_P3).abs() < 1e-6, "{c:?}");
    let h = hardy_ratio(&h1(3.0), 1.0, &one(), &q).unwrap();
    assert!((h.ratio - HARDY_CONST_H1_P3).abs() < 1e-5, "{h:?}");
    let m = merged_ubound_ratio(&h1(4.0), 1.0, &one(), &q).unwrap();
    assert!((m.ratio - MERGED_CONST_H1_P4).abs() < 1e-6, "{m:?}");
}

#[test]
fn preconditions_are_enforced() {
    let q = quad();
    assert!(hardy_ratio(&h1(3.0), 2.0, &one(), &q).is_err());
    assert!(ubound_ratio(&h1(3.0), 3.0, &one(), &q).is_err());
    assert!(ubound_ratio(&h1(1.5), 1.0, &one(), &q).is_err());
    assert!(merged_ubound_ratio(&h1(2.0), 1.0, &one(), &q).is_err());
    assert!(merged_ubound_ratio(&h1(4.0), 2.0, &one(), &q).is_err());
    assert!(almost_hardy_ratio(&h1(3.0), 0.5, 4.0, &one(), &q).is_err());
    let g = MeasureSpec::new(make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap(), 3.0).unwrap();
    assert!(almost_hardy_ratio(&g, 1.0, 4.0, &one(), &q).is_err());
    assert!(hardy_ratio(&g, 1.0, &one(), &q).is_err());
}

#[test]
fn almost_hardy_on_a_grushin_bump() {
    let g = MeasureSpec::new(make_space(SpaceKind::Grushin { n: 1, m: 1, eta: 1.0 }).unwrap(), 3.0).unwrap();
    let f = TestFunction::new(Family::Bump {
        center: vec![0.0, 0.5],
        radius: 1.0,
        exponent: 2,
    });
    let r = almost_hardy_ratio(&g, 0.5, 4.0, &f, &quad()).unwrap();
    assert!(r.ratio.is_finite() && r.ratio > 0.0 && r.ratio <= 1.0, "{r:?}");
    assert_eq!(r.rhs_terms[0].coefficient, 4.0);
    assert!((r.rhs_terms[2].coefficient - 0.5).abs() < 1e-15);
}

#[test]
fn ratios_are_homogeneous() {
    let s = h1(4.0);
    let set = sample(&s, 20_000, 1).unwrap();
    let mc = Integrator::Mc(&set);
    let kinds = [RatioKind::Ubound, RatioKind::MergedUbound, RatioKind::Hardy, RatioKind::Ckn];
    let fam: Vec<TestFunction> = standard_family(&s.space).into_iter().step_by(7).collect();
    let doubled: Vec<TestFunction> = fam.iter().map(|f| f.scaled(2.0)).collect();
    let a = ratio_suite(&s, 1.0, &fam, &kinds, &mc).unwrap();
    let b = ratio_suite(&s, 1.0, &doubled, &kinds, &mc).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.ratio - y.ratio).abs() <= 1e-9 * x.ratio, "{} {} {}", x.inequality, x.ratio, y.ratio);
    }
}

#[test]
fn required_beta_behaves() {
    let s = h1(4.0);
    let q = quad();
    let b = spi_required_beta(&s, 2.0, &one(), &[1.0, 0.1, 1e-3], &q).unwrap();
    assert!(b.iter().all(|v| (v - 1.0).abs() < 1e-6), "{b:?}");
    let f = TestFunction::new(Family::Bump {
        center: vec![0.5, 0.0, 0.0],
        radius: 1.0,
        exponent: 2,
    });
    let eps = [1e6, 1.0, 0.1, 0.01, 0.001];
    let b = spi_required_beta(&s, 2.0, &f, &eps, &q).unwrap();
    assert_eq!(b[0], 0.0);
    assert!(b.windows(2).all(|w| w[1] >= w[0]), "{b:?}");
    assert!(matches!(
        spi_required_beta_from(1.0, 0.0, 0.0, 0.1),
        Err(LabError::ZeroDenominator(_))
    ));
}

#[test]
fn fsobolev_of_the_constant() {
    let s = h1(4.0);
    assert_eq!(fsobolev_theta(&s), 0.25);
    let r = fsobolev_ratio(&s, &one().scaled(5.0), 0.375, &quad()).unwrap();
    assert!((r.lhs.value - LN2_POW_3_8).abs() < 1e-8, "{r:?}");
    assert_eq!(r.rhs_terms[0].estimate.value, 0.0);
    let m = fsobolev_majorant(&[r]).unwrap();
    assert!(m.c2 >= LN2_POW_3_8);
}

#[test]
fn cheeger_median_and_shift() {
    let s = h1(2.0);
    let set = sample(&s, 20_000, 2).unwrap();
    let mc = Integrator::Mc(&set);
    let odd = TestFunction::new(Family::SmoothedHalfspace {
        coordinate: 0,
        threshold: 0.0,
        width: 0.5,
    })
    .shifted(-0.5);
    let r = cheeger_ratio(&s, &odd, None, &mc).unwrap();
    assert!(r.params["m"].abs() < 0.02, "{r:?}");
    let shifted = cheeger_ratio(&s, &odd.shifted(3.0), None, &mc).unwrap();
    assert!((r.ratio - shifted.ratio).abs() < 1e-9 * r.ratio);
    assert!(cheeger_ratio(&s, &one(), None, &mc).is_err());
    assert!(cheeger_ratio(&h1(3.0), &odd, None, &mc).is_err());
}

#[test]
fn constructive_growth_exponents() {
    let eps = [0.5, 0.25, 0.125, 0.0625, 0.03125];
    for (q, sigma) in [(1.0, 4.0), (2.0, 2.0)] {
        let fit = constructive_beta_curve(&h1(4.0), q, &eps, 0.3).unwrap();
        assert!((fit.fitted_sigma - sigma).abs() < 1e-9);
    }
    let greiner = MeasureSpec::new(make_space(SpaceKind::Greiner { n: 1, zeta: 2 }).unwrap(), 8.0).unwrap();
    let fit = constructive_beta_curve(&greiner, 2.0, &eps, 0.3).unwrap();
    assert!((fit.fitted_sigma - 4.0).abs() < 1e-9, "{fit:?}");
}

#[test]
fn probe_on_grushin_recovers_the_exponent() {
    let g = MeasureSpec::new(make_space(SpaceKind::Grushin { n: 2, m: 1, eta: 1.0 }).unwrap(), 4.0).unwrap();
    let fit = spi_optimality_probe(&g, 2.0, &[2.0, 3.0, 4.0, 6.0], &ProbeOptions::default()).unwrap();
    assert!(fit.monotone);
    assert!(fit.fitted_sigma >= 1.7, "{fit:?}");
}
