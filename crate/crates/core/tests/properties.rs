mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use faer::c64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use subwave::circle::{
    assemble_pullback, pointwise_pullback, CircleDiffeo, CircleForm, Compose, Inverse, Rotation, Sign, SineWobble,
};
use subwave::cli::random_forms;
use subwave::geometry::{BilliardCircleMap, Channel};
use subwave::scattering::ScatteringAssembly;
use subwave::topography::Topography;

fn wobble() -> impl Strategy<Value = SineWobble> {
    (0.0f64..0.3, 1u32..4, 0.0f64..6.3).prop_map(|(a, m, p)| SineWobble { a, m: m as f64, p })
}

fn form(band: usize, k_max: usize) -> impl Strategy<Value = CircleForm> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2 * band).prop_map(move |c| {
        let mut v = CircleForm::zero(k_max);
        let ks = (-(band as i64)..=band as i64).filter(|k| *k != 0);
        for (k, (re, im)) in ks.zip(c) {
            v.set_coeff(k, c64::new(re, im));
        }
        v
    })
}

fn rel(a: &CircleForm, b: &CircleForm) -> f64 {
    a.sub(b).l2_coeff_norm() / b.l2_coeff_norm().max(1e-300)
}

#[test]
fn norm_and_flux_examples() {
    let mut v = CircleForm::zero(8);
    v.set_coeff(1, c64::new(1.0, 0.0));
    v.set_coeff(-2, c64::new(0.0, 2.0));
    assert!((v.sobolev_norm(0.5) - 3.0).abs() < 1e-14);
    assert!((v.sobolev_norm(0.0) - 5f64.sqrt()).abs() < 1e-14);
    assert!((v.quantum_flux() - 2.0 * PI * (1.0 - 8.0)).abs() < 1e-12);
    assert!((v.form_flux() - 2.0 * PI * (1.0 - 2.0)).abs() < 1e-12);
    assert_eq!(CircleForm::zero(8).quantum_flux(), 0.0);
}

#[test]
fn sampled_forms() {
    let n = 128;
    let grid = |f: &dyn Fn(f64) -> c64| (0..n).map(|m| f(2.0 * PI * m as f64 / n as f64)).collect::<Vec<_>>();
    let (v, warn) = CircleForm::from_samples(&grid(&|t| c64::new(t.sin(), 0.0)), 16).unwrap();
    assert!(warn.is_none());
    assert!((v.coeff(1) - c64::new(0.0, -0.5)).norm() < 1e-14);
    assert!((v.coeff(-1) - c64::new(0.0, 0.5)).norm() < 1e-14);

    let (v, _) = CircleForm::from_samples(&grid(&|_| c64::new(3.0, 0.0)), 16).unwrap();
    assert!(v.l2_coeff_norm() < 1e-14);
    assert!((v.mean_defect - 3.0).abs() < 1e-14);

    let (v, _) = CircleForm::from_samples(&grid(&|t| c64::cis(3.0 * t) * (1.0 + 0.1 * t.cos())), 16).unwrap();
    assert!((v.coeff(3) - c64::new(1.0, 0.0)).norm() < 1e-14);
    assert!((v.coeff(2) - c64::new(0.05, 0.0)).norm() < 1e-14);
    assert!((v.coeff(4) - c64::new(0.05, 0.0)).norm() < 1e-14);

    assert!(CircleForm::from_samples(&grid(&|_| c64::new(1.0, 0.0)), 40).is_err());
}

#[test]
fn rotation_pullback_is_diagonal() {
    let a = 0.37;
    let (b, warn) = assemble_pullback(&Rotation(a), 16, 256).unwrap();
    assert!(warn.is_none());
    for j in -16..16i64 {
        for k in -16..16i64 {
            if j == 0 || k == 0 {
                continue;
            }
            let expected = if j == k { c64::cis(k as f64 * a) } else { c64::new(0.0, 0.0) };
            assert!((b.entry(j, k) - expected).norm() < 1e-13);
        }
    }
}

#[test]
fn multi_bounce_pullback_matches_pointwise() {
    let ch = Channel::new(Topography::gaussian(0.5, 1.0, 0.0), FRAC_1_SQRT_2).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let map = BilliardCircleMap::new(&ch, fi);
    let k = 64;
    let (b, _) = assemble_pullback(&map, k, 16 * k).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    for v in random_forms(&mut rng, k, 8, 4) {
        let direct = pointwise_pullback(&map, &v, 16 * k).unwrap();
        // only the inner band is resolved at truncation K
        let inner = |f: &CircleForm| f.band_limited(k / 2);
        assert!(rel(&inner(&b.apply(&v)), &inner(&direct)) < 1e-9);
    }
}

#[test]
fn flat_scattering_matrix_is_identity() {
    let ch = Channel::new(Topography::flat(), 0.45).unwrap();
    let fi = ch.fundamental_intervals().unwrap();
    let asm = ScatteringAssembly::build(&ch, fi, 32, 512).unwrap();
    let mut v = CircleForm::zero(32);
    v.set_coeff(-1, c64::new(1.0, 0.0));
    let data = asm.solve_homogeneous_data(&v);
    assert!(data.g_out.sub(&v).l2_coeff_norm() < 1e-12);
    assert!(data.v_r.sub(&v).l2_coeff_norm() < 1e-12);
    assert!(data.v_l.sub(&v).l2_coeff_norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projections_split_the_form(v in form(10, 12)) {
        let sum = v.project(Sign::Plus).add(&v.project(Sign::Minus));
        prop_assert!(sum.sub(&v).l2_coeff_norm() < 1e-15);
        prop_assert!(v.project(Sign::Plus).project(Sign::Minus).l2_coeff_norm() == 0.0);
    }

    #[test]
    fn parseval(v in form(10, 12)) {
        let n = 256;
        let l2: f64 = v.to_samples(n).iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        prop_assert!((l2 - v.l2_coeff_norm().powi(2)).abs() < 1e-12 * (1.0 + l2));
        let (back, _) = CircleForm::from_samples(&v.to_samples(n), 12).unwrap();
        prop_assert!(back.sub(&v).l2_coeff_norm() < 1e-13);
    }

    #[test]
    fn wobble_pullback_preserves_form_flux(w in wobble(), v in form(6, 32)) {
        let (b, _) = assemble_pullback(&w, 32, 512).unwrap();
        let bv = b.apply(&v);
        let f0 = v.form_flux();
        prop_assert!((bv.form_flux() - f0).abs() < 1e-9 * (1.0 + f0.abs()));
    }

    #[test]
    fn pullback_of_composition(w1 in wobble(), w2 in wobble(), v in form(4, 32)) {
        let k = 32;
        let b1 = assemble_pullback(&w1, k, 512).unwrap().0;
        let b2 = assemble_pullback(&w2, k, 512).unwrap().0;
        let both = assemble_pullback(&Compose { outer: &w1, inner: &w2 }, k, 512).unwrap().0;
        // (w1 o w2)^* = w2^* w1^*
        let lhs = both.apply(&v).band_limited(8);
        let rhs = b2.apply(&b1.apply(&v)).band_limited(8);
        prop_assert!(rel(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn pullback_inverse_on_inner_band(w in wobble(), v in form(4, 32)) {
        let b = assemble_pullback(&w, 32, 512).unwrap().0;
        let binv = assemble_pullback(&Inverse(&w), 32, 512).unwrap().0;
        let back = binv.apply(&b.apply(&v)).band_limited(8);
        prop_assert!(rel(&back, &v) < 1e-9);
    }

    #[test]
    fn inverse_diffeo_round_trip(w in wobble(), t in 0.0f64..6.3) {
        let (x, dx) = w.eval_inverse(t);
        let (y, dy) = w.eval(x);
        prop_assert!((y - t).abs() < 1e-12);
        prop_assert!((dx * dy - 1.0).abs() < 1e-11);
    }
}
