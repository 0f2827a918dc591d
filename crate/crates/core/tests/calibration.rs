mod common;

use std::time::Instant;

use affine_libor::error::Error;
use affine_libor::model::*;
use affine_libor::processes::{LevySubordinatorSpec, ProcessSpec};
use proptest::prelude::*;

fn fit_residual(m: &CalibratedModel) -> f64 {
    (1..=m.n())
        .map(|k| (m.initial_martingale(k).unwrap() - m.tenor.ratio(k)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn table1_curve() {
    let t = common::table1();
    assert_eq!(t.n(), 10);
    assert_eq!(t.uniform_delta(), Some(0.5));
    assert_eq!(t.discount(10), 0.7920573);
    assert!((t.ratio(0) - 1.0 / 0.7920573).abs() < 1e-15);
}

#[test]
fn cir_fit_reproduces_curve() {
    let start = Instant::now();
    let m = common::cir_model();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(fit_residual(&m) <= 1e-12);
    for k in 1..m.n() {
        assert!(m.u(k)[0] > m.u(k + 1)[0]);
    }
    assert_eq!(m.u(m.n()), &[0.0]);
    assert!(elapsed < 1.0);
}

#[test]
fn gamma_ou_and_two_factor_fits() {
    for m in [common::gamma_ou_model(), common::cir2f_model()] {
        assert!(fit_residual(&m) <= 1e-12);
        for k in 1..m.n() {
            assert!(m.u(k).iter().zip(m.u(k + 1)).all(|(a, b)| a > b));
        }
        assert!(m.u(m.n()).iter().all(|u| *u == 0.0));
    }
}

#[test]
fn initial_libor_and_forward_prices_match_curve() {
    let m = common::cir_model();
    for k in 1..m.n() {
        let fe = m.forward_price_exponents(k, 0.0).unwrap();
        let f = fe.value(&m.x0);
        let want = m.tenor.discount(k) / m.tenor.discount(k + 1);
        assert!((f - want).abs() < 1e-12);
        let l = m.libor_rate(k, 0.0, &m.x0).unwrap();
        assert!((l - m.tenor.initial_libor(k)).abs() < 1e-11);
    }
}

#[test]
fn gamma_ou_libor_floor() {
    // the zero-state bound sits below the rate at the smallest reachable state
    let m = common::gamma_ou_model();
    let g = common::gamma_ou_params();
    for k in 1..m.n() {
        let t = m.tenor.date(k);
        let floor = m.libor_lower_bound(k, t).unwrap();
        let at_atom = m.libor_rate(k, t, &[g.x0 * (-g.lambda * t).exp()]).unwrap();
        assert!(floor >= 0.0 && floor <= at_atom);
    }
}

#[test]
fn forward_measure_telescopes() {
    // E_{P_{T_{k+1}}}[e^{v Z}] through the measure change equals the direct
    // terminal-measure expectation divided by M_0^{u_{k+1}}
    let m = common::cir_model();
    let p = common::cir_params();
    for k in [1, 4, 8] {
        let t = m.tenor.date(k);
        let v = 0.7;
        let fe = m.forward_price_exponents(k, t).unwrap();
        let direct = {
            let uk1 = m.u(k + 1)[0];
            let inner = m.remaining_transform(t, &[uk1]).unwrap();
            let (phi, psi) = p.transform(t, inner.psi[0] + v * fe.b[0]).unwrap();
            (inner.phi + v * fe.a + phi + psi * p.x0).exp() / m.initial_martingale(k + 1).unwrap()
        };
        let via = m.forward_price_mgf(k, t, v).unwrap();
        assert!((direct - via).abs() < 1e-12 * direct);
    }
}

#[test]
fn flat_curve_is_all_zero() {
    let t = TenorStructure::new(vec![1.0, 2.0, 3.0], vec![1.0; 3]).unwrap();
    let m = fit_term_structure(&t, &ProcessSpec::Cir(common::cir_params()), &[1.25], 1e-12).unwrap();
    assert!(m.us.iter().all(|u| u[0] == 0.0));
}

#[test]
fn rejects_rising_discounts_and_infeasible_curves() {
    assert!(matches!(
        TenorStructure::new(vec![1.0, 2.0], vec![0.9, 0.95]),
        Err(Error::NonMonotoneCurve { .. })
    ));
    // a bounded moment generating function caps the attainable ratio
    let d = LevySubordinatorSpec::gamma(0.5, 2.0, 0.0).unwrap();
    let ou = affine_libor::processes::ou_driven_by(1.0, &d, 0.0);
    let steep = TenorStructure::new(vec![1.0, 2.0], vec![0.2, 0.01]).unwrap();
    assert!(matches!(
        fit_term_structure(&steep, &ou, &[0.0], 1e-12),
        Err(Error::InfeasibleCurve(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_curves_fit(rates in prop::collection::vec(0.0f64..0.08, 4..10)) {
        let mut d = 1.0;
        let mut mats = Vec::new();
        let mut disc = Vec::new();
        for (i, r) in rates.iter().enumerate() {
            d /= 1.0 + 0.5 * r;
            mats.push(0.5 * (i + 1) as f64);
            disc.push(d);
        }
        let t = TenorStructure::new(mats, disc).unwrap();
        let m = fit_term_structure(&t, &ProcessSpec::Cir(common::cir_params()), &[1.25], 1e-12).unwrap();
        prop_assert!(fit_residual(&m) <= 1e-12);
        for k in 1..m.n() {
            prop_assert!(m.u(k)[0] >= m.u(k + 1)[0]);
        }
    }
}
