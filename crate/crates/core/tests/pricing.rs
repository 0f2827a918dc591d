mod common;

use affine_libor::error::Error;
use affine_libor::model::{fit_term_structure, TenorStructure};
use affine_libor::pricing::*;
use affine_libor::processes::{CirParams, ProcessSpec, ProductProcess};
use proptest::prelude::*;

fn q() -> QuadratureSettings {
    QuadratureSettings::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn cir_fourier_matches_closed_form_on_full_grid() {
    let m = common::cir_model();
    let mut worst = 0.0f64;
    for k in 1..m.n() {
        for &s in &common::cir_strikes() {
            let c = CapletSpec::new(k, s).unwrap();
            let f = caplet_fourier(&m, &c, &q()).unwrap().price;
            let cl = caplet_cir_closed(&m, &c).unwrap().price;
            worst = worst.max(rel(f, cl));
        }
    }
    assert!(worst < 1e-6, "worst relative gap {worst:e}");
}

#[test]
fn parity_on_both_pricers() {
    for m in [common::cir_model(), common::gamma_ou_model(), common::cir2f_model()] {
        for k in 1..m.n() {
            for &s in &[0.0, 0.01, 0.03, 0.045, 0.07] {
                let c = CapletSpec::new(k, s).unwrap();
                let fwd = m.tenor.discount(k) - c.bold_strike(&m) * m.tenor.discount(k + 1);
                let call = caplet_fourier(&m, &c, &q()).unwrap().price;
                let put = floorlet_fourier(&m, &c, &q()).unwrap().price;
                assert!((call - put - fwd).abs() < 1e-8, "k={k} K={s}");
                if m.process.as_cir().is_some() {
                    let call = caplet_cir_closed(&m, &c).unwrap().price;
                    let put = floorlet_cir_closed(&m, &c).unwrap().price;
                    assert!((call - put - fwd).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn floorlet_at_zero_strike_is_worthless() {
    for m in [common::cir_model(), common::gamma_ou_model()] {
        for k in 1..m.n() {
            let c = CapletSpec::new(k, 0.0).unwrap();
            assert!(floorlet_fourier(&m, &c, &q()).unwrap().price.abs() < 1e-10);
        }
    }
}

#[test]
fn cir_floorlet_closed_matches_fourier() {
    let m = common::cir_model();
    let c = CapletSpec::new(2, 0.03).unwrap();
    let a = floorlet_fourier(&m, &c, &q()).unwrap().price;
    let b = floorlet_cir_closed(&m, &c).unwrap().price;
    assert!((a - b).abs() < 1e-6 * b.max(1e-12) || (a - b).abs() < 1e-14);
}

#[test]
fn equal_exponents_give_worthless_caplet() {
    // a zero forward rate over [T_2, T_3] makes u_2 = u_3
    let mut d = common::DISCOUNTS.to_vec();
    d[2] = d[1];
    let tenor = TenorStructure::new(common::MATURITIES.to_vec(), d).unwrap();
    let m = fit_term_structure(&tenor, &ProcessSpec::Cir(common::cir_params()), &[1.25], 1e-12).unwrap();
    assert!((m.u(2)[0] - m.u(3)[0]).abs() < 1e-12);
    let c = CapletSpec::new(2, 0.02).unwrap();
    assert!(caplet_fourier(&m, &c, &q()).unwrap().price < 1e-10);
    assert!(caplet_cir_closed(&m, &c).unwrap().price < 1e-10);
}

#[test]
fn deep_in_the_money_caplet_is_forward() {
    let m = common::cir_model();
    for k in [1, 5, 8] {
        let c = CapletSpec::new(k, 0.0).unwrap();
        let fwd = m.tenor.discount(k) - m.tenor.discount(k + 1);
        assert!((caplet_cir_closed(&m, &c).unwrap().price - fwd).abs() < 1e-10);
    }
}

#[test]
fn caplets_are_decreasing_and_convex_in_strike() {
    for (m, strikes) in [
        (common::cir_model(), common::cir_strikes()),
        (common::gamma_ou_model(), common::gamma_ou_strikes()),
    ] {
        for k in 1..m.n() {
            let p: Vec<f64> = strikes
                .iter()
                .map(|s| caplet_fourier(&m, &CapletSpec::new(k, *s).unwrap(), &q()).unwrap().price)
                .collect();
            for w in p.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            for w in p.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-11, "k={k} {w:?}");
            }
        }
    }
}

#[test]
fn halving_tolerance_stays_within_error_estimate() {
    let loose = q();
    let tight = QuadratureSettings {
        rel_tol: loose.rel_tol / 2.0,
        ..loose
    };
    for m in [common::cir_model(), common::gamma_ou_model()] {
        for (k, s) in [(1, 0.02), (3, 0.04), (7, 0.055)] {
            let c = CapletSpec::new(k, s).unwrap();
            let a = caplet_fourier(&m, &c, &loose).unwrap();
            let b = caplet_fourier(&m, &c, &tight).unwrap();
            assert!((a.price - b.price).abs() <= a.error_estimate.max(1e-15), "{a:?} {b:?}");
        }
    }
}

#[test]
fn damping_outside_strip_is_rejected() {
    let m = common::cir_model();
    let c = CapletSpec::new(2, 0.03).unwrap();
    let bad = QuadratureSettings {
        damping: Some(0.5),
        ..q()
    };
    assert!(matches!(caplet_fourier(&m, &c, &bad), Err(Error::DampingOutOfStrip { .. })));
    let bad = QuadratureSettings {
        damping: Some(0.5),
        ..q()
    };
    assert!(matches!(floorlet_fourier(&m, &c, &bad), Err(Error::DampingOutOfStrip { .. })));
    // another damping inside the strip gives the same price
    let (_, hi) = caplet_strip(&m, 2).unwrap();
    let alt = QuadratureSettings {
        damping: Some(1.0 + 0.1 * (hi.min(10.0) - 1.0)),
        ..q()
    };
    let a = caplet_fourier(&m, &c, &q()).unwrap().price;
    let b = caplet_fourier(&m, &c, &alt).unwrap().price;
    assert!(rel(a, b) < 1e-8);
}

#[test]
fn closed_forms_reject_other_models() {
    let g = common::gamma_ou_model();
    let c = CapletSpec::new(2, 0.03).unwrap();
    assert!(matches!(caplet_cir_closed(&g, &c), Err(Error::ModelMismatch(_))));
    assert!(matches!(caplet_cir2f_closed(&g, &c), Err(Error::ModelMismatch(_))));
    let s = SwaptionSpec::new(2, 6, 0.03).unwrap();
    assert!(matches!(swaption_cir_closed(&g, &s), Err(Error::ModelMismatch(_))));
    let m2 = common::cir2f_model();
    assert!(matches!(swaption_fourier(&m2, &s, &q()), Err(Error::ModelMismatch(_))));
}

#[test]
fn two_factor_closed_matches_fourier() {
    let m = common::cir2f_model();
    for k in [1, 4, 8] {
        for s in [0.02, 0.035, 0.05] {
            let c = CapletSpec::new(k, s).unwrap();
            let a = caplet_cir2f_closed(&m, &c).unwrap().price;
            let b = caplet_fourier(&m, &c, &q()).unwrap().price;
            assert!(rel(a, b) < 1e-5, "k={k} K={s}: {a} {b}");
        }
    }
}

#[test]
fn two_factor_with_degenerate_second_factor_reduces() {
    let dead = CirParams::new(0.3, 0.0, 0.3, 0.0).unwrap();
    let p = ProcessSpec::Product(ProductProcess::new(vec![ProcessSpec::Cir(common::cir_params()), ProcessSpec::Cir(dead)]).unwrap());
    let opts = affine_libor::model::FitOptions {
        tol: 1e-12,
        direction: Some(vec![1.0, 0.0]),
    };
    let m2 = affine_libor::model::fit_term_structure_with(&common::table1(), &p, &[1.25, 0.0], &opts).unwrap();
    let m1 = common::cir_model();
    for k in [1, 4, 8] {
        for s in [0.02, 0.035, 0.05] {
            let c = CapletSpec::new(k, s).unwrap();
            let a = caplet_cir2f_closed(&m2, &c).unwrap().price;
            let b = caplet_cir_closed(&m1, &c).unwrap().price;
            assert!((a - b).abs() < 1e-8, "k={k} K={s}: {a} {b}");
        }
    }
}

const SWAPTIONS: [(usize, usize, f64); 7] = [
    (2, 6, 0.03),
    (1, 10, 0.045),
    (3, 4, 0.04),
    (5, 10, 0.05),
    (8, 10, 0.02),
    (1, 2, 0.06),
    (4, 9, 0.035),
];

#[test]
fn swaption_fourier_matches_closed_form() {
    let m = common::cir_model();
    for (i, e, s) in SWAPTIONS {
        let sp = SwaptionSpec::new(i, e, s).unwrap();
        let a = swaption_fourier(&m, &sp, &q()).unwrap().price;
        let b = swaption_cir_closed(&m, &sp).unwrap().price;
        assert!(rel(a, b) < 1e-6, "{i} {e} {s}: {a} {b}");
    }
}

#[test]
fn swaption_bounds() {
    for m in [common::cir_model(), common::gamma_ou_model()] {
        for (i, e, s) in SWAPTIONS.iter().copied().chain([(2, 6, 0.0), (2, 6, 5.0)]) {
            let sp = SwaptionSpec::new(i, e, s).unwrap();
            let p = swaption_fourier(&m, &sp, &q()).unwrap().price;
            let bi = m.tenor.discount(i);
            let intrinsic = bi - sp.coupons(&m).unwrap().iter().map(|(k, c)| c * m.tenor.discount(*k)).sum::<f64>();
            assert!(p <= bi + 1e-12);
            assert!(p >= intrinsic.max(0.0) - 1e-10, "{i} {e} {s}: {p} < {intrinsic}");
        }
    }
}

#[test]
fn single_period_root_is_analytic() {
    let m = common::cir_model();
    for (i, s) in [(2, 0.03), (6, 0.05)] {
        let sp = SwaptionSpec::new(i, i + 1, s).unwrap();
        let y = swaption_root(&m, &sp).unwrap();
        let fe = m.forward_exponents(i + 1, i, m.tenor.date(i)).unwrap();
        let cm = 1.0 + m.tenor.delta(i) * s;
        let want = (-cm.ln() - fe.a) / fe.b[0];
        assert!((y - want).abs() < 1e-9 * want.abs().max(1.0));
    }
}

#[test]
fn single_period_swaption_is_a_caplet() {
    // (1 - 𝒦 B(T_i, T_{i+1}))^+ at T_i is worth B(T_i, T_{i+1}) (F - 𝒦)^+ with F
    // the forward price, i.e. the caplet paid at T_{i+1}
    let m = common::cir_model();
    for (i, s) in [(2, 0.03), (5, 0.045)] {
        let sp = SwaptionSpec::new(i, i + 1, s).unwrap();
        let c = CapletSpec::new(i, s).unwrap();
        let sw = swaption_fourier(&m, &sp, &q()).unwrap().price;
        let cap = caplet_cir_closed(&m, &c).unwrap().price;
        assert!(rel(sw, cap) < 1e-6, "{sw} {cap}");
    }
}

#[test]
fn swaption_root_residual_and_monotonicity() {
    let m = common::cir_model();
    let sp = SwaptionSpec::new(2, 6, 0.03).unwrap();
    let y = swaption_root(&m, &sp).unwrap();
    let terms: Vec<(f64, affine_libor::model::ForwardExponents)> = sp
        .coupons(&m)
        .unwrap()
        .into_iter()
        .map(|(k, c)| (c, m.forward_exponents(k, 2, m.tenor.date(2)).unwrap()))
        .collect();
    let f = |x: f64| 1.0 - terms.iter().map(|(c, fe)| c * fe.value(&[x])).sum::<f64>();
    assert!(f(y).abs() <= 1e-13);
    let xs: Vec<f64> = (-20..=20).map(|i| y + 0.5 * i as f64).collect();
    for w in xs.windows(2) {
        assert!(f(w[1]) > f(w[0]));
    }
}

#[test]
fn surface_tables() {
    let m = common::cir_model();
    let strikes = strike_grid(0.01, 0.06, 0.005).unwrap();
    let f = vol_surface(&m, &strikes, PricingMethod::Fourier, &q()).unwrap();
    let c = vol_surface(&m, &strikes, PricingMethod::Closed, &q()).unwrap();
    assert_eq!(f.cells.len(), 99);
    assert_eq!(f.failed(), 0);
    assert_eq!(c.failed(), 0);
    for (a, b) in f.cells.iter().zip(&c.cells) {
        assert!((a.price - b.price).abs() < 1e-6);
        assert!(a.implied_vol.is_finite() && a.implied_vol > 0.0);
    }
    let csv = f.to_csv();
    assert_eq!(csv.lines().next(), Some("expiry,strike,price,implied_vol"));
    assert_eq!(csv.lines().count(), 100);
    assert!(matches!(
        vol_surface(&common::gamma_ou_model(), &strikes, PricingMethod::Closed, &q()),
        Err(Error::ModelMismatch(_))
    ));
}

#[test]
fn gamma_ou_vols_below_the_atom_are_flagged() {
    let m = common::gamma_ou_model();
    let strikes = common::gamma_ou_strikes();
    let g = common::gamma_ou_params();
    let s = vol_surface(&m, &strikes, PricingMethod::Fourier, &q()).unwrap();
    for c in &s.cells {
        // smallest reachable rate: no jumps before expiry
        let atom = [g.x0 * (-g.lambda * c.expiry).exp()];
        let floor = m.libor_rate(c.period, c.expiry, &atom).unwrap();
        if c.strike < floor - 1e-4 {
            assert!(c.error.is_some(), "{c:?}");
            assert!(c.price.is_finite());
        }
        if c.error.is_none() {
            assert!(c.implied_vol > 0.0);
        } else {
            assert!(c.strike < floor, "{c:?} floor {floor}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn black_round_trip(f in 0.001f64..0.2, k in 0.001f64..0.2, vol in 0.01f64..2.0, t in 0.1f64..10.0, ann in 0.1f64..1.0) {
        let p = black76_caplet(f, k, vol, t, ann);
        let intrinsic = ann * (f - k).max(0.0);
        prop_assume!(p - intrinsic > 1e-9 * ann);
        let v = black76_implied_vol(p, f, k, t, ann).unwrap();
        prop_assert!((black76_caplet(f, k, v, t, ann) - p).abs() <= IMPLIED_VOL_TOL);
    }

    #[test]
    fn caplet_convex_in_strike(k in 1usize..10, s in 0.0f64..0.08, h in 0.0005f64..0.01) {
        let m = common::cir_model();
        let p = |x: f64| caplet_cir_closed(&m, &CapletSpec::new(k, x).unwrap()).unwrap().price;
        prop_assert!(p(s) >= p(s + h) - 1e-14);
        prop_assert!(p(s) - 2.0 * p(s + h) + p(s + 2.0 * h) >= -1e-12);
    }
}
