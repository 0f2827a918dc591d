//! Caplet, floorlet and swaption pricing.
//!
//! Fourier pricers work for every supported driver; the χ² pricers cover the
//! one- and two-factor CIR models. Prices are converted to Black-76 implied
//! volatilities for surface output.

use std::cell::RefCell;

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::distributions::{ncchi2_cdf, ncchi2_sf, normal_cdf, ChiSqMixSpec};
use crate::error::{Error, Result};
use crate::model::{CalibratedModel, ForwardExponents, ForwardMeasure};
use crate::processes::CirParams;
use crate::quadrature::{integrate_fourier, QuadOptions};

/// Caplet on the LIBOR rate of period `[T_k, T_{k+1}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapletSpec {
    /// Period index `k`.
    pub period: usize,
    /// Simple strike rate `K`.
    pub strike: f64,
}

impl CapletSpec {
    pub fn new(period: usize, strike: f64) -> Result<Self> {
        if !(strike >= 0.0) || !strike.is_finite() {
            return Err(Error::InvalidParameter(format!("strike {strike} must be >= 0")));
        }
        Ok(CapletSpec { period, strike })
    }

    /// `𝒦 = 1 + δK`.
    pub fn bold_strike(&self, m: &CalibratedModel) -> f64 {
        1.0 + m.tenor.delta(self.period) * self.strike
    }
}

/// Payer swaption exercised at `T_i` into a swap paying at `T_{i+1}, …, T_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwaptionSpec {
    pub start: usize,
    pub end: usize,
    pub strike: f64,
}

impl SwaptionSpec {
    pub fn new(start: usize, end: usize, strike: f64) -> Result<Self> {
        if start == 0 || end <= start {
            return Err(Error::IndexError(format!(
                "swaption needs 1 <= i < m, got i = {start}, m = {end}"
            )));
        }
        if !(strike >= 0.0) || !strike.is_finite() {
            return Err(Error::InvalidParameter(format!("strike {strike} must be >= 0")));
        }
        Ok(SwaptionSpec { start, end, strike })
    }

    /// `(k, c_k)` for `k = i+1..=m`: `c_k = δK`, plus one on the last payment.
    pub fn coupons(&self, m: &CalibratedModel) -> Result<Vec<(usize, f64)>> {
        if self.end > m.n() {
            return Err(Error::IndexError(format!(
                "swap end {} beyond N = {}",
                self.end,
                m.n()
            )));
        }
        Ok((self.start + 1..=self.end)
            .map(|k| {
                let c = m.tenor.delta(k - 1) * self.strike;
                (k, if k == self.end { c + 1.0 } else { c })
            })
            .collect())
    }
}

/// Damping and accuracy of the Fourier pricers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Real part `R` of the transform argument; chosen inside the strip when absent.
    pub damping: Option<f64>,
    /// Largest frequency the integrator may reach before giving up.
    pub truncation: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            damping: None,
            truncation: 1e9,
            rel_tol: 1e-10,
            abs_tol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceResult {
    pub price: f64,
    pub error_estimate: f64,
    pub damping: Option<f64>,
    /// Exercise boundary `𝒴` for swaptions.
    pub root: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PricingMethod {
    Fourier,
    Closed,
}

impl std::str::FromStr for PricingMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(PricingMethod::Fourier),
            "closed" => Ok(PricingMethod::Closed),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// Interval of real `w` with `w·b + base` inside the componentwise domain bound.
fn strip(bound: &[f64], base: &[f64], b: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ((ub, x), bj) in bound.iter().zip(base).zip(b) {
        let gap = ub - x;
        if *bj > 0.0 {
            hi = hi.min(gap / bj);
        } else if *bj < 0.0 {
            lo = lo.max(gap / bj);
        }
    }
    (lo, hi)
}

/// Strip of `w` for which `E_{P_{T_{k+1}}}[e^{w Z_k}]` is finite, `Z_k` the
/// log forward price at `T_k`.
pub fn caplet_strip(m: &CalibratedModel, k: usize) -> Result<(f64, f64)> {
    let tk = m.tenor.date(k.min(m.n()));
    let fe = m.forward_price_exponents(k, tk)?;
    let fm = ForwardMeasure::new(m, k + 1, tk)?;
    Ok(strip(&m.process.domain_bound(tk), fm.base(), &fe.b))
}

/// Strip of `R` for which `E_{P_{T_i}}[e^{R X_{T_i}}]` is finite.
pub fn swaption_strip(m: &CalibratedModel, i: usize) -> Result<(f64, f64)> {
    if m.dim() != 1 {
        return Err(Error::ModelMismatch("swaption pricing needs a one-factor driver".into()));
    }
    let ti = m.tenor.date(i.min(m.n()));
    let fm = ForwardMeasure::new(m, i, ti)?;
    Ok(strip(&m.process.domain_bound(ti), fm.base(), &[1.0]))
}

fn quad_options(q: &QuadratureSettings) -> QuadOptions {
    QuadOptions {
        abs_tol: q.abs_tol,
        rel_tol: q.rel_tol,
        max_evals: 4_000_000,
    }
}

fn choose_damping(q: &QuadratureSettings, lower: f64, upper: f64, default: f64) -> Result<f64> {
    let r = q.damping.unwrap_or(default);
    if !(r > lower && r < upper) {
        return Err(Error::DampingOutOfStrip {
            damping: r,
            lower,
            upper,
        });
    }
    Ok(r)
}

fn clamp_price(raw: f64, err: f64, scale: f64) -> Result<f64> {
    if raw >= 0.0 {
        return Ok(raw);
    }
    if -raw <= 10.0 * err + 1e-13 * scale {
        return Ok(0.0);
    }
    Err(Error::QuadratureFailure(format!(
        "negative price {raw:e} beyond error estimate {err:e}"
    )))
}

fn option_fourier(m: &CalibratedModel, c: &CapletSpec, q: &QuadratureSettings, call: bool) -> Result<PriceResult> {
    let k = c.period;
    let (lo, hi) = caplet_strip(m, k)?;
    let tk = m.tenor.date(k);
    let fe = m.forward_price_exponents(k, tk)?;
    let fm = ForwardMeasure::new(m, k + 1, tk)?;
    let r = if call {
        let upper = hi;
        let default = if upper.is_finite() { 0.5 * (1.0 + upper) } else { 2.0 };
        choose_damping(q, 1.0, upper, default)?
    } else {
        let lower = lo;
        let default = if lower.is_finite() { 0.5 * lower } else { -1.0 };
        choose_damping(q, lower, 0.0, default)?
    };
    let log_k = c.bold_strike(m).ln();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let h = |v: f64| -> Complex64 {
        let w = Complex64::new(r, -v);
        let arg: Vec<Complex64> = fe.b.iter().map(|b| w * b).collect();
        match fm.log_mgf(&arg) {
            Ok(l) => (w * fe.a + l + (1.0 - w) * log_k).exp() / (w * (w - 1.0)),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(f64::NAN, f64::NAN)
            }
        }
    };
    let width = 2.0 * r.abs().max(1.0);
    let res = integrate_fourier(&h, width, q.truncation, &quad_options(q));
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let res = res?;
    let scale = m.tenor.discount(k + 1) / std::f64::consts::PI;
    let err = scale * res.error;
    let price = clamp_price(scale * res.value, err, m.tenor.discount(k))?;
    Ok(PriceResult {
        price,
        error_estimate: err,
        damping: Some(r),
        root: None,
    })
}

/// Caplet price `B(0,T_{k+1}) E_{P_{T_{k+1}}}[(e^{Z_k} - 𝒦)^+]` by Fourier inversion
/// along `Re w = R ∈ (1, strip end)`.
pub fn caplet_fourier(m: &CalibratedModel, c: &CapletSpec, q: &QuadratureSettings) -> Result<PriceResult> {
    option_fourier(m, c, q, true)
}

/// Floorlet counterpart with damping `R < 0`.
pub fn floorlet_fourier(m: &CalibratedModel, c: &CapletSpec, q: &QuadratureSettings) -> Result<PriceResult> {
    option_fourier(m, c, q, false)
}

fn require_cir(m: &CalibratedModel) -> Result<&CirParams> {
    m.process
        .as_cir()
        .ok_or_else(|| Error::ModelMismatch("closed form needs a one-factor CIR driver".into()))
}

/// Scale `η²b(t)` of the CIR transition from time zero.
fn cir_scale(p: &CirParams, t: f64) -> f64 {
    p.eta * p.eta * p.b(t)
}

fn cir_mean(p: &CirParams, x: f64, t: f64) -> f64 {
    x * p.a(t) + p.theta * p.lambda * p.b(t)
}

/// `P(Z > log 𝒦)` and `P(Z ≤ log 𝒦)` under the measure tilted by `u`, with
/// `Z = A + Σ B_j X_j(t)` and independent CIR factors.
fn tilted_tails(
    factors: &[CirParams],
    x0: &[f64],
    t: f64,
    psi: &[f64],
    fe: &ForwardExponents,
    level: f64,
) -> Result<(f64, f64)> {
    let mut shift = fe.a;
    let (mut sigmas, mut nus, mut alphas) = (vec![], vec![], vec![]);
    for (j, p) in factors.iter().enumerate() {
        let bj = fe.b[j];
        if bj == 0.0 {
            continue;
        }
        if bj < 0.0 {
            return Err(Error::Unsupported(format!(
                "negative loading {bj} on factor {j}"
            )));
        }
        let s = cir_scale(p, t);
        if s == 0.0 {
            shift += bj * cir_mean(p, x0[j], t);
            continue;
        }
        let zeta = 1.0 - 2.0 * s * psi[j];
        let nu = p.dof();
        let alpha = x0[j] * p.a(t) / (s * zeta);
        if nu == 0.0 && alpha == 0.0 {
            continue;
        }
        sigmas.push(bj * s / zeta);
        nus.push(nu);
        alphas.push(alpha);
    }
    let y = level - shift;
    match sigmas.len() {
        0 => Ok(if y < 0.0 { (1.0, 0.0) } else { (0.0, 1.0) }),
        1 => {
            let x = y / sigmas[0];
            Ok((ncchi2_sf(x, nus[0], alphas[0])?, ncchi2_cdf(x, nus[0], alphas[0])?))
        }
        _ => {
            let mix = ChiSqMixSpec::new(sigmas, nus, alphas, 0.0)?;
            let t = mix.tails(y)?;
            if t.truncation > crate::distributions::MIX_TOL {
                return Err(Error::ConvergenceFailure(format!(
                    "mixture truncation bound {} too large",
                    t.truncation
                )));
            }
            Ok((t.sf, t.cdf))
        }
    }
}

fn cir_option_closed(
    m: &CalibratedModel,
    factors: &[CirParams],
    c: &CapletSpec,
    call: bool,
) -> Result<PriceResult> {
    let k = c.period;
    let tk = m.tenor.date(k.min(m.n()));
    let fe = m.forward_price_exponents(k, tk)?;
    let bold = c.bold_strike(m);
    let level = bold.ln();
    let psi_k = m.remaining_transform(tk, m.u(k))?.psi;
    let psi_k1 = m.remaining_transform(tk, m.u(k + 1))?.psi;
    let (sf1, cdf1) = tilted_tails(factors, &m.x0, tk, &psi_k, &fe, level)?;
    let (sf2, cdf2) = tilted_tails(factors, &m.x0, tk, &psi_k1, &fe, level)?;
    let (bk, bk1) = (m.tenor.discount(k), m.tenor.discount(k + 1));
    let price = if call {
        bk * sf1 - bold * bk1 * sf2
    } else {
        bold * bk1 * cdf2 - bk * cdf1
    };
    let scale = bk + bold * bk1;
    Ok(PriceResult {
        price: price.max(0.0),
        error_estimate: 1e-13 * scale,
        damping: None,
        root: None,
    })
}

/// Closed-form caplet for a one-factor CIR driver.
pub fn caplet_cir_closed(m: &CalibratedModel, c: &CapletSpec) -> Result<PriceResult> {
    let p = *require_cir(m)?;
    cir_option_closed(m, &[p], c, true)
}

/// Closed-form floorlet for a one-factor CIR driver.
pub fn floorlet_cir_closed(m: &CalibratedModel, c: &CapletSpec) -> Result<PriceResult> {
    let p = *require_cir(m)?;
    cir_option_closed(m, &[p], c, false)
}

fn require_cir_factors(m: &CalibratedModel) -> Result<Vec<CirParams>> {
    m.process
        .cir_factors()
        .ok_or_else(|| Error::ModelMismatch("closed form needs independent CIR factors".into()))
}

/// Closed-form caplet for independent CIR factors through the χ² mixture law.
pub fn caplet_cir2f_closed(m: &CalibratedModel, c: &CapletSpec) -> Result<PriceResult> {
    let f = require_cir_factors(m)?;
    cir_option_closed(m, &f, c, true)
}

/// `(c_k, A_{k,i}, B_{k,i})` at `t = T_i` for a one-factor model.
fn swap_terms(m: &CalibratedModel, s: &SwaptionSpec) -> Result<Vec<(usize, f64, f64, f64)>> {
    if m.dim() != 1 {
        return Err(Error::ModelMismatch("swaption pricing needs a one-factor driver".into()));
    }
    let ti = m.tenor.date(s.start.min(m.n()));
    s.coupons(m)?
        .into_iter()
        .map(|(k, c)| {
            let fe = m.forward_exponents(k, s.start, ti)?;
            Ok((k, c, fe.a, fe.b[0]))
        })
        .collect()
}

fn exercise_fn(terms: &[(usize, f64, f64, f64)], x: f64) -> f64 {
    1.0 - terms.iter().map(|(_, c, a, b)| c * (a + b * x).exp()).sum::<f64>()
}

const ROOT_TOL: f64 = 1e-13;

/// Unique zero `𝒴` of `f(x) = 1 - Σ c_k exp(A_{k,i} + B_{k,i} x)`.
pub fn swaption_root(m: &CalibratedModel, s: &SwaptionSpec) -> Result<f64> {
    let terms = swap_terms(m, s)?;
    root_of(&terms)
}

fn root_of(terms: &[(usize, f64, f64, f64)]) -> Result<f64> {
    let f = |x: f64| exercise_fn(terms, x);
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while f(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e12 {
            return Err(Error::NoSignChange { lo, hi });
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoSignChange { lo, hi });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= ROOT_TOL * 1e-3 || mid <= lo || mid >= hi {
            return finish_root(mid, fm);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    finish_root(mid, f(mid))
}

fn finish_root(x: f64, fx: f64) -> Result<f64> {
    if fx.abs() > ROOT_TOL {
        return Err(Error::ConvergenceFailure(format!(
            "exercise function residual {fx:e} at {x}"
        )));
    }
    Ok(x)
}

/// Swaption price `B(0,T_i) E_{P_{T_i}}[f(X_{T_i})^+]` by Fourier inversion along
/// `Im z = R ∈ (0, strip end)`.
pub fn swaption_fourier(m: &CalibratedModel, s: &SwaptionSpec, q: &QuadratureSettings) -> Result<PriceResult> {
    let terms = swap_terms(m, s)?;
    let y = root_of(&terms)?;
    let (_, hi) = swaption_strip(m, s.start)?;
    let r = choose_damping(q, 0.0, hi, 0.5 * hi.min(1.0))?;
    let ti = m.tenor.date(s.start);
    let fm = ForwardMeasure::new(m, s.start, ti)?;
    let weights: Vec<(f64, f64)> = terms
        .iter()
        .map(|(_, c, a, b)| (c * (a + b * y).exp(), *b))
        .collect();
    let f_y = 1.0 - weights.iter().map(|(w, _)| w).sum::<f64>();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let h = |v: f64| -> Complex64 {
        let iz = Complex64::new(-r, v);
        let mut g = -f_y / iz;
        for (w, b) in &weights {
            g += w * (-b) / ((b + iz) * iz);
        }
        let g = g * (iz * y).exp();
        match fm.log_mgf(&[Complex64::new(r, -v)]) {
            Ok(l) => g * l.exp(),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(f64::NAN, f64::NAN)
            }
        }
    };
    let res = integrate_fourier(&h, 2.0, q.truncation, &quad_options(q));
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let res = res?;
    let scale = m.tenor.discount(s.start) / std::f64::consts::PI;
    let err = scale * res.error;
    let price = clamp_price(scale * res.value, err, m.tenor.discount(s.start))?;
    Ok(PriceResult {
        price,
        error_estimate: err,
        damping: Some(r),
        root: Some(y),
    })
}

/// Closed-form swaption for a one-factor CIR driver.
pub fn swaption_cir_closed(m: &CalibratedModel, s: &SwaptionSpec) -> Result<PriceResult> {
    let p = *require_cir(m)?;
    let terms = swap_terms(m, s)?;
    let y = root_of(&terms)?;
    let ti = m.tenor.date(s.start);
    let sv = cir_scale(&p, ti);
    let x = m.x0[0];
    let tail = |u: &[f64]| -> Result<f64> {
        if sv == 0.0 {
            return Ok(if cir_mean(&p, x, ti) > y { 1.0 } else { 0.0 });
        }
        let psi = m.remaining_transform(ti, u)?.psi[0];
        let zeta = 1.0 - 2.0 * sv * psi;
        ncchi2_sf(y * zeta / sv, p.dof(), x * p.a(ti) / (sv * zeta))
    };
    let mut price = m.tenor.discount(s.start) * tail(m.u(s.start))?;
    for (k, c, _, _) in &terms {
        price -= c * m.tenor.discount(*k) * tail(m.u(*k))?;
    }
    Ok(PriceResult {
        price: price.max(0.0),
        error_estimate: 1e-13 * m.tenor.discount(s.start),
        damping: None,
        root: Some(y),
    })
}

/// Caplet price by the requested method.
pub fn caplet_price(
    m: &CalibratedModel,
    c: &CapletSpec,
    method: PricingMethod,
    q: &QuadratureSettings,
) -> Result<PriceResult> {
    match method {
        PricingMethod::Fourier => caplet_fourier(m, c, q),
        PricingMethod::Closed if m.process.as_cir().is_some() => caplet_cir_closed(m, c),
        PricingMethod::Closed => caplet_cir2f_closed(m, c),
    }
}

/// Swaption price by the requested method.
pub fn swaption_price(
    m: &CalibratedModel,
    s: &SwaptionSpec,
    method: PricingMethod,
    q: &QuadratureSettings,
) -> Result<PriceResult> {
    match method {
        PricingMethod::Fourier => swaption_fourier(m, s, q),
        PricingMethod::Closed => swaption_cir_closed(m, s),
    }
}

/// Black-76 caplet price `annuity·(F N(d1) - K N(d2))`.
pub fn black76_caplet(forward: f64, strike: f64, vol: f64, expiry: f64, annuity: f64) -> f64 {
    let sd = vol * expiry.sqrt();
    if sd <= 0.0 || strike <= 0.0 || forward <= 0.0 {
        return annuity * (forward - strike).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    annuity * (forward * normal_cdf(d1) - strike * normal_cdf(d2))
}

fn black76_vega(forward: f64, strike: f64, vol: f64, expiry: f64, annuity: f64) -> f64 {
    let sq = expiry.sqrt();
    let sd = vol * sq;
    if sd <= 0.0 {
        return 0.0;
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    annuity * forward * (-0.5 * d1 * d1).exp() / (2.0 * std::f64::consts::PI).sqrt() * sq
}

/// Price tolerance of the implied-volatility inversion.
pub const IMPLIED_VOL_TOL: f64 = 1e-10;

/// Black-76 volatility reproducing a caplet price.
pub fn black76_implied_vol(price: f64, forward: f64, strike: f64, expiry: f64, annuity: f64) -> Result<f64> {
    if !(forward > 0.0 && strike >= 0.0 && expiry > 0.0 && annuity > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Black inputs F = {forward}, K = {strike}, T = {expiry}, annuity = {annuity}"
        )));
    }
    let lower = annuity * (forward - strike).max(0.0);
    let upper = annuity * forward;
    if !(price >= lower && price < upper) {
        if price == lower {
            return Ok(0.0);
        }
        return Err(Error::OutOfBounds { price, lower, upper });
    }
    if price == lower {
        return Ok(0.0);
    }
    let f = |s: f64| black76_caplet(forward, strike, s, expiry, annuity) - price;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::ConvergenceFailure(format!(
                "no volatility reaches price {price}"
            )));
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..300 {
        let fs = f(s);
        if fs == 0.0 {
            return Ok(s);
        }
        if fs < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let vega = black76_vega(forward, strike, s, expiry, annuity);
        let newton = s - fs / vega;
        s = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let resid = f(s).abs();
    if resid > IMPLIED_VOL_TOL {
        return Err(Error::ConvergenceFailure(format!(
            "implied volatility residual {resid:e}"
        )));
    }
    Ok(s)
}

/// Black-76 implied volatility of a model caplet price.
pub fn caplet_implied_vol(m: &CalibratedModel, c: &CapletSpec, price: f64) -> Result<f64> {
    let k = c.period;
    let forward = m.tenor.initial_libor(k);
    let annuity = m.tenor.delta(k) * m.tenor.discount(k + 1);
    black76_implied_vol(price, forward, c.strike, m.tenor.date(k), annuity)
}

/// Relative size, in units of `B(0,T_k)`, below which a caplet's time value
/// is treated as unresolved.
pub const TIME_VALUE_FLOOR: f64 = 1e-12;

/// Implied volatility of a surface cell. Fails when the time value over the
/// Black intrinsic value is not resolved by the price accuracy; the
/// volatility is then undetermined by the computed price.
pub fn surface_vol(m: &CalibratedModel, c: &CapletSpec, p: &PriceResult) -> Result<f64> {
    let k = c.period;
    let annuity = m.tenor.delta(k) * m.tenor.discount(k + 1);
    let intrinsic = annuity * (m.tenor.initial_libor(k) - c.strike).max(0.0);
    let band = 10.0 * p.error_estimate + TIME_VALUE_FLOOR * m.tenor.discount(k);
    let time_value = p.price - intrinsic;
    if intrinsic > 0.0 && time_value.abs() <= band {
        return Err(Error::ConvergenceFailure(format!(
            "time value {time_value:e} within price accuracy {band:e}; volatility unresolved"
        )));
    }
    caplet_implied_vol(m, c, p.price)
}

/// Evenly spaced strikes from `start` to `stop` inclusive.
pub fn strike_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "strike grid {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCell {
    pub period: usize,
    pub expiry: f64,
    pub strike: f64,
    /// `NaN` when pricing failed.
    pub price: f64,
    /// `NaN` when pricing or inversion failed.
    pub implied_vol: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    pub cells: Vec<SurfaceCell>,
}

impl VolSurface {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// `expiry,strike,price,implied_vol`, expiry-major then strike-ascending.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("expiry,strike,price,implied_vol\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                format_sig(c.expiry, 12),
                format_sig(c.strike, 12),
                format_sig(c.price, 12),
                format_sig(c.implied_vol, 12)
            ));
        }
        out
    }
}

/// Caplet prices and implied volatilities for every period `k = 1..N-1` and
/// strike. Failed cells carry `NaN` and the error text.
pub fn vol_surface(
    m: &CalibratedModel,
    strikes: &[f64],
    method: PricingMethod,
    q: &QuadratureSettings,
) -> Result<VolSurface> {
    if method == PricingMethod::Closed && m.process.cir_factors().is_none() {
        return Err(Error::ModelMismatch(
            "closed-form surface needs CIR factors".into(),
        ));
    }
    let mut strikes = strikes.to_vec();
    strikes.sort_by(f64::total_cmp);
    let jobs: Vec<(usize, f64)> = (1..m.n())
        .flat_map(|k| strikes.iter().map(move |&s| (k, s)))
        .collect();
    let cell = |&(k, strike): &(usize, f64)| -> SurfaceCell {
        let expiry = m.tenor.date(k);
        let priced = CapletSpec::new(k, strike).and_then(|c| {
            let p = caplet_price(m, &c, method, q)?;
            Ok((p.price, surface_vol(m, &c, &p)))
        });
        match priced {
            Ok((price, Ok(vol))) => SurfaceCell {
                period: k,
                expiry,
                strike,
                price,
                implied_vol: vol,
                error: None,
            },
            Ok((price, Err(e))) => SurfaceCell {
                period: k,
                expiry,
                strike,
                price,
                implied_vol: f64::NAN,
                error: Some(e.to_string()),
            },
            Err(e) => SurfaceCell {
                period: k,
                expiry,
                strike,
                price: f64::NAN,
                implied_vol: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    };
    #[cfg(feature = "parallel")]
    let cells = jobs.par_iter().map(cell).collect();
    #[cfg(not(feature = "parallel"))]
    let cells = jobs.iter().map(cell).collect();
    Ok(VolSurface { cells })
}

/// Formats with `digits` significant digits, plain decimal for moderate
/// exponents and scientific otherwise.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let e: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if e < -5 || e >= digits as i32 {
        format!("{}e{}", trim(mant), e)
    } else {
        let decimals = (digits as i32 - 1 - e).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}
