//! Browser bindings: term-structure fit, single caplet quotes and a caplet
//! volatility surface on the built-in Euro curve.

use affine_libor::model::{fit_term_structure, CalibratedModel, TenorStructure};
use affine_libor::pricing::{
    caplet_cir_closed, caplet_fourier, caplet_implied_vol, strike_grid, vol_surface, CapletSpec,
    PricingMethod, QuadratureSettings,
};
use affine_libor::processes::{CirParams, GammaOuParams, ProcessSpec};
use wasm_bindgen::prelude::*;

const MATURITIES: [f64; 10] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];
const DISCOUNTS: [f64; 10] = [
    0.9833630, 0.9647388, 0.9435826, 0.9228903, 0.9006922, 0.8790279, 0.8568412, 0.8352144,
    0.8133497, 0.7920573,
];

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `family` is `"cir"` with `(λ, θ, η)` or `"gamma_ou"` with `(λ, α, β)`.
fn model(family: &str, p1: f64, p2: f64, p3: f64, x0: f64) -> Result<CalibratedModel, JsError> {
    let process = match family {
        "cir" => ProcessSpec::Cir(CirParams::new(p1, p2, p3, x0).map_err(js)?),
        "gamma_ou" => ProcessSpec::GammaOu(GammaOuParams::new(p1, p2, p3, x0).map_err(js)?),
        f => return Err(JsError::new(&format!("unknown family {f}"))),
    };
    let tenor = TenorStructure::new(MATURITIES.to_vec(), DISCOUNTS.to_vec()).map_err(js)?;
    fit_term_structure(&tenor, &process, &[x0], 1e-12).map_err(js)
}

/// Fitted `u_1, …, u_N`.
#[wasm_bindgen]
pub fn fit_sequence(family: &str, p1: f64, p2: f64, p3: f64, x0: f64) -> Result<Vec<f64>, JsError> {
    Ok(model(family, p1, p2, p3, x0)?.us.iter().map(|u| u[0]).collect())
}

/// `[fourier price, closed-form price (NaN unless CIR), implied vol, forward LIBOR]`.
#[wasm_bindgen]
pub fn caplet_quote(
    family: &str,
    p1: f64,
    p2: f64,
    p3: f64,
    x0: f64,
    period: usize,
    strike: f64,
) -> Result<Vec<f64>, JsError> {
    let m = model(family, p1, p2, p3, x0)?;
    if period == 0 || period >= m.n() {
        return Err(JsError::new(&format!("period must lie in 1..{}", m.n() - 1)));
    }
    let c = CapletSpec::new(period, strike).map_err(js)?;
    let f = caplet_fourier(&m, &c, &QuadratureSettings::default()).map_err(js)?.price;
    let closed = caplet_cir_closed(&m, &c).map(|p| p.price).unwrap_or(f64::NAN);
    let vol = caplet_implied_vol(&m, &c, f).unwrap_or(f64::NAN);
    Ok(vec![f, closed, vol, m.tenor.initial_libor(period)])
}

/// Surface CSV `expiry,strike,price,implied_vol`.
#[wasm_bindgen]
pub fn caplet_surface(
    family: &str,
    p1: f64,
    p2: f64,
    p3: f64,
    x0: f64,
    k_start: f64,
    k_stop: f64,
    k_step: f64,
) -> Result<String, JsError> {
    let m = model(family, p1, p2, p3, x0)?;
    let strikes = strike_grid(k_start, k_stop, k_step).map_err(js)?;
    let method = if family == "cir" {
        PricingMethod::Closed
    } else {
        PricingMethod::Fourier
    };
    Ok(vol_surface(&m, &strikes, method, &QuadratureSettings::default())
        .map_err(js)?
        .to_csv())
}
