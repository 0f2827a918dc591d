//! Adaptive Gauss–Kronrod quadrature on finite intervals and on `[0, ∞)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and limits shared by the integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on integrand evaluations.
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_evals: 2_000_000,
        }
    }
}

/// Integral value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

/// One 21-point Kronrod rule with the embedded 10-point Gauss error estimate.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * h;
    let error = ((kronrod - gauss) * h).abs();
    (value, error)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Globally adaptive integration of `f` over `[a, b]`, bisecting the piece with
/// the largest error until the total error meets the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure(format!("bounds [{a}, {b}] not finite")));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evals: 0 });
    }
    let (v, e) = gk21(f, a, b);
    let mut pieces = vec![Piece { a, b, value: v, error: e }];
    let mut evals = 21;
    loop {
        let value: f64 = pieces.iter().map(|p| p.value).sum();
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureFailure(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(QuadResult { value, error, evals });
        }
        if evals + 42 > opts.max_evals {
            return Err(Error::QuadratureFailure(format!(
                "error {error:e} above {target:e} after {evals} evaluations on [{a}, {b}]"
            )));
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let p = pieces.swap_remove(idx);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // Interval cannot be split further; accept what we have.
            let value: f64 = pieces.iter().map(|p| p.value).sum::<f64>() + p.value;
            let error: f64 = pieces.iter().map(|p| p.error).sum::<f64>() + p.error;
            return Ok(QuadResult { value, error, evals });
        }
        let (v1, e1) = gk21(f, p.a, m);
        let (v2, e2) = gk21(f, m, p.b);
        evals += 42;
        pieces.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        pieces.push(Piece { a: m, b: p.b, value: v2, error: e2 });
    }
}

/// Integrates `f` over `[0, ∞)` on consecutive panels `[0, w]`, `[w, 3w]`,
/// `[3w, 7w]`, … until two successive panels contribute less than a tenth of
/// the tolerance. Fails once the panel edge passes `max_edge`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(
    f: &F,
    first_width: f64,
    max_edge: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(first_width > 0.0) || !first_width.is_finite() {
        return Err(Error::QuadratureFailure(format!("panel width {first_width}")));
    }
    let mut lo = 0.0;
    let mut width = first_width;
    let mut total = 0.0f64;
    let mut error = 0.0;
    let mut evals = 0;
    let mut quiet = 0;
    loop {
        let hi = lo + width;
        let budget = QuadOptions {
            max_evals: opts.max_evals.saturating_sub(evals).max(21),
            ..*opts
        };
        // Panels inherit an absolute target tied to the running total.
        let panel_opts = QuadOptions {
            abs_tol: opts.abs_tol.max(opts.rel_tol * total.abs()) * 0.25,
            rel_tol: opts.rel_tol,
            ..budget
        };
        let r = integrate(f, lo, hi, &panel_opts)?;
        total += r.value;
        error += r.error;
        evals += r.evals;
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if r.value.abs() + r.error < 0.1 * target {
            quiet += 1;
            if quiet >= 2 {
                return Ok(QuadResult {
                    value: total,
                    error: error + r.value.abs(),
                    evals,
                });
            }
        } else {
            quiet = 0;
        }
        if hi >= max_edge {
            return Err(Error::QuadratureFailure(format!(
                "tail not converged at v = {hi:e} (last panel {:e})",
                r.value
            )));
        }
        lo = hi;
        width *= 2.0;
    }
}

/// `E_2(z) = ∫_1^∞ e^{-zt}/t² dt` for `Re z ≥ 0`.
pub fn expint_e2(z: Complex64) -> Complex64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if z.norm() == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    if z.norm() <= 1.0 {
        // E_1(z) = -γ - ln z - Σ (-z)^k/(k k!).
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 1..200 {
            term *= -z / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.norm() < 1e-17 * sum.norm().max(1e-300) {
                break;
            }
        }
        let e1 = -EULER - z.ln() - sum;
        return (-z).exp() - z * e1;
    }
    // Modified Lentz on the continued fraction for E_n with n = 2.
    let tiny = 1e-300;
    let mut b = z + 2.0;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (1.0 + i as f64);
        b += 2.0;
        d = an * d + b;
        if d.norm() < tiny {
            d = Complex64::new(tiny, 0.0);
        }
        d = d.inv();
        c = b + an / c;
        if c.norm() < tiny {
            c = Complex64::new(tiny, 0.0);
        }
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// `Re ∫_V^∞ h` under the model `h(v) = c e^{-iωv} v^{-2}` fitted at `V`.
fn fitted_tail<H: Fn(f64) -> Complex64>(h: &H, v: f64) -> Complex64 {
    let step = 1e-2;
    let h0 = h(v);
    let h1 = h(v + step);
    if h0.norm() == 0.0 || h1.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let scale = ((v + step) / v).powi(2);
    let omega = -(h1 / h0 * scale).arg() / step;
    let z = Complex64::new(0.0, omega * v);
    h0 * v * z.exp() * expint_e2(z)
}

/// Integrates `Re h` over `[0, ∞)` for Fourier-type integrands whose tail
/// behaves like `c e^{-iωv}/v²`.
///
/// Panels double in width. After each panel the remaining tail is replaced by
/// its fitted asymptotic value; the integral is accepted once two successive
/// extrapolated totals agree to the tolerance.
pub fn integrate_fourier<H: Fn(f64) -> Complex64>(
    h: &H,
    first_width: f64,
    max_edge: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(first_width > 0.0) || !first_width.is_finite() {
        return Err(Error::QuadratureFailure(format!("panel width {first_width}")));
    }
    let re = |v: f64| h(v).re;
    let mut lo = 0.0;
    let mut width = first_width;
    let mut partial = 0.0f64;
    let mut error = 0.0;
    let mut evals = 0;
    let mut prev: Option<f64> = None;
    let mut agreed = 0;
    loop {
        let hi = lo + width;
        let scale = prev.unwrap_or(partial).abs();
        let panel_opts = QuadOptions {
            abs_tol: opts.abs_tol.max(opts.rel_tol * scale) * 0.1,
            rel_tol: opts.rel_tol * 0.1,
            max_evals: opts.max_evals.saturating_sub(evals).max(21),
        };
        let r = integrate(&re, lo, hi, &panel_opts)?;
        partial += r.value;
        error += r.error;
        evals += r.evals + 2;
        let tail = fitted_tail(h, hi).re;
        if !tail.is_finite() {
            return Err(Error::QuadratureFailure(format!("non-finite tail at v = {hi:e}")));
        }
        let total = partial + tail;
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if let Some(p) = prev {
            let change = (total - p).abs();
            if change <= target {
                agreed += 1;
                if agreed >= 2 {
                    return Ok(QuadResult {
                        value: total,
                        error: error + change,
                        evals,
                    });
                }
            } else {
                agreed = 0;
            }
        }
        prev = Some(total);
        if hi >= max_edge {
            return Err(Error::QuadratureFailure(format!(
                "extrapolated tail not stable at v = {hi:e}"
            )));
        }
        lo = hi;
        width *= 2.0;
    }
}
