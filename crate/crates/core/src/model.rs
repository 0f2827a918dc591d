//! The affine LIBOR model.
//!
//! Bond-price quotients are modelled as `B(t,T_k)/B(t,T_N) = M_t^{u_k}` where
//!
//! ```text
//! M_t^u = exp(φ_{T_N-t}(u) + <ψ_{T_N-t}(u), X_t>)
//! ```
//!
//! is a martingale under the terminal measure. Calibration picks a
//! non-increasing sequence `u_1 ≥ … ≥ u_N = 0` so that `M_0^{u_k}` matches the
//! initial curve; forward prices, LIBOR rates and forward-measure transforms
//! then follow from differences and compositions of `(φ, ψ)`.

use num_complex::Complex64;

use crate::affine::{dot, to_complex, ComplexTransform, TransformPair};
use crate::error::{Error, Result};
use crate::processes::ProcessSpec;

/// Tenor dates `0 = T_0 < T_1 < … < T_N` with initial discount factors.
#[derive(Debug, Clone, PartialEq)]
pub struct TenorStructure {
    /// `T_0, …, T_N` with `T_0 = 0`.
    dates: Vec<f64>,
    /// `δ_k` for the period `[T_k, T_{k+1}]`, `k = 0..N-1`.
    accruals: Vec<f64>,
    /// `B(0, T_k)`, `k = 0..N`, with `B(0, T_0) = 1`.
    discounts: Vec<f64>,
}

impl TenorStructure {
    /// Builds a tenor from maturities `T_1..T_N` and discounts `B(0,T_1)..B(0,T_N)`.
    /// Accruals are the date differences.
    pub fn new(maturities: Vec<f64>, discounts: Vec<f64>) -> Result<Self> {
        let mut prev = 0.0;
        let accruals = maturities
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect();
        Self::with_accruals(maturities, discounts, accruals)
    }

    /// As [`TenorStructure::new`] with explicit accrual fractions; entry `k`
    /// is the accrual of the period ending at the `k`-th maturity.
    pub fn with_accruals(
        maturities: Vec<f64>,
        discounts: Vec<f64>,
        accruals: Vec<f64>,
    ) -> Result<Self> {
        let n = maturities.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty tenor structure".into()));
        }
        if discounts.len() != n || accruals.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{n} maturities but {} discounts and {} accruals",
                discounts.len(),
                accruals.len()
            )));
        }
        let mut prev = 0.0;
        for (k, &t) in maturities.iter().enumerate() {
            if !(t > prev) || !t.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "maturity {} ({t}) does not increase",
                    k + 1
                )));
            }
            prev = t;
        }
        for (k, &d) in accruals.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "accrual {} ({d}) must be positive",
                    k + 1
                )));
            }
        }
        for (k, &b) in discounts.iter().enumerate() {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "discount factor {} ({b}) must lie in (0, 1]",
                    k + 1
                )));
            }
        }
        for k in 1..n {
            if discounts[k] > discounts[k - 1] {
                return Err(Error::NonMonotoneCurve { index: k + 1 });
            }
        }
        let mut dates = Vec::with_capacity(n + 1);
        dates.push(0.0);
        dates.extend(maturities);
        let mut disc = Vec::with_capacity(n + 1);
        disc.push(1.0);
        disc.extend(discounts);
        // Accrual entry k of the input ends at T_{k+1}; the first one covers [T_0, T_1].
        Ok(TenorStructure {
            dates,
            accruals,
            discounts: disc,
        })
    }

    /// Number of periods `N`.
    pub fn n(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn date(&self, k: usize) -> f64 {
        self.dates[k]
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn discount(&self, k: usize) -> f64 {
        self.discounts[k]
    }

    /// Accrual `δ` of the period `[T_k, T_{k+1}]`.
    pub fn delta(&self, k: usize) -> f64 {
        self.accruals[k]
    }

    /// Common accrual when all periods share one.
    pub fn uniform_delta(&self) -> Option<f64> {
        let d0 = self.accruals[0];
        self.accruals
            .iter()
            .all(|d| (d - d0).abs() <= 1e-12 * d0.max(1.0))
            .then_some(d0)
    }

    pub fn horizon(&self) -> f64 {
        self.dates[self.n()]
    }

    /// `B(0,T_k)/B(0,T_N)`.
    pub fn ratio(&self, k: usize) -> f64 {
        self.discounts[k] / self.discounts[self.n()]
    }

    /// Initial LIBOR rate `L(0, T_k)` for the period `[T_k, T_{k+1}]`.
    pub fn initial_libor(&self, k: usize) -> f64 {
        (self.discounts[k] / self.discounts[k + 1] - 1.0) / self.delta(k)
    }
}

/// `A = φ_{T_N-t}(u_k) - φ_{T_N-t}(u_i)`, `B = ψ_{T_N-t}(u_k) - ψ_{T_N-t}(u_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardExponents {
    pub a: f64,
    pub b: Vec<f64>,
}

impl ForwardExponents {
    /// `exp(A + <B, x>)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.a + dot(&self.b, x)).exp()
    }
}

/// Options for [`fit_term_structure_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    /// Direction `u_+` is searched along; defaults to the diagonal.
    pub direction: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-12,
            direction: None,
        }
    }
}

/// A process fitted to an initial discount curve.
#[derive(Debug, Clone)]
pub struct CalibratedModel {
    pub process: ProcessSpec,
    pub x0: Vec<f64>,
    pub tenor: TenorStructure,
    /// `u_1, …, u_N`, stored at index `k - 1`.
    pub us: Vec<Vec<f64>>,
}

const BISECTION_TOL: f64 = 1e-13;
const BISECTION_MAX_ITER: usize = 200;

fn m0(process: &ProcessSpec, horizon: f64, x0: &[f64], u: &[f64]) -> Result<f64> {
    Ok(process.transform(horizon, u)?.mgf(x0))
}

/// `sup_u E_1[e^{<u, X_T>}]` over the positive domain, approached along the
/// diagonal. Returns `+∞` when the moment generating function diverges at
/// the domain boundary.
pub fn estimate_gamma_x(process: &ProcessSpec, horizon: f64) -> f64 {
    let d = process.dim();
    let ones = vec![1.0; d];
    let bound = process
        .domain_bound(horizon)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let log_m = |xi: f64| -> Option<f64> {
        let u = vec![xi; d];
        process
            .transform(horizon, &u)
            .ok()
            .map(|tp| tp.phi + dot(&tp.psi, &ones))
            .filter(|v| v.is_finite())
    };
    let points: Vec<f64> = if bound.is_finite() {
        (1..=50).map(|i| bound * (1.0 - 0.5f64.powi(i))).collect()
    } else {
        (0..=60).map(|i| 2f64.powi(i)).collect()
    };
    let mut logs = Vec::with_capacity(points.len());
    for xi in points {
        match log_m(xi) {
            Some(l) if l < 700.0 => logs.push(l),
            _ => return f64::INFINITY,
        }
    }
    let n = logs.len();
    let last = logs[n - 1];
    let d1 = logs[n - 1] - logs[n - 2];
    let d0 = logs[n - 2] - logs[n - 3];
    if d1.abs() <= 1e-14 * last.abs().max(1.0) {
        return last.exp();
    }
    let r = d1 / d0;
    if !(r < 0.95) || r <= 0.0 {
        return f64::INFINITY;
    }
    (last + d1 * r / (1.0 - r)).exp()
}

/// Fits the `u`-sequence with default options.
pub fn fit_term_structure(
    tenor: &TenorStructure,
    process: &ProcessSpec,
    x0: &[f64],
    tol: f64,
) -> Result<CalibratedModel> {
    fit_term_structure_with(
        tenor,
        process,
        x0,
        &FitOptions {
            tol,
            direction: None,
        },
    )
}

/// Finds `u_+` along the search direction with `M_0^{u_+} > B(0,T_1)/B(0,T_N)`,
/// then solves `M_0^{ξ_k u_+} = B(0,T_k)/B(0,T_N)` for `ξ_k ∈ [0, 1]` by
/// bisection on the increasing map `ξ ↦ M_0^{ξ u_+}`.
pub fn fit_term_structure_with(
    tenor: &TenorStructure,
    process: &ProcessSpec,
    x0: &[f64],
    opts: &FitOptions,
) -> Result<CalibratedModel> {
    let d = process.dim();
    if x0.len() != d {
        return Err(Error::InvalidParameter(format!(
            "initial state has dimension {}, process has {d}",
            x0.len()
        )));
    }
    if x0.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("initial state must be non-negative".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {}", opts.tol)));
    }
    let direction = opts.direction.clone().unwrap_or_else(|| vec![1.0; d]);
    if direction.len() != d
        || direction.iter().any(|w| !(*w >= 0.0))
        || direction.iter().all(|w| *w == 0.0)
    {
        return Err(Error::InvalidParameter(
            "direction must be non-negative and nonzero".into(),
        ));
    }

    let n = tenor.n();
    let horizon = tenor.horizon();
    let process = process.with_initial_state(x0)?;
    for k in 1..n {
        if tenor.ratio(k + 1) > tenor.ratio(k) {
            return Err(Error::NonMonotoneCurve { index: k + 1 });
        }
    }
    let target_max = tenor.ratio(1);
    let zero = vec![0.0; d];
    let scaled = |xi: f64| -> Vec<f64> { direction.iter().map(|w| w * xi).collect() };

    if target_max <= 1.0 {
        return Ok(CalibratedModel {
            process,
            x0: x0.to_vec(),
            tenor: tenor.clone(),
            us: vec![zero; n],
        });
    }

    let boundary = process
        .domain_bound(horizon)
        .iter()
        .zip(&direction)
        .filter(|(_, w)| **w > 0.0)
        .map(|(b, w)| b / w)
        .fold(f64::INFINITY, f64::min);
    let candidates: Vec<f64> = if boundary.is_finite() {
        (1..=50).map(|i| boundary * (1.0 - 0.5f64.powi(i))).collect()
    } else {
        (0..=200).map(|i| 2f64.powi(i)).collect()
    };
    let mut xi_plus = None;
    for xi in candidates {
        match m0(&process, horizon, x0, &scaled(xi)) {
            Ok(v) if v > target_max => {
                xi_plus = Some(xi);
                break;
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
    let xi_plus = xi_plus.ok_or_else(|| {
        Error::InfeasibleCurve(format!(
            "no admissible u reaches the ratio B(0,T_1)/B(0,T_N) = {target_max}"
        ))
    })?;
    let u_plus = scaled(xi_plus);

    let mut us = Vec::with_capacity(n);
    for k in 1..=n {
        let target = tenor.ratio(k);
        if target <= 1.0 {
            us.push(zero.clone());
            continue;
        }
        let f = |s: f64| -> Result<f64> {
            let u: Vec<f64> = u_plus.iter().map(|x| x * s).collect();
            Ok(m0(&process, horizon, x0, &u)? - target)
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let (mut f_lo, mut f_hi) = (f(lo)?, f(hi)?);
        let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
        for _ in 0..BISECTION_MAX_ITER {
            if best.1.abs() <= BISECTION_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = f(mid)?;
            if f_mid.abs() < best.1.abs() {
                best = (mid, f_mid);
            }
            if f_mid < 0.0 {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
        let _ = (f_lo, f_hi);
        if best.1.abs() > opts.tol {
            return Err(Error::ConvergenceFailure(format!(
                "calibration residual {} at k = {k} exceeds {}",
                best.1.abs(),
                opts.tol
            )));
        }
        us.push(u_plus.iter().map(|x| x * best.0).collect());
    }
    Ok(CalibratedModel {
        process,
        x0: x0.to_vec(),
        tenor: tenor.clone(),
        us,
    })
}

impl CalibratedModel {
    pub fn dim(&self) -> usize {
        self.process.dim()
    }

    pub fn n(&self) -> usize {
        self.tenor.n()
    }

    pub fn horizon(&self) -> f64 {
        self.tenor.horizon()
    }

    /// `u_k` for `k = 1..=N`.
    pub fn u(&self, k: usize) -> &[f64] {
        &self.us[k - 1]
    }

    fn check_index(&self, k: usize, what: &str) -> Result<()> {
        if k == 0 || k > self.n() {
            return Err(Error::IndexError(format!(
                "{what} index {k} outside 1..={}",
                self.n()
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: f64, limit: f64) -> Result<()> {
        if !(0.0..=limit).contains(&t) {
            return Err(Error::HorizonViolation { t, horizon: limit });
        }
        Ok(())
    }

    /// `(φ_{T_N-t}(u), ψ_{T_N-t}(u))`.
    pub fn remaining_transform(&self, t: f64, u: &[f64]) -> Result<TransformPair> {
        self.check_time(t, self.horizon())?;
        self.process.transform((self.horizon() - t).max(0.0), u)
    }

    /// `M_t^u` evaluated at state `x`.
    pub fn martingale_value(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
        Ok(self.remaining_transform(t, u)?.mgf(x))
    }

    /// `M_0^{u_k}` at the calibration state.
    pub fn initial_martingale(&self, k: usize) -> Result<f64> {
        self.check_index(k, "tenor")?;
        self.martingale_value(0.0, &self.x0, self.u(k))
    }

    /// `(A, B)` with `M_t^{u_k}/M_t^{u_i} = exp(A + <B, X_t>)`.
    pub fn forward_exponents(&self, k: usize, i: usize, t: f64) -> Result<ForwardExponents> {
        self.check_index(k, "tenor")?;
        self.check_index(i, "tenor")?;
        self.check_time(t, self.tenor.date(k.min(i)))?;
        if k == i {
            return Ok(ForwardExponents {
                a: 0.0,
                b: vec![0.0; self.dim()],
            });
        }
        let tk = self.remaining_transform(t, self.u(k))?;
        let ti = self.remaining_transform(t, self.u(i))?;
        Ok(ForwardExponents {
            a: tk.phi - ti.phi,
            b: tk.psi.iter().zip(&ti.psi).map(|(a, b)| a - b).collect(),
        })
    }

    fn check_period(&self, k: usize) -> Result<()> {
        if k == 0 || k >= self.n() {
            return Err(Error::IndexError(format!(
                "period index {k} outside 1..{}",
                self.n()
            )));
        }
        Ok(())
    }

    /// `(A_k, B_k)` of the forward price `B(t,T_k)/B(t,T_{k+1})`.
    pub fn forward_price_exponents(&self, k: usize, t: f64) -> Result<ForwardExponents> {
        self.check_period(k)?;
        self.forward_exponents(k, k + 1, t)
    }

    /// `L(t, T_k) = (exp(A_k + <B_k, x>) - 1)/δ_k`.
    pub fn libor_rate(&self, k: usize, t: f64, x: &[f64]) -> Result<f64> {
        let fe = self.forward_price_exponents(k, t)?;
        Ok((fe.a + dot(&fe.b, x)).exp_m1() / self.tenor.delta(k))
    }

    /// `(exp A_k - 1)/δ_k`, the lower bound of `L(t, T_k)` for a
    /// one-dimensional driver.
    pub fn libor_lower_bound(&self, k: usize, t: f64) -> Result<f64> {
        let fe = self.forward_price_exponents(k, t)?;
        Ok(fe.a.exp_m1() / self.tenor.delta(k))
    }

    /// Transform of `X_t` under the forward measure `P_{T_k}`:
    /// `φ^k_t(v) = φ_t(ψ_{T_N-t}(u_k) + v) - φ_t(ψ_{T_N-t}(u_k))` and likewise for `ψ^k`.
    pub fn forward_measure_exponents(&self, k: usize, t: f64, v: &[f64]) -> Result<TransformPair> {
        let out = self.forward_measure_transform(k, t, &to_complex(v))?;
        Ok(TransformPair {
            phi: out.phi.re,
            psi: out.psi.iter().map(|z| z.re).collect(),
        })
    }

    /// Complex-argument version of [`CalibratedModel::forward_measure_exponents`].
    pub fn forward_measure_transform(
        &self,
        k: usize,
        t: f64,
        v: &[Complex64],
    ) -> Result<ComplexTransform> {
        ForwardMeasure::new(self, k, t)?.transform(v)
    }

    /// `E_{P_{T_{k+1}}}[exp(v (A_k + <B_k, X_t>))]`.
    pub fn forward_price_mgf(&self, k: usize, t: f64, v: f64) -> Result<f64> {
        Ok(self
            .forward_price_log_mgf(k, t, Complex64::new(v, 0.0))?
            .re
            .exp())
    }

    /// Logarithm of [`CalibratedModel::forward_price_mgf`] at a complex argument.
    pub fn forward_price_log_mgf(&self, k: usize, t: f64, v: Complex64) -> Result<Complex64> {
        let fe = self.forward_price_exponents(k, t)?;
        let fm = ForwardMeasure::new(self, k + 1, t)?;
        let arg: Vec<Complex64> = fe.b.iter().map(|b| v * b).collect();
        let tr = fm.transform(&arg)?;
        Ok(v * fe.a + tr.exponent(&self.x0))
    }
}

/// Precomputed base point for repeated forward-measure transforms at a fixed
/// `(k, t)`: `base = ψ_{T_N-t}(u_k)`.
#[derive(Debug, Clone)]
pub struct ForwardMeasure<'a> {
    model: &'a CalibratedModel,
    t: f64,
    base: Vec<f64>,
    base_transform: TransformPair,
}

impl<'a> ForwardMeasure<'a> {
    pub fn new(model: &'a CalibratedModel, k: usize, t: f64) -> Result<Self> {
        model.check_index(k, "measure")?;
        model.check_time(t, model.tenor.date(k))?;
        let base = model.remaining_transform(t, model.u(k))?.psi;
        let base_transform = model.process.transform(t, &base)?;
        Ok(ForwardMeasure {
            model,
            t,
            base,
            base_transform,
        })
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn transform(&self, v: &[Complex64]) -> Result<ComplexTransform> {
        if v.len() != self.base.len() {
            return Err(Error::InvalidParameter(format!(
                "argument has dimension {}, process has {}",
                v.len(),
                self.base.len()
            )));
        }
        let w: Vec<Complex64> = self.base.iter().zip(v).map(|(b, vi)| vi + b).collect();
        let tr = self.model.process.transform_complex(self.t, &w)?;
        Ok(ComplexTransform {
            phi: tr.phi - self.base_transform.phi,
            psi: tr
                .psi
                .iter()
                .zip(&self.base_transform.psi)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `log E_{P_{T_k}}[e^{<v, X_t>}]` at the model's initial state.
    pub fn log_mgf(&self, v: &[Complex64]) -> Result<Complex64> {
        Ok(self.transform(v)?.exponent(&self.model.x0))
    }
}
