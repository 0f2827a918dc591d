//! Affine transform machinery.
//!
//! An affine process `X` on `ℝ^d_{≥0}` has conditional moment generating
//! function
//!
//! ```text
//! E_x[exp<u, X_t>] = exp(φ_t(u) + <ψ_t(u), x>)
//! ```
//!
//! where `(φ, ψ)` solve the generalized Riccati equations
//! `∂φ/∂t = F(ψ)`, `∂ψ/∂t = R(ψ)` with `φ_0 = 0`, `ψ_0 = u`. This module
//! holds the transform pair, the Riccati right-hand side, the domain
//! description, an adaptive Dormand–Prince integrator for the Riccati system,
//! and the dispatching [`transform`] entry point.
//!
//! All evaluation is carried out over complex arguments so the same code path
//! serves moment generating functions (real `u`) and characteristic functions
//! (complex `u` in a strip) used by the Fourier pricers.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::processes::ProcessSpec;

/// Default local error tolerance of the Riccati integrator.
pub const DEFAULT_ODE_TOL: f64 = 1e-12;

/// `(φ_t(u), ψ_t(u))` for real arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    pub phi: f64,
    pub psi: Vec<f64>,
}

impl TransformPair {
    pub fn identity(u: &[f64]) -> Self {
        TransformPair {
            phi: 0.0,
            psi: u.to_vec(),
        }
    }

    /// `exp(φ + <ψ, x>)`.
    pub fn mgf(&self, x: &[f64]) -> f64 {
        (self.phi + dot(&self.psi, x)).exp()
    }
}

/// `(φ_t(u), ψ_t(u))` for complex arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTransform {
    pub phi: Complex64,
    pub psi: Vec<Complex64>,
}

impl ComplexTransform {
    pub fn identity(u: &[Complex64]) -> Self {
        ComplexTransform {
            phi: Complex64::new(0.0, 0.0),
            psi: u.to_vec(),
        }
    }

    /// `φ + <ψ, x>` for a real state.
    pub fn exponent(&self, x: &[f64]) -> Complex64 {
        self.psi
            .iter()
            .zip(x)
            .fold(self.phi, |acc, (p, xi)| acc + p * xi)
    }

    pub(crate) fn into_real(self) -> TransformPair {
        TransformPair {
            phi: self.phi.re,
            psi: self.psi.iter().map(|z| z.re).collect(),
        }
    }
}

type ScalarFn = dyn Fn(&[Complex64]) -> Complex64 + Send + Sync;
type VectorFn = dyn Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync;

/// The functions `F` and `R` of the generalized Riccati equations.
///
/// `state_bound` is the componentwise supremum of the real parts for which
/// `F` and `R` are defined (for example `α` for the Γ-OU drift `F`). The
/// integrator reports [`Error::BlowUp`] once a component crosses it.
#[derive(Clone)]
pub struct RiccatiRhs {
    dim: usize,
    f: Arc<ScalarFn>,
    r: Arc<VectorFn>,
    state_bound: Vec<f64>,
}

impl RiccatiRhs {
    pub fn new<F, R>(dim: usize, f: F, r: R) -> Self
    where
        F: Fn(&[Complex64]) -> Complex64 + Send + Sync + 'static,
        R: Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync + 'static,
    {
        RiccatiRhs {
            dim,
            f: Arc::new(f),
            r: Arc::new(r),
            state_bound: vec![f64::INFINITY; dim],
        }
    }

    pub fn with_state_bound(mut self, bound: Vec<f64>) -> Self {
        assert_eq!(bound.len(), self.dim, "state bound dimension");
        self.state_bound = bound;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state_bound(&self) -> &[f64] {
        &self.state_bound
    }

    pub fn f(&self, u: &[Complex64]) -> Complex64 {
        (self.f)(u)
    }

    pub fn r(&self, u: &[Complex64]) -> Vec<Complex64> {
        (self.r)(u)
    }

    /// `F` at a real argument.
    pub fn f_real(&self, u: &[f64]) -> f64 {
        self.f(&to_complex(u)).re
    }

    /// `R` at a real argument.
    pub fn r_real(&self, u: &[f64]) -> Vec<f64> {
        self.r(&to_complex(u)).iter().map(|z| z.re).collect()
    }

    /// Stacks independent right-hand sides into one block-diagonal system.
    pub fn stack(parts: &[RiccatiRhs]) -> RiccatiRhs {
        let dims: Vec<usize> = parts.iter().map(|p| p.dim).collect();
        let dim = dims.iter().sum();
        let fs: Vec<Arc<ScalarFn>> = parts.iter().map(|p| p.f.clone()).collect();
        let rs: Vec<Arc<VectorFn>> = parts.iter().map(|p| p.r.clone()).collect();
        let state_bound = parts
            .iter()
            .flat_map(|p| p.state_bound.iter().copied())
            .collect();
        let dims_f = dims.clone();
        let f = move |u: &[Complex64]| {
            let mut off = 0;
            let mut acc = Complex64::new(0.0, 0.0);
            for (fj, d) in fs.iter().zip(&dims_f) {
                acc += fj(&u[off..off + d]);
                off += d;
            }
            acc
        };
        let r = move |u: &[Complex64]| {
            let mut off = 0;
            let mut out = Vec::with_capacity(u.len());
            for (rj, d) in rs.iter().zip(&dims) {
                out.extend(rj(&u[off..off + d]));
                off += d;
            }
            out
        };
        RiccatiRhs {
            dim,
            f: Arc::new(f),
            r: Arc::new(r),
            state_bound,
        }
    }
}

impl fmt::Debug for RiccatiRhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RiccatiRhs")
            .field("dim", &self.dim)
            .field("state_bound", &self.state_bound)
            .finish_non_exhaustive()
    }
}

/// Componentwise supremum of the exponential-moment domain `𝓘_T ∩ ℝ^d_{≥0}`
/// for a given horizon. Boundary points are excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub upper_bound: Vec<f64>,
    pub horizon: f64,
}

impl DomainSpec {
    pub fn of(process: &ProcessSpec, horizon: f64) -> Self {
        DomainSpec {
            upper_bound: process.domain_bound(horizon),
            horizon,
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.upper_bound.len()
            && u.iter().zip(&self.upper_bound).all(|(x, b)| x < b)
    }

    pub fn contains_complex(&self, u: &[Complex64]) -> bool {
        u.len() == self.upper_bound.len()
            && u.iter().zip(&self.upper_bound).all(|(x, b)| x.re < *b)
    }
}

/// Evaluates `(φ_t(u), ψ_t(u))`, by closed form where the family has one and
/// by integrating the Riccati equations otherwise.
pub fn transform(process: &ProcessSpec, t: f64, u: &[f64]) -> Result<TransformPair> {
    process.transform(t, u)
}

/// [`transform`] restricted to `t ∈ [0, horizon]`.
pub fn transform_within(
    process: &ProcessSpec,
    horizon: f64,
    t: f64,
    u: &[f64],
) -> Result<TransformPair> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::HorizonViolation { t, horizon });
    }
    process.transform(t, u)
}

/// Integrates the Riccati system for real initial data.
pub fn riccati_solve(rhs: &RiccatiRhs, t: f64, u: &[f64], tol: f64) -> Result<TransformPair> {
    riccati_solve_complex(rhs, t, &to_complex(u), tol).map(ComplexTransform::into_real)
}

/// Integrates `∂ψ/∂t = R(ψ)`, `∂φ/∂t = F(ψ)` from `(0, u)` to time `t` with an
/// embedded Dormand–Prince 5(4) pair.
pub fn riccati_solve_complex(
    rhs: &RiccatiRhs,
    t: f64,
    u: &[Complex64],
    tol: f64,
) -> Result<ComplexTransform> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::HorizonViolation { t, horizon: f64::INFINITY });
    }
    if u.len() != rhs.dim {
        return Err(Error::InvalidParameter(format!(
            "argument has dimension {}, process has {}",
            u.len(),
            rhs.dim
        )));
    }
    for (ui, b) in u.iter().zip(&rhs.state_bound) {
        if ui.re >= *b {
            return Err(Error::DomainViolation {
                what: format!("{ui}"),
                bound: *b,
            });
        }
    }
    if t == 0.0 {
        return Ok(ComplexTransform::identity(u));
    }
    DormandPrince::new(rhs, tol).integrate(t, u)
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 1_000_000;
const BLOWUP_MAGNITUDE: f64 = 1e12;

struct DormandPrince<'a> {
    rhs: &'a RiccatiRhs,
    tol: f64,
}

impl<'a> DormandPrince<'a> {
    fn new(rhs: &'a RiccatiRhs, tol: f64) -> Self {
        DormandPrince { rhs, tol }
    }

    // State layout: [φ, ψ_1, ..., ψ_d]. The right-hand side does not depend on φ.
    fn deriv(&self, y: &[Complex64]) -> Vec<Complex64> {
        let psi = &y[1..];
        let mut out = Vec::with_capacity(y.len());
        out.push(self.rhs.f(psi));
        out.extend(self.rhs.r(psi));
        out
    }

    fn escaped(&self, y: &[Complex64]) -> bool {
        y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
            || y[1..]
                .iter()
                .zip(&self.rhs.state_bound)
                .any(|(z, b)| z.re >= *b || z.norm() > BLOWUP_MAGNITUDE)
    }

    fn integrate(&self, t_end: f64, u: &[Complex64]) -> Result<ComplexTransform> {
        let n = u.len() + 1;
        let mut y = Vec::with_capacity(n);
        y.push(Complex64::new(0.0, 0.0));
        y.extend_from_slice(u);

        let mut t = 0.0;
        let mut k1 = self.deriv(&y);
        let scale0 = y.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let slope0 = k1.iter().map(|z| z.norm()).fold(1e-300, f64::max);
        let mut h = (0.01 * scale0 / slope0).min(t_end).min(0.1 * t_end.max(1e-3));
        let h_floor = 1e-14 * t_end.max(1.0);
        let mut tmp = vec![Complex64::new(0.0, 0.0); n];

        for _ in 0..MAX_STEPS {
            if t >= t_end {
                break;
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }

            let stage = |tmp: &mut Vec<Complex64>, coeffs: &[(f64, &Vec<Complex64>)]| {
                for i in 0..n {
                    let mut acc = y[i];
                    for (c, k) in coeffs {
                        acc += k[i] * (h * c);
                    }
                    tmp[i] = acc;
                }
            };

            stage(&mut tmp, &[(A21, &k1)]);
            let k2 = self.deriv(&tmp);
            stage(&mut tmp, &[(A31, &k1), (A32, &k2)]);
            let k3 = self.deriv(&tmp);
            stage(&mut tmp, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            let k4 = self.deriv(&tmp);
            stage(&mut tmp, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            let k5 = self.deriv(&tmp);
            stage(
                &mut tmp,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            let k6 = self.deriv(&tmp);
            let mut y_new = vec![Complex64::new(0.0, 0.0); n];
            for i in 0..n {
                y_new[i] = y[i]
                    + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * h;
            }
            let escaped = self.escaped(&y_new);
            let k7 = if escaped { k6.clone() } else { self.deriv(&y_new) };

            let mut err: f64 = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1
                    + k3[i] * E3
                    + k4[i] * E4
                    + k5[i] * E5
                    + k6[i] * E6
                    + k7[i] * E7)
                    * h;
                let sc = self.tol + self.tol * y[i].norm().max(y_new[i].norm());
                err = err.max(e.norm() / sc);
            }
            if !err.is_finite() {
                err = f64::INFINITY;
            }

            if err <= 1.0 && !escaped {
                t = if last { t_end } else { t + h };
                y = y_new;
                k1 = k7;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h *= factor;
            } else {
                if escaped && err <= 1.0 {
                    return Err(Error::BlowUp { t: t + h });
                }
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-0.25)).clamp(0.1, 0.5)
                } else {
                    0.1
                };
                h *= factor;
                if h < h_floor {
                    let big = y[1..].iter().any(|z| z.norm() > 1e6);
                    return Err(if big || escaped {
                        Error::BlowUp { t }
                    } else {
                        Error::StepUnderflow { t, step: h }
                    });
                }
            }
        }
        if t < t_end {
            return Err(Error::ConvergenceFailure(format!(
                "Riccati integration exceeded {MAX_STEPS} steps"
            )));
        }
        Ok(ComplexTransform {
            phi: y[0],
            psi: y[1..].to_vec(),
        })
    }
}

/// Maximum deviation from the semi-flow identity
/// `φ_{t+s}(u) = φ_t(u) + φ_s(ψ_t(u))`, `ψ_{t+s}(u) = ψ_s(ψ_t(u))`.
pub fn check_semiflow(process: &ProcessSpec, t: f64, s: f64, u: &[f64]) -> Result<f64> {
    let whole = process.transform(t + s, u)?;
    let first = process.transform(t, u)?;
    let second = process.transform(s, &first.psi)?;
    let phi_dev = (whole.phi - first.phi - second.phi).abs();
    let psi_dev = whole
        .psi
        .iter()
        .zip(&second.psi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(phi_dev.max(psi_dev))
}

pub(crate) fn to_complex(u: &[f64]) -> Vec<Complex64> {
    u.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_rhs(rate: f64) -> RiccatiRhs {
        // ψ' = -rate ψ, φ' = ψ  =>  ψ_t = u e^{-rate t}, φ_t = u (1 - e^{-rate t}) / rate
        RiccatiRhs::new(1, |u| u[0], move |u| vec![-u[0] * rate])
    }

    #[test]
    fn zero_horizon_is_identity() {
        let rhs = linear_rhs(0.3);
        let out = riccati_solve(&rhs, 0.0, &[0.7], 1e-10).unwrap();
        assert_eq!(out, TransformPair::identity(&[0.7]));
    }

    #[test]
    fn linear_system_matches_exponential() {
        let rhs = linear_rhs(0.3);
        let out = riccati_solve(&rhs, 2.0, &[0.7], 1e-12).unwrap();
        let decay = (-0.6f64).exp();
        assert!((out.psi[0] - 0.7 * decay).abs() < 1e-11);
        assert!((out.phi - 0.7 * (1.0 - decay) / 0.3).abs() < 1e-11);
    }

    #[test]
    fn quadratic_blow_up_is_detected() {
        // ψ' = ψ², ψ_0 = 1 explodes at t = 1.
        let rhs = RiccatiRhs::new(1, |_| Complex64::new(0.0, 0.0), |u| vec![u[0] * u[0]]);
        let err = riccati_solve(&rhs, 1.5, &[1.0], 1e-10).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err:?}");
        // Before the explosion the solution is 1/(1 - t).
        let ok = riccati_solve(&rhs, 0.5, &[1.0], 1e-12).unwrap();
        assert!((ok.psi[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn state_bound_rejects_initial_value() {
        let rhs = linear_rhs(1.0).with_state_bound(vec![0.5]);
        assert!(matches!(
            riccati_solve(&rhs, 1.0, &[0.6], 1e-10),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let rhs = linear_rhs(1.0);
        assert!(riccati_solve(&rhs, 1.0, &[0.1], 0.0).is_err());
    }

    #[test]
    fn complex_initial_value_matches_closed_form() {
        let rhs = linear_rhs(0.5);
        let u = Complex64::new(0.2, -3.0);
        let out = riccati_solve_complex(&rhs, 1.0, &[u], 1e-12).unwrap();
        let decay = (-0.5f64).exp();
        assert!((out.psi[0] - u * decay).norm() < 1e-10);
        assert!((out.phi - u * (1.0 - decay) / 0.5).norm() < 1e-10);
    }
}
