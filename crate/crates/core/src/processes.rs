//! Concrete affine process families.
//!
//! * [`CirParams`]: `dX = -λ(X - θ)dt + 2η√X dW` with
//!   `F(u) = λθu`, `R(u) = 2η²u² - λu`.
//! * [`GammaOuParams`]: OU process driven by a compound Poisson subordinator
//!   with exponential jumps; stationary law `Γ(α, β)`.
//! * [`LevySubordinatorSpec`]: `φ_t(u) = tκ(u)`, `ψ_t(u) = u`.
//! * [`ProductProcess`]: independent one-dimensional factors stacked.
//! * [`ProcessSpec::Generic`]: any [`RiccatiRhs`], transformed by ODE only.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::affine::{
    riccati_solve_complex, to_complex, ComplexTransform, RiccatiRhs, TransformPair,
    DEFAULT_ODE_TOL,
};
use crate::error::{Error, Result};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::HorizonViolation {
            t,
            horizon: f64::INFINITY,
        })
    }
}

fn check_scalar_domain(u: Complex64, bound: f64) -> Result<()> {
    if u.re < bound && u.re.is_finite() && u.im.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainViolation {
            what: format!("{u}"),
            bound,
        })
    }
}

/// Cox–Ingersoll–Ross parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirParams {
    pub lambda: f64,
    pub theta: f64,
    pub eta: f64,
    pub x0: f64,
}

impl CirParams {
    pub fn new(lambda: f64, theta: f64, eta: f64, x0: f64) -> Result<Self> {
        let p = CirParams {
            lambda,
            theta,
            eta,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("theta", self.theta),
            ("eta", self.eta),
            ("x0", self.x0),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "CIR {name} = {v} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    /// `a(t) = e^{-λt}`.
    pub fn a(&self, t: f64) -> f64 {
        (-self.lambda * t).exp()
    }

    /// `b(t) = (1 - e^{-λt})/λ`, or `t` when `λ = 0`.
    pub fn b(&self, t: f64) -> f64 {
        if self.lambda == 0.0 {
            t
        } else {
            -(-self.lambda * t).exp_m1() / self.lambda
        }
    }

    /// Degrees of freedom `λθ/η²` of the transition law.
    pub fn dof(&self) -> f64 {
        self.lambda * self.theta / (self.eta * self.eta)
    }

    /// Strict upper bound `1/(2η²b(t))` of the real moment domain.
    pub fn domain_bound(&self, t: f64) -> f64 {
        let denom = 2.0 * self.eta * self.eta * self.b(t);
        if denom > 0.0 {
            1.0 / denom
        } else {
            f64::INFINITY
        }
    }

    pub fn riccati_rhs(&self) -> RiccatiRhs {
        let (l, th, e2) = (self.lambda, self.theta, self.eta * self.eta);
        RiccatiRhs::new(
            1,
            move |u| u[0] * (l * th),
            move |u| vec![u[0] * u[0] * (2.0 * e2) - u[0] * l],
        )
    }

    pub fn transform_complex(&self, t: f64, u: Complex64) -> Result<(Complex64, Complex64)> {
        check_time(t)?;
        check_scalar_domain(u, self.domain_bound(t))?;
        if t == 0.0 {
            return Ok((c(0.0), u));
        }
        let e2 = self.eta * self.eta;
        let b = self.b(t);
        let a = self.a(t);
        if e2 == 0.0 {
            return Ok((u * (self.lambda * self.theta * b), u * a));
        }
        let z = c(1.0) - u * (2.0 * e2 * b);
        let phi = -z.ln() * (self.lambda * self.theta / (2.0 * e2));
        let psi = u * a / z;
        Ok((phi, psi))
    }

    pub fn transform(&self, t: f64, u: f64) -> Result<(f64, f64)> {
        let (p, q) = self.transform_complex(t, c(u))?;
        Ok((p.re, q.re))
    }
}

/// Γ-OU parameters: `dX = -λX dt + dH`, `H` compound Poisson with intensity
/// `λβ` and `Exp(α)` jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaOuParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub x0: f64,
}

impl GammaOuParams {
    pub fn new(lambda: f64, alpha: f64, beta: f64, x0: f64) -> Result<Self> {
        let p = GammaOuParams {
            lambda,
            alpha,
            beta,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "Gamma-OU {name} = {v} must be positive"
                )));
            }
        }
        if !(self.x0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Gamma-OU x0 = {} must be non-negative",
                self.x0
            )));
        }
        Ok(())
    }

    /// Cumulant generating function of the driving compound Poisson process.
    pub fn kappa_cp(&self, u: f64) -> f64 {
        self.lambda * self.beta * u / (self.alpha - u)
    }

    /// Cumulant generating function of the stationary `Γ(α, β)` law.
    pub fn kappa_gamma(&self, u: f64) -> f64 {
        -self.beta * (-u / self.alpha).ln_1p()
    }

    pub fn riccati_rhs(&self) -> RiccatiRhs {
        let (l, a, b) = (self.lambda, self.alpha, self.beta);
        RiccatiRhs::new(
            1,
            move |u| u[0] * (l * b) / (c(a) - u[0]),
            move |u| vec![-u[0] * l],
        )
        .with_state_bound(vec![a])
    }

    pub fn transform_complex(&self, t: f64, u: Complex64) -> Result<(Complex64, Complex64)> {
        check_time(t)?;
        check_scalar_domain(u, self.alpha)?;
        if t == 0.0 {
            return Ok((c(0.0), u));
        }
        let decay = (-self.lambda * t).exp();
        let psi = u * decay;
        let phi = ((c(self.alpha) - psi).ln() - (c(self.alpha) - u).ln()) * self.beta;
        Ok((phi, psi))
    }

    pub fn transform(&self, t: f64, u: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        check_scalar_domain(c(u), self.alpha)?;
        let decay = (-self.lambda * t).exp();
        // φ = β log(1 + (1 - e^{-λt}) u / (α - u))
        let phi = self.beta * (-(-self.lambda * t).exp_m1() * u / (self.alpha - u)).ln_1p();
        Ok((phi, decay * u))
    }
}

type Cumulant = dyn Fn(Complex64) -> Complex64 + Send + Sync;

/// Cumulant generating function of a Lévy subordinator.
#[derive(Clone)]
pub enum SubordinatorKind {
    /// Compound Poisson with the given jump intensity and `Exp(jump_rate)` jumps:
    /// `κ(u) = intensity·u/(jump_rate - u)`.
    CompoundPoissonExp { intensity: f64, jump_rate: f64 },
    /// Gamma subordinator: `κ(u) = -shape·log(1 - u/rate)`.
    Gamma { shape: f64, rate: f64 },
    /// Any cumulant, finite below `domain_sup`.
    Custom(Arc<Cumulant>),
}

impl fmt::Debug for SubordinatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubordinatorKind::CompoundPoissonExp {
                intensity,
                jump_rate,
            } => f
                .debug_struct("CompoundPoissonExp")
                .field("intensity", intensity)
                .field("jump_rate", jump_rate)
                .finish(),
            SubordinatorKind::Gamma { shape, rate } => f
                .debug_struct("Gamma")
                .field("shape", shape)
                .field("rate", rate)
                .finish(),
            SubordinatorKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Lévy subordinator `X_t = x + L_t`.
#[derive(Debug, Clone)]
pub struct LevySubordinatorSpec {
    pub kind: SubordinatorKind,
    pub domain_sup: f64,
    pub x0: f64,
}

impl LevySubordinatorSpec {
    pub fn compound_poisson_exp(intensity: f64, jump_rate: f64, x0: f64) -> Result<Self> {
        if !(intensity >= 0.0) || !(jump_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "compound Poisson intensity {intensity} / jump rate {jump_rate}"
            )));
        }
        Ok(LevySubordinatorSpec {
            kind: SubordinatorKind::CompoundPoissonExp {
                intensity,
                jump_rate,
            },
            domain_sup: jump_rate,
            x0,
        })
    }

    pub fn gamma(shape: f64, rate: f64, x0: f64) -> Result<Self> {
        if !(shape > 0.0) || !(rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma subordinator shape {shape} / rate {rate}"
            )));
        }
        Ok(LevySubordinatorSpec {
            kind: SubordinatorKind::Gamma { shape, rate },
            domain_sup: rate,
            x0,
        })
    }

    pub fn custom<K>(kappa: K, domain_sup: f64, x0: f64) -> Self
    where
        K: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        LevySubordinatorSpec {
            kind: SubordinatorKind::Custom(Arc::new(kappa)),
            domain_sup,
            x0,
        }
    }

    pub fn kappa_complex(&self, u: Complex64) -> Complex64 {
        match &self.kind {
            SubordinatorKind::CompoundPoissonExp {
                intensity,
                jump_rate,
            } => u * *intensity / (c(*jump_rate) - u),
            SubordinatorKind::Gamma { shape, rate } => -(c(1.0) - u / *rate).ln() * *shape,
            SubordinatorKind::Custom(k) => k(u),
        }
    }

    pub fn kappa(&self, u: f64) -> f64 {
        self.kappa_complex(c(u)).re
    }

    pub fn riccati_rhs(&self) -> RiccatiRhs {
        let me = self.clone();
        RiccatiRhs::new(
            1,
            move |u| me.kappa_complex(u[0]),
            |_| vec![c(0.0)],
        )
        .with_state_bound(vec![self.domain_sup])
    }

    pub fn transform_complex(&self, t: f64, u: Complex64) -> Result<(Complex64, Complex64)> {
        check_time(t)?;
        check_scalar_domain(u, self.domain_sup)?;
        if t == 0.0 {
            return Ok((c(0.0), u));
        }
        Ok((self.kappa_complex(u) * t, u))
    }
}

/// Independent one-dimensional factors.
#[derive(Debug, Clone)]
pub struct ProductProcess {
    pub factors: Vec<ProcessSpec>,
}

impl ProductProcess {
    pub fn new(factors: Vec<ProcessSpec>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("product of zero factors".into()));
        }
        if let Some(i) = factors.iter().position(|f| f.dim() != 1) {
            return Err(Error::InvalidParameter(format!(
                "product factor {i} is not one-dimensional"
            )));
        }
        Ok(ProductProcess { factors })
    }
}

/// A supported affine driving process.
#[derive(Debug, Clone)]
pub enum ProcessSpec {
    Cir(CirParams),
    GammaOu(GammaOuParams),
    Subordinator(LevySubordinatorSpec),
    Product(ProductProcess),
    /// Transform available only through the Riccati equations, for example
    /// an OU process driven by an arbitrary subordinator.
    Generic { rhs: RiccatiRhs, x0: Vec<f64> },
}

impl ProcessSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProcessSpec::Product(p) => p.factors.len(),
            ProcessSpec::Generic { rhs, .. } => rhs.dim(),
            _ => 1,
        }
    }

    /// Initial state stored with the parameter record.
    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            ProcessSpec::Cir(p) => vec![p.x0],
            ProcessSpec::GammaOu(p) => vec![p.x0],
            ProcessSpec::Subordinator(s) => vec![s.x0],
            ProcessSpec::Product(p) => p.factors.iter().flat_map(|f| f.initial_state()).collect(),
            ProcessSpec::Generic { x0, .. } => x0.clone(),
        }
    }

    /// Returns a copy with the initial state replaced.
    pub fn with_initial_state(&self, x0: &[f64]) -> Result<ProcessSpec> {
        if x0.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "initial state has dimension {}, process has {}",
                x0.len(),
                self.dim()
            )));
        }
        Ok(match self {
            ProcessSpec::Cir(p) => ProcessSpec::Cir(CirParams { x0: x0[0], ..*p }),
            ProcessSpec::GammaOu(p) => ProcessSpec::GammaOu(GammaOuParams { x0: x0[0], ..*p }),
            ProcessSpec::Subordinator(s) => ProcessSpec::Subordinator(LevySubordinatorSpec {
                x0: x0[0],
                ..s.clone()
            }),
            ProcessSpec::Product(p) => ProcessSpec::Product(ProductProcess {
                factors: p
                    .factors
                    .iter()
                    .zip(x0)
                    .map(|(f, x)| f.with_initial_state(&[*x]))
                    .collect::<Result<_>>()?,
            }),
            ProcessSpec::Generic { rhs, .. } => ProcessSpec::Generic {
                rhs: rhs.clone(),
                x0: x0.to_vec(),
            },
        })
    }

    pub fn has_closed_form(&self) -> bool {
        match self {
            ProcessSpec::Generic { .. } => false,
            ProcessSpec::Product(p) => p.factors.iter().all(|f| f.has_closed_form()),
            _ => true,
        }
    }

    /// Componentwise strict upper bound of the real moment domain `𝓘_t`.
    pub fn domain_bound(&self, t: f64) -> Vec<f64> {
        match self {
            ProcessSpec::Cir(p) => vec![p.domain_bound(t)],
            ProcessSpec::GammaOu(p) => vec![p.alpha],
            ProcessSpec::Subordinator(s) => vec![s.domain_sup],
            ProcessSpec::Product(p) => p.factors.iter().flat_map(|f| f.domain_bound(t)).collect(),
            ProcessSpec::Generic { rhs, .. } => rhs.state_bound().to_vec(),
        }
    }

    pub fn riccati_rhs(&self) -> RiccatiRhs {
        match self {
            ProcessSpec::Cir(p) => p.riccati_rhs(),
            ProcessSpec::GammaOu(p) => p.riccati_rhs(),
            ProcessSpec::Subordinator(s) => s.riccati_rhs(),
            ProcessSpec::Product(p) => {
                let parts: Vec<RiccatiRhs> = p.factors.iter().map(|f| f.riccati_rhs()).collect();
                RiccatiRhs::stack(&parts)
            }
            ProcessSpec::Generic { rhs, .. } => rhs.clone(),
        }
    }

    /// `(φ_t(u), ψ_t(u))` at a complex argument.
    pub fn transform_complex(&self, t: f64, u: &[Complex64]) -> Result<ComplexTransform> {
        if u.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "argument has dimension {}, process has {}",
                u.len(),
                self.dim()
            )));
        }
        let scalar = |r: Result<(Complex64, Complex64)>| {
            r.map(|(phi, psi)| ComplexTransform {
                phi,
                psi: vec![psi],
            })
        };
        match self {
            ProcessSpec::Cir(p) => scalar(p.transform_complex(t, u[0])),
            ProcessSpec::GammaOu(p) => scalar(p.transform_complex(t, u[0])),
            ProcessSpec::Subordinator(s) => scalar(s.transform_complex(t, u[0])),
            ProcessSpec::Product(p) => {
                let mut phi = c(0.0);
                let mut psi = Vec::with_capacity(u.len());
                for (j, (f, uj)) in p.factors.iter().zip(u).enumerate() {
                    let part = f
                        .transform_complex(t, std::slice::from_ref(uj))
                        .map_err(|e| e.in_factor(j))?;
                    phi += part.phi;
                    psi.extend(part.psi);
                }
                Ok(ComplexTransform { phi, psi })
            }
            ProcessSpec::Generic { rhs, .. } => {
                check_time(t)?;
                riccati_solve_complex(rhs, t, u, DEFAULT_ODE_TOL)
            }
        }
    }

    /// `(φ_t(u), ψ_t(u))` at a real argument.
    pub fn transform(&self, t: f64, u: &[f64]) -> Result<TransformPair> {
        match self {
            // Real-specific form keeps full relative accuracy for small u.
            ProcessSpec::GammaOu(p) => {
                if u.len() != 1 {
                    return Err(Error::InvalidParameter("Gamma-OU is one-dimensional".into()));
                }
                let (phi, psi) = p.transform(t, u[0])?;
                Ok(TransformPair {
                    phi,
                    psi: vec![psi],
                })
            }
            ProcessSpec::Product(p) => {
                if u.len() != p.factors.len() {
                    return Err(Error::InvalidParameter(format!(
                        "argument has dimension {}, process has {}",
                        u.len(),
                        p.factors.len()
                    )));
                }
                let mut phi = 0.0;
                let mut psi = Vec::with_capacity(u.len());
                for (j, (f, uj)) in p.factors.iter().zip(u).enumerate() {
                    let part = f.transform(t, &[*uj]).map_err(|e| e.in_factor(j))?;
                    phi += part.phi;
                    psi.extend(part.psi);
                }
                Ok(TransformPair { phi, psi })
            }
            _ => self
                .transform_complex(t, &to_complex(u))
                .map(ComplexTransform::into_real),
        }
    }

    pub fn as_cir(&self) -> Option<&CirParams> {
        match self {
            ProcessSpec::Cir(p) => Some(p),
            _ => None,
        }
    }

    /// Factor parameters when every factor is CIR (a single CIR counts as one factor).
    pub fn cir_factors(&self) -> Option<Vec<CirParams>> {
        match self {
            ProcessSpec::Cir(p) => Some(vec![*p]),
            ProcessSpec::Product(p) => p
                .factors
                .iter()
                .map(|f| f.as_cir().copied())
                .collect::<Option<Vec<_>>>(),
            _ => None,
        }
    }
}

/// Convenience constructor for an OU process driven by a subordinator:
/// `F(u) = κ(u)`, `R(u) = -λu`. No closed form is assumed.
pub fn ou_driven_by(lambda: f64, driver: &LevySubordinatorSpec, x0: f64) -> ProcessSpec {
    let d = driver.clone();
    let rhs = RiccatiRhs::new(1, move |u| d.kappa_complex(u[0]), move |u| vec![-u[0] * lambda])
        .with_state_bound(vec![driver.domain_sup]);
    ProcessSpec::Generic { rhs, x0: vec![x0] }
}
