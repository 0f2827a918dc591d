//! Non-central χ² family.
//!
//! * [`ncchi2_cdf`] / [`ncchi2_sf`]: Poisson-weighted sums of central χ²
//!   distribution functions, summed outward from the modal Poisson index.
//! * [`LsncChi2Params`]: location-scale extension `Y = μ + σW`,
//!   `W ~ χ²(ν, α)`, with its cumulant generating function and exponential
//!   tilting.
//! * [`ChiSqMixSpec`]: `shift + Σ σ_j W_j` for independent `W_j ~ χ²(ν_j, α_j)`
//!   and positive `σ_j`, evaluated by a Ruben-type expansion into central χ²
//!   distribution functions with non-negative weights.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Truncation target for the Poisson and mixture series.
const SERIES_TOL: f64 = 1e-14;
/// Absolute accuracy promised by [`chisq_mix_cdf`].
pub const MIX_TOL: f64 = 1e-10;

const MAX_SERIES_TERMS: usize = 1_000_000;

/// Regularized lower and upper incomplete gamma functions `(P(a, x), Q(a, x))`.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // P(a, x) = x^a e^{-x} / Γ(a+1) Σ_n x^n / ((a+1)...(a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..10_000 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let p = (log_prefactor + sum.ln()).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        // Modified Lentz evaluation of the continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut cc = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            cc = b + an / cc;
            if cc.abs() < tiny {
                cc = tiny;
            }
            d = 1.0 / d;
            let delta = d * cc;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (log_prefactor + h.ln()).exp().min(1.0);
        (1.0 - q, q)
    }
}

/// `x^a e^{-x} / Γ(a+1)`: the step between consecutive shapes,
/// `P(a+1, x) = P(a, x) - step(a, x)`.
fn gamma_step(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (a * x.ln() - x - ln_gamma(a + 1.0)).exp()
}

fn check_ncchi2(nu: f64, alpha_nc: f64) -> Result<()> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom {nu} must be positive"
        )));
    }
    if !(alpha_nc >= 0.0) || !alpha_nc.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "non-centrality {alpha_nc} must be non-negative"
        )));
    }
    Ok(())
}

/// Both tails `(P(W ≤ x), P(W > x))` of `W ~ χ²(ν, α)`.
fn ncchi2_tails(x: f64, nu: f64, alpha_nc: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let lam = 0.5 * alpha_nc;
    let y = 0.5 * x;
    let half_nu = 0.5 * nu;
    if lam == 0.0 {
        return regularized_gamma(half_nu, y);
    }

    let mode = lam.floor();
    let j0 = mode as usize;
    let w0 = (-lam + mode * lam.ln() - ln_gamma(mode + 1.0)).exp();
    let a0 = half_nu + mode;
    let (p0, q0) = regularized_gamma(a0, y);
    let step0 = gamma_step(a0, y);

    let mut lower = w0 * p0;
    let mut upper = w0 * q0;
    let mut mass = w0;

    // Downward: j = j0-1, ..., 0.
    {
        let (mut w, mut p, mut q) = (w0, p0, q0);
        let mut step = step0;
        let mut j = j0;
        while j > 0 {
            let a_prev = half_nu + (j - 1) as f64;
            // step(a-1) = step(a) * a / y
            step = if y > 0.0 { step * (a_prev + 1.0) / y } else { 0.0 };
            if !step.is_finite() {
                step = gamma_step(a_prev, y);
            }
            p += step;
            q -= step;
            w *= j as f64 / lam;
            j -= 1;
            lower += w * p.min(1.0);
            upper += w * q.max(0.0);
            mass += w;
            if w < 1e-300 {
                break;
            }
        }
    }

    // Upward until the unused Poisson mass is negligible.
    {
        let (mut w, mut p, mut q) = (w0, p0, q0);
        let mut step = step0;
        let mut j = j0;
        for _ in 0..MAX_SERIES_TERMS {
            if 1.0 - mass <= SERIES_TOL * 0.1 {
                break;
            }
            let a = half_nu + j as f64;
            p -= step;
            q += step;
            step *= y / (a + 1.0);
            j += 1;
            w *= lam / j as f64;
            lower += w * p.max(0.0);
            upper += w * q.min(1.0);
            mass += w;
            if w == 0.0 && (j as f64) > lam {
                break;
            }
        }
    }
    (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0))
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let (p, q) = regularized_gamma(0.5, 0.5 * x * x);
    if x >= 0.0 {
        0.5 + 0.5 * p
    } else {
        0.5 * q
    }
}

/// Non-central χ² distribution function `χ²_{ν,α}(x)`.
pub fn ncchi2_cdf(x: f64, nu: f64, alpha_nc: f64) -> Result<f64> {
    check_ncchi2(nu, alpha_nc)?;
    Ok(ncchi2_tails(x, nu, alpha_nc).0)
}

/// Survival function `1 - χ²_{ν,α}(x)`, summed directly so small upper
/// tails keep their accuracy.
pub fn ncchi2_sf(x: f64, nu: f64, alpha_nc: f64) -> Result<f64> {
    check_ncchi2(nu, alpha_nc)?;
    Ok(ncchi2_tails(x, nu, alpha_nc).1)
}

/// Location-scale non-central χ²: `(Y - μ)/σ ~ χ²(ν, α)`.
///
/// A negative `σ` is allowed and describes the reflected law; it arises for
/// log-forward rates whose state loading is negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsncChi2Params {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
    pub alpha_nc: f64,
}

impl LsncChi2Params {
    pub fn new(mu: f64, sigma: f64, nu: f64, alpha_nc: f64) -> Result<Self> {
        if sigma == 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "LSNC scale {sigma} must be finite and nonzero"
            )));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("LSNC location {mu}")));
        }
        check_ncchi2(nu, alpha_nc)?;
        Ok(LsncChi2Params {
            mu,
            sigma,
            nu,
            alpha_nc,
        })
    }

    pub fn is_reflected(&self) -> bool {
        self.sigma < 0.0
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.sigma * (self.nu + self.alpha_nc)
    }

    /// `P(Y ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        let (lo, hi) = ncchi2_tails(z, self.nu, self.alpha_nc);
        if self.is_reflected() {
            hi
        } else {
            lo
        }
    }

    /// `P(Y > x)`.
    pub fn sf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        let (lo, hi) = ncchi2_tails(z, self.nu, self.alpha_nc);
        if self.is_reflected() {
            lo
        } else {
            hi
        }
    }

    /// `log E[e^{uY}] = -(ν/2)log(1-2σu) + ασu/(1-2σu) + μu`.
    pub fn cgf(&self, u: f64) -> Result<f64> {
        let z = 1.0 - 2.0 * self.sigma * u;
        if !(z > 0.0) {
            return Err(Error::DomainViolation {
                what: format!("u = {u}"),
                bound: 1.0 / (2.0 * self.sigma),
            });
        }
        Ok(-0.5 * self.nu * z.ln() + self.alpha_nc * self.sigma * u / z + self.mu * u)
    }

    /// Law of `Y` under `dF_θ/dF = e^{θx - κ(θ)}`:
    /// `(μ, σ/ζ, ν, α/ζ)` with `ζ = 1 - 2σθ`.
    pub fn tilt(&self, theta: f64) -> Result<LsncChi2Params> {
        let zeta = 1.0 - 2.0 * self.sigma * theta;
        if !(zeta > 0.0) {
            return Err(Error::DomainViolation {
                what: format!("theta = {theta}"),
                bound: 1.0 / (2.0 * self.sigma),
            });
        }
        Ok(LsncChi2Params {
            mu: self.mu,
            sigma: self.sigma / zeta,
            nu: self.nu,
            alpha_nc: self.alpha_nc / zeta,
        })
    }
}

pub fn lsnc_cdf(x: f64, p: &LsncChi2Params) -> f64 {
    p.cdf(x)
}

pub fn lsnc_cgf(u: f64, p: &LsncChi2Params) -> Result<f64> {
    p.cgf(u)
}

pub fn lsnc_tilt(p: &LsncChi2Params, theta: f64) -> Result<LsncChi2Params> {
    p.tilt(theta)
}

/// `shift + Σ_j σ_j W_j` with independent `W_j ~ χ²(ν_j, α_j)`, `σ_j > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSqMixSpec {
    pub sigmas: Vec<f64>,
    pub nus: Vec<f64>,
    pub alphas: Vec<f64>,
    pub shift: f64,
}

/// Distribution function value with the certified series truncation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixTails {
    pub cdf: f64,
    pub sf: f64,
    /// Upper bound on the absolute error of each tail from truncation.
    pub truncation: f64,
}

impl ChiSqMixSpec {
    pub fn new(sigmas: Vec<f64>, nus: Vec<f64>, alphas: Vec<f64>, shift: f64) -> Result<Self> {
        let m = ChiSqMixSpec {
            sigmas,
            nus,
            alphas,
            shift,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sigmas.len();
        if n == 0 || self.nus.len() != n || self.alphas.len() != n {
            return Err(Error::InvalidParameter(format!(
                "mixture vectors must share one nonzero length (got {}, {}, {})",
                n,
                self.nus.len(),
                self.alphas.len()
            )));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("mixture scale {s} must be positive")));
        }
        for (nu, al) in self.nus.iter().zip(&self.alphas) {
            check_ncchi2(*nu, *al)?;
        }
        if !self.shift.is_finite() {
            return Err(Error::InvalidParameter("mixture shift must be finite".into()));
        }
        Ok(())
    }

    /// Both tails at `x`.
    ///
    /// With `β = min σ_j` and `γ_j = 1 - β/σ_j ∈ [0, 1)`, the sum equals
    /// `β·χ²(Σν + 2K)` for a random index `K` whose probability generating
    /// function is
    /// `Π_j (1-γ_j)^{ν_j/2} (1-γ_j z)^{-ν_j/2} exp(α_j (z-1) / (2(1-γ_j z)))`.
    /// Its weights are non-negative and sum to one, so the unused mass bounds
    /// the truncation error of either tail.
    pub fn tails(&self, x: f64) -> Result<MixTails> {
        self.validate()?;
        let y = x - self.shift;
        if y <= 0.0 {
            return Ok(MixTails {
                cdf: 0.0,
                sf: 1.0,
                truncation: 0.0,
            });
        }
        let beta = self.sigmas.iter().copied().fold(f64::INFINITY, f64::min);
        let gammas: Vec<f64> = self.sigmas.iter().map(|s| 1.0 - beta / s).collect();
        let total_nu: f64 = self.nus.iter().sum();

        let log_a0: f64 = self
            .nus
            .iter()
            .zip(&gammas)
            .zip(&self.alphas)
            .map(|((nu, g), al)| 0.5 * nu * (1.0 - g).ln() - 0.5 * al)
            .sum();
        if log_a0 < -700.0 {
            return Err(Error::ConvergenceFailure(format!(
                "mixture leading weight underflows (log = {log_a0})"
            )));
        }
        let gamma_max = gammas.iter().copied().fold(0.0, f64::max);

        // d_r = Σ_j [ν_j γ_j^r / (2r) + α_j (1-γ_j) γ_j^{r-1} / 2]
        let d = |r: usize| -> f64 {
            let rf = r as f64;
            self.nus
                .iter()
                .zip(&gammas)
                .zip(&self.alphas)
                .map(|((nu, g), al)| {
                    let gr1 = if r == 1 { 1.0 } else { g.powi(r as i32 - 1) };
                    0.5 * nu * gr1 * g / rf + 0.5 * al * (1.0 - g) * gr1
                })
                .sum()
        };
        let mut ds: Vec<f64> = vec![0.0];
        let mut a: Vec<f64> = vec![log_a0.exp()];

        let z = 0.5 * y / beta;
        let shape0 = 0.5 * total_nu;
        let (mut p, mut q) = regularized_gamma(shape0, z);
        let mut step = gamma_step(shape0, z);

        let mut cdf = a[0] * p;
        let mut sf = a[0] * q;
        let mut mass = a[0];
        let mut k = 0usize;
        // Beyond r_cut the d_r are negligible relative to d_1.
        let r_cut = if gamma_max > 0.0 {
            ((1e-30f64).ln() / gamma_max.ln()).ceil().max(1.0) as usize + 1
        } else {
            1
        };
        while 1.0 - mass > SERIES_TOL {
            if k >= MAX_SERIES_TERMS {
                return Err(Error::ConvergenceFailure(format!(
                    "mixture series unfinished after {k} terms (residual mass {})",
                    1.0 - mass
                )));
            }
            k += 1;
            if ds.len() <= k.min(r_cut) {
                ds.push(d(ds.len()));
            }
            let upto = k.min(r_cut);
            let mut acc = 0.0;
            for r in 1..=upto {
                acc += r as f64 * ds[r] * a[k - r];
            }
            let ak = acc / k as f64;
            a.push(ak);

            let shape = shape0 + (k - 1) as f64;
            p -= step;
            q += step;
            step *= z / (shape + 1.0);

            cdf += ak * p.max(0.0);
            sf += ak * q.min(1.0);
            mass += ak;
            if ak == 0.0 && k > 10 && a[k - 1] == 0.0 {
                break;
            }
        }
        let truncation = (1.0 - mass).max(0.0) + 1e-15 * (k as f64 + 1.0).sqrt();
        Ok(MixTails {
            cdf: cdf.clamp(0.0, 1.0),
            sf: sf.clamp(0.0, 1.0),
            truncation,
        })
    }

    /// `P(shift + Σ σ_j W_j ≤ x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let t = self.tails(x)?;
        if t.truncation > MIX_TOL {
            return Err(Error::ConvergenceFailure(format!(
                "truncation bound {} exceeds {MIX_TOL}",
                t.truncation
            )));
        }
        Ok(t.cdf)
    }

    /// `P(shift + Σ σ_j W_j > x)`.
    pub fn sf(&self, x: f64) -> Result<f64> {
        let t = self.tails(x)?;
        if t.truncation > MIX_TOL {
            return Err(Error::ConvergenceFailure(format!(
                "truncation bound {} exceeds {MIX_TOL}",
                t.truncation
            )));
        }
        Ok(t.sf)
    }
}

pub fn chisq_mix_cdf(x: f64, m: &ChiSqMixSpec) -> Result<f64> {
    m.cdf(x)
}
