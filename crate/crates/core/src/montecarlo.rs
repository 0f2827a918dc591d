//! Exact simulation of the driving processes and Monte Carlo estimators under
//! the terminal measure.
//!
//! Transitions are sampled exactly: CIR through the Poisson–Gamma
//! representation of the non-central χ² law, Γ-OU through decayed
//! exponential jumps of the compound Poisson driver. Forward-measure
//! expectations are obtained by weighting with `M_t^{u_k}/M_0^{u_k}`.
//!
//! Work is split into fixed-size chunks, each with its own generator keyed by
//! `(seed, stream_id, chunk)`, and chunk results are merged in chunk order, so
//! estimates do not depend on thread scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::affine::{dot, TransformPair};
use crate::error::{Error, Result};
use crate::model::{CalibratedModel, ForwardExponents};
use crate::processes::{CirParams, GammaOuParams, LevySubordinatorSpec, ProcessSpec, SubordinatorKind};

/// Paths per chunk.
pub const CHUNK: usize = 4096;

/// Key of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Generator for one chunk of paths.
    pub fn chunk_rng(&self, chunk: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&chunk.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// A related stream for a separate experiment.
    pub fn substream(&self, offset: u64) -> Self {
        RngStream {
            seed: self.seed,
            stream_id: self.stream_id.wrapping_mul(1_000_003).wrapping_add(offset + 1),
        }
    }
}

/// Simulated states on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub dim: usize,
    pub n_paths: usize,
    /// Path-major, then time, then factor.
    pub states: Vec<f64>,
    /// Per-path Radon–Nikodym weights at the last grid time.
    pub weights: Option<Vec<f64>>,
}

impl PathBatch {
    pub fn state(&self, path: usize, time_index: usize) -> &[f64] {
        let start = (path * self.times.len() + time_index) * self.dim;
        &self.states[start..start + self.dim]
    }

    /// Attaches `M_T^{u_k}/M_0^{u_k}` at the last grid time.
    pub fn with_weights(mut self, m: &CalibratedModel, k: usize) -> Result<Self> {
        let t = *self.times.last().ok_or_else(|| Error::InvalidGrid("empty grid".into()))?;
        let w = Weight::new(m, k, t)?;
        let last = self.times.len() - 1;
        self.weights = Some((0..self.n_paths).map(|p| w.value(self.state(p, last))).collect());
        Ok(self)
    }

    /// CSV `path_id,time,factor_index,state,weight`; the weight column is
    /// filled on the last grid time when weights are attached.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "path_id,time,factor_index,state,weight")?;
        let last = self.times.len().saturating_sub(1);
        for p in 0..self.n_paths {
            for (ti, t) in self.times.iter().enumerate() {
                for (j, x) in self.state(p, ti).iter().enumerate() {
                    let w = match (&self.weights, ti == last) {
                        (Some(w), true) => crate::pricing::format_sig(w[p], 12),
                        _ => String::new(),
                    };
                    writeln!(
                        out,
                        "{p},{},{j},{},{w}",
                        crate::pricing::format_sig(*t, 12),
                        crate::pricing::format_sig(*x, 12)
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if !(times[0] >= 0.0) {
        return Err(Error::InvalidGrid(format!("grid starts at {}", times[0])));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::InvalidGrid(format!("grid not increasing at {}", w[1])));
        }
    }
    Ok(())
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale).expect("valid gamma").sample(rng)
}

fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Exact CIR transition over `dt`.
pub fn cir_step<R: Rng + ?Sized>(p: &CirParams, x: f64, dt: f64, rng: &mut R) -> f64 {
    let s = p.eta * p.eta * p.b(dt);
    if s == 0.0 {
        return x * p.a(dt) + p.theta * p.lambda * p.b(dt);
    }
    let nc = x * p.a(dt) / s;
    let n = poisson(rng, 0.5 * nc);
    s * gamma(rng, 0.5 * p.dof() + n as f64, 2.0)
}

/// Exact Γ-OU transition over `dt`.
pub fn gamma_ou_step<R: Rng + ?Sized>(p: &GammaOuParams, x: f64, dt: f64, rng: &mut R) -> f64 {
    let mut y = x * (-p.lambda * dt).exp();
    let n = poisson(rng, p.lambda * p.beta * dt);
    for _ in 0..n {
        let tau: f64 = rng.random::<f64>() * dt;
        y += exponential(rng, p.alpha) * (-p.lambda * (dt - tau)).exp();
    }
    y
}

fn subordinator_step<R: Rng + ?Sized>(s: &LevySubordinatorSpec, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
    match &s.kind {
        SubordinatorKind::CompoundPoissonExp { intensity, jump_rate } => {
            let n = poisson(rng, intensity * dt);
            Ok(x + (0..n).map(|_| exponential(rng, *jump_rate)).sum::<f64>())
        }
        SubordinatorKind::Gamma { shape, rate } => Ok(x + gamma(rng, shape * dt, 1.0 / rate)),
        SubordinatorKind::Custom(_) => Err(Error::Unsupported(
            "no exact sampler for a custom cumulant".into(),
        )),
    }
}

fn check_sampler(p: &ProcessSpec) -> Result<()> {
    match p {
        ProcessSpec::Cir(_) | ProcessSpec::GammaOu(_) => Ok(()),
        ProcessSpec::Subordinator(s) => match s.kind {
            SubordinatorKind::Custom(_) => Err(Error::Unsupported(
                "no exact sampler for a custom cumulant".into(),
            )),
            _ => Ok(()),
        },
        ProcessSpec::Product(pp) => pp.factors.iter().try_for_each(check_sampler),
        ProcessSpec::Generic { .. } => Err(Error::Unsupported(
            "no exact sampler for a Riccati-only process".into(),
        )),
    }
}

/// Advances `x` by `dt` with an exact transition draw.
pub fn step_process<R: Rng + ?Sized>(p: &ProcessSpec, x: &mut [f64], dt: f64, rng: &mut R) -> Result<()> {
    match p {
        ProcessSpec::Cir(c) => x[0] = cir_step(c, x[0], dt, rng),
        ProcessSpec::GammaOu(g) => x[0] = gamma_ou_step(g, x[0], dt, rng),
        ProcessSpec::Subordinator(s) => x[0] = subordinator_step(s, x[0], dt, rng)?,
        ProcessSpec::Product(pp) => {
            let mut j = 0;
            for f in &pp.factors {
                let d = f.dim();
                step_process(f, &mut x[j..j + d], dt, rng)?;
                j += d;
            }
        }
        ProcessSpec::Generic { .. } => check_sampler(p)?,
    }
    Ok(())
}

fn chunk_count(n_paths: usize) -> usize {
    n_paths.div_ceil(CHUNK)
}

fn chunk_len(n_paths: usize, c: usize) -> usize {
    CHUNK.min(n_paths - c * CHUNK)
}

fn map_chunks<T: Send, F>(n_paths: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    let chunks: Vec<usize> = (0..chunk_count(n_paths)).collect();
    #[cfg(feature = "parallel")]
    {
        chunks.par_iter().map(|&c| f(c)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        chunks.iter().map(|&c| f(c)).collect()
    }
}

/// Simulates `n_paths` paths of any process with exact samplers, starting from
/// its initial state at time zero.
pub fn simulate_process(p: &ProcessSpec, times: &[f64], n_paths: usize, rng: &RngStream) -> Result<PathBatch> {
    check_grid(times)?;
    check_sampler(p)?;
    let d = p.dim();
    let x0 = p.initial_state();
    let per_path = times.len() * d;
    let parts: Vec<Result<Vec<f64>>> = map_chunks(n_paths, |c| {
        let mut r = rng.chunk_rng(c as u64);
        let len = chunk_len(n_paths, c);
        let mut out = Vec::with_capacity(len * per_path);
        let mut x = x0.clone();
        for _ in 0..len {
            x.copy_from_slice(&x0);
            let mut t = 0.0;
            for &ti in times {
                if ti > t {
                    step_process(p, &mut x, ti - t, &mut r)?;
                    t = ti;
                }
                out.extend_from_slice(&x);
            }
        }
        Ok(out)
    });
    let mut states = Vec::with_capacity(n_paths * per_path);
    for part in parts {
        states.extend(part?);
    }
    Ok(PathBatch {
        times: times.to_vec(),
        dim: d,
        n_paths,
        states,
        weights: None,
    })
}

pub fn simulate_cir(p: &CirParams, times: &[f64], n_paths: usize, rng: &RngStream) -> Result<PathBatch> {
    simulate_process(&ProcessSpec::Cir(*p), times, n_paths, rng)
}

pub fn simulate_gamma_ou(p: &GammaOuParams, times: &[f64], n_paths: usize, rng: &RngStream) -> Result<PathBatch> {
    simulate_process(&ProcessSpec::GammaOu(*p), times, n_paths, rng)
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// `M_t^{u_k}/M_0^{u_k}` as a function of the state.
#[derive(Debug, Clone)]
pub struct Weight {
    pair: TransformPair,
    m0: f64,
}

impl Weight {
    pub fn new(m: &CalibratedModel, k: usize, t: f64) -> Result<Self> {
        if k == 0 || k > m.n() {
            return Err(Error::IndexError(format!("measure index {k} outside 1..={}", m.n())));
        }
        Ok(Weight {
            pair: m.remaining_transform(t, m.u(k))?,
            m0: m.initial_martingale(k)?,
        })
    }

    /// `M_t^{u_k}` at the state.
    pub fn martingale(&self, x: &[f64]) -> f64 {
        self.pair.mgf(x)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.pair.mgf(x) / self.m0
    }
}

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    /// `|estimate - target| / std_error`.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.estimate - target;
        if self.std_error == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d.abs() / self.std_error
        }
    }
}

fn sample_terminal<F>(m: &CalibratedModel, t: f64, n_paths: usize, rng: &RngStream, f: F) -> Result<Vec<Moments>>
where
    F: Fn(&[f64], &mut Vec<Moments>) + Sync + Send,
{
    check_sampler(&m.process)?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter("no paths requested".into()));
    }
    let parts: Vec<Result<Vec<Moments>>> = map_chunks(n_paths, |c| {
        let mut r = rng.chunk_rng(c as u64);
        let mut acc = Vec::new();
        let mut x = m.x0.clone();
        for _ in 0..chunk_len(n_paths, c) {
            x.copy_from_slice(&m.x0);
            if t > 0.0 {
                step_process(&m.process, &mut x, t, &mut r)?;
            }
            f(&x, &mut acc);
        }
        Ok(acc)
    });
    let mut total: Vec<Moments> = Vec::new();
    for part in parts {
        let part = part?;
        if total.len() < part.len() {
            total.resize(part.len(), Moments::default());
        }
        for (a, b) in total.iter_mut().zip(&part) {
            a.merge(b);
        }
    }
    Ok(total)
}

fn push_at(acc: &mut Vec<Moments>, i: usize, x: f64) {
    if acc.len() <= i {
        acc.resize(i + 1, Moments::default());
    }
    acc[i].push(x);
}

/// `B(0,T_k) E_{P_{T_k}}[payoff(X_t)]`, simulated under the terminal measure
/// and reweighted by `M_t^{u_k}/M_0^{u_k}`.
pub fn mc_price<P>(
    m: &CalibratedModel,
    payoff: P,
    obs_time: f64,
    measure_index: usize,
    n_paths: usize,
    rng: &RngStream,
) -> Result<McEstimate>
where
    P: Fn(&[f64]) -> f64 + Sync + Send,
{
    let w = Weight::new(m, measure_index, obs_time)?;
    let acc = sample_terminal(m, obs_time, n_paths, rng, |x, acc| {
        push_at(acc, 0, w.value(x) * payoff(x));
    })?;
    let b = m.tenor.discount(measure_index);
    Ok(McEstimate {
        estimate: b * acc[0].mean,
        std_error: b * acc[0].std_error(),
        n_paths,
    })
}

/// Caplet payoff `(e^{A_k + <B_k, x>} - 𝒦)^+` at `T_k`, for use with measure `k + 1`.
pub fn caplet_payoff(m: &CalibratedModel, k: usize, strike: f64) -> Result<impl Fn(&[f64]) -> f64 + Sync + Send> {
    let fe: ForwardExponents = m.forward_price_exponents(k, m.tenor.date(k))?;
    let bold = 1.0 + m.tenor.delta(k) * strike;
    Ok(move |x: &[f64]| ((fe.a + dot(&fe.b, x)).exp() - bold).max(0.0))
}

/// Payer swaption payoff `(1 - Σ c_k e^{A_{k,i} + <B_{k,i}, x>})^+` at `T_i`, for
/// use with measure `i`.
pub fn swaption_payoff(m: &CalibratedModel, start: usize, end: usize, strike: f64) -> Result<impl Fn(&[f64]) -> f64 + Sync + Send> {
    let spec = crate::pricing::SwaptionSpec::new(start, end, strike)?;
    let ti = m.tenor.date(start);
    let terms: Vec<(f64, ForwardExponents)> = spec
        .coupons(m)?
        .into_iter()
        .map(|(k, c)| Ok((c, m.forward_exponents(k, start, ti)?)))
        .collect::<Result<_>>()?;
    Ok(move |x: &[f64]| {
        let s: f64 = terms.iter().map(|(c, fe)| c * fe.value(x)).sum();
        (1.0 - s).max(0.0)
    })
}

/// Monte Carlo check of the martingale property of `M^{u_k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleReport {
    pub k: usize,
    pub t: f64,
    /// `M_0^{u_k}`.
    pub target: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
    /// Smallest simulated `M_t^{u_k}`.
    pub min: f64,
}

/// Martingale report for one `(k, t)`.
pub fn martingale_check(m: &CalibratedModel, k: usize, t: f64, n_paths: usize, rng: &RngStream) -> Result<MartingaleReport> {
    let suite = martingale_suite(m, &[t], n_paths, rng)?;
    suite
        .reports
        .into_iter()
        .find(|r| r.k == k)
        .ok_or_else(|| Error::IndexError(format!("index {k} outside 1..={}", m.n())))
}

/// Martingale reports for every `k` at several times plus pathwise positivity.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleSuite {
    pub reports: Vec<MartingaleReport>,
    /// Smallest `M_t^{u_k}` over all paths, `k` and times.
    pub min_martingale: f64,
    /// Smallest LIBOR rate `L(t, T_k)`, `t ≤ T_k`, over all paths.
    pub min_libor: f64,
    /// Weight means `E[M_t^{u_k}/M_0^{u_k}]` per report, with standard errors.
    pub weight_means: Vec<McEstimate>,
}

/// Simulates paths through the monitoring times with exact transitions and
/// records, for each time and each `k`, the moments of `M_t^{u_k}`, together
/// with the smallest martingale value and LIBOR rate seen.
pub fn martingale_suite(m: &CalibratedModel, times: &[f64], n_paths: usize, rng: &RngStream) -> Result<MartingaleSuite> {
    check_grid(times)?;
    check_sampler(&m.process)?;
    if *times.last().unwrap() > m.horizon() {
        return Err(Error::HorizonViolation {
            t: *times.last().unwrap(),
            horizon: m.horizon(),
        });
    }
    let n = m.n();
    let mut pairs = Vec::new();
    for &t in times {
        for k in 1..=n {
            pairs.push(m.remaining_transform(t, m.u(k))?);
        }
    }
    let mut libors: Vec<Vec<(usize, ForwardExponents)>> = Vec::new();
    for &t in times {
        let mut row = Vec::new();
        for k in 1..n {
            if t <= m.tenor.date(k) {
                row.push((k, m.forward_price_exponents(k, t)?));
            }
        }
        libors.push(row);
    }
    let targets: Vec<f64> = (1..=n).map(|k| m.initial_martingale(k)).collect::<Result<_>>()?;
    let nt = times.len();
    let x0 = m.x0.clone();
    let parts: Vec<Result<(Vec<Moments>, Vec<f64>, f64)>> = map_chunks(n_paths, |c| {
        let mut r = rng.chunk_rng(c as u64);
        let mut acc = vec![Moments::default(); nt * n];
        let mut mins = vec![f64::INFINITY; nt * n];
        let mut min_l = f64::INFINITY;
        let mut x = x0.clone();
        for _ in 0..chunk_len(n_paths, c) {
            x.copy_from_slice(&x0);
            let mut t = 0.0;
            for (ti, &tt) in times.iter().enumerate() {
                if tt > t {
                    step_process(&m.process, &mut x, tt - t, &mut r)?;
                    t = tt;
                }
                for k in 0..n {
                    let v = pairs[ti * n + k].mgf(&x);
                    acc[ti * n + k].push(v);
                    mins[ti * n + k] = mins[ti * n + k].min(v);
                }
                for (k, fe) in &libors[ti] {
                    let l = (fe.a + dot(&fe.b, &x)).exp_m1() / m.tenor.delta(*k);
                    min_l = min_l.min(l);
                }
            }
        }
        Ok((acc, mins, min_l))
    });
    let mut acc = vec![Moments::default(); nt * n];
    let mut mins = vec![f64::INFINITY; nt * n];
    let mut min_l = f64::INFINITY;
    for part in parts {
        let (a, mm, ml) = part?;
        for (x, y) in acc.iter_mut().zip(&a) {
            x.merge(y);
        }
        for (x, y) in mins.iter_mut().zip(&mm) {
            *x = x.min(*y);
        }
        min_l = min_l.min(ml);
    }
    let min_m = mins.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut reports = Vec::new();
    let mut weight_means = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        for k in 0..n {
            let a = &acc[ti * n + k];
            let est = McEstimate {
                estimate: a.mean,
                std_error: a.std_error(),
                n_paths,
            };
            reports.push(MartingaleReport {
                k: k + 1,
                t,
                target: targets[k],
                mean: a.mean,
                std_error: a.std_error(),
                z: est.z_score(targets[k]),
                min: mins[ti * n + k],
            });
            weight_means.push(McEstimate {
                estimate: a.mean / targets[k],
                std_error: a.std_error() / targets[k],
                n_paths,
            });
        }
    }
    Ok(MartingaleSuite {
        reports,
        min_martingale: min_m,
        min_libor: min_l,
        weight_means,
    })
}

/// Sample moments of `g(X_t)` under the terminal measure.
pub fn mc_expectation<G>(m: &CalibratedModel, g: G, t: f64, n_paths: usize, rng: &RngStream) -> Result<McEstimate>
where
    G: Fn(&[f64]) -> f64 + Sync + Send,
{
    let acc = sample_terminal(m, t, n_paths, rng, |x, acc| push_at(acc, 0, g(x)))?;
    Ok(McEstimate {
        estimate: acc[0].mean,
        std_error: acc[0].std_error(),
        n_paths,
    })
}

/// Sample mean and standard error of `g` over the states of a batch at one
/// grid index.
pub fn batch_expectation<G: Fn(&[f64]) -> f64>(batch: &PathBatch, time_index: usize, g: G) -> McEstimate {
    let mut acc = Moments::default();
    for p in 0..batch.n_paths {
        acc.push(g(batch.state(p, time_index)));
    }
    McEstimate {
        estimate: acc.mean,
        std_error: acc.std_error(),
        n_paths: batch.n_paths,
    }
}
