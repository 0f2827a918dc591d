//! Batch front-end: configuration, market data loading and the commands
//! behind the `affine-libor` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use affine_libor::error::Error as ModelError;
use affine_libor::model::{fit_term_structure, CalibratedModel, TenorStructure};
use affine_libor::montecarlo::{caplet_payoff, martingale_suite, mc_price, swaption_payoff, RngStream};
use affine_libor::pricing::{
    caplet_implied_vol, caplet_price, format_sig, strike_grid, swaption_price, vol_surface, CapletSpec,
    PricingMethod, QuadratureSettings, SwaptionSpec,
};
use affine_libor::processes::{CirParams, GammaOuParams, ProcessSpec, ProductProcess};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{file}: row {row}: {msg}")]
    Parse { file: String, row: usize, msg: String },
    #[error("{file}: discount at row {row} exceeds its predecessor (negative initial LIBOR)")]
    Monotonicity { file: String, row: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl CliError {
    /// Stable category printed on failure.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Monotonicity { .. } => "monotonicity_error",
            CliError::Config(_) => "config_error",
            CliError::Io { .. } => "io_error",
            CliError::Model(e) => e.category(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads `maturity,discount[,delta]` rows.
pub fn load_tenor_csv(path: &Path) -> Result<TenorStructure> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_tenor_csv(&text, &path.display().to_string())
}

pub fn parse_tenor_csv(text: &str, file: &str) -> Result<TenorStructure> {
    let parse = |row: usize, msg: String| CliError::Parse {
        file: file.to_string(),
        row,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 || headers[0] != "maturity" || headers[1] != "discount" {
        return Err(parse(1, format!("expected header maturity,discount, got {:?}", headers.join(","))));
    }
    let with_delta = match headers.get(2).map(String::as_str) {
        None => false,
        Some("delta") => true,
        Some(h) => return Err(parse(1, format!("unknown column {h:?}"))),
    };
    let (mut mats, mut discs, mut deltas) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse(row, e.to_string()))?;
        let field = |j: usize, name: &str| -> Result<f64> {
            let s = rec.get(j).ok_or_else(|| parse(row, format!("missing {name}")))?;
            f64::from_str(s).map_err(|_| parse(row, format!("{name} {s:?} is not a number")))
        };
        mats.push(field(0, "maturity")?);
        discs.push(field(1, "discount")?);
        if with_delta {
            deltas.push(field(2, "delta")?);
        }
    }
    if mats.is_empty() {
        return Err(parse(1, "no data rows".into()));
    }
    for i in 1..discs.len() {
        if discs[i] > discs[i - 1] {
            return Err(CliError::Monotonicity {
                file: file.to_string(),
                row: i + 2,
            });
        }
    }
    let built = if with_delta {
        TenorStructure::with_accruals(mats, discs, deltas)
    } else {
        let spacing: Vec<f64> = std::iter::once(mats[0]).chain(mats.windows(2).map(|w| w[1] - w[0])).collect();
        if spacing.iter().any(|d| (d - spacing[0]).abs() > 1e-9 * spacing[0].abs().max(1.0)) {
            return Err(parse(2, "maturities are not evenly spaced; add a delta column".into()));
        }
        TenorStructure::new(mats, discs)
    };
    built.map_err(|e| match e {
        ModelError::NonMonotoneCurve { index } => CliError::Monotonicity {
            file: file.to_string(),
            row: index + 1,
        },
        e => CliError::Model(e),
    })
}

/// Flat `key = value` settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub values: BTreeMap<String, String>,
    pub base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(RawConfig {
            values,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        RawConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn num(&self, key: &str) -> Result<f64> {
        let s = self.get(key).ok_or_else(|| CliError::Config(format!("missing {key}")))?;
        f64::from_str(s).map_err(|_| CliError::Config(format!("{key} = {s:?} is not a number")))
    }

    pub fn num_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.get(key).is_some() {
            self.num(key)
        } else {
            Ok(default)
        }
    }

    pub fn int_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => u64::from_str(s).map_err(|_| CliError::Config(format!("{key} = {s:?} is not an integer"))),
        }
    }
}

/// Settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub process: ProcessSpec,
    pub x0: Vec<f64>,
    pub tenor: TenorStructure,
    pub fit_tol: f64,
    pub quad: QuadratureSettings,
    pub strikes: Vec<f64>,
    pub caplet: Option<CapletSpec>,
    pub swaption: Option<SwaptionSpec>,
    pub mc_paths: usize,
    pub seed: u64,
}

fn cir_from(raw: &RawConfig, prefix: &str) -> Result<CirParams> {
    Ok(CirParams::new(
        raw.num(&format!("{prefix}.lambda"))?,
        raw.num(&format!("{prefix}.theta"))?,
        raw.num(&format!("{prefix}.eta"))?,
        raw.num(&format!("{prefix}.x0"))?,
    )?)
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let family = raw.get("process.family").ok_or_else(|| CliError::Config("missing process.family".into()))?;
        let process = match family {
            "cir" => ProcessSpec::Cir(cir_from(raw, "process")?),
            "gamma_ou" => ProcessSpec::GammaOu(GammaOuParams::new(
                raw.num("process.lambda")?,
                raw.num("process.alpha")?,
                raw.num("process.beta")?,
                raw.num("process.x0")?,
            )?),
            "cir2f" => ProcessSpec::Product(ProductProcess::new(vec![
                ProcessSpec::Cir(cir_from(raw, "process.factor1")?),
                ProcessSpec::Cir(cir_from(raw, "process.factor2")?),
            ])?),
            f => return Err(CliError::Config(format!("unknown process.family {f:?}"))),
        };
        let x0 = process.initial_state();
        let tenor_file = raw.get("tenor.file").ok_or_else(|| CliError::Config("missing tenor.file".into()))?;
        let tenor = load_tenor_csv(&raw.base_dir.join(tenor_file))?;
        let dq = QuadratureSettings::default();
        let quad = QuadratureSettings {
            damping: raw.get("quad.damping").map(|_| raw.num("quad.damping")).transpose()?,
            truncation: raw.num_or("quad.truncation", dq.truncation)?,
            rel_tol: raw.num_or("quad.rel_tol", dq.rel_tol)?,
            abs_tol: raw.num_or("quad.abs_tol", dq.abs_tol)?,
        };
        let strikes = if raw.get("strikes.start").is_some() {
            strike_grid(raw.num("strikes.start")?, raw.num("strikes.stop")?, raw.num("strikes.step")?)?
        } else {
            Vec::new()
        };
        let caplet = match raw.get("caplet.period") {
            Some(_) => Some(CapletSpec::new(raw.int_or("caplet.period", 0)? as usize, raw.num("caplet.strike")?)?),
            None => None,
        };
        let swaption = match raw.get("swaption.start") {
            Some(_) => Some(SwaptionSpec::new(
                raw.int_or("swaption.start", 0)? as usize,
                raw.int_or("swaption.end", 0)? as usize,
                raw.num("swaption.strike")?,
            )?),
            None => None,
        };
        Ok(RunConfig {
            process,
            x0,
            tenor,
            fit_tol: raw.num_or("fit.tol", 1e-12)?,
            quad,
            strikes,
            caplet,
            swaption,
            mc_paths: raw.int_or("mc.paths", 1_000_000)? as usize,
            seed: raw.int_or("seed", 20240101)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_raw(&RawConfig::load(path)?)
    }

    pub fn calibrate(&self) -> Result<CalibratedModel> {
        Ok(fit_term_structure(&self.tenor, &self.process, &self.x0, self.fit_tol)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Calibrate,
    Caplet,
    Swaption,
    Surface,
    Validate,
}

/// Output of a command: text for stdout or the output file, and whether all
/// checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub passed: bool,
}

fn default_method(m: &CalibratedModel) -> PricingMethod {
    if m.process.cir_factors().is_some() {
        PricingMethod::Closed
    } else {
        PricingMethod::Fourier
    }
}

pub fn run_command(cmd: Command, cfg: &RunConfig, method: Option<PricingMethod>) -> Result<Outcome> {
    let m = cfg.calibrate()?;
    let method = method.unwrap_or_else(|| default_method(&m));
    let text = match cmd {
        Command::Calibrate => calibrate_text(&m),
        Command::Caplet => {
            let c = cfg.caplet.ok_or_else(|| CliError::Config("missing caplet.period".into()))?;
            let p = caplet_price(&m, &c, method, &cfg.quad)?;
            let vol = caplet_implied_vol(&m, &c, p.price).map(|v| format_sig(v, 12)).unwrap_or_else(|e| format!("NaN ({e})"));
            let mut s = String::new();
            let _ = writeln!(s, "price = {}", format_sig(p.price, 12));
            let _ = writeln!(s, "error_estimate = {}", format_sig(p.error_estimate, 12));
            if let Some(r) = p.damping {
                let _ = writeln!(s, "damping = {}", format_sig(r, 12));
            }
            let _ = writeln!(s, "forward_libor = {}", format_sig(m.tenor.initial_libor(c.period), 12));
            let _ = writeln!(s, "implied_vol = {vol}");
            s
        }
        Command::Swaption => {
            let sp = cfg.swaption.ok_or_else(|| CliError::Config("missing swaption.start".into()))?;
            let p = swaption_price(&m, &sp, method, &cfg.quad)?;
            let mut s = String::new();
            let _ = writeln!(s, "price = {}", format_sig(p.price, 12));
            let _ = writeln!(s, "error_estimate = {}", format_sig(p.error_estimate, 12));
            if let Some(r) = p.damping {
                let _ = writeln!(s, "damping = {}", format_sig(r, 12));
            }
            if let Some(y) = p.root {
                let _ = writeln!(s, "exercise_boundary = {}", format_sig(y, 12));
            }
            s
        }
        Command::Surface => {
            if cfg.strikes.is_empty() {
                return Err(CliError::Config("missing strikes.start/stop/step".into()));
            }
            vol_surface(&m, &cfg.strikes, method, &cfg.quad)?.to_csv()
        }
        Command::Validate => return validate(&m, cfg),
    };
    Ok(Outcome { text, passed: true })
}

/// One decimal per line; factors separated by commas.
pub fn calibrate_text(m: &CalibratedModel) -> String {
    let mut s = String::new();
    for u in &m.us {
        let line: Vec<String> = u.iter().map(|x| format_sig(*x, 12)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// `|z|` limit of the statistical checks.
pub const Z_LIMIT: f64 = 3.0;

fn check(report: &mut String, ok: bool, name: &str, detail: String) -> bool {
    let _ = writeln!(report, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

/// Martingale, positivity, weight and oracle-agreement checks.
pub fn validate(m: &CalibratedModel, cfg: &RunConfig) -> Result<Outcome> {
    let mut r = String::new();
    let mut all = true;
    let h = m.horizon();
    let times = [h / 4.0, h / 2.0, h];
    let rng = RngStream::new(cfg.seed, 0);
    let suite = martingale_suite(m, &times, cfg.mc_paths, &rng)?;
    let worst = suite.reports.iter().map(|x| x.z).fold(0.0, f64::max);
    all &= check(&mut r, worst <= Z_LIMIT, "martingale", format!("max |z| = {} over {} (k, t)", format_sig(worst, 4), suite.reports.len()));
    all &= check(&mut r, suite.min_martingale >= 1.0, "martingale_floor", format!("min M = {}", format_sig(suite.min_martingale, 12)));
    all &= check(&mut r, suite.min_libor >= 0.0, "libor_nonnegative", format!("min L = {}", format_sig(suite.min_libor, 12)));
    let wz = suite.weight_means.iter().map(|w| w.z_score(1.0)).fold(0.0, f64::max);
    all &= check(&mut r, wz <= Z_LIMIT, "weight_mean", format!("max |z| = {}", format_sig(wz, 4)));

    let method = default_method(m);
    let mut stream = 1;
    for k in [1, m.n() / 2, m.n() - 1] {
        let strike = m.tenor.initial_libor(k);
        let c = CapletSpec::new(k, strike)?;
        let exact = caplet_price(m, &c, method, &cfg.quad)?.price;
        let pay = caplet_payoff(m, k, strike)?;
        let e = mc_price(m, pay, m.tenor.date(k), k + 1, cfg.mc_paths, &rng.substream(stream))?;
        stream += 1;
        let z = e.z_score(exact);
        all &= check(
            &mut r,
            z <= Z_LIMIT,
            &format!("caplet_mc k={k}"),
            format!("analytic {} mc {} se {} z {}", format_sig(exact, 12), format_sig(e.estimate, 12), format_sig(e.std_error, 4), format_sig(z, 4)),
        );
    }
    if m.dim() == 1 {
        let (i, end) = (2.min(m.n() - 1), m.n().min(6));
        let sp = SwaptionSpec::new(i, end, m.tenor.initial_libor(i))?;
        let exact = swaption_price(m, &sp, method, &cfg.quad)?.price;
        let pay = swaption_payoff(m, sp.start, sp.end, sp.strike)?;
        let e = mc_price(m, pay, m.tenor.date(i), i, cfg.mc_paths, &rng.substream(stream))?;
        let z = e.z_score(exact);
        all &= check(
            &mut r,
            z <= Z_LIMIT,
            &format!("swaption_mc {i}x{end}"),
            format!("analytic {} mc {} se {} z {}", format_sig(exact, 12), format_sig(e.estimate, 12), format_sig(e.std_error, 4), format_sig(z, 4)),
        );
    }
    if method == PricingMethod::Closed {
        let mut worst = 0.0f64;
        for k in 1..m.n() {
            for s in [0.01, 0.03, 0.05] {
                let c = CapletSpec::new(k, s)?;
                let a = caplet_price(m, &c, PricingMethod::Fourier, &cfg.quad)?.price;
                let b = caplet_price(m, &c, PricingMethod::Closed, &cfg.quad)?.price;
                worst = worst.max((a - b).abs() / b.max(1e-300));
            }
        }
        all &= check(&mut r, worst <= 1e-6, "fourier_vs_closed", format!("max relative gap {}", format_sig(worst, 4)));
    }
    Ok(Outcome { text: r, passed: all })
}
