//! The `expdyn` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numeric failure (including a
//! certification command that ends without a certificate) or I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::certify::{classify_with, Disk};
use crate::density::{density_sweep_detailed, AnnulusTemplate, DensityError, DensitySweepConfig};
use crate::io::{render_parameter_plane, to_json_string, write_csv, write_to, ClassificationJson, Config, IoError, RenderSpec};
use crate::measure::{
    cascade_to_right, deep_left_stats, entry_samples, summarize_entries, DeepLeftThresholds, EntryStatsConfig, MeasureError, SampleDomain, DEFAULT_M_WORK,
};
use crate::misiurewicz::{estimate_constants, solve_misiurewicz_with, SolveOptions, DEFAULT_HORIZON};
use crate::orbit::{iterate_orbit, ExpParameter, GridSquare, HalfPlane};
use crate::transfer::{build_backward_orbit, conjugacy_residual, transfer_backward_orbit, TransferResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Config { .. } | IoError::InvalidRender(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

type Outcome = Result<i32, Failure>;

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected RE,IM, got `{s}`"))?;
    let re: f64 = a.trim().parse().map_err(|_| format!("bad real part `{a}`"))?;
    let im: f64 = b.trim().parse().map_err(|_| format!("bad imaginary part `{b}`"))?;
    if !(re.is_finite() && im.is_finite()) {
        return Err("components must be finite".into());
    }
    Ok(Complex64::new(re, im))
}

fn parse_param(s: &str) -> Result<ExpParameter, String> {
    ExpParameter::new(parse_complex(s)?).map_err(|e| e.to_string())
}

fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")).and_then(finite))
        .collect()
}

fn finite(x: f64) -> Result<f64, String> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err("value must be finite".into())
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("bad number `{s}`")).and_then(finite)
}

/// Non-negative integer; accepts `100000` and `1e5`.
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= 1e15 => Ok(x as usize),
        _ => Err(format!("expected a non-negative integer, got `{s}`")),
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A,B, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<T>().map_err(|_| format!("bad component `{t}`"));
    Ok((p(a)?, p(b)?))
}

/// Comma-separated list, parsed as one argument.
#[derive(Debug, Clone)]
struct Radii(Vec<f64>);

fn parse_radii(s: &str) -> Result<Radii, String> {
    parse_reals(s).map(Radii)
}

fn parse_rect(s: &str) -> Result<(f64, f64, f64, f64), String> {
    match parse_reals(s)?.as_slice() {
        &[a, b, c, d] => Ok((a, b, c, d)),
        _ => Err("expected X0,Y0,X1,Y1".into()),
    }
}

#[derive(Parser, Debug)]
#[command(name = "expdyn", version, about = "Experiments on the exponential family z -> lambda*exp(z)")]
struct Cli {
    /// Config file (`key = value` lines); overrides EXPDYN_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Budget {
    /// Iterations of the singular orbit per classification (config `n_max`).
    #[arg(long, value_parser = parse_count)]
    budget: Option<usize>,
    /// Longest cycle period searched (config `p_max`).
    #[arg(long, value_parser = parse_count)]
    p_max: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify an attracting cycle for one parameter.
    Classify {
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        lambda: ExpParameter,
        /// Write the JSON result here (`-` for stdout); stdout by default.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Solve for a parameter with preperiodic singular value.
    Misiurewicz {
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        seed: ExpParameter,
        #[arg(long, value_parser = parse_count)]
        preperiod: usize,
        #[arg(long, value_parser = parse_count)]
        period: usize,
        #[arg(long, default_value_t = 1e-12, value_parser = parse_real)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_HORIZON, value_parser = parse_count)]
        horizon: usize,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Fraction of certified-hyperbolic parameters in shrinking balls or annuli.
    Density {
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        center: ExpParameter,
        #[arg(long, value_parser = parse_radii)]
        radii: Radii,
        /// Samples per radius (config `samples`).
        #[arg(long, value_parser = parse_count)]
        samples: Option<usize>,
        #[arg(long)]
        annulus: bool,
        #[arg(long, requires = "annulus", value_parser = parse_real)]
        gamma: Option<f64>,
        #[arg(long, requires = "annulus", value_parser = parse_count)]
        sectors: Option<usize>,
        /// RNG seed (config `seed`).
        #[arg(long)]
        rng_seed: Option<u64>,
        #[command(flatten)]
        budget: Budget,
        /// Per-sample CSV dump.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// First entry into the right half-plane from a grid over a disk.
    EntryStats {
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        lambda0: ExpParameter,
        #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, value_parser = parse_count)]
        grid: usize,
        #[arg(long, value_parser = parse_count)]
        tmax: usize,
        #[command(flatten)]
        disk: DiskArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Deep entries into the left half-plane from a grid over a disk.
    DeepLeft {
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        lambda0: ExpParameter,
        #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
        x: f64,
        #[arg(long = "L1", value_parser = parse_real, allow_hyphen_values = true)]
        l1: f64,
        #[arg(long = "L2", value_parser = parse_real, allow_hyphen_values = true)]
        l2: f64,
        #[arg(long, default_value_t = 100, value_parser = parse_count)]
        grid: usize,
        #[arg(long, default_value_t = 100_000, value_parser = parse_count)]
        tmax: usize,
        #[command(flatten)]
        disk: DiskArgs,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Transfer a backward orbit of lambda1 to lambda2.
    Transfer {
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        lambda1: ExpParameter,
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        lambda2: ExpParameter,
        /// `z_0`; the backward orbit is the reversed forward orbit of this point.
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        start: Complex64,
        #[arg(long, value_parser = parse_count)]
        n: usize,
        /// CSV of k, |y_k - z_k|, |z_k|.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Empirical expansion constants near a Misiurewicz parameter.
    Constants {
        /// Seed for the Misiurewicz solve.
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        lambda0: ExpParameter,
        #[arg(long, value_parser = parse_count)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 1, value_parser = parse_count)]
        preperiod: usize,
        #[arg(long, default_value_t = 1, value_parser = parse_count)]
        period: usize,
        #[arg(long, default_value_t = 10.0, value_parser = parse_real)]
        radius: f64,
        #[arg(long, default_value_t = 1000, value_parser = parse_count)]
        k_max: usize,
        #[arg(long)]
        rng_seed: Option<u64>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Follow the rightward cascade of grid squares.
    Cascade {
        #[arg(long, value_parser = parse_param, allow_hyphen_values = true)]
        lambda0: ExpParameter,
        /// Imaginary and real lattice indices of the starting square.
        #[arg(long, value_parser = parse_pair::<i64>, allow_hyphen_values = true)]
        square: (i64, i64),
        #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, default_value_t = 64, value_parser = parse_count)]
        k_max: usize,
        #[arg(long, default_value_t = DEFAULT_M_WORK, value_parser = parse_real)]
        m_work: f64,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Colour the parameter plane by classification verdict and period.
    Render {
        #[arg(long, value_parser = parse_rect, allow_hyphen_values = true)]
        rect: (f64, f64, f64, f64),
        #[arg(long, value_parser = parse_pair::<usize>)]
        px: (usize, usize),
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        budget: Budget,
    },
}

#[derive(Args, Debug)]
struct DiskArgs {
    /// Centre of the sampled disk.
    #[arg(long = "disk-center", default_value = "0,0", value_parser = parse_complex, allow_hyphen_values = true)]
    disk_center: Complex64,
    #[arg(long = "disk-radius", default_value_t = 1.0, value_parser = parse_real)]
    disk_radius: f64,
}

impl DiskArgs {
    fn disk(&self) -> Result<Disk, Failure> {
        if !(self.disk_radius > 0.0) {
            return Err(Failure::Invalid("disk radius must be positive".into()));
        }
        Ok(Disk { center: self.disk_center, radius: self.disk_radius })
    }
}

impl Budget {
    fn apply(&self, cfg: &mut Config) {
        if let Some(b) = self.budget {
            cfg.n_max = b;
        }
        if let Some(p) = self.p_max {
            cfg.p_max = p;
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code. Reports go to `out` unless a path is given; diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_INVALID;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Config::load(p),
        None => Config::from_env(),
    }
    .map_err(|e| Failure::Invalid(format!("config: {e}")))
}

fn emit<T: Serialize>(report: &T, path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let s = to_json_string(report)?;
    write_to(path, out, s.as_bytes())?;
    Ok(())
}

fn emit_csv<T: Serialize>(rows: &[T], path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    write_to(path, out, &buf)?;
    Ok(())
}

fn validated(cfg: Config) -> Result<Config, Failure> {
    cfg.validate().map_err(Failure::Invalid)?;
    Ok(cfg)
}

fn measure_failure(e: MeasureError) -> Failure {
    match e {
        MeasureError::InvalidConfig(_) | MeasureError::OutsideWorkingRegion { .. } => Failure::Invalid(e.to_string()),
        _ => Failure::Numeric(e.to_string()),
    }
}

#[derive(Serialize)]
struct DensityCsvRow {
    radius: f64,
    lambda_re: f64,
    lambda_im: f64,
    verdict: &'static str,
    period: usize,
    iterations: usize,
}

#[derive(Serialize)]
struct EntryCsvRow {
    z_re: f64,
    z_im: f64,
    /// -1 when the orbit did not enter.
    n: i64,
    log_df: f64,
    landing_re: f64,
}

#[derive(Serialize)]
struct TransferCsvRow {
    k: usize,
    dev: f64,
    z_mod: f64,
}

#[derive(Serialize)]
struct TransferReport<'a> {
    result: &'a TransferResult,
    conjugacy_residual: f64,
}

fn execute(cli: Cli, out: &mut dyn Write, _err: &mut dyn Write) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Classify { lambda, json, budget } => {
            budget.apply(&mut cfg);
            let cfg = validated(cfg)?;
            let c = classify_with(lambda, &cfg.classify_config());
            emit(&ClassificationJson::from(&c), json.as_deref().unwrap_or(Path::new("-")), out)?;
            Ok(if c.verdict.is_hyperbolic() { EXIT_OK } else { EXIT_NUMERIC })
        }
        Command::Misiurewicz { seed, preperiod, period, tol, horizon, out: path } => {
            if preperiod < 1 || period < 1 || !(tol > 0.0) || horizon < 1 {
                return Err(Failure::Invalid("preperiod, period, tol and horizon must be positive".into()));
            }
            let cert = solve_misiurewicz_with(seed, preperiod, period, tol, &SolveOptions { horizon })
                .map_err(|e| Failure::Numeric(e.to_string()))?;
            emit(&cert, &path, out)?;
            Ok(EXIT_OK)
        }
        Command::Density { center, radii, samples, annulus, gamma, sectors, rng_seed, budget, csv, out: path } => {
            budget.apply(&mut cfg);
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if let Some(s) = rng_seed {
                cfg.seed = s;
            }
            let cfg = validated(cfg)?;
            let template = annulus.then(|| {
                let d = AnnulusTemplate::default();
                AnnulusTemplate { gamma: gamma.unwrap_or(d.gamma), sectors: sectors.unwrap_or(d.sectors) }
            });
            let sweep = DensitySweepConfig {
                radii: radii.0,
                samples: cfg.samples,
                seed: cfg.seed,
                annulus: template,
                classify: cfg.classify_config(),
            };
            let (report, outcomes) = density_sweep_detailed(center, &sweep).map_err(|e| match e {
                DensityError::InvalidConfig(_) => Failure::Invalid(e.to_string()),
                DensityError::NoSuchN(_) => Failure::Numeric(e.to_string()),
            })?;
            if let Some(p) = csv {
                let rows: Vec<DensityCsvRow> = outcomes
                    .iter()
                    .map(|o| DensityCsvRow {
                        radius: sweep.radii[o.radius_index],
                        lambda_re: o.lambda.value().re,
                        lambda_im: o.lambda.value().im,
                        verdict: o.verdict.name(),
                        period: o.period(),
                        iterations: o.iterations,
                    })
                    .collect();
                emit_csv(&rows, &p, out)?;
            }
            emit(&report, &path, out)?;
            Ok(EXIT_OK)
        }
        Command::EntryStats { lambda0, x, grid, tmax, disk, csv, out: path } => {
            let ecfg = EntryStatsConfig { grid, t_max: tmax, ..EntryStatsConfig::new(x) };
            ecfg.validate().map_err(measure_failure)?;
            let domain = SampleDomain::Disk(disk.disk()?);
            let samples = entry_samples(lambda0, &domain, HalfPlane::right(x), grid, tmax);
            if let Some(p) = csv {
                let rows: Vec<EntryCsvRow> = samples
                    .iter()
                    .map(|s| EntryCsvRow {
                        z_re: s.z.re,
                        z_im: s.z.im,
                        n: s.n.map_or(-1, |n| n as i64),
                        log_df: s.log_df,
                        landing_re: s.landing_re,
                    })
                    .collect();
                emit_csv(&rows, &p, out)?;
            }
            emit(&summarize_entries(&samples, &ecfg), &path, out)?;
            Ok(EXIT_OK)
        }
        Command::DeepLeft { lambda0, x, l1, l2, grid, tmax, disk, out: path } => {
            let ecfg = EntryStatsConfig { grid, t_max: tmax, ..EntryStatsConfig::new(x) };
            let th = DeepLeftThresholds { l1, l2, ..DeepLeftThresholds::at_level(x) };
            let r = deep_left_stats(lambda0, &disk.disk()?, x, &th, &ecfg).map_err(measure_failure)?;
            emit(&r, &path, out)?;
            Ok(EXIT_OK)
        }
        Command::Transfer { lambda1, lambda2, start, n, csv, out: path } => {
            if n < 1 {
                return Err(Failure::Invalid("n must be at least 1".into()));
            }
            let trace = iterate_orbit(lambda1, start, n, None);
            if trace.len_steps() < n {
                return Err(Failure::Numeric(format!("forward orbit stopped after {} steps", trace.len_steps())));
            }
            let b = build_backward_orbit(lambda1, &trace).map_err(|e| Failure::Numeric(e.to_string()))?;
            let r = transfer_backward_orbit(&b, lambda2).map_err(|e| Failure::Numeric(e.to_string()))?;
            if let Some(p) = csv {
                let rows: Vec<TransferCsvRow> = (0..r.y.len())
                    .map(|k| TransferCsvRow { k, dev: (r.y[k] - b.z[k]).norm(), z_mod: b.z[k].norm() })
                    .collect();
                emit_csv(&rows, &p, out)?;
            }
            emit(&TransferReport { result: &r, conjugacy_residual: conjugacy_residual(lambda2, &r) }, &path, out)?;
            Ok(EXIT_OK)
        }
        Command::Constants { lambda0, samples, preperiod, period, radius, k_max, rng_seed, out: path } => {
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if let Some(s) = rng_seed {
                cfg.seed = s;
            }
            let cfg = validated(cfg)?;
            if preperiod < 1 || period < 1 || !(radius > 0.0) || k_max < 1 {
                return Err(Failure::Invalid("preperiod, period, radius and k_max must be positive".into()));
            }
            let base = solve_misiurewicz_with(lambda0, preperiod, period, 1e-12, &SolveOptions::default())
                .map_err(|e| Failure::Numeric(e.to_string()))?;
            emit(&estimate_constants(&base, cfg.samples, radius, k_max, cfg.seed), &path, out)?;
            Ok(EXIT_OK)
        }
        Command::Cascade { lambda0, square, x, k_max, m_work, out: path } => {
            let q = GridSquare { j: square.0, k: square.1 };
            let t = cascade_to_right(lambda0, q, x, k_max, m_work).map_err(measure_failure)?;
            emit(&t, &path, out)?;
            Ok(if t.witness_validated { EXIT_OK } else { EXIT_NUMERIC })
        }
        Command::Render { rect, px, out: path, budget } => {
            budget.apply(&mut cfg);
            let cfg = validated(cfg)?;
            let img = render_parameter_plane(&cfg, &RenderSpec::new(rect, px))?;
            write_to(&path, out, &img)?;
            Ok(EXIT_OK)
        }
    }
}
