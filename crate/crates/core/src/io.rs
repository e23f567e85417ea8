//! Serialization, configuration files and parameter-plane rendering.
//!
//! Floats are written in shortest round-trip form. JSON keys come out in
//! declaration order. Any NaN or infinity in a report is an error, never a
//! `null`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::certify::{classify_with, Certificate, Classification, ClassifyConfig, CycleCertificate, Disk, TrapBallCertificate, Verdict};
use crate::orbit::{ExpMap, ExpParameter, DEFAULT_ESCAPE_RE};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("report contains a non-finite number at {0}")]
    NonFinite(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid render spec: {0}")]
    InvalidRender(String),
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),
}

/// serde_json maps non-finite floats to `null`; since reports never carry
/// optional nulls, any `null` marks a NaN or infinity.
fn find_null(v: &Value, path: &mut String) -> bool {
    match v {
        Value::Null => true,
        Value::Array(a) => a.iter().enumerate().any(|(i, x)| {
            let len = path.len();
            let _ = write!(path, "[{i}]");
            let found = find_null(x, path);
            if !found {
                path.truncate(len);
            }
            found
        }),
        Value::Object(m) => m.iter().any(|(k, x)| {
            let len = path.len();
            let _ = write!(path, ".{k}");
            let found = find_null(x, path);
            if !found {
                path.truncate(len);
            }
            found
        }),
        _ => false,
    }
}

pub fn to_checked_value<T: Serialize>(report: &T) -> Result<Value, IoError> {
    let v = serde_json::to_value(report)?;
    let mut path = String::from("$");
    if find_null(&v, &mut path) {
        return Err(IoError::NonFinite(path));
    }
    Ok(v)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(report: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(&to_checked_value(report)?)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize, W: Write>(report: &T, mut out: W) -> Result<(), IoError> {
    out.write_all(to_json_string(report)?.as_bytes())?;
    Ok(())
}

/// CSV with a header row taken from the field names of `T`.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for (i, r) in rows.iter().enumerate() {
        let mut path = format!("row {i}");
        if find_null(&serde_json::to_value(r)?, &mut path) {
            return Err(IoError::NonFinite(path));
        }
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to `path`, with `-` meaning stdout-like `fallback`.
pub fn write_to(path: &Path, fallback: &mut dyn Write, bytes: &[u8]) -> Result<(), IoError> {
    if path.as_os_str() == "-" {
        fallback.write_all(bytes)?;
    } else {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Certificates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Cycle,
    Trap,
}

/// Wire form shared by both certificate kinds. Trap certificates are centred
/// at 0 and carry the index `n` instead of a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateJson {
    pub lambda: ExpParameter,
    pub kind: CertificateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub center: Complex64,
    pub rho: f64,
    pub final_center: Complex64,
    pub final_rho: f64,
    pub mult_log_mod: f64,
}

impl From<&Certificate> for CertificateJson {
    fn from(c: &Certificate) -> Self {
        match c {
            Certificate::Cycle(c) => Self {
                lambda: c.lambda,
                kind: CertificateKind::Cycle,
                period: Some(c.period),
                n: None,
                center: c.disk.center,
                rho: c.disk.radius,
                final_center: c.final_disk.center,
                final_rho: c.final_disk.radius,
                mult_log_mod: c.multiplier_log_mod,
            },
            Certificate::Trap(t) => Self {
                lambda: t.lambda,
                kind: CertificateKind::Trap,
                period: None,
                n: Some(t.n),
                center: Complex64::new(0.0, 0.0),
                rho: t.rho,
                final_center: t.final_disk.center,
                final_rho: t.final_disk.radius,
                mult_log_mod: t.contraction_log_mod,
            },
        }
    }
}

impl TryFrom<CertificateJson> for Certificate {
    type Error = IoError;

    /// The landing depth of a trap certificate is not on the wire; it is
    /// recomputed from the singular orbit.
    fn try_from(j: CertificateJson) -> Result<Self, IoError> {
        let bad = |m: &str| IoError::InvalidCertificate(m.into());
        let final_disk = Disk { center: j.final_center, radius: j.final_rho };
        match (j.kind, j.period, j.n) {
            (CertificateKind::Cycle, Some(period), None) if period >= 1 => Ok(Certificate::Cycle(CycleCertificate {
                lambda: j.lambda,
                period,
                disk: Disk { center: j.center, radius: j.rho },
                final_disk,
                multiplier_log_mod: j.mult_log_mod,
            })),
            (CertificateKind::Trap, None, Some(n)) => {
                if j.center != Complex64::new(0.0, 0.0) {
                    return Err(bad("trap ball must be centred at 0"));
                }
                let map = ExpMap::new(j.lambda);
                let xi_n = (0..n).fold(Complex64::new(0.0, 0.0), |z, _| map.eval(z));
                Ok(Certificate::Trap(TrapBallCertificate {
                    lambda: j.lambda,
                    n,
                    landing_re: xi_n.re,
                    rho: j.rho,
                    final_disk,
                    contraction_log_mod: j.mult_log_mod,
                }))
            }
            _ => Err(bad("cycle needs `period`, trap needs `n`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationJson {
    pub lambda: ExpParameter,
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateJson>,
}

impl From<&Classification> for ClassificationJson {
    fn from(c: &Classification) -> Self {
        let (period, certificate) = match &c.verdict {
            Verdict::Hyperbolic { period, certificate } => (Some(*period), Some(certificate.into())),
            _ => (None, None),
        };
        Self { lambda: c.lambda, verdict: c.verdict.name(), period, iterations: c.iterations_used, certificate }
    }
}

// ---------------------------------------------------------------------------
// Config

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub x_escape_re: f64,
    pub n_max: usize,
    pub p_max: usize,
    pub transient: usize,
    pub eps_cycle_rel: f64,
    pub newton_tol: f64,
    pub trap_rho_factor: f64,
    pub seed: u64,
    pub samples: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            x_escape_re: DEFAULT_ESCAPE_RE,
            n_max: 100_000,
            p_max: 512,
            transient: 10_000,
            eps_cycle_rel: 1e-9,
            newton_tol: 1e-12,
            trap_rho_factor: 0.25,
            seed: 1,
            samples: 1000,
        }
    }
}

pub const CONFIG_ENV: &str = "EXPDYN_CONFIG";

const CONFIG_KEYS: [&str; 9] = [
    "x_escape_re",
    "n_max",
    "p_max",
    "transient",
    "eps_cycle_rel",
    "newton_tol",
    "trap_rho_factor",
    "seed",
    "samples",
];

impl Config {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| IoError::Config { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(err(format!("duplicate key `{k}`")));
            }
            cfg.set(k, v).map_err(err)?;
        }
        cfg.validate().map_err(|msg| IoError::Config { line: 0, msg })?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value `{v}` for `{k}`"))
        }
        match key {
            "x_escape_re" => self.x_escape_re = num(key, value)?,
            "n_max" => self.n_max = num(key, value)?,
            "p_max" => self.p_max = num(key, value)?,
            "transient" => self.transient = num(key, value)?,
            "eps_cycle_rel" => self.eps_cycle_rel = num(key, value)?,
            "newton_tol" => self.newton_tol = num(key, value)?,
            "trap_rho_factor" => self.trap_rho_factor = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        let reals = [self.x_escape_re, self.eps_cycle_rel, self.newton_tol, self.trap_rho_factor];
        let ints = [self.n_max, self.p_max, self.transient, self.samples];
        if reals.iter().all(|r| r.is_finite() && *r > 0.0) && ints.iter().all(|&n| n > 0) {
            Ok(())
        } else {
            Err("all config values must be positive".into())
        }
    }

    pub fn serialize(&self) -> String {
        let vals = [
            format!("{:?}", self.x_escape_re),
            self.n_max.to_string(),
            self.p_max.to_string(),
            self.transient.to_string(),
            format!("{:?}", self.eps_cycle_rel),
            format!("{:?}", self.newton_tol),
            format!("{:?}", self.trap_rho_factor),
            self.seed.to_string(),
            self.samples.to_string(),
        ];
        CONFIG_KEYS.iter().zip(vals).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Defaults, overlaid with the file named by `EXPDYN_CONFIG` if set.
    pub fn from_env() -> Result<Self, IoError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn classify_config(&self) -> ClassifyConfig {
        ClassifyConfig {
            budget: self.n_max,
            p_max: self.p_max,
            transient: self.transient,
            eps_rel: self.eps_cycle_rel,
            newton_tol: self.newton_tol,
            trap_rho_factor: self.trap_rho_factor,
            escape_re: self.x_escape_re,
            ..ClassifyConfig::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub escape: Rgb,
    pub undecided: Rgb,
    /// Hyperbolic colours, indexed by `(period - 1) % len`.
    pub periods: Vec<Rgb>,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            escape: [0, 0, 0],
            undecided: [128, 128, 128],
            periods: vec![
                [230, 60, 60],
                [60, 160, 230],
                [80, 200, 90],
                [240, 190, 40],
                [170, 90, 220],
                [40, 200, 190],
                [240, 120, 30],
                [220, 90, 160],
            ],
        }
    }
}

impl Palette {
    pub fn color(&self, v: &Verdict) -> Rgb {
        match v {
            Verdict::Hyperbolic { period, .. } => self.periods[(period.max(&1) - 1) % self.periods.len()],
            Verdict::EscapeSuspect => self.escape,
            Verdict::Undecided => self.undecided,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub rect: (f64, f64, f64, f64),
    pub px: (usize, usize),
    pub palette: Palette,
}

impl RenderSpec {
    pub fn new(rect: (f64, f64, f64, f64), px: (usize, usize)) -> Self {
        Self { rect, px, palette: Palette::default() }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let (x0, y0, x1, y1) = self.rect;
        if !(x0 < x1 && y0 < y1) || self.px.0 < 1 || self.px.1 < 1 || self.palette.periods.is_empty() {
            return Err(IoError::InvalidRender("need x0 < x1, y0 < y1, width and height >= 1".into()));
        }
        Ok(())
    }

    /// Parameter at the centre of pixel `(col, row)`; row 0 is the top.
    pub fn pixel_center(&self, col: usize, row: usize) -> Complex64 {
        let (x0, y0, x1, y1) = self.rect;
        let (w, h) = (self.px.0 as f64, self.px.1 as f64);
        Complex64::new(x0 + (x1 - x0) * (col as f64 + 0.5) / w, y1 - (y1 - y0) * (row as f64 + 0.5) / h)
    }
}

/// Binary PPM (P6). A pixel whose centre is exactly `λ = 0` gets the
/// escape colour.
pub fn render_parameter_plane(cfg: &Config, spec: &RenderSpec) -> Result<Vec<u8>, IoError> {
    spec.validate()?;
    let ccfg = cfg.classify_config();
    let (w, h) = spec.px;
    let pixels: Vec<Rgb> = (0..w * h)
        .into_par_iter()
        .map(|i| match ExpParameter::new(spec.pixel_center(i % w, i / w)) {
            Ok(p) => spec.palette.color(&classify_with(p, &ccfg).verdict),
            Err(_) => spec.palette.escape,
        })
        .collect();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for p in pixels {
        out.extend_from_slice(&p);
    }
    Ok(out)
}
