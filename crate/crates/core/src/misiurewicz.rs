//! Misiurewicz parameters: the singular orbit `ξ_n(λ) = f_λ^n(0)` lands on a
//! repelling cycle after finitely many steps.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::divisors;
use crate::orbit::{ExpMap, ExpParameter, DEFAULT_ESCAPE_RE};
use crate::rng::SplitMix64;

/// Newton iterations allowed in parameter space.
const NEWTON_STEPS: usize = 100;
/// Step halvings per Newton step when `|G|` does not decrease.
const MAX_HALVINGS: usize = 8;
/// Re-synchronise verification once the allowed drift passes this (relative).
const RESYNC_DRIFT: f64 = 1e-6;
/// Longest block searched for the expansion constant `n₀`.
const N0_SEARCH: usize = 64;

pub const DEFAULT_HORIZON: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MisiurewiczError {
    #[error("singular orbit escapes right at index {index}")]
    EscapedRight { index: usize },
    #[error("Newton iteration in parameter space did not converge")]
    NoConvergence,
    #[error("target cycle is not repelling (multiplier log-modulus {0})")]
    NotRepelling(f64),
    #[error("|lambda| = {0} does not exceed 1/e")]
    BelowModulusBound(f64),
    #[error("verification failed at orbit index {index}: {reason}")]
    VerificationFailed { index: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `ξ_k(λ)` and `∂ξ_k/∂λ` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterOrbit {
    pub lambda: ExpParameter,
    pub xi: Vec<Complex64>,
    pub dxi: Vec<Complex64>,
    /// Set when the orbit was cut short because `ℜ ξ_index` passed the escape
    /// threshold; `xi` then ends at that index.
    pub escaped_at: Option<usize>,
}

/// Like [`xi_orbit`] but returns the truncated orbit instead of an error.
pub fn xi_orbit_truncated(p: ExpParameter, n: usize) -> ParameterOrbit {
    let lambda = p.value();
    let mut xi = Vec::with_capacity(n + 1);
    let mut dxi = Vec::with_capacity(n + 1);
    xi.push(Complex64::new(0.0, 0.0));
    dxi.push(Complex64::new(0.0, 0.0));
    let mut escaped_at = None;
    for k in 0..n {
        let (x, d) = (xi[k], dxi[k]);
        if !(x.re <= DEFAULT_ESCAPE_RE) {
            escaped_at = Some(k);
            break;
        }
        let e = x.exp();
        xi.push(lambda * e);
        dxi.push(e * (1.0 + lambda * d));
    }
    ParameterOrbit { lambda: p, xi, dxi, escaped_at }
}

pub fn xi_orbit(p: ExpParameter, n: usize) -> Result<ParameterOrbit, MisiurewiczError> {
    let orbit = xi_orbit_truncated(p, n);
    match orbit.escaped_at {
        Some(index) => Err(MisiurewiczError::EscapedRight { index }),
        None => Ok(orbit),
    }
}

/// Evidence that `ξ_{k+p}(λ) = ξ_k(λ)` with a repelling `p`-cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisiurewiczCertificate {
    pub lambda: ExpParameter,
    pub preperiod: usize,
    pub period: usize,
    /// `|ξ_{k+p} - ξ_k|`.
    pub residual: f64,
    #[serde(rename = "mult_log_mod")]
    pub cycle_mult_log_mod: f64,
    /// `max |ξ_j|` over the horizon.
    #[serde(rename = "ps_bound")]
    pub postsingular_bound: f64,
}

impl MisiurewiczCertificate {
    /// The postsingular points `ξ_0, …, ξ_{k+p-1}`, including the base point 0.
    pub fn postsingular_points(&self) -> Vec<Complex64> {
        let mut xi = xi_orbit_truncated(self.lambda, self.preperiod + self.period - 1).xi;
        xi.truncate(self.preperiod + self.period);
        xi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub horizon: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { horizon: DEFAULT_HORIZON }
    }
}

fn residual_and_slope(p: ExpParameter, k: usize, period: usize) -> Option<(Complex64, Complex64)> {
    let o = xi_orbit(p, k + period).ok()?;
    let g = o.xi[k + period] - o.xi[k];
    let dg = o.dxi[k + period] - o.dxi[k];
    (g.is_finite() && dg.is_finite()).then_some((g, dg))
}

pub fn solve_misiurewicz(
    seed: ExpParameter,
    k: usize,
    p: usize,
    tol: f64,
) -> Result<MisiurewiczCertificate, MisiurewiczError> {
    solve_misiurewicz_with(seed, k, p, tol, &SolveOptions::default())
}

/// Damped Newton on `G(λ) = ξ_{k+p}(λ) - ξ_k(λ)`.
pub fn solve_misiurewicz_with(
    seed: ExpParameter,
    k: usize,
    p: usize,
    tol: f64,
    opts: &SolveOptions,
) -> Result<MisiurewiczCertificate, MisiurewiczError> {
    if k < 1 || p < 1 {
        return Err(MisiurewiczError::InvalidArgument("preperiod and period must be at least 1".into()));
    }
    if opts.horizon < k + p {
        return Err(MisiurewiczError::InvalidArgument("horizon must be at least k+p".into()));
    }
    let lambda = newton(seed, k, p, tol, &mut Vec::new()).ok_or(MisiurewiczError::NoConvergence)?;
    certify_solution(lambda, k, p, tol)
}

/// Residuals `|G(λ_i)|` of the Newton iterates used by [`solve_misiurewicz`].
pub fn newton_residuals(seed: ExpParameter, k: usize, p: usize, tol: f64) -> Vec<f64> {
    let mut trace = Vec::new();
    newton(seed, k, p, tol, &mut trace);
    trace
}

fn newton(seed: ExpParameter, k: usize, p: usize, tol: f64, trace: &mut Vec<f64>) -> Option<ExpParameter> {
    let mut lam = seed;
    let (mut g, mut dg) = residual_and_slope(lam, k, p)?;
    for _ in 0..NEWTON_STEPS {
        trace.push(g.norm());
        if g.norm() < tol {
            return Some(lam);
        }
        if dg.norm() == 0.0 {
            return None;
        }
        let full = g / dg;
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..=MAX_HALVINGS {
            if let Ok(cand) = ExpParameter::new(lam.value() - full * t) {
                if let Some((g2, dg2)) = residual_and_slope(cand, k, p) {
                    let better = g2.norm() < g.norm();
                    next = Some((cand, g2, dg2));
                    if better {
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let (cand, g2, dg2) = next?;
        if cand == lam {
            // Step below the resolution of λ: this is as close as f64 gets.
            return (g2.norm() < tol).then_some(lam);
        }
        (lam, g, dg) = (cand, g2, dg2);
    }
    (g.norm() < tol).then_some(lam)
}

/// Relabels with the minimal `(k, p)`, then checks the repelling multiplier,
/// `|λ| > 1/e` and the postsingular bound.
fn certify_solution(
    lambda: ExpParameter,
    k: usize,
    p: usize,
    tol: f64,
) -> Result<MisiurewiczCertificate, MisiurewiczError> {
    let o = xi_orbit(lambda, k + p).map_err(|_| MisiurewiczError::NoConvergence)?;
    let residual = (o.xi[k + p] - o.xi[k]).norm();
    if !(residual < tol) {
        return Err(MisiurewiczError::NoConvergence);
    }
    let same = |a: Complex64, b: Complex64| (a - b).norm() <= tol.max(16.0 * residual);
    let period = divisors(p)
        .into_iter()
        .find(|&d| same(o.xi[k + d], o.xi[k]))
        .unwrap_or(p);
    let preperiod = (1..=k).find(|&j| same(o.xi[j + period], o.xi[j])).unwrap_or(k);
    let residual = (o.xi[preperiod + period] - o.xi[preperiod]).norm();

    let map = ExpMap::new(lambda);
    let mult: f64 = (0..period).map(|j| map.log_mod_lambda() + o.xi[preperiod + j].re).sum();
    if !(mult > 0.0) {
        return Err(MisiurewiczError::NotRepelling(mult));
    }
    let modulus = lambda.value().norm();
    if !(modulus > (-1.0f64).exp()) {
        return Err(MisiurewiczError::BelowModulusBound(modulus));
    }
    let ps_bound = o.xi[..preperiod + period].iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(MisiurewiczCertificate {
        lambda,
        preperiod,
        period,
        residual,
        cycle_mult_log_mod: mult,
        postsingular_bound: ps_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// `|ξ_{k+p} - ξ_k|` recomputed from scratch: the drift accumulated in one
    /// period from the cycle point.
    pub drift_per_period: f64,
    pub max_drift: f64,
    pub periods_checked: usize,
    pub resyncs: usize,
}

/// Re-iterates the singular orbit and follows it around the cycle up to
/// `horizon`. The drift after `j` periods may grow like the multiplier
/// `μ^j` times the per-period round-off; once that allowance becomes large the
/// orbit is snapped back onto the recomputed cycle point.
pub fn verify_misiurewicz(
    cert: &MisiurewiczCertificate,
    horizon: usize,
) -> Result<VerificationReport, MisiurewiczError> {
    let (k, p) = (cert.preperiod, cert.period);
    if k < 1 || p < 1 || horizon < k + p {
        return Err(MisiurewiczError::InvalidArgument("need k, p >= 1 and horizon >= k+p".into()));
    }
    let fail = |index: usize, reason: String| Err(MisiurewiczError::VerificationFailed { index, reason });
    let modulus = cert.lambda.value().norm();
    if !(modulus > (-1.0f64).exp()) {
        return fail(0, format!("|lambda| = {modulus} <= 1/e"));
    }
    if !cert.postsingular_bound.is_finite() {
        return fail(0, "postsingular bound is not finite".into());
    }
    let map = ExpMap::new(cert.lambda);
    let o = xi_orbit(cert.lambda, k + p).map_err(|e| match e {
        MisiurewiczError::EscapedRight { index } => MisiurewiczError::VerificationFailed {
            index,
            reason: "singular orbit escapes right".into(),
        },
        e => e,
    })?;
    let anchor = o.xi[k];
    let mult: f64 = (0..p).map(|j| map.log_mod_lambda() + o.xi[k + j].re).sum();
    if !(mult > 0.0) {
        return fail(k, format!("cycle multiplier log-modulus {mult} is not repelling"));
    }
    let ps = o.xi[..k + p].iter().map(|z| z.norm()).fold(0.0, f64::max);
    if ps > cert.postsingular_bound * (1.0 + 1e-9) + 1e-12 {
        return fail(k + p, format!("postsingular modulus {ps} exceeds recorded bound"));
    }

    let scale = anchor.norm().max(1.0);
    let floor = cert.residual.max(4.0 * f64::EPSILON * scale);
    let mu = mult.exp();
    let mut allowance_unit = 1.0;
    let mut w = anchor;
    let mut report = VerificationReport {
        drift_per_period: (o.xi[k + p] - anchor).norm(),
        max_drift: 0.0,
        periods_checked: 0,
        resyncs: 0,
    };
    let mut index = k;
    while index + p <= horizon {
        for _ in 0..p {
            match map.step(w) {
                Ok(next) => w = next,
                Err(_) => return fail(index, "orbit escapes right".into()),
            }
            index += 1;
        }
        report.periods_checked += 1;
        let drift = (w - anchor).norm();
        report.max_drift = report.max_drift.max(drift);
        if !(drift <= 10.0 * floor * allowance_unit) {
            return fail(index, format!("drift {drift:e} exceeds allowance {:e}", 10.0 * floor * allowance_unit));
        }
        allowance_unit = allowance_unit * mu + 1.0;
        if 10.0 * floor * allowance_unit > RESYNC_DRIFT * scale {
            w = anchor;
            allowance_unit = 1.0;
            report.resyncs += 1;
        }
    }
    Ok(report)
}

/// A sampled counterexample to a fitted constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub index: usize,
    pub z: [f64; 2],
    pub k: usize,
    pub check: String,
    pub value: f64,
}

/// Empirical versions of the expansion constants around a Misiurewicz
/// parameter, fitted on `samples` points drawn uniformly from `B(0, R)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatedConstants {
    /// `|f^k(z)| ≥ M_hat` implies `|Df^k(z)| > 3` on every sample.
    #[serde(rename = "M_hat")]
    pub m_hat: f64,
    /// Largest `β₁` with `|Df^k(z)| ≥ β₁ inf_{1≤j≤k} |f^j(z)|`, as a log.
    pub log_beta1_hat: f64,
    pub beta1_hat: f64,
    /// Every sample reaches `|Df^j(z)| > 3` with `j ≤ N_hat + c_hat |log|f(z)||`.
    #[serde(rename = "N_hat")]
    pub n_hat: usize,
    pub c_hat: f64,
    /// `|Df^{n0_hat}| > exp(alpha_hat)` on the postsingular points.
    pub alpha_hat: f64,
    pub n0_hat: usize,
    pub samples: usize,
    pub degenerate: bool,
    pub violations: Vec<SampleRecord>,
}

struct SampleStats {
    /// Largest `|f^k(z)|` among pairs with `|Df^k(z)| ≤ 3`.
    worst_small_deriv_mod: f64,
    /// `min_k (ln|Df^k| - ln inf_{j≤k}|f^j|)`.
    log_beta1: f64,
    /// First `j` with `|Df^j(z)| > 3`.
    first_expanding: Option<usize>,
    /// `|ln|f(z)||`.
    log_f: f64,
    nonfinite_at: Option<usize>,
    z: Complex64,
}

fn sample_stats(map: &ExpMap, z: Complex64, k_max: usize) -> SampleStats {
    let ln3 = 3f64.ln();
    let mut s = SampleStats {
        worst_small_deriv_mod: 0.0,
        log_beta1: f64::INFINITY,
        first_expanding: None,
        log_f: (map.log_mod_lambda() + z.re).abs(),
        nonfinite_at: None,
        z,
    };
    let mut min_log_mod = f64::INFINITY;
    for (k, w, c) in map.orbit(z) {
        if k == 0 {
            continue;
        }
        if !(w.is_finite() && c.log_mod.is_finite()) {
            s.nonfinite_at = Some(k);
            break;
        }
        let log_w = w.norm().ln();
        min_log_mod = min_log_mod.min(log_w);
        if c.log_mod <= ln3 {
            s.worst_small_deriv_mod = s.worst_small_deriv_mod.max(w.norm());
        } else if s.first_expanding.is_none() {
            s.first_expanding = Some(k);
        }
        s.log_beta1 = s.log_beta1.min(c.log_mod - min_log_mod);
        if k >= k_max {
            break;
        }
    }
    s
}

/// Fits the constants; `violations` lists every sample the fitted family does
/// not cover (non-finite orbits, and samples with no expanding index within
/// `k_max` although `N_hat + c_hat |log|f(z)|| < k_max`).
pub fn estimate_constants(
    base: &MisiurewiczCertificate,
    samples: usize,
    region_radius: f64,
    k_max: usize,
    seed: u64,
) -> EstimatedConstants {
    let map = ExpMap::new(base.lambda);
    let (n0_hat, alpha_hat) = postsingular_expansion(&map, &base.postsingular_points());
    let stats: Vec<SampleStats> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let z = SplitMix64::for_sample(seed, i as u64).in_disk(Complex64::new(0.0, 0.0), region_radius);
            sample_stats(&map, z, k_max.max(1))
        })
        .collect();

    let m_hat = stats.iter().map(|s| s.worst_small_deriv_mod).fold(0.0, f64::max);
    let m_hat = if m_hat > 0.0 { m_hat * (1.0 + 4.0 * f64::EPSILON) } else { 0.0 };
    let log_beta1_hat = stats.iter().map(|s| s.log_beta1).fold(f64::INFINITY, f64::min);
    let log_beta1_hat = if log_beta1_hat.is_finite() { log_beta1_hat } else { 0.0 };

    // N is set by the samples with |log|f(z)|| ≤ 1; c then covers the rest.
    let n_hat = stats
        .iter()
        .filter(|s| s.log_f <= 1.0)
        .filter_map(|s| s.first_expanding)
        .max()
        .unwrap_or(0);
    let c_hat = stats
        .iter()
        .filter_map(|s| s.first_expanding.map(|j| (j, s.log_f)))
        .filter(|&(j, l)| j > n_hat && l > 0.0)
        .map(|(j, l)| (j - n_hat) as f64 / l)
        .fold(0.0, f64::max);

    let mut violations = Vec::new();
    for (index, s) in stats.iter().enumerate() {
        let z = [s.z.re, s.z.im];
        if let Some(k) = s.nonfinite_at {
            violations.push(SampleRecord { index, z, k, check: "finite".into(), value: f64::MAX });
        } else if s.first_expanding.is_none() && (n_hat as f64 + c_hat * s.log_f) < k_max as f64 {
            violations.push(SampleRecord { index, z, k: k_max, check: "hyp".into(), value: s.log_f });
        }
    }
    EstimatedConstants {
        m_hat,
        log_beta1_hat,
        beta1_hat: log_beta1_hat.exp(),
        n_hat,
        c_hat,
        alpha_hat,
        n0_hat,
        samples,
        degenerate: samples == 0,
        violations,
    }
}

/// Smallest `n₀ ≥ 1` with `min_w ln|Df^{n₀}(w)| > 0` over the postsingular
/// points, and that minimum as `α`. Returns `(0, 0)` if none is found.
fn postsingular_expansion(map: &ExpMap, points: &[Complex64]) -> (usize, f64) {
    for n0 in 1..=N0_SEARCH {
        let alpha = points
            .iter()
            .map(|&w| {
                map.orbit(w)
                    .take(n0 + 1)
                    .last()
                    .filter(|&(k, _, _)| k == n0)
                    .map_or(f64::NEG_INFINITY, |(_, _, c)| c.log_mod)
            })
            .fold(f64::INFINITY, f64::min);
        if alpha > 0.0 {
            return (n0, alpha);
        }
    }
    (0, 0.0)
}
