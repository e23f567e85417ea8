//! Monte Carlo density of certified-hyperbolic parameters in balls and annuli
//! around a base parameter.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::certify::{classify_with, Certificate, ClassifyConfig, TrapBallCertificate, TrapScreen, Verdict};
use crate::misiurewicz::{xi_orbit_truncated, MisiurewiczCertificate};
use crate::orbit::{DerivativeCocycle, ExpMap, ExpParameter};
use crate::rng::{mix, SplitMix64};

/// Two-sided 95% normal quantile.
pub const WILSON_Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no n up to {0} brings the sector image to the target diameter")]
    NoSuchN(usize),
}

/// `A(λ₀; γr, r)` split into `sectors` congruent pieces by rays at angles
/// `2jπ/sectors`. `gamma = 0` gives the full disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusSpec {
    pub center: ExpParameter,
    pub gamma: f64,
    pub r: f64,
    pub sectors: usize,
}

impl AnnulusSpec {
    pub fn validate(&self) -> Result<(), DensityError> {
        if !(0.0..1.0).contains(&self.gamma) || !(self.r > 0.0) || self.sectors < 1 {
            return Err(DensityError::InvalidConfig("need 0 <= gamma < 1, r > 0, sectors >= 1".into()));
        }
        Ok(())
    }

    pub fn inner(&self) -> f64 {
        self.gamma * self.r
    }

    /// Angular width of one sector.
    pub fn sector_angle(&self) -> f64 {
        TAU / self.sectors as f64
    }

    /// Area-uniform point for the draws `(u, v) ∈ [0,1)²`, with the angle
    /// restricted to `[θ0, θ0 + width)`.
    fn point(&self, u: f64, v: f64, theta0: f64, width: f64) -> ExpParameter {
        let (a, b) = (self.inner(), self.r);
        let rho = (u * (b * b - a * a) + a * a).sqrt();
        let theta = theta0 + width * v;
        let lam = self.center.value() + Complex64::from_polar(rho, theta);
        // λ = 0 needs ρ = |λ₀| exactly; nudge it to the outer radius.
        ExpParameter::new(lam).unwrap_or_else(|_| {
            ExpParameter::new(self.center.value() + Complex64::from_polar(b, theta)).expect("nonzero")
        })
    }
}

/// Sample `i` uses `SplitMix64::for_sample(seed, i)`: first draw for the
/// radius, second for the angle.
pub fn sample_annulus(spec: &AnnulusSpec, count: usize, seed: u64) -> Vec<ExpParameter> {
    sample_region(spec, None, count, seed)
}

/// As [`sample_annulus`], restricted to sector `j` (angles `[2jπ/2K, 2(j+1)π/2K)`).
pub fn sample_sector(spec: &AnnulusSpec, j: usize, count: usize, seed: u64) -> Vec<ExpParameter> {
    sample_region(spec, Some(j), count, seed)
}

fn sample_region(spec: &AnnulusSpec, sector: Option<usize>, count: usize, seed: u64) -> Vec<ExpParameter> {
    let (theta0, width) = match sector {
        Some(j) => (j as f64 * spec.sector_angle(), spec.sector_angle()),
        None => (0.0, TAU),
    };
    (0..count)
        .map(|i| {
            let mut g = SplitMix64::for_sample(seed, i as u64);
            let (u, v) = (g.next_f64(), g.next_f64());
            spec.point(u, v, theta0, width)
        })
        .collect()
}

/// Wilson score interval; the bounds are clamped to contain `k/n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusTemplate {
    pub gamma: f64,
    pub sectors: usize,
}

impl Default for AnnulusTemplate {
    fn default() -> Self {
        Self { gamma: 0.5, sectors: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySweepConfig {
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Annulus sampling instead of ball sampling.
    pub annulus: Option<AnnulusTemplate>,
    /// Budget, `p_max` and tolerances of each classification.
    pub classify: ClassifyConfig,
}

impl DensitySweepConfig {
    pub fn new(radii: Vec<f64>, samples: usize, seed: u64) -> Self {
        Self { radii, samples, seed, annulus: None, classify: ClassifyConfig::default() }
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        if self.samples == 0 {
            return Err(DensityError::InvalidConfig("samples must be positive".into()));
        }
        if self.radii.is_empty() || !self.radii.iter().all(|&r| r > 0.0 && r.is_finite()) {
            return Err(DensityError::InvalidConfig("radii must be positive".into()));
        }
        if !self.radii.windows(2).all(|w| w[1] < w[0]) {
            return Err(DensityError::InvalidConfig("radii must be strictly decreasing".into()));
        }
        if self.classify.budget == 0 || self.classify.p_max == 0 {
            return Err(DensityError::InvalidConfig("budget and p_max must be positive".into()));
        }
        if let Some(a) = self.annulus {
            AnnulusSpec { center: ExpParameter::from_parts(1.0, 0.0).unwrap(), gamma: a.gamma, r: 1.0, sectors: a.sectors }
                .validate()?;
        }
        Ok(())
    }

    /// Sampling region for radius index `i`.
    pub fn region(&self, center: ExpParameter, i: usize) -> AnnulusSpec {
        let t = self.annulus.unwrap_or(AnnulusTemplate { gamma: 0.0, sectors: 1 });
        AnnulusSpec { center, gamma: t.gamma, r: self.radii[i], sectors: t.sectors }
    }

    /// Seed of the sample stream for radius index `i`.
    pub fn radius_seed(&self, i: usize) -> u64 {
        self.seed ^ mix(0x5EED_0000_0000_0000 | i as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusRow {
    pub radius: f64,
    pub hyperbolic: usize,
    pub escape_suspect: usize,
    pub undecided: usize,
    pub fraction: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl RadiusRow {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.wilson_hi - self.wilson_lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub center: ExpParameter,
    pub seed: u64,
    pub budget: usize,
    pub p_max: usize,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annulus: Option<AnnulusTemplate>,
    pub rows: Vec<RadiusRow>,
}

/// One classified sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOutcome {
    pub radius_index: usize,
    pub lambda: ExpParameter,
    pub verdict: Verdict,
    pub iterations: usize,
}

impl SampleOutcome {
    /// The period for hyperbolic verdicts; 0 otherwise.
    pub fn period(&self) -> usize {
        match self.verdict {
            Verdict::Hyperbolic { period, .. } => period,
            _ => 0,
        }
    }

    pub fn certificate(&self) -> Option<Certificate> {
        match self.verdict {
            Verdict::Hyperbolic { certificate, .. } => Some(certificate),
            _ => None,
        }
    }
}

pub fn density_sweep(center: ExpParameter, cfg: &DensitySweepConfig) -> Result<DensityReport, DensityError> {
    density_sweep_detailed(center, cfg).map(|(r, _)| r)
}

/// The report together with every classified sample, ordered by radius and
/// then by sample index.
pub fn density_sweep_detailed(
    center: ExpParameter,
    cfg: &DensitySweepConfig,
) -> Result<(DensityReport, Vec<SampleOutcome>), DensityError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.radii.len());
    let mut outcomes = Vec::with_capacity(cfg.radii.len() * cfg.samples);
    for (i, &radius) in cfg.radii.iter().enumerate() {
        let lambdas = sample_annulus(&cfg.region(center, i), cfg.samples, cfg.radius_seed(i));
        let batch: Vec<SampleOutcome> = lambdas
            .into_par_iter()
            .map(|lambda| {
                let c = classify_with(lambda, &cfg.classify);
                SampleOutcome { radius_index: i, lambda, verdict: c.verdict, iterations: c.iterations_used }
            })
            .collect();
        let mut row = RadiusRow {
            radius,
            hyperbolic: 0,
            escape_suspect: 0,
            undecided: 0,
            fraction: 0.0,
            wilson_lo: 0.0,
            wilson_hi: 0.0,
        };
        for o in &batch {
            match o.verdict {
                Verdict::Hyperbolic { .. } => row.hyperbolic += 1,
                Verdict::EscapeSuspect => row.escape_suspect += 1,
                Verdict::Undecided => row.undecided += 1,
            }
        }
        row.fraction = row.hyperbolic as f64 / cfg.samples as f64;
        (row.wilson_lo, row.wilson_hi) = wilson_interval(row.hyperbolic, cfg.samples, WILSON_Z95);
        rows.push(row);
        outcomes.extend(batch);
    }
    let report = DensityReport {
        center,
        seed: cfg.seed,
        budget: cfg.classify.budget,
        p_max: cfg.classify.p_max,
        samples: cfg.samples,
        annulus: cfg.annulus,
        rows,
    };
    Ok((report, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusImageStats {
    pub n: usize,
    /// `max |∂ξ_n| / min |∂ξ_n|` over the sector grid.
    pub distortion: f64,
    pub min_dxi_times_r: f64,
    pub image_diam: f64,
    #[serde(rename = "contains_in_PS_ball")]
    pub contains_in_ps_ball: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusImageOptions {
    pub gamma: f64,
    pub sectors: usize,
    /// Largest `n` tried.
    pub n_max: usize,
    /// Radius of the neighbourhood `B(P(f), δ₀)`.
    pub delta0: f64,
}

impl Default for AnnulusImageOptions {
    fn default() -> Self {
        Self { gamma: 0.5, sectors: 8, n_max: 200, delta0: 1.0 }
    }
}

fn sector_grid(spec: &AnnulusSpec, grid: usize) -> Vec<ExpParameter> {
    let w = spec.sector_angle();
    let (a, b) = (spec.inner(), spec.r);
    let mut out = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let t = |m: usize| if grid == 1 { 0.5 } else { m as f64 / (grid - 1) as f64 };
            let rho = a + (b - a) * t(i);
            let lam = spec.center.value() + Complex64::from_polar(rho, w * t(j));
            if let Ok(p) = ExpParameter::new(lam) {
                out.push(p);
            }
        }
    }
    out
}

fn sector_diameter(spec: &AnnulusSpec) -> f64 {
    let w = spec.sector_angle();
    let (a, b) = (spec.inner(), spec.r);
    let pts = [
        Complex64::from_polar(a, 0.0),
        Complex64::from_polar(b, 0.0),
        Complex64::from_polar(a, w),
        Complex64::from_polar(b, w),
        Complex64::from_polar(b, w / 2.0),
    ];
    let mut d = 0.0f64;
    for p in &pts {
        for q in &pts {
            d = d.max((p - q).norm());
        }
    }
    d
}

/// Smallest `n` for which `ξ_n` spreads the first sector of `A(λ₀; γr, r)`
/// to diameter `delta_target`, with distortion diagnostics at that `n`.
pub fn annulus_image_stats(
    base: &MisiurewiczCertificate,
    r: f64,
    delta_target: f64,
    grid: usize,
    opts: &AnnulusImageOptions,
) -> Result<AnnulusImageStats, DensityError> {
    if grid < 1 || !(r > 0.0) || !(delta_target > 0.0) {
        return Err(DensityError::InvalidConfig("need grid >= 1, r > 0, delta_target > 0".into()));
    }
    let spec = AnnulusSpec { center: base.lambda, gamma: opts.gamma, r, sectors: opts.sectors };
    spec.validate()?;
    let pts = sector_grid(&spec, grid);
    let orbits: Vec<_> = pts.iter().map(|&p| xi_orbit_truncated(p, opts.n_max)).collect();
    let reach = orbits.iter().map(|o| o.xi.len() - 1).min().unwrap_or(0);
    let sdiam = sector_diameter(&spec);
    for n in 1..=reach {
        let diam = if pts.len() == 1 {
            orbits[0].dxi[n].norm() * sdiam
        } else {
            let mut d = 0.0f64;
            for (i, a) in orbits.iter().enumerate() {
                for b in &orbits[i + 1..] {
                    d = d.max((a.xi[n] - b.xi[n]).norm());
                }
            }
            d
        };
        if diam < delta_target {
            continue;
        }
        let mods: Vec<f64> = orbits.iter().map(|o| o.dxi[n].norm()).collect();
        let (lo, hi) = mods.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &m| (lo.min(m), hi.max(m)));
        let ps = base.postsingular_points();
        let inside = orbits
            .iter()
            .all(|o| ps.iter().any(|q| (o.xi[n] - q).norm() < opts.delta0));
        return Ok(AnnulusImageStats {
            n,
            distortion: if pts.len() == 1 { 1.0 } else { (hi / lo).max(1.0) },
            min_dxi_times_r: lo * r,
            image_diam: diam,
            contains_in_ps_ball: inside,
        });
    }
    Err(DensityError::NoSuchN(reach))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProofSearchHit {
    pub lambda: ExpParameter,
    pub certificate: TrapBallCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProofSearchReport {
    pub sampled: usize,
    /// Parameters whose singular orbit reached `ℜ < -x_work` under the screen.
    pub screened: usize,
    pub attempts: usize,
    pub hits: Vec<ProofSearchHit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProofSearchOptions {
    pub budget: usize,
    pub rho_factor: f64,
    pub max_attempts: usize,
}

impl Default for ProofSearchOptions {
    fn default() -> Self {
        Self { budget: 10_000, rho_factor: 0.25, max_attempts: 4 }
    }
}

/// Samples the annulus and looks for singular orbits that land deep in the
/// left half-plane; each such landing is turned into a trap-ball certificate
/// if disk propagation confirms it.
pub fn find_hyperbolic_via_proof(
    base: &MisiurewiczCertificate,
    spec: &AnnulusSpec,
    x_work: f64,
    count: usize,
    seed: u64,
    opts: &ProofSearchOptions,
) -> ProofSearchReport {
    let spec = AnnulusSpec { center: base.lambda, ..*spec };
    let screen = TrapScreen { rho_factor: opts.rho_factor, min_depth: x_work, ..TrapScreen::default() };
    let results: Vec<(bool, usize, Option<ProofSearchHit>)> = sample_annulus(&spec, count, seed)
        .into_par_iter()
        .map(|lambda| {
            let map = ExpMap::new(lambda);
            let mut z = Complex64::new(0.0, 0.0);
            let mut c = DerivativeCocycle::IDENTITY;
            let mut attempts = 0;
            let mut screened = false;
            for n in 0..=opts.budget {
                if n >= 1 && screen.admits(&map, z, &c) {
                    screened = true;
                    attempts += 1;
                    if let Ok(certificate) = screen.attempt(&map, n, z, &c) {
                        return (true, attempts, Some(ProofSearchHit { lambda, certificate }));
                    }
                    if attempts >= opts.max_attempts {
                        break;
                    }
                }
                if z.re > map.escape_re() {
                    break;
                }
                map.advance_cocycle(&mut c, z);
                z = map.eval(z);
            }
            (screened, attempts, None)
        })
        .collect();
    ProofSearchReport {
        sampled: count,
        screened: results.iter().filter(|r| r.0).count(),
        attempts: results.iter().map(|r| r.1).sum(),
        hits: results.into_iter().filter_map(|r| r.2).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::misiurewicz::solve_misiurewicz;

    fn p(re: f64, im: f64) -> ExpParameter {
        ExpParameter::from_parts(re, im).unwrap()
    }

    #[test]
    fn annulus_samples_stay_in_range_and_repeat() {
        let spec = AnnulusSpec { center: p(0.0, TAU), gamma: 0.5, r: 0.01, sectors: 8 };
        let a = sample_annulus(&spec, 2000, 9);
        for l in &a {
            let d = (l.value() - spec.center.value()).norm();
            assert!((0.005 * (1.0 - 1e-12)..=0.01 * (1.0 + 1e-12)).contains(&d));
        }
        assert_eq!(a, sample_annulus(&spec, 2000, 9));
        let s = sample_sector(&spec, 3, 500, 9);
        for l in &s {
            let t = (l.value() - spec.center.value()).arg().rem_euclid(TAU);
            assert!((3.0 * TAU / 8.0 - 1e-12..=4.0 * TAU / 8.0 + 1e-12).contains(&t));
        }
    }

    #[test]
    fn disk_second_moment() {
        let spec = AnnulusSpec { center: p(1.0, 1.0), gamma: 0.0, r: 2.0, sectors: 1 };
        let n = 100_000;
        let m: Vec<f64> = sample_annulus(&spec, n, 3).iter().map(|l| (l.value() - spec.center.value()).norm_sqr()).collect();
        let mean = m.iter().sum::<f64>() / n as f64;
        // |λ-λ₀|² = r²u is uniform on [0, r²]: mean r²/2, sd r²/√12.
        let sigma = 4.0 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn wilson_brackets_and_edges() {
        let (lo, hi) = wilson_interval(1000, 1000, WILSON_Z95);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.99 && lo < 1.0);
        let (lo, hi) = wilson_interval(0, 50, WILSON_Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
        // Reference values for 40/100 from statsmodels.
        let (lo, hi) = wilson_interval(40, 100, WILSON_Z95);
        assert!((lo - 0.309_401_286_432_459).abs() < 1e-12 && (hi - 0.497_997_413_208_938).abs() < 1e-12);
    }

    #[test]
    fn wilson_coverage_against_simulated_coin() {
        let (n, trials, prob) = (200, 1000, 0.3);
        let mut covered = 0;
        for t in 0..trials {
            let mut g = SplitMix64::for_sample(77, t);
            let k = (0..n).filter(|_| g.next_f64() < prob).count();
            let (lo, hi) = wilson_interval(k, n, WILSON_Z95);
            covered += (lo <= prob && prob <= hi) as usize;
        }
        let rate = covered as f64 / trials as f64;
        assert!((0.93..=0.97).contains(&rate), "coverage {rate}");
    }

    #[test]
    fn config_validation() {
        assert!(DensitySweepConfig::new(vec![0.1], 0, 1).validate().is_err());
        assert!(DensitySweepConfig::new(vec![0.1, 0.2], 10, 1).validate().is_err());
        assert!(DensitySweepConfig::new(vec![0.1, 0.01], 10, 1).validate().is_ok());
    }

    #[test]
    fn contracting_region_is_all_hyperbolic() {
        let cfg = DensitySweepConfig::new(vec![0.05], 200, 1);
        let r = density_sweep(p(0.25, 0.0), &cfg).unwrap();
        assert_eq!(r.rows[0].hyperbolic, 200);
        assert_eq!(r.rows[0].fraction, 1.0);
    }

    #[test]
    fn image_stats_near_2pi_i() {
        let base = solve_misiurewicz(p(0.0, 6.0), 1, 1, 1e-12).unwrap();
        let opts = AnnulusImageOptions::default();
        let s = annulus_image_stats(&base, 1e-6, 0.1, 5, &opts).unwrap();
        assert!(s.distortion >= 1.0 && s.distortion < 10.0);
        let half = annulus_image_stats(&base, 5e-7, 0.1, 5, &opts).unwrap();
        assert!(half.n >= s.n);
        let single = annulus_image_stats(&base, 1e-6, 0.1, 1, &opts).unwrap();
        assert_eq!(single.distortion, 1.0);
    }
}
