//! Sampled-grid experiments on first-entry times: how much of a region reaches
//! a right half-plane, how deep the left excursions land, and the rightward
//! cascade of grid squares.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::certify::{propagate_disk, Disk};
use crate::orbit::{square_of, DyadicSquare, ExpMap, ExpParameter, GridSquare, HalfPlane};

/// Default working level `M_work` for the cascade.
pub const DEFAULT_M_WORK: f64 = 10.0;

/// `f` is evaluated directly in the cascade; past this real part `exp` overflows.
const CASCADE_MAX_RE: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("square (j={}, k={}) is not inside the right half-plane of level {level}", square.j, square.k)]
    OutsideWorkingRegion { square: GridSquare, level: f64 },
    #[error("no interior probe of square (j={}, k={}) maps onto a full grid square", square.j, square.k)]
    CascadeStuck { square: GridSquare },
    #[error("cascade level {0} is beyond double-precision range")]
    OutOfRange(f64),
}

// ---------------------------------------------------------------------------
// Cascade

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeTrace {
    pub lambda0: ExpParameter,
    /// `f^k(V_k)` for each level `k`.
    pub squares: Vec<GridSquare>,
    /// Left edges of `squares`.
    pub y_levels: Vec<f64>,
    /// A point of the starting square whose `entry_index`-th iterate lies in
    /// the last square.
    pub witness: Complex64,
    pub entry_index: usize,
    /// The witness orbit visits every recorded square.
    pub witness_validated: bool,
}

impl CascadeTrace {
    pub fn growth_chain_holds(&self) -> bool {
        growth_chain_holds(&self.y_levels, self.lambda0.value().norm())
    }
}

/// `e^{y_k/2} < y_{k+1} < e⁷|λ₀|e^{y_k}` for consecutive levels, checked in log
/// form.
pub fn growth_chain_holds(levels: &[f64], lambda_mod: f64) -> bool {
    levels.windows(2).all(|w| {
        w[1] > w[0] && w[1] > 0.0 && w[1].ln() > w[0] / 2.0 && w[1].ln() < 7.0 + lambda_mod.ln() + w[0]
    })
}

/// Whether `target` lies inside `f(q)`.
///
/// `f` maps `q = [a, a+2π) × [b, b+2π)` bijectively onto the annulus
/// `|λ|e^a ≤ |w| < |λ|e^{a+2π}` cut along the ray of angle `arg λ + b`.
fn image_contains(map: &ExpMap, q: &GridSquare, target: &GridSquare) -> bool {
    let s = GridSquare::side();
    let (x0, y0) = (target.left_edge(), target.bottom_edge());
    let (x1, y1) = (x0 + s, y0 + s);
    let nearest = Complex64::new(0f64.clamp(x0, x1), 0f64.clamp(y0, y1));
    let corners = [Complex64::new(x0, y0), Complex64::new(x1, y0), Complex64::new(x0, y1), Complex64::new(x1, y1)];
    let far = corners.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let ln_inner = map.log_mod_lambda() + q.left_edge();
    let ln_outer = ln_inner + s;
    if nearest.norm() == 0.0 || !(nearest.norm().ln() > ln_inner) || !(far.ln() < ln_outer) {
        return false;
    }
    // The target does not contain 0, so its angular extent seen from 0 is
    // below π and is spanned by the corners.
    let mid = target.center().arg();
    let rel = |t: f64| {
        let d = (t - mid).rem_euclid(TAU);
        if d > PI {
            d - TAU
        } else {
            d
        }
    };
    let (lo, hi) = corners
        .iter()
        .map(|c| rel(c.arg()))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let slit = rel(map.arg_lambda() + q.bottom_edge());
    !(lo <= slit && slit <= hi)
}

/// The branch of `f⁻¹` taking values in `q`.
fn pull_back(map: &ExpMap, q: &GridSquare, w: Complex64) -> Complex64 {
    let l = (w / map.lambda()).ln();
    let b = q.bottom_edge();
    let im = b + (l.im - b).rem_euclid(TAU);
    Complex64::new(l.re, im)
}

fn probes() -> impl Iterator<Item = (f64, f64)> {
    std::iter::once((0.5, 0.5))
        .chain((0..5).flat_map(|i| (0..5).map(move |j| (0.1 + 0.2 * i as f64, 0.1 + 0.2 * j as f64))))
}

/// Follows the rightward cascade from `q` until the level reaches `x`.
pub fn cascade_to_right(
    p: ExpParameter,
    q: GridSquare,
    x: f64,
    k_max: usize,
    m_work: f64,
) -> Result<CascadeTrace, MeasureError> {
    if !(q.left_edge() >= m_work) {
        return Err(MeasureError::OutsideWorkingRegion { square: q, level: m_work });
    }
    let map = ExpMap::with_escape(p, CASCADE_MAX_RE);
    let mut squares = vec![q];
    let mut levels = vec![q.left_edge()];
    let lambda_mod = p.value().norm();
    while *levels.last().unwrap() < x && squares.len() <= k_max {
        let cur = *squares.last().unwrap();
        let y = cur.left_edge();
        if y + GridSquare::side() > CASCADE_MAX_RE {
            return Err(MeasureError::OutOfRange(y));
        }
        let next = probes().find_map(|(u, v)| {
            let w = map.eval(cur.point_at(u, v));
            if w.im.abs() > w.re || !w.is_finite() {
                return None;
            }
            let t = square_of(w);
            let ok = image_contains(&map, &cur, &t) && growth_chain_holds(&[y, t.left_edge()], lambda_mod);
            ok.then_some(t)
        });
        let Some(t) = next else {
            return Err(MeasureError::CascadeStuck { square: cur });
        };
        squares.push(t);
        levels.push(t.left_edge());
    }

    let entry_index = squares.len() - 1;
    let mut witness = squares[entry_index].center();
    for k in (0..entry_index).rev() {
        witness = pull_back(&map, &squares[k], witness);
    }
    let mut z = witness;
    let mut witness_validated = squares[0].contains(z);
    for sq in &squares[1..] {
        z = map.eval(z);
        witness_validated &= sq.contains(z);
    }
    Ok(CascadeTrace { lambda0: p, squares, y_levels: levels, witness, entry_index, witness_validated })
}

// ---------------------------------------------------------------------------
// First-entry statistics

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryStatsConfig {
    /// Half-plane level.
    pub x: f64,
    /// Samples per side.
    pub grid: usize,
    pub t_max: usize,
    /// Cap on `log|Df^{n(z)}|`.
    pub deriv_cap_log: f64,
    /// Radius of the small balls built by [`SampleDomain::delta_ball`].
    pub delta0: f64,
}

impl EntryStatsConfig {
    pub fn new(x: f64) -> Self {
        Self { x, grid: 100, t_max: 100_000, deriv_cap_log: x.powi(9).min(600.0), delta0: 0.1 }
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(self.x > 0.0) || self.grid < 2 || self.t_max < 1 || !(self.delta0 > 0.0) || self.deriv_cap_log.is_nan() {
            return Err(MeasureError::InvalidConfig("need x > 0, grid >= 2, t_max >= 1, delta0 > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SampleDomain {
    Disk(Disk),
    Dyadic(DyadicSquare),
}

impl SampleDomain {
    pub fn delta_ball(center: Complex64, cfg: &EntryStatsConfig) -> Self {
        SampleDomain::Disk(Disk::new(center, cfg.delta0))
    }

    /// Cell centres of a `grid × grid` lattice over the domain (its bounding
    /// square, for a disk), in row-major order; disk samples outside the disk
    /// are dropped.
    pub fn grid_points(&self, grid: usize) -> Vec<Complex64> {
        let (corner, side) = match self {
            SampleDomain::Disk(d) => (d.center - Complex64::new(d.radius, d.radius), 2.0 * d.radius),
            SampleDomain::Dyadic(q) => (q.corner(), q.side()),
        };
        let h = side / grid as f64;
        let mut pts = Vec::with_capacity(grid * grid);
        for i in 0..grid {
            for j in 0..grid {
                let z = corner + Complex64::new((j as f64 + 0.5) * h, (i as f64 + 0.5) * h);
                let keep = match self {
                    SampleDomain::Disk(d) => (z - d.center).norm() <= d.radius,
                    SampleDomain::Dyadic(_) => true,
                };
                if keep {
                    pts.push(z);
                }
            }
        }
        pts
    }
}

/// One sampled point's first entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntrySample {
    pub z: Complex64,
    /// `None` if the orbit does not enter within `t_max`.
    pub n: Option<usize>,
    pub log_df: f64,
    pub landing_re: f64,
    /// `ln inf_{j+k≤n} |Df^j(f^k(z))|` along the orbit up to the entry.
    pub min_block_log_df: f64,
}

fn first_entry_sample(map: &ExpMap, z: Complex64, target: HalfPlane, t_max: usize) -> EntrySample {
    let mut run = 0.0f64;
    let mut best = 0.0f64;
    let mut prev_log = 0.0;
    let mut out = EntrySample { z, n: None, log_df: 0.0, landing_re: 0.0, min_block_log_df: 0.0 };
    for (k, w, c) in map.orbit(z) {
        run = (run + (c.log_mod - prev_log)).min(0.0);
        best = best.min(run);
        prev_log = c.log_mod;
        if target.contains(w) {
            out.n = Some(k);
            out.log_df = c.log_mod;
            out.landing_re = w.re;
            out.min_block_log_df = best;
            break;
        }
        if k >= t_max {
            break;
        }
    }
    out
}

pub fn entry_samples(p: ExpParameter, domain: &SampleDomain, target: HalfPlane, grid: usize, t_max: usize) -> Vec<EntrySample> {
    let map = ExpMap::new(p);
    domain
        .grid_points(grid)
        .into_par_iter()
        .map(|z| first_entry_sample(&map, z, target, t_max))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryStatsReport {
    pub total: usize,
    pub entered: usize,
    pub fraction: f64,
    /// p50, p90, p99 of `n(z)` over entered samples; absent if none entered.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_quantiles: Option<[f64; 3]>,
    /// Same quantiles of `log|Df^{n(z)}(z)|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deriv_quantiles: Option<[f64; 3]>,
    /// Entries with `n ≤ min(e^{2x}, t_max)` and `log|Df| ≤ deriv_cap_log`.
    pub within_bounds: usize,
}

/// Nearest-rank quantiles p50/p90/p99 of `values`.
pub fn quantiles(values: &mut [f64]) -> Option<[f64; 3]> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let at = |q: f64| values[((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1];
    Some([at(0.5), at(0.9), at(0.99)])
}

pub fn entry_stats(p: ExpParameter, domain: &SampleDomain, cfg: &EntryStatsConfig) -> Result<EntryStatsReport, MeasureError> {
    cfg.validate()?;
    let samples = entry_samples(p, domain, HalfPlane::right(cfg.x), cfg.grid, cfg.t_max);
    Ok(summarize_entries(&samples, cfg))
}

pub fn summarize_entries(samples: &[EntrySample], cfg: &EntryStatsConfig) -> EntryStatsReport {
    let n_cap = (2.0 * cfg.x).exp().min(cfg.t_max as f64);
    let entered: Vec<&EntrySample> = samples.iter().filter(|s| s.n.is_some()).collect();
    let mut ns: Vec<f64> = entered.iter().map(|s| s.n.unwrap() as f64).collect();
    let mut ds: Vec<f64> = entered.iter().map(|s| s.log_df).collect();
    let within = entered
        .iter()
        .filter(|s| s.n.unwrap() as f64 <= n_cap && s.log_df <= cfg.deriv_cap_log)
        .count();
    let total = samples.len();
    EntryStatsReport {
        total,
        entered: entered.len(),
        fraction: if total == 0 { 0.0 } else { entered.len() as f64 / total as f64 },
        n_quantiles: quantiles(&mut ns),
        deriv_quantiles: quantiles(&mut ds),
        within_bounds: within,
    }
}

// ---------------------------------------------------------------------------
// Deep-left landings

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeepLeftReport {
    pub total: usize,
    pub entered_left: usize,
    /// Landings in `𝓛(L2)`.
    pub overshoot: usize,
    /// Landings with `x < log|Df^{n(z)}| < deriv_cap_log`.
    pub deriv_window: usize,
    /// Landings whose block-derivative floor stays above the configured one.
    pub floor_ok: usize,
    /// Landings meeting all of: overshoot, derivative window, floor, `n ≤ e^{3x}`.
    pub s0_count: usize,
    #[serde(rename = "fraction_S0")]
    pub fraction_s0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepLeftThresholds {
    /// Entry level `-e^x`.
    pub l1: f64,
    /// Overshoot level `-e^{x+√x}`.
    pub l2: f64,
    /// Floor `-e^{x+1}` on `ln inf |Df^j(f^k(z))|`.
    pub floor_log: f64,
}

impl DeepLeftThresholds {
    pub fn at_level(x: f64) -> Self {
        Self { l1: -x.exp(), l2: -(x + x.sqrt()).exp(), floor_log: -(x + 1.0).exp() }
    }
}

pub fn deep_left_stats(
    p: ExpParameter,
    domain: &Disk,
    x: f64,
    th: &DeepLeftThresholds,
    cfg: &EntryStatsConfig,
) -> Result<DeepLeftReport, MeasureError> {
    cfg.validate()?;
    if !(th.l2 <= th.l1 && th.l1 < 0.0) {
        return Err(MeasureError::InvalidConfig("need L2 <= L1 < 0".into()));
    }
    let samples = entry_samples(p, &SampleDomain::Disk(*domain), HalfPlane::left(th.l1), cfg.grid, cfg.t_max);
    let n_cap = (3.0 * x).exp();
    let mut r = DeepLeftReport {
        total: samples.len(),
        entered_left: 0,
        overshoot: 0,
        deriv_window: 0,
        floor_ok: 0,
        s0_count: 0,
        fraction_s0: 0.0,
    };
    for s in &samples {
        let Some(n) = s.n else { continue };
        r.entered_left += 1;
        let over = s.landing_re <= th.l2;
        let window = s.log_df > x && s.log_df < cfg.deriv_cap_log;
        let floor = s.min_block_log_df > th.floor_log;
        r.overshoot += over as usize;
        r.deriv_window += window as usize;
        r.floor_ok += floor as usize;
        r.s0_count += (over && window && floor && (n as f64) <= n_cap) as usize;
    }
    r.fraction_s0 = if r.total == 0 { 0.0 } else { r.s0_count as f64 / r.total as f64 };
    Ok(r)
}

// ---------------------------------------------------------------------------
// Dyadic refinement

/// Whether some iterate maps the disk enclosing `d` into `𝓡(x)`, tracked by
/// disk propagation. Gives up once the enclosure is wider than `max_radius`.
pub fn dyadic_captured(map: &ExpMap, d: &DyadicSquare, x: f64, t_max: usize, max_radius: f64) -> Option<usize> {
    let mut disk = Disk::new(d.center(), d.half_diagonal());
    for n in 0..=t_max {
        if disk.center.re - disk.radius > x {
            return Some(n);
        }
        if disk.radius > max_radius {
            return None;
        }
        disk = propagate_disk(map, &disk).ok()?;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRound {
    pub scale_exp: u32,
    pub tested: usize,
    pub captured: usize,
    /// Captured area over the area still uncaptured before the round.
    pub captured_fraction: f64,
    /// Uncaptured area over the root's area, by direct counting.
    pub uncaptured_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub rounds: Vec<RefinementRound>,
    /// `∏ (1 - q_r)` over the rounds.
    pub product_bound: f64,
    /// `(1 - min_r q_r)^p`.
    pub geometric_bound: f64,
}

/// Repeatedly splits the uncaptured squares of `root` into their four children
/// and tests each child for capture.
pub fn dyadic_refinement(
    p: ExpParameter,
    root: DyadicSquare,
    x: f64,
    rounds: usize,
    t_max: usize,
) -> RefinementReport {
    let map = ExpMap::new(p);
    let mut open = vec![root];
    let mut uncaptured = 1.0f64;
    let mut out = Vec::with_capacity(rounds);
    let mut product = 1.0;
    let mut min_q = 1.0f64;
    for _ in 0..rounds {
        let children: Vec<DyadicSquare> = open.iter().flat_map(|d| d.children()).collect();
        let flags: Vec<bool> = children
            .par_iter()
            .map(|c| dyadic_captured(&map, c, x, t_max, 1.0).is_some())
            .collect();
        let scale_exp = children.first().map_or(root.scale_exp, |c| c.scale_exp);
        let unit = 0.25f64.powi((scale_exp - root.scale_exp) as i32);
        let captured = flags.iter().filter(|&&f| f).count();
        let before = uncaptured;
        open = children.into_iter().zip(flags).filter(|&(_, f)| !f).map(|(c, _)| c).collect();
        uncaptured = open.len() as f64 * unit;
        let q = if before > 0.0 { captured as f64 * unit / before } else { 0.0 };
        product *= 1.0 - q;
        min_q = min_q.min(q);
        out.push(RefinementRound {
            scale_exp,
            tested: open.len() + captured,
            captured,
            captured_fraction: q,
            uncaptured_fraction: uncaptured,
        });
    }
    let geometric_bound = if rounds == 0 { 1.0 } else { (1.0 - min_q).powi(rounds as i32) };
    RefinementReport { rounds: out, product_bound: product, geometric_bound }
}

/// True if `w` lies in the cone of positive combinations of `1+i` and `1-i`.
pub fn in_right_cone(w: Complex64) -> bool {
    w.re > 0.0 && w.im.atan2(w.re).abs() <= FRAC_PI_4
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pi_i() -> ExpParameter {
        ExpParameter::from_parts(0.0, TAU).unwrap()
    }

    #[test]
    fn cascade_from_twenty() {
        let q = square_of(Complex64::new(20.0, 0.0));
        let t = cascade_to_right(two_pi_i(), q, 100.0, 10, DEFAULT_M_WORK).unwrap();
        assert!(t.entry_index >= 1 && t.entry_index <= 3);
        assert!(*t.y_levels.last().unwrap() >= 100.0);
        assert!(t.growth_chain_holds());
        assert!(t.witness_validated);
        assert!(q.contains(t.witness));
    }

    #[test]
    fn cascade_trivial_and_precondition() {
        let q = square_of(Complex64::new(20.0, 0.0));
        let t = cascade_to_right(two_pi_i(), q, 5.0, 10, DEFAULT_M_WORK).unwrap();
        assert_eq!(t.entry_index, 0);
        assert_eq!(t.squares, vec![q]);

        let straddle = square_of(Complex64::new(8.0, 0.0));
        assert!(matches!(
            cascade_to_right(two_pi_i(), straddle, 100.0, 10, DEFAULT_M_WORK),
            Err(MeasureError::OutsideWorkingRegion { .. })
        ));
    }

    #[test]
    fn image_containment_matches_sampling() {
        // Squares far inside f(q) are accepted; a square straddling the slit
        // or the outer circle is not.
        let map = ExpMap::new(ExpParameter::from_parts(1.0, 0.0).unwrap());
        let q = GridSquare { j: 0, k: 2 };
        // f(q) = {e^{4π} ≤ |w| < e^{6π}} cut along the positive real axis.
        let inner = (4.0 * PI).exp();
        let inside = square_of(Complex64::new(0.0, 2.0 * inner));
        assert!(image_contains(&map, &q, &inside));
        let on_slit = square_of(Complex64::new(2.0 * inner, 0.0));
        assert!(!image_contains(&map, &q, &on_slit));
        let outside = square_of(Complex64::new(0.0, (6.0 * PI).exp()));
        assert!(!image_contains(&map, &q, &outside));
    }

    #[test]
    fn quantile_ranks() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantiles(&mut v), Some([50.0, 90.0, 99.0]));
        assert_eq!(quantiles(&mut []), None);
    }

    #[test]
    fn grid_points_in_disk_and_square() {
        let d = SampleDomain::Disk(Disk::new(Complex64::new(0.0, 0.0), 1.0));
        let pts = d.grid_points(100);
        assert!(pts.iter().all(|z| z.norm() <= 1.0));
        // π/4 of the bounding square, up to boundary cells.
        assert!((pts.len() as f64 / 10_000.0 - PI / 4.0).abs() < 0.01);
        let s = SampleDomain::Dyadic(DyadicSquare::new(3, (0, 0)));
        assert_eq!(s.grid_points(10).len(), 100);
    }

    #[test]
    fn entry_stats_monotone_small() {
        let p = two_pi_i();
        let dom = SampleDomain::Disk(Disk::new(Complex64::new(0.0, 0.0), 1.0));
        let mut cfg = EntryStatsConfig::new(3.0);
        cfg.grid = 20;
        cfg.t_max = 2000;
        let a = entry_stats(p, &dom, &cfg).unwrap();
        let b = entry_stats(p, &dom, &EntryStatsConfig { x: 5.0, ..cfg }).unwrap();
        let c = entry_stats(p, &dom, &EntryStatsConfig { t_max: 4000, ..cfg }).unwrap();
        assert!(b.entered <= a.entered);
        assert!(c.entered >= a.entered);
        assert!(a.entered > 0);
        assert_eq!(a, entry_stats(p, &dom, &cfg).unwrap());
    }

    #[test]
    fn deep_left_degenerate_thresholds() {
        let p = two_pi_i();
        let d = Disk::new(Complex64::new(0.0, TAU), 0.9);
        let mut cfg = EntryStatsConfig::new(3.0);
        cfg.grid = 20;
        cfg.t_max = 5000;
        let l1 = -(3f64.exp());
        let th = DeepLeftThresholds { l1, l2: l1, floor_log: -(4f64.exp()) };
        let r = deep_left_stats(p, &d, 3.0, &th, &cfg).unwrap();
        assert_eq!(r.overshoot, r.entered_left);
        assert!(r.entered_left > 0);
        assert!(deep_left_stats(p, &d, 3.0, &DeepLeftThresholds { l2: 0.5 * l1, ..th }, &cfg).is_err());
    }

    #[test]
    fn refinement_bookkeeping() {
        let root = DyadicSquare::new(3, (0, 0));
        let r = dyadic_refinement(ExpParameter::from_parts(1.0, 0.0).unwrap(), root, 3.0, 3, 200);
        let last = r.rounds.last().unwrap();
        assert!((last.uncaptured_fraction - r.product_bound).abs() < 1e-12);
        assert!(last.uncaptured_fraction <= r.geometric_bound + 1e-12);
        // Children partition the parent exactly.
        let area: f64 = root.children().iter().map(|c| c.area()).sum();
        assert_eq!(area, root.area());
    }
}
