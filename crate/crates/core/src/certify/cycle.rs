use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::disk::{propagate_n, Disk};
use super::CertifyError;
use crate::orbit::{DerivativeCocycle, ExpMap, ExpParameter, OrbitTrace, MAX_RECONSTRUCT_LOG};

/// Multipliers with log-modulus above `-INDIFFERENT_MARGIN` are never certified.
pub(crate) const INDIFFERENT_MARGIN: f64 = 1e-12;

const NEWTON_STEPS: usize = 64;

/// Smallest radius of the fixed schedule is `2^-RADIUS_SCHEDULE_LEN`.
const RADIUS_SCHEDULE_LEN: i32 = 40;

/// Threshold used when re-verifying a certificate; it only guards `exp` overflow.
pub(crate) const VERIFY_ESCAPE_RE: f64 = 700.0;

/// Brent's cycle detector with a relative closeness tolerance, fed one orbit
/// point at a time.
#[derive(Debug, Clone)]
pub struct CycleDetector {
    eps_rel: f64,
    max_power: usize,
    tortoise: Option<Complex64>,
    power: usize,
    lam: usize,
}

impl CycleDetector {
    pub fn new(eps_rel: f64, p_max: usize) -> Self {
        Self {
            eps_rel,
            max_power: p_max.max(1).next_power_of_two(),
            tortoise: None,
            power: 1,
            lam: 0,
        }
    }

    pub fn reset(&mut self) {
        self.tortoise = None;
        self.power = 1;
        self.lam = 0;
    }

    /// Returns a candidate period when `z` comes back within tolerance of the
    /// current tortoise point.
    pub fn push(&mut self, z: Complex64) -> Option<usize> {
        let Some(t) = self.tortoise else {
            self.tortoise = Some(z);
            return None;
        };
        self.lam += 1;
        if (z - t).norm() <= self.eps_rel * t.norm().max(1.0) {
            return Some(self.lam);
        }
        if self.lam == self.power {
            self.tortoise = Some(z);
            if self.power < self.max_power {
                self.power *= 2;
            }
            self.lam = 0;
        }
        None
    }
}

fn close(a: Complex64, b: Complex64, eps_rel: f64) -> bool {
    (a - b).norm() <= eps_rel * a.norm().max(1.0)
}

/// Runs the detector over `points` and returns the smallest period (among the
/// divisors of the detected one) that also meets the tolerance, together with
/// the point where the return was observed.
pub fn detect_cycle_in(points: &[Complex64], eps_rel: f64, p_max: usize) -> Option<(usize, Complex64)> {
    let mut det = CycleDetector::new(eps_rel, p_max);
    for (i, &z) in points.iter().enumerate() {
        if let Some(p) = det.push(z) {
            let m = i - p;
            let period = divisors(p)
                .into_iter()
                .find(|&d| close(points[m], points[m + d], eps_rel))
                .unwrap_or(p);
            return Some((period, points[m]));
        }
    }
    None
}

/// Cycle detection on the second half of a trace.
pub fn detect_cycle(trace: &OrbitTrace, eps_rel: f64) -> Option<(usize, Complex64)> {
    let tail = &trace.points[trace.points.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    detect_cycle_in(tail, eps_rel, tail.len() - 1)
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: usize) -> Vec<usize> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n.is_multiple_of(d) {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// `f^period(z)` and `Df^period(z)`; also the largest partial `ln|Df^k(z)|`
/// for `0 ≤ k < period`.
pub(crate) fn iterate_period(
    map: &ExpMap,
    z: Complex64,
    period: usize,
) -> Result<(Complex64, DerivativeCocycle, f64), CertifyError> {
    let mut w = z;
    let mut c = DerivativeCocycle::IDENTITY;
    let mut peak = 0.0f64;
    for _ in 0..period {
        if !(w.re <= map.escape_re()) {
            return Err(CertifyError::EscapeRight { re: w.re });
        }
        peak = peak.max(c.log_mod);
        map.advance_cocycle(&mut c, w);
        w = map.eval(w);
    }
    Ok((w, c, peak))
}

/// Newton's method on `F(z) = f^period(z) - z`.
pub fn refine_cycle(map: &ExpMap, z_guess: Complex64, period: usize, tol: f64) -> Result<Complex64, CertifyError> {
    assert!(period >= 1);
    let mut z = z_guess;
    for _ in 0..NEWTON_STEPS {
        let (w, c, _) = iterate_period(map, z, period).map_err(|_| CertifyError::NoConvergence)?;
        let residual = w - z;
        if !residual.is_finite() {
            return Err(CertifyError::NoConvergence);
        }
        if residual.norm() <= tol * z.norm().max(1.0) {
            return Ok(z);
        }
        if c.log_mod > MAX_RECONSTRUCT_LOG {
            return Err(CertifyError::DerivativeOverflow(c.log_mod));
        }
        let slope = c.to_complex().ok_or(CertifyError::NoConvergence)? - 1.0;
        if slope.norm() == 0.0 {
            return Err(CertifyError::NoConvergence);
        }
        z -= residual / slope;
        if !z.is_finite() {
            return Err(CertifyError::NoConvergence);
        }
    }
    Err(CertifyError::NoConvergence)
}

/// A disk around a periodic point that `f^period` maps strictly into itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleCertificate {
    pub lambda: ExpParameter,
    pub period: usize,
    pub disk: Disk,
    pub final_disk: Disk,
    pub multiplier_log_mod: f64,
}

impl CycleCertificate {
    /// Re-propagates the disk and checks that it reproduces `final_disk`
    /// exactly and still lands strictly inside `disk`.
    pub fn verify(&self) -> Result<(), CertifyError> {
        let map = ExpMap::with_escape(self.lambda, VERIFY_ESCAPE_RE);
        let fin = propagate_n(&map, &self.disk, self.period)?;
        if fin != self.final_disk {
            return Err(CertifyError::VerificationFailed(format!(
                "final disk {fin:?} differs from recorded {:?}",
                self.final_disk
            )));
        }
        if !self.disk.strictly_contains(&fin) {
            return Err(CertifyError::VerificationFailed("no strict containment".into()));
        }
        if !(self.multiplier_log_mod < 0.0) {
            return Err(CertifyError::VerificationFailed("multiplier is not attracting".into()));
        }
        Ok(())
    }
}

fn radius_schedule(peak_log: f64) -> Vec<f64> {
    let mut radii: Vec<f64> = (1..=RADIUS_SCHEDULE_LEN).map(|i| (-(i as f64)).exp2()).collect();
    // Orbits that pass through strongly expanding stretches need a disk scaled
    // by the largest partial derivative along the cycle.
    let adaptive = 0.25 * (-peak_log).exp();
    for r in [adaptive, adaptive / 4.0, adaptive / 16.0] {
        if r > 0.0 && r < radii[radii.len() - 1] {
            radii.push(r);
        }
    }
    radii
}

/// Certifies that `z_star` lies on an attracting cycle of the given period.
pub fn certify_attracting(map: &ExpMap, z_star: Complex64, period: usize) -> Result<CycleCertificate, CertifyError> {
    assert!(period >= 1);
    let (_, c, peak) = iterate_period(map, z_star, period)?;
    if !(c.log_mod <= -INDIFFERENT_MARGIN) {
        return Err(CertifyError::NotContractive);
    }
    for rho in radius_schedule(peak) {
        let disk = Disk::new(z_star, rho);
        let Ok(fin) = propagate_n(map, &disk, period) else {
            continue;
        };
        if disk.strictly_contains(&fin) {
            return Ok(CycleCertificate {
                lambda: map.param(),
                period,
                disk,
                final_disk: fin,
                multiplier_log_mod: c.log_mod,
            });
        }
    }
    Err(CertifyError::NotContractive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::iterate_orbit;
    use std::f64::consts::PI;

    const OMEGA: f64 = 0.567_143_290_409_783_8;

    fn map(re: f64, im: f64) -> ExpMap {
        ExpMap::new(ExpParameter::from_parts(re, im).unwrap())
    }

    /// Real root of `λe^x = x` on `[lo, hi]` by bisection.
    fn bisect_fixed_point(lambda: f64, mut lo: f64, mut hi: f64) -> f64 {
        let g = |x: f64| lambda * x.exp() - x;
        assert!(g(lo) * g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn bisection_oracles() {
        assert!((bisect_fixed_point(-1.0, -1.0, 0.0) + OMEGA).abs() < 1e-15);
        let r = bisect_fixed_point(0.3, 0.0, 1.0);
        assert!((r - 0.489_402_227_180_214_8).abs() < 1e-15);
    }

    #[test]
    fn detects_omega_fixed_point() {
        let p = ExpParameter::from_parts(-1.0, 0.0).unwrap();
        let t = iterate_orbit(p, Complex64::new(0.0, 0.0), 200, None);
        let (period, z) = detect_cycle(&t, 1e-9).unwrap();
        assert_eq!(period, 1);
        assert!((z.re + OMEGA).abs() < 1e-8);
    }

    #[test]
    fn detects_two_pi_i_fixed_point_inside_precision_window() {
        let p = ExpParameter::from_parts(0.0, 2.0 * PI).unwrap();
        let t = iterate_orbit(p, Complex64::new(0.0, 0.0), 10, None);
        let (period, z) = detect_cycle(&t, 1e-9).unwrap();
        assert_eq!(period, 1);
        assert!((z - Complex64::new(0.0, 2.0 * PI)).norm() < 1e-9);
        assert_eq!(certify_attracting(&ExpMap::new(p), z, 1), Err(CertifyError::NotContractive));
    }

    #[test]
    fn no_cycle_for_escaping_orbit() {
        let p = ExpParameter::from_parts(1.0, 0.0).unwrap();
        let t = iterate_orbit(p, Complex64::new(0.0, 0.0), 200, None);
        assert!(detect_cycle(&t, 1e-9).is_none());
    }

    #[test]
    fn detector_reports_minimal_divisor() {
        // exact period-2 sequence: Brent sees it first at offset 2
        let pts: Vec<Complex64> = (0..40).map(|i| Complex64::new((i % 2) as f64, 0.0)).collect();
        assert_eq!(detect_cycle_in(&pts, 1e-9, 16).unwrap().0, 2);
        let pts: Vec<Complex64> = (0..40).map(|i| Complex64::new((i % 3) as f64, 1.0)).collect();
        assert_eq!(detect_cycle_in(&pts, 1e-9, 16).unwrap().0, 3);
    }

    #[test]
    fn divisors_sorted() {
        assert_eq!(divisors(12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(divisors(1), vec![1]);
        assert_eq!(divisors(49), vec![1, 7, 49]);
    }

    #[test]
    fn refine_examples() {
        let z = refine_cycle(&map(-1.0, 0.0), Complex64::new(-0.56, 0.0), 1, 1e-12).unwrap();
        assert!((z.re + 0.567_143_290_4).abs() < 1e-10 && z.im.abs() < 1e-15);

        let z = refine_cycle(&map(0.0, 2.0 * PI), Complex64::new(0.0, 6.2), 1, 1e-12).unwrap();
        assert!((z - Complex64::new(0.0, 2.0 * PI)).norm() < 1e-12);

        let z = refine_cycle(&map(0.3, 0.0), Complex64::new(0.5, 0.0), 1, 1e-12).unwrap();
        assert!((z.re - bisect_fixed_point(0.3, 0.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn refine_reports_escape_as_no_convergence() {
        assert_eq!(
            refine_cycle(&map(1.0, 0.0), Complex64::new(60.0, 0.0), 1, 1e-12),
            Err(CertifyError::NoConvergence)
        );
    }

    #[test]
    fn certify_examples() {
        let m = map(-1.0, 0.0);
        let cert = certify_attracting(&m, Complex64::new(-OMEGA, 0.0), 1).unwrap();
        assert!(cert.disk.radius <= 0.5);
        assert!((cert.multiplier_log_mod - OMEGA.ln()).abs() < 1e-12);
        cert.verify().unwrap();

        let m = map(0.3, 0.0);
        let z = bisect_fixed_point(0.3, 0.0, 1.0);
        let cert = certify_attracting(&m, Complex64::new(z, 0.0), 1).unwrap();
        assert!((cert.multiplier_log_mod.exp() - z).abs() < 1e-12);
    }

    #[test]
    fn parabolic_multiplier_rejected() {
        let m = map((-1.0f64).exp(), 0.0);
        assert_eq!(certify_attracting(&m, Complex64::new(1.0, 0.0), 1), Err(CertifyError::NotContractive));
        // slightly inside the parabolic basin the multiplier is < 1 but the
        // centre drifts faster than any disk can contract
        assert_eq!(
            certify_attracting(&m, Complex64::new(1.0 - 1e-6, 0.0), 1),
            Err(CertifyError::NotContractive)
        );
    }

    #[test]
    fn tampered_certificate_fails_verification() {
        let m = map(-1.0, 0.0);
        let mut cert = certify_attracting(&m, Complex64::new(-OMEGA, 0.0), 1).unwrap();
        cert.final_disk.radius *= 0.5;
        assert!(cert.verify().is_err());
    }
}
