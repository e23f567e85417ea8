use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cycle::{certify_attracting, divisors, iterate_period, refine_cycle, CycleCertificate, CycleDetector};
use super::trap::{TrapBallCertificate, TrapScreen};
use super::CertifyError;
use crate::orbit::{DerivativeCocycle, ExpMap, ExpParameter, DEFAULT_ESCAPE_RE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    /// Iterations of the singular orbit.
    pub budget: usize,
    pub p_max: usize,
    /// Index after which the cycle detector restarts with a fresh attempt quota.
    pub transient: usize,
    pub eps_rel: f64,
    pub newton_tol: f64,
    pub trap_rho_factor: f64,
    pub escape_re: f64,
    pub max_cycle_attempts: usize,
    pub max_trap_attempts: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            budget: 100_000,
            p_max: 512,
            transient: 10_000,
            eps_rel: 1e-9,
            newton_tol: 1e-12,
            trap_rho_factor: 0.25,
            escape_re: DEFAULT_ESCAPE_RE,
            max_cycle_attempts: 32,
            max_trap_attempts: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    Cycle(CycleCertificate),
    Trap(TrapBallCertificate),
}

impl Certificate {
    pub fn verify(&self) -> Result<(), CertifyError> {
        match self {
            Certificate::Cycle(c) => c.verify(),
            Certificate::Trap(t) => t.verify(),
        }
    }

    pub fn lambda(&self) -> ExpParameter {
        match self {
            Certificate::Cycle(c) => c.lambda,
            Certificate::Trap(t) => t.lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Hyperbolic { period: usize, certificate: Certificate },
    EscapeSuspect,
    Undecided,
}

impl Verdict {
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, Verdict::Hyperbolic { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Hyperbolic { .. } => "Hyperbolic",
            Verdict::EscapeSuspect => "EscapeSuspect",
            Verdict::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub lambda: ExpParameter,
    pub verdict: Verdict,
    pub iterations_used: usize,
}

pub fn classify(p: ExpParameter, budget: usize, p_max: usize) -> Classification {
    classify_with(p, &ClassifyConfig { budget, p_max, ..ClassifyConfig::default() })
}

/// Follows the singular orbit `ξ_n = f^n(0)`. Two certification routes run
/// side by side: a trap ball at 0 whenever `ξ_n` lands far enough left, and
/// Brent detection followed by Newton refinement and disk containment.
/// Hyperbolic is only returned with a certificate in hand.
pub fn classify_with(p: ExpParameter, cfg: &ClassifyConfig) -> Classification {
    let map = ExpMap::with_escape(p, cfg.escape_re);
    let screen = TrapScreen {
        rho_factor: cfg.trap_rho_factor,
        max_attempts: cfg.max_trap_attempts,
        ..TrapScreen::default()
    };
    let mut detector = CycleDetector::new(cfg.eps_rel, cfg.p_max);
    let mut z = Complex64::new(0.0, 0.0);
    let mut c = DerivativeCocycle::IDENTITY;
    let mut trap_attempts = 0;
    let mut cycle_attempts = 0;
    let hyperbolic = |period, certificate, n| Classification {
        lambda: p,
        verdict: Verdict::Hyperbolic { period, certificate },
        iterations_used: n,
    };

    for n in 0..=cfg.budget {
        if n >= 1 && trap_attempts < screen.max_attempts && screen.admits(&map, z, &c) {
            trap_attempts += 1;
            if let Ok(cert) = screen.attempt(&map, n, z, &c) {
                let period = trap_cycle_period(&map, &cert, cfg.eps_rel);
                return hyperbolic(period, Certificate::Trap(cert), n);
            }
        }
        if let Some(candidate) = detector.push(z) {
            if cycle_attempts < cfg.max_cycle_attempts {
                cycle_attempts += 1;
                if let Some((period, cert)) = certify_candidate(&map, z, candidate, cfg.newton_tol) {
                    return hyperbolic(period, Certificate::Cycle(cert), n);
                }
            }
            detector.reset();
        }
        if n == cfg.transient {
            detector.reset();
            cycle_attempts = 0;
        }
        if n == cfg.budget {
            break;
        }
        if z.re > cfg.escape_re {
            return Classification { lambda: p, verdict: Verdict::EscapeSuspect, iterations_used: n };
        }
        map.advance_cocycle(&mut c, z);
        z = map.eval(z);
    }
    Classification { lambda: p, verdict: Verdict::Undecided, iterations_used: cfg.budget }
}

/// Refines a detected candidate and certifies the smallest divisor period
/// that works. The disk is centred at the cycle point of least modulus, which
/// follows the strongest contraction and keeps the intermediate disks small.
fn certify_candidate(
    map: &ExpMap,
    z: Complex64,
    candidate: usize,
    tol: f64,
) -> Option<(usize, CycleCertificate)> {
    for d in divisors(candidate) {
        let Ok(z_star) = refine_cycle(map, z, d, tol) else {
            continue;
        };
        let base = least_modulus_point(map, z_star, d)
            .and_then(|w| refine_cycle(map, w, d, tol).ok())
            .unwrap_or(z_star);
        if let Ok(cert) = certify_attracting(map, base, d) {
            return Some((d, cert));
        }
    }
    None
}

fn least_modulus_point(map: &ExpMap, z: Complex64, period: usize) -> Option<Complex64> {
    let mut best = z;
    let mut w = z;
    for _ in 1..period {
        w = map.step(w).ok()?;
        if w.norm() < best.norm() {
            best = w;
        }
    }
    Some(best)
}

/// Minimal period of the attracting cycle inside a trap ball; it divides `n+1`.
fn trap_cycle_period(map: &ExpMap, cert: &TrapBallCertificate, eps_rel: f64) -> usize {
    let block = cert.n + 1;
    let mut w = Complex64::new(0.0, 0.0);
    for _ in 0..4 {
        match iterate_period(map, w, block) {
            Ok((next, _, _)) => w = next,
            Err(_) => return block,
        }
    }
    for d in divisors(block) {
        if let Ok((next, _, _)) = iterate_period(map, w, d) {
            if (next - w).norm() <= eps_rel * w.norm().max(1.0) {
                return d;
            }
        }
    }
    block
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn run(re: f64, im: f64) -> Classification {
        classify(ExpParameter::from_parts(re, im).unwrap(), 100_000, 512)
    }

    #[test]
    fn contracting_parameter_is_hyperbolic_period_one() {
        let c = run(0.3, 0.0);
        match c.verdict {
            Verdict::Hyperbolic { period, certificate } => {
                assert_eq!(period, 1);
                certificate.verify().unwrap();
            }
            v => panic!("unexpected verdict {v:?}"),
        }
    }

    #[test]
    fn omega_parameter_is_hyperbolic() {
        let c = run(-1.0, 0.0);
        let Verdict::Hyperbolic { period, certificate: Certificate::Cycle(cert) } = c.verdict else {
            panic!("expected a cycle certificate, got {:?}", c.verdict);
        };
        assert_eq!(period, 1);
        assert!((cert.disk.center.re + 0.567_143_290_409_783_8).abs() < 1e-9);
    }

    #[test]
    fn real_escape() {
        assert_eq!(run(1.0, 0.0).verdict, Verdict::EscapeSuspect);
    }

    #[test]
    fn parabolic_guard() {
        assert_eq!(run((-1.0f64).exp(), 0.0).verdict, Verdict::Undecided);
    }

    #[test]
    fn misiurewicz_parameter_is_not_hyperbolic() {
        assert!(!run(0.0, 2.0 * PI).verdict.is_hyperbolic());
    }

    #[test]
    fn deep_left_two_cycle_found_with_minimal_period() {
        let c = run(-40.0, 0.0);
        let Verdict::Hyperbolic { period, certificate } = c.verdict else {
            panic!("{:?}", c.verdict);
        };
        assert_eq!(period, 2);
        certificate.verify().unwrap();
    }
}
