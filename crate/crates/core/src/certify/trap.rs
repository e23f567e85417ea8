use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cycle::VERIFY_ESCAPE_RE;
use super::disk::{propagate_n, Disk};
use super::CertifyError;
use crate::orbit::{DerivativeCocycle, ExpMap, ExpParameter, MAX_RECONSTRUCT_LOG};

/// A ball `B(0, ρ)` with `f^{n+1}(B)` strictly inside `B`.
///
/// The singular orbit reaches `ξ_n` far to the left, so `f(ξ_n)` is tiny and the
/// next step folds the whole (expanded) ball back onto a neighbourhood of 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapBallCertificate {
    pub lambda: ExpParameter,
    pub n: usize,
    /// `ℜ ξ_n`, the depth of the left excursion.
    pub landing_re: f64,
    pub rho: f64,
    pub final_disk: Disk,
    /// `ln|Df^{n+1}(0)|`.
    pub contraction_log_mod: f64,
}

impl TrapBallCertificate {
    pub fn ball(&self) -> Disk {
        Disk::new(Complex64::new(0.0, 0.0), self.rho)
    }

    pub fn verify(&self) -> Result<(), CertifyError> {
        let map = ExpMap::with_escape(self.lambda, VERIFY_ESCAPE_RE);
        let ball = self.ball();
        let fin = propagate_n(&map, &ball, self.n + 1)?;
        if fin != self.final_disk {
            return Err(CertifyError::VerificationFailed(format!(
                "final disk {fin:?} differs from recorded {:?}",
                self.final_disk
            )));
        }
        if !ball.strictly_contains(&fin) {
            return Err(CertifyError::VerificationFailed("no strict containment".into()));
        }
        if !(self.landing_re < 0.0) {
            return Err(CertifyError::VerificationFailed("landing point is not left of 0".into()));
        }
        Ok(())
    }
}

/// Which singular-orbit indices are worth a trap-ball attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapScreen {
    /// `ρ = min(1, rho_factor / |Df^n(0)|)`.
    pub rho_factor: f64,
    /// Require `ℜ ξ_n < -min_depth`. The default of 1 keeps out orbits whose
    /// derivative is merely small because they converge to an attracting
    /// point near the imaginary axis.
    pub min_depth: f64,
    /// Require `ℜ ξ_n + ln|Df^n(0)| + ln|λ| < margin_log`.
    pub margin_log: f64,
    pub max_attempts: usize,
}

impl Default for TrapScreen {
    fn default() -> Self {
        Self { rho_factor: 0.25, min_depth: 1.0, margin_log: -2.0, max_attempts: 16 }
    }
}

impl TrapScreen {
    #[inline]
    pub(crate) fn admits(&self, map: &ExpMap, z: Complex64, c: &DerivativeCocycle) -> bool {
        z.re < -self.min_depth.max(0.0)
            && c.log_mod <= MAX_RECONSTRUCT_LOG
            && z.re + c.log_mod + map.log_mod_lambda() < self.margin_log
    }

    /// One containment check at index `n`, given `ξ_n` and `Df^n(0)`.
    pub(crate) fn attempt(
        &self,
        map: &ExpMap,
        n: usize,
        xi_n: Complex64,
        c: &DerivativeCocycle,
    ) -> Result<TrapBallCertificate, CertifyError> {
        let rho = (self.rho_factor * (-c.log_mod).exp()).min(1.0);
        if !(rho > 0.0) {
            return Err(CertifyError::ContainmentFailed);
        }
        let ball = Disk::new(Complex64::new(0.0, 0.0), rho);
        let fin = propagate_n(map, &ball, n + 1).map_err(|_| CertifyError::ContainmentFailed)?;
        if !ball.strictly_contains(&fin) {
            return Err(CertifyError::ContainmentFailed);
        }
        Ok(TrapBallCertificate {
            lambda: map.param(),
            n,
            landing_re: xi_n.re,
            rho,
            final_disk: fin,
            contraction_log_mod: c.log_mod + map.log_mod_lambda() + xi_n.re,
        })
    }
}

/// Scans the singular orbit up to `budget` for a deep-left index and tries to
/// certify a trap ball there.
pub fn certify_trap_ball_with(
    map: &ExpMap,
    budget: usize,
    screen: &TrapScreen,
) -> Result<TrapBallCertificate, CertifyError> {
    assert!(budget >= 1);
    let mut attempts = 0;
    for (n, z, c) in map.orbit(Complex64::new(0.0, 0.0)) {
        if n >= 1 && screen.admits(map, z, &c) {
            attempts += 1;
            if let Ok(cert) = screen.attempt(map, n, z, &c) {
                return Ok(cert);
            }
            if attempts >= screen.max_attempts {
                break;
            }
        }
        if n >= budget {
            break;
        }
    }
    if attempts > 0 {
        Err(CertifyError::ContainmentFailed)
    } else {
        Err(CertifyError::NoDeepLeftEntry)
    }
}

pub fn certify_trap_ball(p: ExpParameter, budget: usize) -> Result<TrapBallCertificate, CertifyError> {
    certify_trap_ball_with(&ExpMap::new(p), budget, &TrapScreen::default())
}
