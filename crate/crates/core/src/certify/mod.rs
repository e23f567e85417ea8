//! Attracting-cycle certification.
//!
//! Every positive verdict is backed by a disk `D` and an iterate `f^m` with
//! `f^m(D)` strictly inside `D`, checked by [`propagate_disk`]. Such a disk
//! contains an attracting periodic point, so `λ` is hyperbolic.

mod classify;
mod cycle;
mod disk;
mod trap;

use thiserror::Error;

pub use classify::{classify, classify_with, Certificate, Classification, ClassifyConfig, Verdict};
pub use cycle::{
    certify_attracting, detect_cycle, detect_cycle_in, divisors, refine_cycle, CycleCertificate, CycleDetector,
};
pub use disk::{propagate_disk, propagate_n, Disk, RADIUS_INFLATION};
pub use trap::{certify_trap_ball, certify_trap_ball_with, TrapBallCertificate, TrapScreen};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("disk reaches real part {re}, past the escape threshold")]
    EscapeRight { re: f64 },
    #[error("Newton iteration did not converge")]
    NoConvergence,
    #[error("cycle multiplier has log-modulus {0} > 600")]
    DerivativeOverflow(f64),
    #[error("no radius in the schedule gives a contracting disk")]
    NotContractive,
    #[error("singular orbit never enters the deep left half-plane")]
    NoDeepLeftEntry,
    #[error("trap ball propagation did not return inside the ball")]
    ContainmentFailed,
    #[error("certificate does not re-verify: {0}")]
    VerificationFailed(String),
}
