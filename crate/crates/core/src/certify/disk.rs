use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::CertifyError;
use crate::orbit::ExpMap;

/// Multiplicative slack applied to every propagated radius.
pub const RADIUS_INFLATION: f64 = 1.0 + 1.0 / (1u64 << 40) as f64;

/// Relative error budget for one evaluation of `λ·exp(c)` (exp, sin/cos and one
/// complex product, each within a couple of ulps).
const CENTER_REL_ERR: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Complex64,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Complex64, radius: f64) -> Self {
        debug_assert!(radius.is_finite() && radius >= 0.0);
        Self { center, radius }
    }

    pub fn contains_point(&self, w: Complex64) -> bool {
        (w - self.center).norm() <= self.radius
    }

    /// Strict containment `|c' - c| + r' < r`, with the left side rounded up.
    pub fn strictly_contains(&self, inner: &Disk) -> bool {
        let lhs = ((inner.center - self.center).norm() + inner.radius) * (1.0 + 4.0 * f64::EPSILON);
        lhs < self.radius
    }
}

/// Encloses `f(d)` for `f = λ·exp`.
///
/// For `w = c + h` with `|h| ≤ ρ`, `|f(w) - f(c)| = |f(c)|·|e^h - 1| ≤ |f(c)|·(e^ρ - 1)`.
/// The computed centre carries its own rounding error, which is added as an
/// absolute term `4ε·|f(c)|` (plus the smallest normal, for underflowed
/// images) before the relative inflation.
pub fn propagate_disk(map: &ExpMap, d: &Disk) -> Result<Disk, CertifyError> {
    let top = d.center.re + d.radius;
    if !(top <= map.escape_re()) {
        return Err(CertifyError::EscapeRight { re: top });
    }
    let center = map.eval(d.center);
    let modulus = center.norm();
    let radius =
        (modulus * d.radius.exp_m1() + CENTER_REL_ERR * modulus + f64::MIN_POSITIVE) * RADIUS_INFLATION;
    if !radius.is_finite() {
        return Err(CertifyError::EscapeRight { re: top });
    }
    Ok(Disk { center, radius })
}

/// Propagates `d` through `steps` applications of `f`.
pub fn propagate_n(map: &ExpMap, d: &Disk, steps: usize) -> Result<Disk, CertifyError> {
    let mut cur = *d;
    for _ in 0..steps {
        cur = propagate_disk(map, &cur)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::ExpParameter;
    use std::f64::consts::E;

    const OMEGA: f64 = 0.567_143_290_409_783_8;

    fn map(re: f64, im: f64) -> ExpMap {
        ExpMap::new(ExpParameter::from_parts(re, im).unwrap())
    }

    #[test]
    fn point_maps_to_point_up_to_roundoff_floor() {
        let out = propagate_disk(&map(1.0, 0.0), &Disk::new(Complex64::new(0.0, 0.0), 0.0)).unwrap();
        assert_eq!(out.center, Complex64::new(1.0, 0.0));
        assert!(out.radius <= 1e-15);
    }

    #[test]
    fn unit_disk_under_identity_scale() {
        let out = propagate_disk(&map(1.0, 0.0), &Disk::new(Complex64::new(0.0, 0.0), 1.0)).unwrap();
        assert_eq!(out.center, Complex64::new(1.0, 0.0));
        assert!((out.radius - (E - 1.0)).abs() < 1e-11);
        assert!(out.radius >= (E - 1.0) * RADIUS_INFLATION);
    }

    #[test]
    fn omega_fixed_point_disk_contracts() {
        let d = Disk::new(Complex64::new(-OMEGA, 0.0), 0.1);
        let out = propagate_disk(&map(-1.0, 0.0), &d).unwrap();
        assert!((out.center - d.center).norm() < 1e-15);
        // Ω·(e^0.1 - 1)
        assert!((out.radius - 0.059_646).abs() < 1e-6);
        assert!(d.strictly_contains(&out));
    }

    #[test]
    fn escape_precondition() {
        let d = Disk::new(Complex64::new(49.5, 0.0), 1.0);
        assert!(propagate_disk(&map(1.0, 0.0), &d).is_err());
    }

    #[test]
    fn strict_containment_rejects_equal_disks() {
        let d = Disk::new(Complex64::new(0.3, 0.0), 0.5);
        assert!(!d.strictly_contains(&d));
        assert!(d.strictly_contains(&Disk::new(Complex64::new(0.3, 0.0), 0.49)));
    }
}
