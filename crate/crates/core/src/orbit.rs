//! Iteration of `f(z) = λ·exp(z)` with log-scale derivative bookkeeping.
//!
//! Since `f' = f`, the derivative cocycle along an orbit is the product of the
//! orbit points themselves: `Df^n(z0) = f(z0)·f²(z0)···fⁿ(z0)`. That product
//! overflows after a handful of steps, so it is carried as a log-modulus and an
//! argument reduced mod 2π.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default real-part threshold past which an orbit is declared escaped.
pub const DEFAULT_ESCAPE_RE: f64 = 50.0;

/// Window of `log_mod` in which a plain complex derivative is reconstructed.
pub const MAX_RECONSTRUCT_LOG: f64 = 600.0;

const GRID: f64 = TAU;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("parameter must be finite and nonzero, got {0}")]
    InvalidParameter(Complex64),
    #[error("real part {re} exceeds the escape threshold {threshold}")]
    EscapeRight { re: f64, threshold: f64 },
}

/// A parameter `λ` of the exponential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct ExpParameter(Complex64);

impl ExpParameter {
    pub fn new(lambda: Complex64) -> Result<Self, OrbitError> {
        if !lambda.re.is_finite() || !lambda.im.is_finite() || lambda == Complex64::new(0.0, 0.0) {
            return Err(OrbitError::InvalidParameter(lambda));
        }
        Ok(Self(lambda))
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self, OrbitError> {
        Self::new(Complex64::new(re, im))
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        self.0
    }

    /// `ln|λ|`.
    pub fn log_modulus(&self) -> f64 {
        self.0.norm().ln()
    }
}

impl TryFrom<[f64; 2]> for ExpParameter {
    type Error = OrbitError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Self::from_parts(v[0], v[1])
    }
}

impl From<ExpParameter> for [f64; 2] {
    fn from(p: ExpParameter) -> Self {
        [p.0.re, p.0.im]
    }
}

/// `Df^n` in log scale: `log_mod = ln|Df^n|`, `arg ∈ [0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCocycle {
    pub log_mod: f64,
    pub arg: f64,
}

impl DerivativeCocycle {
    pub const IDENTITY: Self = Self { log_mod: 0.0, arg: 0.0 };

    /// Multiplies in one more factor `f(z_prev) = λ·exp(z_prev)`.
    #[inline]
    pub fn advance(&mut self, log_mod_lambda: f64, arg_lambda: f64, z_prev: Complex64) {
        self.log_mod += log_mod_lambda + z_prev.re;
        self.arg = reduce_angle(self.arg + arg_lambda + z_prev.im);
    }

    /// The plain complex derivative, when `log_mod` is within ±600.
    pub fn to_complex(&self) -> Option<Complex64> {
        if self.log_mod.abs() <= MAX_RECONSTRUCT_LOG {
            Some(Complex64::from_polar(self.log_mod.exp(), self.arg))
        } else {
            None
        }
    }
}

#[inline]
pub(crate) fn reduce_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Right,
    Left,
}

/// `Right(x) = {ℜz > x}`; `Left(x)` is its complement `{ℜz ≤ x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub side: Side,
    pub level: f64,
}

impl HalfPlane {
    pub fn right(level: f64) -> Self {
        Self { side: Side::Right, level }
    }

    pub fn left(level: f64) -> Self {
        Self { side: Side::Left, level }
    }

    #[inline]
    pub fn contains(&self, z: Complex64) -> bool {
        match self.side {
            Side::Right => z.re > self.level,
            Side::Left => z.re <= self.level,
        }
    }
}

/// The lattice square `[2kπ, (2k+2)π) × [2jπ, (2j+2)π)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSquare {
    pub j: i64,
    pub k: i64,
}

impl GridSquare {
    pub fn left_edge(&self) -> f64 {
        self.k as f64 * GRID
    }

    pub fn bottom_edge(&self) -> f64 {
        self.j as f64 * GRID
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(self.left_edge() + 0.5 * GRID, self.bottom_edge() + 0.5 * GRID)
    }

    pub fn side() -> f64 {
        GRID
    }

    pub fn diameter() -> f64 {
        GRID * std::f64::consts::SQRT_2
    }

    pub fn contains(&self, z: Complex64) -> bool {
        square_of(z) == *self
    }

    /// Point at fractional coordinates `(u, v) ∈ [0,1)²` of the square.
    pub fn point_at(&self, u: f64, v: f64) -> Complex64 {
        Complex64::new(self.left_edge() + u * GRID, self.bottom_edge() + v * GRID)
    }
}

/// The grid square containing `z` (floor semantics on both axes).
pub fn square_of(z: Complex64) -> GridSquare {
    GridSquare {
        j: (z.im / GRID).floor() as i64,
        k: (z.re / GRID).floor() as i64,
    }
}

/// A square of side `2π·2^{-scale_exp}` on the refined lattice; scaling it by
/// `2^{scale_exp}` gives a [`GridSquare`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicSquare {
    pub scale_exp: u32,
    /// Lattice indices `(a, b)`: real range `[a·s, (a+1)·s)`, imaginary `[b·s, (b+1)·s)`.
    pub lattice: (i64, i64),
}

impl DyadicSquare {
    pub fn new(scale_exp: u32, lattice: (i64, i64)) -> Self {
        assert!(scale_exp >= 1, "dyadic squares have scale 2^-k with k >= 1");
        Self { scale_exp, lattice }
    }

    /// The scale-`2^{-k}` square containing `z`.
    pub fn containing(z: Complex64, scale_exp: u32) -> Self {
        let s = Self::side_for(scale_exp);
        Self::new(scale_exp, ((z.re / s).floor() as i64, (z.im / s).floor() as i64))
    }

    fn side_for(scale_exp: u32) -> f64 {
        GRID * (-(scale_exp as f64)).exp2()
    }

    pub fn side(&self) -> f64 {
        Self::side_for(self.scale_exp)
    }

    pub fn area(&self) -> f64 {
        self.side() * self.side()
    }

    pub fn corner(&self) -> Complex64 {
        let s = self.side();
        Complex64::new(self.lattice.0 as f64 * s, self.lattice.1 as f64 * s)
    }

    pub fn center(&self) -> Complex64 {
        let s = self.side();
        self.corner() + Complex64::new(0.5 * s, 0.5 * s)
    }

    pub fn half_diagonal(&self) -> f64 {
        self.side() * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn children(&self) -> [DyadicSquare; 4] {
        let (a, b) = self.lattice;
        let k = self.scale_exp + 1;
        [
            Self::new(k, (2 * a, 2 * b)),
            Self::new(k, (2 * a + 1, 2 * b)),
            Self::new(k, (2 * a, 2 * b + 1)),
            Self::new(k, (2 * a + 1, 2 * b + 1)),
        ]
    }

    /// The grid square this dyadic square sits in.
    pub fn grid_square(&self) -> GridSquare {
        square_of(self.center())
    }

    pub fn contains(&self, z: Complex64) -> bool {
        *self == Self::containing(z, self.scale_exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    BudgetExhausted,
    EscapedRight,
    PredicateHit,
    Underflowed,
}

/// A computed orbit `z₀…z_n` with the cocycle of `Df^k(z₀)` at every index.
#[derive(Debug, Clone)]
pub struct OrbitTrace {
    pub lambda: ExpParameter,
    pub points: Vec<Complex64>,
    pub cocycles: Vec<DerivativeCocycle>,
    /// `min_{1≤j≤n} |z_j|`; `+∞` for a trace with no steps.
    pub min_mod: f64,
    pub termination: Termination,
}

impl OrbitTrace {
    /// Number of steps taken (`points.len() - 1`).
    pub fn len_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn last(&self) -> Complex64 {
        *self.points.last().expect("trace always holds the starting point")
    }
}

/// First entry of an orbit into a half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstEntryRecord {
    pub n: usize,
    pub landing: Complex64,
    pub cocycle: DerivativeCocycle,
}

/// `f_λ` together with its escape threshold and cached `ln|λ|`, `arg λ`.
#[derive(Debug, Clone, Copy)]
pub struct ExpMap {
    param: ExpParameter,
    log_mod_lambda: f64,
    arg_lambda: f64,
    escape_re: f64,
}

impl ExpMap {
    pub fn new(param: ExpParameter) -> Self {
        Self::with_escape(param, DEFAULT_ESCAPE_RE)
    }

    pub fn with_escape(param: ExpParameter, escape_re: f64) -> Self {
        let lambda = param.value();
        Self {
            param,
            log_mod_lambda: lambda.norm().ln(),
            arg_lambda: reduce_angle(lambda.arg()),
            escape_re,
        }
    }

    #[inline]
    pub fn param(&self) -> ExpParameter {
        self.param
    }

    #[inline]
    pub fn lambda(&self) -> Complex64 {
        self.param.value()
    }

    #[inline]
    pub fn escape_re(&self) -> f64 {
        self.escape_re
    }

    #[inline]
    pub fn log_mod_lambda(&self) -> f64 {
        self.log_mod_lambda
    }

    #[inline]
    pub fn arg_lambda(&self) -> f64 {
        self.arg_lambda
    }

    /// `λ·exp(z)` with no threshold check.
    #[inline]
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.param.value() * z.exp()
    }

    #[inline]
    pub fn step(&self, z: Complex64) -> Result<Complex64, OrbitError> {
        if z.re > self.escape_re {
            return Err(OrbitError::EscapeRight { re: z.re, threshold: self.escape_re });
        }
        Ok(self.eval(z))
    }

    #[inline]
    pub fn advance_cocycle(&self, c: &mut DerivativeCocycle, z_prev: Complex64) {
        c.advance(self.log_mod_lambda, self.arg_lambda, z_prev);
    }

    /// Streaming orbit from `z0`.
    pub fn orbit(&self, z0: Complex64) -> Orbit {
        Orbit {
            map: *self,
            z: z0,
            cocycle: DerivativeCocycle::IDENTITY,
            index: 0,
            state: OrbitState::Fresh,
        }
    }

    pub fn iterate_orbit(&self, z0: Complex64, n_max: usize, stop: Option<HalfPlane>) -> OrbitTrace {
        let mut points = Vec::with_capacity(n_max.min(1 << 16) + 1);
        let mut cocycles = Vec::with_capacity(n_max.min(1 << 16) + 1);
        let mut min_mod = f64::INFINITY;
        let mut termination = Termination::BudgetExhausted;
        let mut orbit = self.orbit(z0);
        loop {
            let (k, z, c) = match orbit.next() {
                Some(item) => item,
                None => {
                    termination = orbit.termination().unwrap_or(Termination::BudgetExhausted);
                    break;
                }
            };
            points.push(z);
            cocycles.push(c);
            if k >= 1 {
                min_mod = min_mod.min(z.norm());
            }
            if stop.is_some_and(|h| h.contains(z)) {
                termination = Termination::PredicateHit;
                break;
            }
            if k == n_max {
                break;
            }
        }
        OrbitTrace { lambda: self.param, points, cocycles, min_mod, termination }
    }

    pub fn first_entry(&self, z0: Complex64, target: HalfPlane, t_max: usize) -> Option<FirstEntryRecord> {
        for (n, z, cocycle) in self.orbit(z0) {
            if target.contains(z) {
                return Some(FirstEntryRecord { n, landing: z, cocycle });
            }
            if n >= t_max {
                break;
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OrbitState {
    Fresh,
    Running,
    Done(Termination),
}

/// Iterator over `(k, z_k, Df^k(z₀))`, starting at `k = 0`. Ends when the next
/// step would start from a point past the escape threshold, or when an iterate
/// underflows to exactly zero (that zero is still yielded).
#[derive(Debug, Clone)]
pub struct Orbit {
    map: ExpMap,
    z: Complex64,
    cocycle: DerivativeCocycle,
    index: usize,
    state: OrbitState,
}

impl Orbit {
    /// Why the iterator stopped, once it has.
    pub fn termination(&self) -> Option<Termination> {
        match self.state {
            OrbitState::Done(t) => Some(t),
            _ => None,
        }
    }
}

impl Iterator for Orbit {
    type Item = (usize, Complex64, DerivativeCocycle);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        match self.state {
            OrbitState::Fresh => {
                self.state = OrbitState::Running;
                Some((0, self.z, self.cocycle))
            }
            OrbitState::Done(_) => None,
            OrbitState::Running => {
                if self.z.re > self.map.escape_re {
                    self.state = OrbitState::Done(Termination::EscapedRight);
                    return None;
                }
                let prev = self.z;
                self.z = self.map.eval(prev);
                self.map.advance_cocycle(&mut self.cocycle, prev);
                self.index += 1;
                if self.z.re == 0.0 && self.z.im == 0.0 {
                    self.state = OrbitState::Done(Termination::Underflowed);
                }
                Some((self.index, self.z, self.cocycle))
            }
        }
    }
}

/// One application of `f_λ` with the default escape threshold.
pub fn step(p: ExpParameter, z: Complex64) -> Result<Complex64, OrbitError> {
    ExpMap::new(p).step(z)
}

pub fn iterate_orbit(p: ExpParameter, z0: Complex64, n_max: usize, stop: Option<HalfPlane>) -> OrbitTrace {
    ExpMap::new(p).iterate_orbit(z0, n_max, stop)
}

pub fn first_entry(p: ExpParameter, z0: Complex64, target: HalfPlane, t_max: usize) -> Option<FirstEntryRecord> {
    ExpMap::new(p).first_entry(z0, target, t_max)
}

/// Smallest sum over contiguous blocks of `terms`, the empty block (sum 0)
/// included. Applied to `ln|f^j(z)|` this is `ln inf_{j,k} |Df^j(f^k(z))|`.
pub fn min_block_sum(terms: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut run = 0.0f64;
    for &t in terms {
        run = (run + t).min(0.0);
        best = best.min(run);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    #[test]
    fn min_block_sum_brute_force() {
        let terms = [1.0, -2.0, 0.5, -3.0, 4.0, -0.25];
        let mut brute = 0.0f64;
        for i in 0..terms.len() {
            for j in i..terms.len() {
                brute = brute.min(terms[i..=j].iter().sum());
            }
        }
        assert_eq!(min_block_sum(&terms), brute);
        assert_eq!(min_block_sum(&[1.0, 2.0]), 0.0);
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_pi_i() -> ExpParameter {
        ExpParameter::from_parts(0.0, 2.0 * PI).unwrap()
    }

    #[test]
    fn rejects_zero_and_nonfinite_parameters() {
        assert!(ExpParameter::from_parts(0.0, 0.0).is_err());
        assert!(ExpParameter::from_parts(f64::NAN, 1.0).is_err());
        assert!(ExpParameter::from_parts(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn step_examples() {
        let l = two_pi_i();
        assert_eq!(step(l, c(0.0, 0.0)).unwrap(), c(0.0, 2.0 * PI));
        let fixed = step(l, c(0.0, 2.0 * PI)).unwrap();
        assert!((fixed - c(0.0, 2.0 * PI)).norm() < 1e-14);
        let one = ExpParameter::from_parts(1.0, 0.0).unwrap();
        assert!((step(one, c(1.0, 0.0)).unwrap() - c(E, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn step_refuses_past_threshold() {
        let one = ExpParameter::from_parts(1.0, 0.0).unwrap();
        assert!(matches!(step(one, c(50.5, 0.0)), Err(OrbitError::EscapeRight { .. })));
        assert!(step(one, c(50.0, 0.0)).is_ok());
    }

    #[test]
    fn orbit_of_two_pi_i_lands_on_fixed_point() {
        let t = iterate_orbit(two_pi_i(), c(0.0, 0.0), 5, None);
        assert_eq!(t.points.len(), 6);
        assert_eq!(t.termination, Termination::BudgetExhausted);
        for z in &t.points[1..] {
            assert!((z - c(0.0, 2.0 * PI)).norm() < 1e-12);
        }
        let t2 = iterate_orbit(two_pi_i(), c(0.0, 0.0), 2, None);
        assert!((t2.cocycles[2].log_mod - 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!((t2.cocycles[2].log_mod - 3.6757541328186907).abs() < 1e-12);
    }

    #[test]
    fn cocycle_product_formula_real_orbit() {
        let one = ExpParameter::from_parts(1.0, 0.0).unwrap();
        let t = iterate_orbit(one, c(0.0, 0.0), 3, None);
        assert!((t.cocycles[3].log_mod - (1.0 + E)).abs() < 1e-12);
        assert_eq!(t.cocycles[3].arg, 0.0);
    }

    #[test]
    fn first_entry_examples() {
        // In double precision fl(2πi) is not exactly Misiurewicz: the round-off
        // offset ~1.5e-15 grows by 2π per step and the orbit leaves the fixed
        // point after ~20 iterations (it enters ℜz > 1 at n = 22).
        assert!(first_entry(two_pi_i(), c(0.0, 0.0), HalfPlane::right(1.0), 20).is_none());
        let late = first_entry(two_pi_i(), c(0.0, 0.0), HalfPlane::right(1.0), 10_000).unwrap();
        assert!(late.n > 20);

        let one = ExpParameter::from_parts(1.0, 0.0).unwrap();
        let rec = first_entry(one, c(0.0, 0.0), HalfPlane::right(2.0), 10).unwrap();
        assert_eq!(rec.n, 2);
        assert!((rec.landing - c(E, 0.0)).norm() < 1e-15);

        let minus_one = ExpParameter::from_parts(-1.0, 0.0).unwrap();
        let rec = first_entry(minus_one, c(0.0, 0.0), HalfPlane::left(-0.5), 10).unwrap();
        assert_eq!(rec.n, 1);
        assert_eq!(rec.landing, c(-1.0, 0.0));
    }

    #[test]
    fn first_entry_none_when_escaping_first() {
        // λ=1 escapes monotonically along the real axis and never enters ℜz ≤ -1.
        let one = ExpParameter::from_parts(1.0, 0.0).unwrap();
        assert!(first_entry(one, c(0.0, 0.0), HalfPlane::left(-1.0), 100).is_none());
        let t = iterate_orbit(one, c(0.0, 0.0), 100, None);
        assert_eq!(t.termination, Termination::EscapedRight);
        assert!(t.last().re > DEFAULT_ESCAPE_RE);
    }

    #[test]
    fn square_of_examples() {
        assert_eq!(square_of(c(0.0, 0.0)), GridSquare { j: 0, k: 0 });
        assert_eq!(square_of(c(-0.1, 0.0)), GridSquare { j: 0, k: -1 });
        assert_eq!(square_of(c(7.0, 7.0)), GridSquare { j: 1, k: 1 });
        assert!((GridSquare::diameter() - 2.0 * 2f64.sqrt() * PI).abs() < 1e-15);
    }

    #[test]
    fn dyadic_children_partition_area() {
        let d = DyadicSquare::new(3, (-5, 2));
        let kids = d.children();
        let total: f64 = kids.iter().map(DyadicSquare::area).sum();
        assert_eq!(total, d.area());
        for k in kids {
            assert!(d.contains(k.center()));
            assert_eq!(k.scale_exp, 4);
        }
        let scaled = d.center() * 8.0;
        assert_eq!(square_of(scaled), GridSquare { j: 2, k: -5 });
    }

    #[test]
    fn underflow_terminates_with_zero() {
        let p = ExpParameter::from_parts(1.0, 0.0).unwrap();
        let t = iterate_orbit(p, c(-800.0, 1.0), 10, None);
        assert_eq!(t.termination, Termination::Underflowed);
        assert_eq!(t.last(), c(0.0, 0.0));
        assert_eq!(t.min_mod, 0.0);
    }

    #[test]
    fn cocycle_reconstruction_window() {
        let c1 = DerivativeCocycle { log_mod: 601.0, arg: 0.0 };
        assert!(c1.to_complex().is_none());
        let c2 = DerivativeCocycle { log_mod: 2.0, arg: PI / 2.0 };
        let z = c2.to_complex().unwrap();
        assert!((z - c(0.0, 2f64.exp())).norm() < 1e-14);
    }

    #[test]
    fn reduce_angle_stays_in_range() {
        for a in [-1e-300, -TAU, 7.0 * TAU, -3.5, 1e10] {
            let r = reduce_angle(a);
            assert!((0.0..TAU).contains(&r), "{a} -> {r}");
        }
    }
}
