//! Lattice models and their dense matrix realizations.
//!
//! Every model is described by its directed bonds: a bond `(n, t)` carries the
//! amplitude for hopping from site `n` to site `n + t`, and lands in the matrix
//! at row `n + t`, column `n`. Sites are 1-based throughout this module; matrix
//! indices are 0-based.
//!
//! Quasiperiodic phases `τπk` are evaluated either from the golden ratio in
//! double precision or, for a Fibonacci approximant `F_{j-1}/F_j`, from the
//! exactly reduced integer `F_{j-1}·k mod 2F_j` so that the phase never loses
//! accuracy at large `k`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `(√5 − 1)/2`
pub const GOLDEN_TAU: f64 = 0.618_033_988_749_894_9;

/// Amplitude rule for [`ModelKind::Generic`]: `(n, t)` gives the hopping from
/// site `n` to site `n + t`; `t = 0` is the on-site potential.
pub type AmplitudeRule = Arc<dyn Fn(i64, i64) -> C64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Generic,
    H1,
    H2,
    UniformChain,
    HatanoNelson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Obc,
    Pbc,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Obc => f.write_str("obc"),
            BoundaryCondition::Pbc => f.write_str("pbc"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    Irrational,
    /// `τ = F_{j-1}/F_j`
    RationalApprox(usize),
}

/// Consecutive Fibonacci pair `(F_{j-1}, F_j)` with `F_1 = 0`, `F_2 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FibonacciApprox {
    pub j: usize,
    pub prev: u64,
    pub current: u64,
}

impl FibonacciApprox {
    pub fn tau(&self) -> f64 {
        self.prev as f64 / self.current as f64
    }
}

/// Largest supported index; `F_92` is the last Fibonacci number below `2^63`.
pub const MAX_FIBONACCI_INDEX: usize = 92;

pub fn fibonacci_approx(j: usize) -> Result<FibonacciApprox> {
    if j < 3 {
        return invalid(format!("Fibonacci index must be at least 3, got {j}"));
    }
    if j > MAX_FIBONACCI_INDEX {
        return invalid(format!("Fibonacci index {j} exceeds {MAX_FIBONACCI_INDEX}"));
    }
    let (mut prev, mut current) = (0u64, 1u64);
    for _ in 2..j {
        let next = prev + current;
        prev = current;
        current = next;
    }
    Ok(FibonacciApprox { j, prev, current })
}

/// Index `j` with `F_j = n`, if `n` is a Fibonacci number (`j ≥ 3`).
pub fn fibonacci_index(n: u64) -> Option<usize> {
    let (mut prev, mut current, mut j) = (0u64, 1u64, 2usize);
    while current < n {
        let next = prev.checked_add(current)?;
        prev = current;
        current = next;
        j += 1;
    }
    (current == n && j >= 3).then_some(j)
}

/// Resolved incommensurate frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tau {
    Golden,
    Fibonacci(FibonacciApprox),
}

impl Tau {
    pub fn from_mode(mode: TauMode) -> Result<Self> {
        match mode {
            TauMode::Irrational => Ok(Tau::Golden),
            TauMode::RationalApprox(j) => Ok(Tau::Fibonacci(fibonacci_approx(j)?)),
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Tau::Golden => GOLDEN_TAU,
            Tau::Fibonacci(fib) => fib.tau(),
        }
    }

    /// `τπk` reduced into `[0, 2π)`.
    pub fn phase(&self, k: i64) -> f64 {
        match self {
            Tau::Golden => {
                let x = (GOLDEN_TAU * k as f64).rem_euclid(2.0);
                PI * x
            }
            Tau::Fibonacci(fib) => {
                let den = 2 * fib.current as i128;
                let r = (fib.prev as i128 * k as i128).rem_euclid(den);
                PI * (r as f64) / fib.current as f64
            }
        }
    }
}

/// `cos(x + iy)`
#[inline]
pub fn cos_complex(x: f64, y: f64) -> C64 {
    C64::new(x.cos() * y.cosh(), -x.sin() * y.sinh())
}

/// Hopping from site `n` to `n + t` in `H₁(g, h)` with decay exponent `a`:
/// `e^{-tg} cos[τπ(2n+t) + ih] / |t|^a`.
pub fn h1_amplitude_with_exponent(n: i64, t: i64, g: f64, h: f64, tau: &Tau, a: f64) -> C64 {
    debug_assert!(t != 0);
    let decay = if a == 3.0 {
        let m = t.unsigned_abs() as f64;
        m * m * m
    } else {
        (t.unsigned_abs() as f64).powf(a)
    };
    cos_complex(tau.phase(2 * n + t), h) * ((-(t as f64) * g).exp() / decay)
}

/// [`h1_amplitude_with_exponent`] with `a = 3`.
pub fn h1_amplitude(n: i64, t: i64, g: f64, h: f64, tau: &Tau) -> C64 {
    h1_amplitude_with_exponent(n, t, g, h, tau, 3.0)
}

/// Modulation `V_m = Σ_{s=1,2} cos[τsπ(2m+1) + isg] / s^a` of the `H₂` bond.
pub fn h2_modulation(m: i64, g: f64, tau: &Tau, a: f64) -> C64 {
    (1..=2i64)
        .map(|s| {
            let decay = if a == 3.0 { (s * s * s) as f64 } else { (s as f64).powf(a) };
            cos_complex(tau.phase(s * (2 * m + 1)), s as f64 * g) / decay
        })
        .sum()
}

/// Amplitudes of bond `m` in `H₂(g, h)`: `(e^{-h}V_m, e^{h}V_m)`, multiplying
/// `b†_m b_{m+1}` and `b†_{m+1} b_m` respectively.
pub fn h2_bond(m: i64, g: f64, h: f64, tau: &Tau) -> (C64, C64) {
    let v = h2_modulation(m, g, tau, 3.0);
    (v * (-h).exp(), v * h.exp())
}

/// Symbolic description of a lattice model.
#[derive(Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Hopping range `M`.
    pub range: usize,
    /// Nonreciprocity.
    pub g: f64,
    /// Gain/loss.
    pub h: f64,
    /// Power-law exponent of the hopping decay.
    pub a: f64,
    pub tau_mode: TauMode,
    pub custom_amplitude: Option<AmplitudeRule>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("kind", &self.kind)
            .field("range", &self.range)
            .field("g", &self.g)
            .field("h", &self.h)
            .field("a", &self.a)
            .field("tau_mode", &self.tau_mode)
            .field("custom_amplitude", &self.custom_amplitude.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl ModelSpec {
    pub fn h1(g: f64, h: f64) -> Self {
        ModelSpec {
            kind: ModelKind::H1,
            range: 2,
            g,
            h,
            a: 3.0,
            tau_mode: TauMode::Irrational,
            custom_amplitude: None,
        }
    }

    pub fn h2(g: f64, h: f64) -> Self {
        ModelSpec { kind: ModelKind::H2, range: 1, ..Self::h1(g, h) }
    }

    /// Nearest-neighbour chain with unit hopping and no potential.
    pub fn uniform_chain() -> Self {
        ModelSpec { kind: ModelKind::UniformChain, range: 1, ..Self::h1(0.0, 0.0) }
    }

    /// Clean chain with forward hopping `e^{-g}` and backward hopping `e^{g}`.
    pub fn hatano_nelson(g: f64) -> Self {
        ModelSpec { kind: ModelKind::HatanoNelson, range: 1, ..Self::h1(g, 0.0) }
    }

    pub fn generic(range: usize, rule: AmplitudeRule) -> Self {
        ModelSpec {
            kind: ModelKind::Generic,
            range,
            custom_amplitude: Some(rule),
            ..Self::h1(0.0, 0.0)
        }
    }

    pub fn with_tau(mut self, mode: TauMode) -> Self {
        self.tau_mode = mode;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.range == 0 {
            return invalid("hopping range M must be at least 1");
        }
        let required = match self.kind {
            ModelKind::H1 => Some(2),
            ModelKind::H2 | ModelKind::UniformChain | ModelKind::HatanoNelson => Some(1),
            ModelKind::Generic => None,
        };
        if let Some(m) = required {
            if self.range != m {
                return invalid(format!("{:?} requires M = {m}, got {}", self.kind, self.range));
            }
        }
        if self.kind == ModelKind::Generic && self.custom_amplitude.is_none() {
            return invalid("generic model needs an amplitude rule");
        }
        if !(self.a > 0.0) {
            return invalid(format!("decay exponent must be positive, got {}", self.a));
        }
        if !self.g.is_finite() || !self.h.is_finite() {
            return invalid("g and h must be finite");
        }
        Tau::from_mode(self.tau_mode)?;
        Ok(())
    }

    pub fn tau(&self) -> Result<Tau> {
        Tau::from_mode(self.tau_mode)
    }

    /// Amplitude of the directed bond from site `n` to site `n + t` on the
    /// infinite lattice (`t = 0` is the on-site term).
    pub fn bond(&self, tau: &Tau, n: i64, t: i64) -> C64 {
        let zero = C64::new(0.0, 0.0);
        if t.unsigned_abs() as usize > self.range {
            return zero;
        }
        match self.kind {
            ModelKind::H1 => {
                if t == 0 {
                    zero
                } else {
                    h1_amplitude_with_exponent(n, t, self.g, self.h, tau, self.a)
                }
            }
            ModelKind::H2 => match t {
                1 => h2_modulation(n, self.g, tau, self.a) * self.h.exp(),
                -1 => h2_modulation(n - 1, self.g, tau, self.a) * (-self.h).exp(),
                _ => zero,
            },
            ModelKind::UniformChain => {
                if t == 0 {
                    zero
                } else {
                    C64::new(1.0, 0.0)
                }
            }
            ModelKind::HatanoNelson => match t {
                1 => C64::new((-self.g).exp(), 0.0),
                -1 => C64::new(self.g.exp(), 0.0),
                _ => zero,
            },
            ModelKind::Generic => {
                self.custom_amplitude.as_ref().map_or(zero, |rule| rule(n, t))
            }
        }
    }

    /// `J_{row,col}`: hopping from `col` into `row` on the infinite lattice.
    pub fn hopping(&self, tau: &Tau, row: i64, col: i64) -> C64 {
        self.bond(tau, col, row - col)
    }

    /// Calls `f(source, offset, amplitude)` for every directed bond of a
    /// finite lattice of `size` sites. Sources stay within `1..=size`;
    /// destinations may fall outside and are reduced by the caller.
    fn for_each_bond(&self, tau: &Tau, size: usize, bc: BoundaryCondition, mut f: impl FnMut(i64, i64, C64)) {
        let n_sites = size as i64;
        match self.kind {
            ModelKind::H2 => {
                // bond m couples m and m+1; PBC adds the closing bond m = N
                let last = match bc {
                    BoundaryCondition::Obc => n_sites - 1,
                    BoundaryCondition::Pbc => n_sites,
                };
                for m in 1..=last {
                    let v = h2_modulation(m, self.g, tau, self.a);
                    f(m % n_sites + 1, -1, v * (-self.h).exp());
                    f(m, 1, v * self.h.exp());
                }
            }
            _ => {
                let m = self.range as i64;
                for n in 1..=n_sites {
                    for t in -m..=m {
                        let amp = self.bond(tau, n, t);
                        if amp != C64::new(0.0, 0.0) {
                            f(n, t, amp);
                        }
                    }
                }
            }
        }
    }
}

/// Dense Hamiltonian of a finite lattice.
#[derive(Clone, Debug)]
pub struct LatticeMatrix {
    pub entries: Mat<C64>,
    pub spec: ModelSpec,
    pub bc: BoundaryCondition,
}

impl LatticeMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// `max |A − A†|`
    pub fn hermiticity_defect(&self) -> f64 {
        let a = &self.entries;
        let n = a.nrows();
        let mut worst = 0.0f64;
        for c in 0..n {
            for r in 0..n {
                worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Writes every nonzero entry as a `row col re im` line (1-based indices).
    pub fn write_triplets<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# quasiloc-triplets/1 n={} bc={}", self.size(), self.bc)?;
        let a = &self.entries;
        for c in 0..a.ncols() {
            for r in 0..a.nrows() {
                let v = a[(r, c)];
                if v.re != 0.0 || v.im != 0.0 {
                    writeln!(out, "{} {} {:.17e} {:.17e}", r + 1, c + 1, v.re, v.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Realizes `spec` on `size` sites. Entry `(r, c)` accumulates the hopping
/// from site `c` to site `r`; under PBC the destination of each bond is
/// reduced modulo `size` while its amplitude keeps the unwrapped source.
pub fn build_matrix(spec: &ModelSpec, size: usize, bc: BoundaryCondition) -> Result<LatticeMatrix> {
    spec.validate()?;
    if size <= 2 * spec.range {
        return invalid(format!("lattice size {size} must exceed 2M = {}", 2 * spec.range));
    }
    let tau = spec.tau()?;
    if let Tau::Fibonacci(fib) = tau {
        if fib.current != size as u64 {
            return invalid(format!(
                "rational approximant F_{}={} requires N = {}, got {size}",
                fib.j, fib.current, fib.current
            ));
        }
    }
    let mut entries = Mat::<C64>::zeros(size, size);
    let n_sites = size as i64;
    spec.for_each_bond(&tau, size, bc, |src, t, amp| {
        let dest = src + t;
        let dest = match bc {
            BoundaryCondition::Obc => {
                if dest < 1 || dest > n_sites {
                    return;
                }
                dest
            }
            BoundaryCondition::Pbc => (dest - 1).rem_euclid(n_sites) + 1,
        };
        entries[((dest - 1) as usize, (src - 1) as usize)] += amp;
    });
    Ok(LatticeMatrix { entries, spec: spec.clone(), bc })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau_13() -> Tau {
        Tau::Fibonacci(fibonacci_approx(8).unwrap())
    }

    #[test]
    fn fibonacci_pairs() {
        let f = fibonacci_approx(8).unwrap();
        assert_eq!((f.prev, f.current), (8, 13));
        assert_eq!(f.tau(), 8.0 / 13.0);
        let f = fibonacci_approx(20).unwrap();
        assert_eq!((f.prev, f.current), (2584, 4181));
        let f = fibonacci_approx(22).unwrap();
        assert_eq!((f.prev, f.current), (6765, 10946));
        assert_eq!(fibonacci_index(4181), Some(20));
        assert_eq!(fibonacci_index(4180), None);
        assert!(fibonacci_approx(2).is_err());
    }

    #[test]
    fn fibonacci_recursion_and_coprimality() {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        for j in 4..=MAX_FIBONACCI_INDEX {
            let f = fibonacci_approx(j).unwrap();
            let g = fibonacci_approx(j - 1).unwrap();
            assert_eq!(f.prev, g.current);
            assert_eq!(f.current, g.current + g.prev);
            assert_eq!(gcd(f.prev, f.current), 1);
        }
    }

    #[test]
    fn rational_phase_is_exactly_periodic() {
        let tau = tau_13();
        for k in -40..40 {
            assert_eq!(tau.phase(k), tau.phase(k + 26));
            let direct = (PI * 8.0 / 13.0 * k as f64).rem_euclid(2.0 * PI);
            assert!((tau.phase(k) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn h1_amplitude_hermitian_limit_is_real() {
        for n in 1..20 {
            let a = h1_amplitude(n, 1, 0.0, 0.0, &Tau::Golden);
            assert_eq!(a.im, 0.0);
            assert!((a.re - (GOLDEN_TAU * PI * (2 * n + 1) as f64).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn h1_amplitude_reference_value() {
        // e^{-2} cos(4τπ)/8 from a 40-digit evaluation
        let expected = 0.001_478_973_152_091_995_8;
        let got = h1_amplitude(1, 2, 1.0, 0.0, &Tau::Golden);
        assert!((got.re - (-2.0f64).exp() * (4.0 * GOLDEN_TAU * PI).cos() / 8.0).abs() < 1e-15);
        assert!((got.re - expected).abs() < 1e-12, "{got}");
        assert_eq!(got.im, 0.0);
    }

    #[test]
    fn h1_amplitude_h_sign_conjugates() {
        for n in -5..5 {
            for t in [-2, -1, 1, 2] {
                let p = h1_amplitude(n, t, 0.7, 0.3, &Tau::Golden);
                let m = h1_amplitude(n, t, 0.7, -0.3, &Tau::Golden);
                assert_eq!(p.re, m.re);
                assert_eq!(p.im, -m.im);
            }
        }
    }

    #[test]
    fn h2_bond_hermitian_limit_and_ratio() {
        for m in 0..10 {
            let (f, b) = h2_bond(m, 0.0, 0.0, &Tau::Golden);
            let x = GOLDEN_TAU * PI * (2 * m + 1) as f64;
            let v = x.cos() + (2.0 * x).cos() / 8.0;
            assert!((f.re - v).abs() < 1e-12 && f.im == 0.0);
            assert_eq!(f, b);
            let (f, b) = h2_bond(m, 0.5, 0.4, &Tau::Golden);
            assert!(((b / f) - C64::new((0.8f64).exp(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn h2_bond_reference_value() {
        // m = 5, g = 1, h = 0.4, τ = 8/13, expanded by hand:
        // V = cos(11·8π/13 + i) + cos(22·8π/13 + 2i)/8
        let x1 = 88.0 * PI / 13.0;
        let x2 = 176.0 * PI / 13.0;
        let v = C64::new(x1.cos() * 1f64.cosh(), -x1.sin() * 1f64.sinh())
            + C64::new(x2.cos() * 2f64.cosh(), -x2.sin() * 2f64.sinh()) / 8.0;
        let (f, b) = h2_bond(5, 1.0, 0.4, &tau_13());
        assert!((f - v * (-0.4f64).exp()).norm() < 1e-12);
        assert!((b - v * (0.4f64).exp()).norm() < 1e-12);
    }

    #[test]
    fn builder_rejects_bad_sizes() {
        let spec = ModelSpec::h1(0.0, 0.0);
        assert!(build_matrix(&spec, 4, BoundaryCondition::Obc).is_err());
        let spec = spec.with_tau(TauMode::RationalApprox(8));
        assert!(build_matrix(&spec, 21, BoundaryCondition::Pbc).is_err());
        assert!(build_matrix(&spec, 13, BoundaryCondition::Pbc).is_ok());
        let bad = ModelSpec { range: 3, ..ModelSpec::h1(0.0, 0.0) };
        assert!(build_matrix(&bad, 20, BoundaryCondition::Obc).is_err());
    }

    #[test]
    fn hermitian_limit_is_exact() {
        let obc = build_matrix(&ModelSpec::h1(0.0, 0.0), 55, BoundaryCondition::Obc).unwrap();
        assert_eq!(obc.hermiticity_defect(), 0.0);
        let spec = ModelSpec::h1(0.0, 0.0).with_tau(TauMode::RationalApprox(11));
        let pbc = build_matrix(&spec, 55, BoundaryCondition::Pbc).unwrap();
        assert_eq!(pbc.hermiticity_defect(), 0.0);
        let spec = ModelSpec::h2(0.0, 0.0).with_tau(TauMode::RationalApprox(11));
        let pbc = build_matrix(&spec, 55, BoundaryCondition::Pbc).unwrap();
        assert_eq!(pbc.hermiticity_defect(), 0.0);
    }

    #[test]
    fn nonreciprocal_entries() {
        let g = 0.8;
        let a = build_matrix(&ModelSpec::h1(g, 0.0), 30, BoundaryCondition::Obc).unwrap();
        for n in 5..20usize {
            for t in [1usize, 2] {
                let forward = a.entries[(n + t, n)];
                let backward = a.entries[(n, n + t)];
                // same cosine, opposite gauge factors
                let ratio = forward / backward;
                assert!((ratio.re - (-2.0 * t as f64 * g).exp()).abs() < 1e-12);
            }
        }
        assert!(a.hermiticity_defect() > 1e-3);
    }

    #[test]
    fn bandedness() {
        let n = 40;
        for bc in [BoundaryCondition::Obc, BoundaryCondition::Pbc] {
            let a = build_matrix(&ModelSpec::h1(0.3, 0.2), n, bc).unwrap();
            for r in 0..n {
                for c in 0..n {
                    let d = r.abs_diff(c);
                    let allowed = d <= 2 || (bc == BoundaryCondition::Pbc && d >= n - 2);
                    if !allowed {
                        assert_eq!(a.entries[(r, c)], C64::new(0.0, 0.0));
                    }
                }
            }
            assert_eq!(a.entries[(0, 0)], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn h2_pbc_closing_bond_uses_bond_index_n() {
        let spec = ModelSpec::h2(1.0, 0.6).with_tau(TauMode::RationalApprox(8));
        let a = build_matrix(&spec, 13, BoundaryCondition::Pbc).unwrap();
        let (f, b) = h2_bond(13, 1.0, 0.6, &tau_13());
        assert_eq!(a.entries[(12, 0)], f);
        assert_eq!(a.entries[(0, 12)], b);
        // periodic modulation: V_{m+N} = V_m
        let (f0, _) = h2_bond(0, 1.0, 0.6, &tau_13());
        assert!((f - f0).norm() < 1e-12);
    }

    #[test]
    fn deterministic_build() {
        let spec = ModelSpec::h1(1.0, 0.4);
        let a = build_matrix(&spec, 50, BoundaryCondition::Pbc).unwrap();
        let b = build_matrix(&spec, 50, BoundaryCondition::Pbc).unwrap();
        for c in 0..50 {
            for r in 0..50 {
                assert_eq!(a.entries[(r, c)].re.to_bits(), b.entries[(r, c)].re.to_bits());
                assert_eq!(a.entries[(r, c)].im.to_bits(), b.entries[(r, c)].im.to_bits());
            }
        }
    }

    #[test]
    fn triplet_dump() {
        let a = build_matrix(&ModelSpec::uniform_chain(), 4, BoundaryCondition::Pbc).unwrap();
        let mut buf = Vec::new();
        a.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 8);
        assert!(text.contains("\n1 2 1.00000000000000000e0 0.00000000000000000e0\n"));
    }
}
