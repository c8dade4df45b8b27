//! Transfer matrices, QR-stabilized Lyapunov exponents, sign-pattern
//! classification and the Bloch-root oracle for clean models.
//!
//! State stacking: `Ψ_n = (ψ_{n+M}, …, ψ_{n−M+1})`, and `T_n` maps `Ψ_{n−1}`
//! to `Ψ_n` by solving row `n` of the eigenvalue equation for `ψ_{n+M}`.

use std::fmt;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, Tau};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub const DEFAULT_PIVOT_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_EPSILON_ZERO: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub entries: Mat<C64>,
    pub site: i64,
    pub energy: C64,
}

/// First row of `T_n`, offsets `M−1` down to `−M`.
fn first_row(spec: &ModelSpec, tau: &Tau, n: i64, energy: C64, pivot_threshold: f64, row: &mut [C64]) -> Result<()> {
    let m = spec.range as i64;
    let pivot = spec.hopping(tau, n, n + m);
    if !(pivot.norm() >= pivot_threshold) {
        return Err(Error::SingularTransfer { site: n, magnitude: pivot.norm() });
    }
    let inv = pivot.inv();
    for (k, slot) in row.iter_mut().enumerate() {
        let t = m - 1 - k as i64;
        let j = spec.hopping(tau, n, n + t);
        *slot = if t == 0 { (energy - j) * inv } else { -j * inv };
    }
    Ok(())
}

pub fn transfer_matrix(spec: &ModelSpec, n: i64, energy: C64) -> Result<TransferMatrix> {
    spec.validate()?;
    let tau = spec.tau()?;
    let d = 2 * spec.range;
    let mut row = vec![ZERO; d];
    first_row(spec, &tau, n, energy, DEFAULT_PIVOT_THRESHOLD, &mut row)?;
    let entries = Mat::from_fn(d, d, |r, c| {
        if r == 0 {
            row[c]
        } else if c + 1 == r {
            ONE
        } else {
            ZERO
        }
    });
    Ok(TransferMatrix { entries, site: n, energy })
}

/// `T̃_n = T_{nM} ⋯ T_{(n−1)M+1}`: propagates by one supercell of `M` sites.
pub fn supercell_transfer(spec: &ModelSpec, cell: i64, energy: C64) -> Result<TransferMatrix> {
    let m = spec.range as i64;
    let d = 2 * spec.range;
    let mut product = Mat::<C64>::identity(d, d);
    for k in 1..=m {
        let t = transfer_matrix(spec, (cell - 1) * m + k, energy)?;
        product = &t.entries * &product;
    }
    Ok(TransferMatrix { entries: product, site: cell, energy })
}

/// Localization scenarios of the Lyapunov sign patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
    V,
    Unclassified,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::IV => "IV",
            Scenario::V => "V",
            Scenario::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

fn sign(x: f64, eps: f64) -> i8 {
    if x.abs() < eps {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Signs of sorted exponents as a string such as `(-,-,0,+)`.
pub fn sign_pattern(gammas: &[f64], epsilon_zero: f64) -> String {
    let parts: Vec<&str> = gammas
        .iter()
        .map(|&g| match sign(g, epsilon_zero) {
            1 => "+",
            -1 => "-",
            _ => "0",
        })
        .collect();
    format!("({})", parts.join(","))
}

/// Decision table on `(γ_{M−1}, γ_M, γ_{M+1}, γ_{M+2})` with `|γ| < ε` as zero.
pub fn classify_pattern(gammas: &[f64], m: usize, epsilon_zero: f64) -> Scenario {
    if m == 0 || gammas.len() != 2 * m {
        return Scenario::Unclassified;
    }
    let s = |i: usize| sign(gammas[i - 1], epsilon_zero);
    let (lo, hi) = (s(m), s(m + 1));
    match (lo, hi) {
        (0, 0) => Scenario::I,
        (-1, 0) | (0, 1) => Scenario::II,
        (-1, 1) => Scenario::III,
        (a, b) if a == b => {
            // the neighbour on the side of zero
            let adjacent = if a < 0 {
                (m + 2 <= 2 * m).then(|| s(m + 2))
            } else {
                (m >= 2).then(|| s(m - 1))
            };
            match adjacent {
                Some(0) => Scenario::IV,
                Some(x) if x == -a => Scenario::V,
                _ => Scenario::Unclassified,
            }
        }
        _ => Scenario::Unclassified,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSpectrum {
    pub energy: C64,
    /// Sorted ascending, nats per site.
    pub gammas: Vec<f64>,
    pub steps: usize,
    pub scenario: Scenario,
    pub epsilon_zero: f64,
}

impl LyapunovSpectrum {
    pub fn pattern(&self) -> String {
        sign_pattern(&self.gammas, self.epsilon_zero)
    }

    /// All exponents nonzero and of one sign.
    pub fn all_same_sign(&self) -> bool {
        let signs: Vec<i8> = self.gammas.iter().map(|&g| sign(g, self.epsilon_zero)).collect();
        signs.iter().all(|&s| s == 1) || signs.iter().all(|&s| s == -1)
    }
}

#[derive(Clone, Debug)]
pub struct LyapunovOptions {
    pub steps: usize,
    pub epsilon_zero: f64,
    /// Sites `n0+1 ..= n0+steps` are used.
    pub n0: i64,
    pub pivot_threshold: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions {
            steps: 10946,
            epsilon_zero: DEFAULT_EPSILON_ZERO,
            n0: 0,
            pivot_threshold: DEFAULT_PIVOT_THRESHOLD,
        }
    }
}

/// Orthonormal frame re-factored after every multiplication.
struct QrFrame {
    d: usize,
    /// Column-major `d × d`.
    q: Vec<C64>,
    sums: Vec<f64>,
}

impl QrFrame {
    fn new(d: usize) -> Self {
        let mut q = vec![ZERO; d * d];
        for i in 0..d {
            q[i * d + i] = ONE;
        }
        QrFrame { d, q, sums: vec![0.0; d] }
    }

    /// Modified Gram–Schmidt with `r_ii > 0`, accumulating `ln r_ii`.
    fn reorthonormalize(&mut self) -> Result<()> {
        let d = self.d;
        for j in 0..d {
            for i in 0..j {
                let (done, rest) = self.q.split_at_mut(j * d);
                let qi = &done[i * d..(i + 1) * d];
                let qj = &mut rest[..d];
                let r: C64 = qi.iter().zip(qj.iter()).map(|(a, b)| a.conj() * b).sum();
                qj.iter_mut().zip(qi).for_each(|(b, a)| *b -= r * a);
            }
            let col = &mut self.q[j * d..(j + 1) * d];
            let r = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Consistency(format!("QR frame lost rank (r = {r})")));
            }
            col.iter_mut().for_each(|v| *v /= r);
            self.sums[j] += r.ln();
        }
        Ok(())
    }

    /// `Q ← T Q` for a transfer matrix given by its first row.
    fn apply_first_row(&mut self, row: &[C64]) {
        let d = self.d;
        for col in self.q.chunks_exact_mut(d) {
            let top: C64 = row.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            col.copy_within(0..d - 1, 1);
            col[0] = top;
        }
    }

    /// `Q ← A Q` for a dense matrix.
    fn apply_dense(&mut self, a: &Mat<C64>) {
        let d = self.d;
        let mut tmp = vec![ZERO; d];
        for col in self.q.chunks_exact_mut(d) {
            for (r, slot) in tmp.iter_mut().enumerate() {
                *slot = (0..d).map(|k| a[(r, k)] * col[k]).sum();
            }
            col.copy_from_slice(&tmp);
        }
    }
}

fn finish(energy: C64, mut gammas: Vec<f64>, steps: usize, m: usize, epsilon_zero: f64) -> LyapunovSpectrum {
    gammas.sort_by(f64::total_cmp);
    let scenario = classify_pattern(&gammas, m, epsilon_zero);
    LyapunovSpectrum { energy, gammas, steps, scenario, epsilon_zero }
}

fn check_options(opts: &LyapunovOptions) -> Result<()> {
    if opts.steps == 0 {
        return invalid("Lyapunov run needs at least one step");
    }
    if !(opts.epsilon_zero > 0.0) {
        return invalid(format!("epsilon_zero must be positive, got {}", opts.epsilon_zero));
    }
    Ok(())
}

pub fn lyapunov_spectrum(spec: &ModelSpec, energy: C64, steps: usize, epsilon_zero: f64) -> Result<LyapunovSpectrum> {
    lyapunov_spectrum_with(spec, energy, &LyapunovOptions { steps, epsilon_zero, ..LyapunovOptions::default() })
}

pub fn lyapunov_spectrum_with(spec: &ModelSpec, energy: C64, opts: &LyapunovOptions) -> Result<LyapunovSpectrum> {
    spec.validate()?;
    check_options(opts)?;
    if !(energy.re.is_finite() && energy.im.is_finite()) {
        return invalid("energy must be finite");
    }
    let tau = spec.tau()?;
    let d = 2 * spec.range;
    let mut frame = QrFrame::new(d);
    let mut row = vec![ZERO; d];
    for n in opts.n0 + 1..=opts.n0 + opts.steps as i64 {
        first_row(spec, &tau, n, energy, opts.pivot_threshold, &mut row)?;
        frame.apply_first_row(&row);
        frame.reorthonormalize()?;
    }
    let gammas = frame.sums.iter().map(|s| s / opts.steps as f64).collect();
    Ok(finish(energy, gammas, opts.steps, spec.range, opts.epsilon_zero))
}

/// Per-site exponents from `cells` supercell transfer matrices.
pub fn lyapunov_spectrum_supercell(
    spec: &ModelSpec,
    energy: C64,
    cells: usize,
    epsilon_zero: f64,
) -> Result<LyapunovSpectrum> {
    check_options(&LyapunovOptions { steps: cells, epsilon_zero, ..LyapunovOptions::default() })?;
    let d = 2 * spec.range;
    let mut frame = QrFrame::new(d);
    for cell in 1..=cells as i64 {
        let t = supercell_transfer(spec, cell, energy)?;
        frame.apply_dense(&t.entries);
        frame.reorthonormalize()?;
    }
    let sites = (cells * spec.range) as f64;
    let gammas = frame.sums.iter().map(|s| s / sites).collect();
    Ok(finish(energy, gammas, cells * spec.range, spec.range, epsilon_zero))
}

/// `(1/steps) Σ_n ln|det T_n|` with `|det T_n| = |J_{n,n−M} / J_{n,n+M}|`.
pub fn mean_log_det(spec: &ModelSpec, n0: i64, steps: usize) -> Result<f64> {
    spec.validate()?;
    let tau = spec.tau()?;
    let m = spec.range as i64;
    let mut sum = 0.0;
    for n in n0 + 1..=n0 + steps as i64 {
        let top = spec.hopping(&tau, n, n + m);
        if !(top.norm() >= DEFAULT_PIVOT_THRESHOLD) {
            return Err(Error::SingularTransfer { site: n, magnitude: top.norm() });
        }
        sum += (spec.hopping(&tau, n, n - m) / top).norm().ln();
    }
    Ok(sum / steps as f64)
}

/// Roots of `Σ_s t_s β^{s+M} − E β^M`, sorted by `|β|`. `coeffs[s + M]`
/// holds `t_s`, the coefficient of `ψ_{n+s}` in row `n` of the eigenvalue
/// equation, for `s = −M ..= M`.
pub fn bloch_roots(coeffs: &[C64], energy: C64) -> Result<Vec<C64>> {
    if coeffs.len() < 3 || coeffs.len() % 2 == 0 {
        return invalid(format!("expected 2M+1 coefficients, got {}", coeffs.len()));
    }
    let d = coeffs.len() - 1;
    let m = d / 2;
    let lead = coeffs[d];
    if lead == ZERO || coeffs[0] == ZERO {
        return invalid("t_M and t_-M must be nonzero");
    }
    // p(β) = Σ_k c_k β^k, with c_M shifted by −E
    let mut c: Vec<C64> = coeffs.to_vec();
    c[m] -= energy;
    let companion = Mat::from_fn(d, d, |r, col| {
        if r == 0 {
            -c[d - 1 - col] / lead
        } else if col + 1 == r {
            ONE
        } else {
            ZERO
        }
    });
    let mut roots = companion
        .eigenvalues()
        .map_err(|e| Error::EigenSolver { context: "companion matrix".into(), reason: format!("{e:?}") })?;
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    Ok(roots)
}

/// `t_s = J_{n,n+s}` of a translation-invariant model, read at site 1.
pub fn clean_coefficients(spec: &ModelSpec) -> Result<Vec<C64>> {
    spec.validate()?;
    let tau = spec.tau()?;
    let m = spec.range as i64;
    Ok((-m..=m).map(|s| spec.hopping(&tau, 1, 1 + s)).collect())
}

/// `max_i |γ_i(g) − (γ_i(0) − g)|` for each `g`.
pub fn shift_check(spec: &ModelSpec, energy: C64, g_values: &[f64], steps: usize) -> Result<Vec<(f64, f64)>> {
    let base = lyapunov_spectrum(&spec.clone().with_g(0.0), energy, steps, DEFAULT_EPSILON_ZERO)?;
    g_values
        .iter()
        .map(|&g| {
            let shifted = lyapunov_spectrum(&spec.clone().with_g(g), energy, steps, DEFAULT_EPSILON_ZERO)?;
            let residual = shifted
                .gammas
                .iter()
                .zip(&base.gammas)
                .map(|(a, b)| (a - (b - g)).abs())
                .fold(0.0, f64::max);
            Ok((g, residual))
        })
        .collect()
}
