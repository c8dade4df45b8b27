//! Eigendecomposition of lattice Hamiltonians, fractal dimensions, and
//! matching of two spectra.
//!
//! Eigenvalues come from faer's dense solvers. Before solving, the matrix is
//! tested for a diagonal gauge `D` that makes `D⁻¹AD` Hermitian or complex
//! symmetric (the open chain of a nonreciprocal model is of this kind). The
//! gauge is carried in log form, so even scale factors like `e^{gN}` at
//! `N ~ 10⁴` never overflow, and eigenvectors are mapped back into the site
//! basis with it. Right eigenvectors of non-Hermitian matrices are obtained by
//! inverse iteration on the band structure of the lattice, which is `O(N)` per
//! state instead of a dense back-substitution.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::banded::{Ordering, ShiftedSolver, SparseRows};
use crate::error::{invalid, Error, Result};
use crate::model::LatticeMatrix;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct EigOptions {
    /// Residual bound relative to `‖H‖_F`.
    pub tol_eig: f64,
    pub max_size: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions { tol_eig: 1e-10, max_size: 16384 }
    }
}

/// Full spectrum with normalized right eigenvectors, sorted by `(Re E, Im E)`.
#[derive(Clone, Debug)]
pub struct EigenSet {
    pub eigenvalues: Vec<C64>,
    pub eigenvectors: Vec<Vec<C64>>,
    /// `‖Hψ − Eψ‖₂`
    pub residuals: Vec<f64>,
    pub fds: Vec<f64>,
}

impl EigenSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// A single eigenpair.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: C64,
    pub vector: Vec<C64>,
    pub residual: f64,
    pub fd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    Hermitian,
    General,
}

/// Matrix after gauge removal, with the data the solvers share.
struct Prepared {
    /// `D⁻¹AD`
    sparse: SparseRows,
    /// `ln D`, absent when no gauge was applied.
    log_scale: Option<Vec<f64>>,
    symmetry: Symmetry,
    real: bool,
    /// `‖A‖_F` of the original matrix.
    norm: f64,
    original: SparseRows,
}

fn context(m: &LatticeMatrix) -> String {
    let s = &m.spec;
    format!("{:?}(g={}, h={}, N={}, {})", s.kind, s.g, s.h, m.size(), m.bc)
}

fn max_abs(a: &SparseRows) -> f64 {
    a.rows.iter().flat_map(|r| r.iter().map(|&(_, v)| v.norm())).fold(0.0, f64::max)
}

fn is_real(a: &SparseRows) -> bool {
    a.rows.iter().all(|r| r.iter().all(|&(_, v)| v.im == 0.0))
}

/// `max |a_rc − op(a_cr)|` relative to `max |a|`.
fn asymmetry(sparse: &SparseRows, conjugate: bool) -> f64 {
    let mut worst = 0.0f64;
    for (r, row) in sparse.rows.iter().enumerate() {
        for &(c, v) in row {
            let t = sparse.get(c, r);
            let t = if conjugate { t.conj() } else { t };
            worst = worst.max((v - t).norm());
        }
    }
    worst / max_abs(sparse).max(f64::MIN_POSITIVE)
}

/// Log-scale that equalizes `|a_{n+1,n}|` and `|a_{n,n+1}|` along the chain.
fn chain_gauge(a: &SparseRows) -> Option<Vec<f64>> {
    let n = a.n;
    let mut ls = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let lo = a.get(i + 1, i).norm();
        let up = a.get(i, i + 1).norm();
        ls[i + 1] = match (lo > 0.0, up > 0.0) {
            (true, true) => ls[i] + 0.5 * (lo / up).ln(),
            (false, false) => ls[i],
            _ => return None,
        };
    }
    let spread = ls.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    (spread > 1e-14).then_some(ls)
}

const SYMMETRY_TOL: f64 = 1e-12;

fn prepare(m: &LatticeMatrix, opts: &EigOptions) -> Result<Prepared> {
    let n = m.size();
    if n > opts.max_size {
        return invalid(format!("matrix size {n} exceeds the configured maximum {}", opts.max_size));
    }
    let a = &m.entries;
    for c in 0..n {
        for r in 0..n {
            if !a[(r, c)].re.is_finite() || !a[(r, c)].im.is_finite() {
                return Err(Error::EigenSolver { context: context(m), reason: "non-finite entry".into() });
            }
        }
    }
    let original = SparseRows::from_dense(a);
    let norm = original.frobenius_norm();

    let plain_hermitian = asymmetry(&original, true) <= SYMMETRY_TOL;
    let mut prepared = Prepared {
        sparse: original.clone(),
        log_scale: None,
        symmetry: if plain_hermitian { Symmetry::Hermitian } else { Symmetry::General },
        real: is_real(&original),
        norm,
        original,
    };
    if plain_hermitian {
        return Ok(prepared);
    }
    if let Some(ls) = chain_gauge(&prepared.original) {
        let rows = prepared
            .original
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| row.iter().map(|&(c, v)| (c, v * (ls[c] - ls[r]).exp())).collect())
            .collect();
        let sparse = SparseRows { n, rows };
        let hermitian = asymmetry(&sparse, true) <= SYMMETRY_TOL;
        let symmetric = asymmetry(&sparse, false) <= SYMMETRY_TOL;
        if hermitian || symmetric {
            prepared.real = is_real(&sparse);
            prepared.sparse = sparse;
            prepared.log_scale = Some(ls);
            prepared.symmetry = if hermitian { Symmetry::Hermitian } else { Symmetry::General };
        }
    }
    Ok(prepared)
}

impl Prepared {
    /// Dense copy of the working matrix, built only for full diagonalization.
    fn dense(&self) -> Mat<C64> {
        let mut w = Mat::zeros(self.sparse.n, self.sparse.n);
        for (r, row) in self.sparse.rows.iter().enumerate() {
            for &(c, v) in row {
                w[(r, c)] = v;
            }
        }
        w
    }

    /// Maps a vector of `D⁻¹AD` back to the site basis and normalizes it.
    fn to_site_basis(&self, x: &[C64]) -> Vec<C64> {
        let mut psi: Vec<C64> = match &self.log_scale {
            None => x.to_vec(),
            Some(ls) => {
                let peak = x
                    .iter()
                    .zip(ls)
                    .filter(|(v, _)| **v != ZERO)
                    .map(|(v, l)| v.norm().ln() + l)
                    .fold(f64::NEG_INFINITY, f64::max);
                x.iter().zip(ls).map(|(v, l)| if *v == ZERO { ZERO } else { v * (l - peak).exp() }).collect()
            }
        };
        normalize(&mut psi);
        psi
    }

    fn residual(&self, value: C64, psi: &[C64]) -> f64 {
        let mut out = vec![ZERO; psi.len()];
        self.original.apply(psi, &mut out);
        out.iter().zip(psi).map(|(o, p)| (o - value * p).norm_sqr()).sum::<f64>().sqrt()
    }

    fn hermitian_part(&self) -> Mat<C64> {
        let w = self.dense();
        Mat::from_fn(w.nrows(), w.ncols(), |r, c| (w[(r, c)] + w[(c, r)].conj()) * 0.5)
    }

    fn real_part(m: &Mat<C64>) -> Mat<f64> {
        Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)].re)
    }

    fn eigenvalues(&self, ctx: &dyn Fn() -> String) -> Result<Vec<C64>> {
        let fail = |e: faer::linalg::evd::EvdError| Error::EigenSolver { context: ctx(), reason: format!("{e:?}") };
        match (self.symmetry, self.real) {
            (Symmetry::Hermitian, true) => Ok(Self::real_part(&self.hermitian_part())
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(fail)?
                .into_iter()
                .map(|x| C64::new(x, 0.0))
                .collect()),
            (Symmetry::Hermitian, false) => Ok(self
                .hermitian_part()
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(fail)?
                .into_iter()
                .map(|x| C64::new(x, 0.0))
                .collect()),
            (Symmetry::General, true) => Self::real_part(&self.dense()).eigenvalues().map_err(fail),
            (Symmetry::General, false) => self.dense().eigenvalues().map_err(fail),
        }
    }

    /// Eigenpairs of the Hermitian working matrix, vectors in its basis.
    fn hermitian_pairs(&self, ctx: &dyn Fn() -> String) -> Result<Vec<(C64, Vec<C64>)>> {
        let fail = |e: faer::linalg::evd::EvdError| Error::EigenSolver { context: ctx(), reason: format!("{e:?}") };
        let herm = self.hermitian_part();
        let n = herm.nrows();
        if self.real {
            let evd = Self::real_part(&herm).self_adjoint_eigen(Side::Lower).map_err(fail)?;
            let (s, u) = (evd.S(), evd.U());
            Ok((0..n)
                .map(|k| (C64::new(s[k], 0.0), (0..n).map(|i| C64::new(u[(i, k)], 0.0)).collect()))
                .collect())
        } else {
            let evd = herm.self_adjoint_eigen(Side::Lower).map_err(fail)?;
            let (s, u) = (evd.S(), evd.U());
            Ok((0..n).map(|k| (C64::new(s[k].re, 0.0), (0..n).map(|i| u[(i, k)]).collect())).collect())
        }
    }

    /// Band layout of the gauged matrix, if it is narrow enough.
    fn band(&self) -> Option<(Ordering, usize, usize)> {
        narrow_band(&self.sparse)
    }

    /// Inverse iteration from `start`, both in the site basis. The LU is
    /// that of the balanced gauged matrix, so small components come out with
    /// relative accuracy, and the iterate lives in the site basis where a
    /// skin mode is representable even when its gauged tail would underflow.
    /// Returns the iterate with the smallest residual, paired with `value`
    /// if `exact` or else with its least-squares corrected eigenvalue. Near
    /// degenerate neighbours can have far more weight in the site basis, so
    /// late iterates may drift towards them.
    fn refine(&self, band: (Ordering, usize, usize), value: C64, start: &[C64], exact: bool) -> (C64, Vec<C64>) {
        let (o, kl, ku) = band;
        let scale = self.sparse.frobenius_norm().max(f64::MIN_POSITIVE);
        let mut solver = ShiftedSolver::new(&self.sparse, o, kl, ku, value, scale, self.log_scale.as_deref());
        let mut x = start.to_vec();
        normalize(&mut x);
        let mut best = (f64::INFINITY, value, x.clone());
        for it in 0..20 {
            let mut y = x.clone();
            let log_s = solver.solve(&mut y);
            let size = norm(&y);
            if !size.is_finite() || size == 0.0 {
                break;
            }
            // ‖(A − σ)⁻¹x‖ = size·e^(−log_s)
            let inv_growth = (log_s - size.ln()).exp();
            // (A − σ)y = x, so min over δ of ‖x − δy‖ picks the best eigenvalue σ + δ for y
            let yx: C64 = y.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
            let corrected = value + yx / size * inv_growth;
            y.iter_mut().for_each(|v| *v /= size);
            // tails far below the peak converge more slowly than the norm
            let settled = y
                .iter()
                .zip(&x)
                .filter(|(a, b)| a.norm() > 1e-150 && b.norm() > 1e-150)
                .all(|(a, b)| (a.norm().ln() - b.norm().ln()).abs() < 1e-3);
            let v = if exact { value } else { corrected };
            let res = self.residual(v, &y);
            if res < best.0 {
                best = (res, v, y.clone());
            }
            x = y;
            if res <= 4.0 * f64::EPSILON * scale || (it >= 1 && settled && inv_growth <= 1e-15 * scale) {
                break;
            }
        }
        (best.1, best.2)
    }
}

/// Drops components at round-off level; the gauge would blow them up.
fn denoise(x: &[C64], level: f64) -> Vec<C64> {
    let peak = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    x.iter().map(|&v| if v.norm() > level * peak { v } else { ZERO }).collect()
}

fn narrow_band(a: &SparseRows) -> Option<(Ordering, usize, usize)> {
    let (o, kl, ku) = a.best_ordering();
    (kl + ku <= 16.max(a.n / 16)).then_some((o, kl, ku))
}

fn norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(x: &mut [C64]) {
    let s = norm(x);
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
}

/// Deterministic start vector with no special alignment to the lattice.
fn start_vector(n: usize) -> Vec<C64> {
    const PHI: f64 = 0.618_033_988_749_894_9;
    const SQRT2: f64 = std::f64::consts::SQRT_2;
    (0..n)
        .map(|i| {
            let x = ((i as f64 + 1.0) * PHI).fract();
            let y = ((i as f64 + 1.0) * SQRT2).fract();
            C64::new(0.5 + x, y - 0.5)
        })
        .collect()
}

/// Eigenvalues only.
pub fn eigenvalues(matrix: &LatticeMatrix) -> Result<Vec<C64>> {
    let opts = EigOptions::default();
    let prepared = prepare(matrix, &opts)?;
    let mut values = prepared.eigenvalues(&|| context(matrix))?;
    sort_values(&mut values);
    Ok(values)
}

fn sort_values(values: &mut [C64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

pub fn eig(matrix: &LatticeMatrix) -> Result<EigenSet> {
    eig_with(matrix, &EigOptions::default())
}

pub fn eig_with(matrix: &LatticeMatrix, opts: &EigOptions) -> Result<EigenSet> {
    let ctx = || context(matrix);
    let prepared = prepare(matrix, opts)?;
    let n = matrix.size();

    let band = prepared.band();
    let bound = opts.tol_eig * prepared.norm;
    let mut states: Vec<(C64, Vec<C64>)> = match prepared.symmetry {
        Symmetry::Hermitian => {
            let pairs = prepared.hermitian_pairs(&ctx)?;
            let values: Vec<f64> = pairs.iter().map(|(v, _)| v.re).collect();
            let scale = prepared.sparse.frobenius_norm();
            pairs
                .into_iter()
                .enumerate()
                .map(|(k, (v, x))| match (band, prepared.log_scale.is_some()) {
                    (Some(band), true) => {
                        let direct = prepared.to_site_basis(&x);
                        if prepared.residual(v, &direct) <= bound {
                            return (v, direct);
                        }
                        // a dense eigenvector carries its neighbours at about ε‖B‖/gap
                        let gap = [k.checked_sub(1).map(|i| values[k] - values[i]), values.get(k + 1).map(|w| w - values[k])]
                            .into_iter()
                            .flatten()
                            .fold(f64::INFINITY, f64::min);
                        let level = (4.0 * f64::EPSILON * scale / gap).clamp(1e-12, 1e-3);
                        let refined = prepared.refine(band, v, &prepared.to_site_basis(&denoise(&x, level)), true).1;
                        if prepared.residual(v, &refined) < prepared.residual(v, &direct) {
                            (v, refined)
                        } else {
                            (v, direct)
                        }
                    }
                    _ => (v, prepared.to_site_basis(&x)),
                })
                .collect()
        }
        Symmetry::General => {
            let values = prepared.eigenvalues(&ctx)?;
            match band {
                Some(band) => {
                    let start = prepared.to_site_basis(&start_vector(n));
                    values.into_iter().map(|v| prepared.refine(band, v, &start, false)).collect()
                }
                None => {
                    let evd = prepared.dense().eigen().map_err(|e| Error::EigenSolver {
                        context: ctx(),
                        reason: format!("{e:?}"),
                    })?;
                    let (s, u) = (evd.S(), evd.U());
                    (0..n)
                        .map(|k| {
                            let x: Vec<C64> = (0..n).map(|i| u[(i, k)]).collect();
                            (s[k], prepared.to_site_basis(&x))
                        })
                        .collect()
                }
            }
        }
    };
    states.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));

    let mut set = EigenSet {
        eigenvalues: Vec::with_capacity(n),
        eigenvectors: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n),
        fds: Vec::with_capacity(n),
    };
    for (value, psi) in states {
        let residual = prepared.residual(value, &psi);
        if !(residual <= bound) {
            return Err(Error::EigenSolver {
                context: ctx(),
                reason: format!("residual {residual:e} at E = {value} exceeds {bound:e}"),
            });
        }
        set.fds.push(fd_unchecked(&psi));
        set.eigenvalues.push(value);
        set.residuals.push(residual);
        set.eigenvectors.push(psi);
    }
    Ok(set)
}

/// Options for [`nearest_eigenpair`].
#[derive(Clone, Debug)]
pub struct NearestOptions {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tol_eig: f64,
}

impl Default for NearestOptions {
    fn default() -> Self {
        NearestOptions { krylov_dim: 40, max_restarts: 12, tol_eig: 1e-10 }
    }
}

/// Eigenpair whose eigenvalue is closest to `target`, by shift-invert
/// Arnoldi on the band structure. Does not need the dense spectrum.
pub fn nearest_eigenpair(matrix: &LatticeMatrix, target: C64) -> Result<Eigenpair> {
    nearest_eigenpair_with(matrix, target, &NearestOptions::default())
}

pub fn nearest_eigenpair_with(matrix: &LatticeMatrix, target: C64, opts: &NearestOptions) -> Result<Eigenpair> {
    let ctx = || context(matrix);
    let n = matrix.size();
    let prepared = prepare(matrix, &EigOptions { max_size: usize::MAX, ..EigOptions::default() })?;
    let Some(band) = prepared.band() else {
        return Err(Error::EigenSolver { context: ctx(), reason: "matrix is not banded".into() });
    };
    let (o, kl, ku) = band;
    let scale = prepared.sparse.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut solver = ShiftedSolver::new(&prepared.sparse, o, kl, ku, target, scale, None);
    let k_max = opts.krylov_dim.min(n - 1).max(1);

    let mut v0 = start_vector(n);
    normalize(&mut v0);
    let mut theta = ZERO;
    let mut ritz = v0.clone();
    for _ in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<C64>> = vec![v0.clone()];
        let mut hess = Mat::<C64>::zeros(k_max + 1, k_max);
        let mut k = k_max;
        for j in 0..k_max {
            let mut w = basis[j].clone();
            solver.solve(&mut w);
            for _pass in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                    hess[(i, j)] += c;
                    w.iter_mut().zip(b).for_each(|(y, x)| *y -= c * x);
                }
            }
            let h = norm(&w);
            hess[(j + 1, j)] = C64::new(h, 0.0);
            if h <= 1e-14 * hess[(j, j)].norm().max(1e-300) {
                k = j + 1;
                break;
            }
            w.iter_mut().for_each(|y| *y /= h);
            basis.push(w);
        }
        let small = Mat::from_fn(k, k, |r, c| hess[(r, c)]);
        let evd = small.eigen().map_err(|e| Error::EigenSolver { context: ctx(), reason: format!("{e:?}") })?;
        let (s, u) = (evd.S(), evd.U());
        let best = (0..k).max_by(|&a, &b| s[a].norm().total_cmp(&s[b].norm())).unwrap_or(0);
        theta = s[best];
        let coeffs: Vec<C64> = (0..k).map(|i| u[(i, best)]).collect();
        let mut y = vec![ZERO; n];
        for (b, c) in basis.iter().zip(&coeffs) {
            y.iter_mut().zip(b).for_each(|(acc, x)| *acc += c * x);
        }
        normalize(&mut y);
        ritz = y;
        let coeff_norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let tail = if k < basis.len() { hess[(k, k - 1)].norm() * coeffs[k - 1].norm() / coeff_norm } else { 0.0 };
        // residual of (A − σ)⁻¹ relative to |θ|; translates to ~tail/|θ|² on A
        if tail <= 1e-13 * theta.norm() || k < k_max {
            break;
        }
        v0 = ritz.clone();
    }
    if theta == ZERO {
        return Err(Error::EigenSolver { context: ctx(), reason: "shift-invert Arnoldi found no eigenvalue".into() });
    }
    let (value, mut psi) = prepared.refine(band, target + theta.inv(), &prepared.to_site_basis(&denoise(&ritz, 1e-12)), false);
    normalize(&mut psi);
    let residual = prepared.residual(value, &psi);
    if !(residual <= opts.tol_eig * prepared.norm) {
        return Err(Error::EigenSolver {
            context: ctx(),
            reason: format!("nearest eigenpair residual {residual:e} at E = {value}"),
        });
    }
    let fd = fd_unchecked(&psi);
    Ok(Eigenpair { value, vector: psi, residual, fd })
}

fn fd_unchecked(psi: &[C64]) -> f64 {
    let ipr: f64 = psi.iter().map(|v| v.norm_sqr() * v.norm_sqr()).sum();
    -ipr.ln() / (psi.len() as f64).ln()
}

/// Fractal dimension `−ln(Σ|ψ_n|⁴)/ln N` of a unit-norm state.
pub fn fractal_dimension(state: &[C64]) -> Result<f64> {
    if state.len() < 2 {
        return invalid("fractal dimension needs at least two sites");
    }
    let s = norm(state);
    if (s - 1.0).abs() > 1e-8 {
        return invalid(format!("state is not normalized: ‖ψ‖ = {s}"));
    }
    Ok(fd_unchecked(state))
}

/// One matched pair of eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
    /// Another candidate lay within tolerance of the same eigenvalue.
    pub ambiguous: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SpectrumMatch {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

impl SpectrumMatch {
    pub fn max_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.distance).fold(0.0, f64::max)
    }
}

/// Greedy one-to-one matching in order of ascending distance; only pairs
/// closer than `tol` are considered.
pub fn match_spectra(a: &[C64], b: &[C64], tol: f64) -> SpectrumMatch {
    use std::collections::HashMap;
    let cell = if tol > 0.0 { tol } else { f64::MIN_POSITIVE };
    let key = |z: C64| ((z.re / cell).floor() as i64, (z.im / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, &z) in b.iter().enumerate() {
        grid.entry(key(z)).or_default().push(j);
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    let mut count_a = vec![0usize; a.len()];
    let mut count_b = vec![0usize; b.len()];
    for (i, &z) in a.iter().enumerate() {
        let (kx, ky) = key(z);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(js) = grid.get(&(kx + dx, ky + dy)) {
                    for &j in js {
                        let d = (z - b[j]).norm();
                        if d <= tol {
                            candidates.push((d, i, j));
                            count_a[i] += 1;
                            count_b[j] += 1;
                        }
                    }
                }
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (d, i, j) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        pairs.push(MatchedPair { index_a: i, index_b: j, distance: d, ambiguous: count_a[i] > 1 || count_b[j] > 1 });
    }
    pairs.sort_by_key(|p| p.index_a);
    SpectrumMatch {
        pairs,
        unmatched_a: (0..a.len()).filter(|&i| !used_a[i]).collect(),
        unmatched_b: (0..b.len()).filter(|&j| !used_b[j]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_matrix, BoundaryCondition, ModelSpec};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn lattice(entries: Mat<C64>) -> LatticeMatrix {
        LatticeMatrix { entries, spec: ModelSpec::uniform_chain(), bc: BoundaryCondition::Pbc }
    }

    #[test]
    fn two_by_two_swap() {
        let m = lattice(Mat::from_fn(2, 2, |r, c2| if r != c2 { c(1.0, 0.0) } else { ZERO }));
        let set = eig(&m).unwrap();
        assert!((set.eigenvalues[0] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((set.eigenvalues[1] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn nonreciprocal_three_site_ring() {
        // circulant: eigenvalues e^{-g}ω + e^{g}ω̄ over the cube roots of unity
        let g: f64 = 0.4;
        let entries = Mat::from_fn(3, 3, |r, col| {
            if r == (col + 1) % 3 {
                c((-g).exp(), 0.0)
            } else if col == (r + 1) % 3 {
                c(g.exp(), 0.0)
            } else {
                ZERO
            }
        });
        let set = eig(&lattice(entries)).unwrap();
        let mut expected: Vec<C64> = (0..3)
            .map(|k| {
                let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 3.0);
                w * (-g).exp() + w.conj() * g.exp()
            })
            .collect();
        sort_values(&mut expected);
        assert_eq!(match_spectra(&set.eigenvalues, &expected, 1e-12).pairs.len(), 3);
        assert!(set.residuals.iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn fd_limits() {
        let n = 64;
        let uniform = vec![c(1.0 / (n as f64).sqrt(), 0.0); n];
        assert!((fractal_dimension(&uniform).unwrap() - 1.0).abs() < 1e-12);
        let mut delta = vec![ZERO; n];
        delta[5] = c(0.0, 1.0);
        assert_eq!(fractal_dimension(&delta).unwrap(), 0.0);
        let mut two = vec![ZERO; 4181];
        two[10] = c(0.5f64.sqrt(), 0.0);
        two[2000] = c(0.0, 0.5f64.sqrt());
        // 40-digit reference: ln 2 / ln 4181
        assert!((fractal_dimension(&two).unwrap() - 0.083_128_060_170_945_146).abs() < 1e-12);
        assert!(fractal_dimension(&[c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(fractal_dimension(&[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn hermitian_limit_real_spectrum() {
        let m = build_matrix(&ModelSpec::h1(0.0, 0.0), 144, BoundaryCondition::Obc).unwrap();
        let set = eig(&m).unwrap();
        assert!(set.eigenvalues.iter().all(|e| e.im == 0.0));
        assert_eq!(set.len(), 144);
        for psi in &set.eigenvectors {
            assert!((norm(psi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_removal_keeps_obc_spectrum_real() {
        let m = build_matrix(&ModelSpec::h1(1.5, 0.0), 377, BoundaryCondition::Obc).unwrap();
        let set = eig(&m).unwrap();
        assert!(set.eigenvalues.iter().all(|e| e.im == 0.0));
        // skin modes pile up at n = 1
        for psi in &set.eigenvectors {
            let centre: f64 = psi.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v.norm_sqr()).sum();
            assert!(centre < 20.0, "centre {centre}");
        }
    }

    #[test]
    fn general_path_matches_dense_solver() {
        let m = build_matrix(&ModelSpec::h1(0.7, 0.3), 89, BoundaryCondition::Pbc).unwrap();
        let set = eig(&m).unwrap();
        let mut dense = m.entries.eigenvalues().unwrap();
        sort_values(&mut dense);
        let matched = match_spectra(&set.eigenvalues, &dense, 1e-8);
        assert_eq!(matched.pairs.len(), 89);
        for (k, psi) in set.eigenvectors.iter().enumerate() {
            assert!(set.residuals[k] < 1e-12, "k={k} res={}", set.residuals[k]);
            assert!((norm(psi) - 1.0).abs() < 1e-12);
            assert!(set.fds[k] >= 0.0 && set.fds[k] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn nearest_pair_agrees_with_full_spectrum() {
        let m = build_matrix(&ModelSpec::h1(1.0, 0.2), 233, BoundaryCondition::Pbc).unwrap();
        let set = eig(&m).unwrap();
        for target in [c(0.025, 0.0), c(-0.5, 0.1), c(0.7, -0.05)] {
            let want = set
                .eigenvalues
                .iter()
                .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
                .unwrap();
            let got = nearest_eigenpair(&m, target).unwrap();
            assert!((got.value - want).norm() < 1e-9, "{} vs {}", got.value, want);
            assert!(got.residual < 1e-10);
        }
    }

    #[test]
    fn generic_model_without_chain_gauge() {
        let rule: crate::model::AmplitudeRule = Arc::new(|n, t| match t {
            0 => c(0.3 * (n as f64).cos(), 0.0),
            1 => c(1.0, 0.2),
            -2 => c(0.25, 0.0),
            _ => ZERO,
        });
        let m = build_matrix(&ModelSpec::generic(2, rule), 60, BoundaryCondition::Obc).unwrap();
        let set = eig(&m).unwrap();
        assert_eq!(set.len(), 60);
    }

    #[test]
    fn matching_identity_and_outlier() {
        let a: Vec<C64> = (0..20).map(|k| c(k as f64, 0.5 * k as f64)).collect();
        let m = match_spectra(&a, &a, 1e-9);
        assert_eq!(m.pairs.len(), 20);
        assert!(m.pairs.iter().all(|p| p.index_a == p.index_b && p.distance == 0.0 && !p.ambiguous));
        let mut b = a.clone();
        b[7] = c(100.0, 100.0);
        let m = match_spectra(&a, &b, 1e-6);
        assert_eq!(m.pairs.len(), 19);
        assert_eq!(m.unmatched_a, vec![7]);
        assert_eq!(m.unmatched_b, vec![7]);
    }

    #[test]
    fn matching_flags_ambiguity() {
        let a = vec![c(0.0, 0.0)];
        let b = vec![c(1e-7, 0.0), c(-2e-7, 0.0)];
        let m = match_spectra(&a, &b, 1e-6);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].index_b, 0);
        assert!(m.pairs[0].ambiguous);
        assert_eq!(m.unmatched_b, vec![1]);
    }
}
