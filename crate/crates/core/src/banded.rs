//! Band storage, banded LU with partial pivoting, and the site orderings that
//! turn a periodic ring into a band without corner blocks.

use faer::Mat;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Site ordering used when extracting a band from a dense matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Ordering {
    Natural,
    /// `0, N-1, 1, N-2, …`: a ring of range `M` becomes a band of width `2M`.
    Folded,
}

impl Ordering {
    /// Position of site `i` in the reordered matrix.
    pub(crate) fn position(self, i: usize, n: usize) -> usize {
        match self {
            Ordering::Natural => i,
            Ordering::Folded => {
                if i < n.div_ceil(2) {
                    2 * i
                } else {
                    2 * (n - 1 - i) + 1
                }
            }
        }
    }

    pub(crate) fn permutation(self, n: usize) -> Vec<usize> {
        (0..n).map(|i| self.position(i, n)).collect()
    }
}

/// Nonzero entries of a dense matrix, stored by row.
#[derive(Clone, Debug)]
pub(crate) struct SparseRows {
    pub n: usize,
    pub rows: Vec<Vec<(usize, C64)>>,
}

impl SparseRows {
    pub(crate) fn from_dense(a: &Mat<C64>) -> Self {
        let n = a.nrows();
        let mut rows = vec![Vec::new(); n];
        for c in 0..n {
            for (r, row) in rows.iter_mut().enumerate() {
                let v = a[(r, c)];
                if v != ZERO {
                    row.push((c, v));
                }
            }
        }
        SparseRows { n, rows }
    }

    /// Entry `(r, c)`; rows are sorted by column.
    pub(crate) fn get(&self, r: usize, c: usize) -> C64 {
        let row = &self.rows[r];
        row.binary_search_by_key(&c, |&(k, _)| k).map_or(ZERO, |i| row[i].1)
    }

    pub(crate) fn apply(&self, x: &[C64], out: &mut [C64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
    }

    /// `(kl, ku)` of the matrix under `ordering`.
    pub(crate) fn bandwidths(&self, ordering: Ordering) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for (r, row) in self.rows.iter().enumerate() {
            let pr = ordering.position(r, self.n);
            for &(c, _) in row {
                let pc = ordering.position(c, self.n);
                if pr > pc {
                    kl = kl.max(pr - pc);
                } else {
                    ku = ku.max(pc - pr);
                }
            }
        }
        (kl, ku)
    }

    /// The ordering with the narrower band.
    pub(crate) fn best_ordering(&self) -> (Ordering, usize, usize) {
        let (nl, nu) = self.bandwidths(Ordering::Natural);
        let (fl, fu) = self.bandwidths(Ordering::Folded);
        if fl + fu < nl + nu {
            (Ordering::Folded, fl, fu)
        } else {
            (Ordering::Natural, nl, nu)
        }
    }

    pub(crate) fn frobenius_norm(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|&(_, v)| v.norm_sqr()))
            .sum::<f64>()
            .sqrt()
    }
}

/// LU factorization `P(A − σI) = LU` of a band matrix, LAPACK `gbtf2` layout:
/// column `j` holds rows `j−ku−kl ..= j+kl`, with `kl` extra superdiagonals
/// reserved for pivoting fill.
#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<C64>,
    pivots: Vec<usize>,
    /// Number of pivots that had to be replaced because they vanished.
    pub perturbed_pivots: usize,
}

impl BandLu {
    /// Factors `A − σI` where `A` is given by `rows` in `ordering`.
    pub(crate) fn factor(a: &SparseRows, ordering: Ordering, kl: usize, ku: usize, shift: C64, scale: f64) -> Self {
        let n = a.n;
        let ld = 2 * kl + ku + 1;
        let mut lu = BandLu { n, kl, ku, ld, ab: vec![ZERO; ld * n], pivots: vec![0; n], perturbed_pivots: 0 };
        for (r, row) in a.rows.iter().enumerate() {
            let pr = ordering.position(r, n);
            for &(c, v) in row {
                let pc = ordering.position(c, n);
                *lu.at(pr, pc) += v;
            }
        }
        for i in 0..n {
            *lu.at(i, i) -= shift;
        }
        lu.factorize(scale);
        lu
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku + self.kl >= j && i <= j + self.kl);
        (self.kl + self.ku + i - j) + j * self.ld
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut C64 {
        let k = self.idx(i, j);
        &mut self.ab[k]
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> C64 {
        self.ab[self.idx(i, j)]
    }

    fn factorize(&mut self, scale: f64) {
        let n = self.n;
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        let mut ju = 0usize;
        for j in 0..n {
            let km = self.kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = -1.0;
            for i in 0..=km {
                let v = self.get(j + i, j).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[j] = j + p;
            if best <= tiny {
                // exact shift onto an eigenvalue: nudge the pivot
                *self.at(j + p, j) += C64::new(tiny, 0.0);
                self.perturbed_pivots += 1;
            }
            ju = ju.max((j + self.ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + p, c);
                    self.ab.swap(a, b);
                }
            }
            let inv = self.get(j, j).inv();
            for i in 1..=km {
                *self.at(j + i, j) *= inv;
            }
            for c in j + 1..=ju {
                let f = self.get(j, c);
                if f == ZERO {
                    continue;
                }
                for i in 1..=km {
                    let l = self.get(j + i, j);
                    *self.at(j + i, c) -= l * f;
                }
            }
        }
    }

    /// Solves in place in the reordered basis. With `log_scale = ln d` the
    /// factors are those of `B` but `b` lives in the basis of `DBD⁻¹`; the
    /// gauge is applied entry by entry, so `D⁻¹b` is never formed. The
    /// solution can be exponentially larger than `b` in that basis, so the
    /// whole vector is rescaled on the way and the return value is `ln s`
    /// with `b ← s·(A − σ)⁻¹b`.
    pub(crate) fn solve_in_place(&self, b: &mut [C64], log_scale: Option<&[f64]>) -> f64 {
        // ln of the largest magnitude allowed before the vector is shrunk
        const LIMIT: f64 = 300.0;
        let n = self.n;
        let Some(cols) = log_scale else {
            self.solve_plain(b);
            return 0.0;
        };
        let mut log_s = 0.0;
        let mut shrink = |b: &mut [C64], k: f64| {
            b.iter_mut().for_each(|v| *v = rescale(*v, -k));
            log_s -= k;
        };
        let ln = |v: C64| v.norm().ln();
        // row scales follow the rows through the interleaved swaps
        let mut rows = cols.to_vec();
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
                rows.swap(j, p);
            }
            if b[j] == ZERO {
                continue;
            }
            for i in 1..=self.kl.min(n - 1 - j) {
                let l = self.get(j + i, j);
                let t = rows[j + i] - rows[j];
                let size = ln(l) + ln(b[j]) + t;
                if size > LIMIT || ln(b[j + i]) > LIMIT {
                    shrink(b, size.max(ln(b[j + i])));
                }
                b[j + i] -= rescale(l * b[j], t);
            }
        }
        let width = self.kl + self.ku;
        for j in (0..n).rev() {
            let u = self.get(j, j);
            let t = cols[j] - rows[j];
            if ln(b[j]) - ln(u) + t > LIMIT {
                shrink(b, ln(b[j]) - ln(u) + t);
            }
            b[j] = rescale(b[j] / u, t);
            if b[j] == ZERO {
                continue;
            }
            for i in j.saturating_sub(width)..j {
                let a = self.get(i, j);
                let t = rows[i] - cols[j];
                let size = ln(a) + ln(b[j]) + t;
                if size > LIMIT || ln(b[i]) > LIMIT {
                    shrink(b, size.max(ln(b[i])));
                }
                b[i] -= rescale(a * b[j], t);
            }
        }
        log_s
    }

    fn solve_plain(&self, b: &mut [C64]) {
        let n = self.n;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != ZERO {
                for i in 1..=km {
                    b[j + i] -= self.get(j + i, j) * bj;
                }
            }
        }
        let width = self.kl + self.ku;
        for j in (0..n).rev() {
            let x = b[j] / self.get(j, j);
            b[j] = x;
            for i in j.saturating_sub(width)..j {
                b[i] -= self.get(i, j) * x;
            }
        }
    }
}

/// `v·eᵗ` in steps small enough that no intermediate leaves the double range
/// when the result itself is representable.
fn rescale(v: C64, t: f64) -> C64 {
    const STEP: f64 = 600.0;
    if t.abs() <= STEP {
        return v * t.exp();
    }
    let mut v = v;
    let mut t = t;
    while t.abs() > STEP && v != ZERO {
        v *= STEP.copysign(t).exp();
        t -= STEP.copysign(t);
    }
    v * t.exp()
}

/// Shifted solver `x ↦ (A − σI)⁻¹x` in the original site basis. With a
/// log-scale `ln d`, the factored matrix is `B` and vectors are in the basis
/// of `DBD⁻¹`: the LU keeps the componentwise accuracy of the balanced `B`
/// while iterates that would underflow in `B`'s basis stay representable.
#[derive(Clone, Debug)]
pub(crate) struct ShiftedSolver {
    lu: BandLu,
    perm: Vec<usize>,
    log_scale: Option<Vec<f64>>,
    work: Vec<C64>,
}

impl ShiftedSolver {
    pub(crate) fn new(
        a: &SparseRows,
        ordering: Ordering,
        kl: usize,
        ku: usize,
        shift: C64,
        scale: f64,
        log_scale: Option<&[f64]>,
    ) -> Self {
        let lu = BandLu::factor(a, ordering, kl, ku, shift, scale);
        let perm = ordering.permutation(a.n);
        let log_scale = log_scale.map(|ls| {
            let mut out = vec![0.0; a.n];
            for (i, &p) in perm.iter().enumerate() {
                out[p] = ls[i];
            }
            out
        });
        ShiftedSolver { lu, perm, log_scale, work: vec![ZERO; a.n] }
    }

    /// `x ← s·(A − σI)⁻¹x`, returning `ln s` (zero without a log-scale).
    pub(crate) fn solve(&mut self, x: &mut [C64]) -> f64 {
        for (i, &p) in self.perm.iter().enumerate() {
            self.work[p] = x[i];
        }
        let log_s = self.lu.solve_in_place(&mut self.work, self.log_scale.as_deref());
        for (i, &p) in self.perm.iter().enumerate() {
            x[i] = self.work[p];
        }
        log_s
    }
}
