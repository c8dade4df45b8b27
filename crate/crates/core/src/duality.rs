//! Exact finite-size Fourier duality between H1 and H2 at Fibonacci sizes,
//! and dual-pair reports built on matched spectra.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::banded::SparseRows;
use crate::error::{invalid, Error, Result};
use crate::model::{build_matrix, fibonacci_approx, BoundaryCondition, FibonacciApprox, LatticeMatrix, ModelSpec, TauMode};
use crate::spectral::{eig, match_spectra, EigenSet};

/// `F(n,k) = e^{−2πi τ_RA n k}/√N` for `n, k = 1..N`.
#[derive(Clone, Debug)]
pub struct DualTransform {
    pub fib: FibonacciApprox,
    pub matrix: Mat<C64>,
}

impl DualTransform {
    pub fn size(&self) -> usize {
        self.fib.current as usize
    }

    /// Entry `(n, k)`, 1-based, from the exact residue of `F_{j−1} n k mod F_j`.
    pub fn entry(fib: &FibonacciApprox, n: i64, k: i64) -> C64 {
        let big = fib.current as i128;
        let r = (fib.prev as i128 * n as i128 * k as i128).rem_euclid(big);
        let phase = -2.0 * std::f64::consts::PI * r as f64 / big as f64;
        C64::from_polar(1.0 / (big as f64).sqrt(), phase)
    }

    /// `max |F†F − I|` over `samples` deterministic entry pairs, or over all
    /// entries when `samples` is `None`.
    pub fn unitarity_defect(&self, samples: Option<usize>) -> f64 {
        let n = self.size();
        let gram = |a: usize, b: usize| -> C64 {
            let s: C64 = (0..n).map(|r| self.matrix[(r, a)].conj() * self.matrix[(r, b)]).sum();
            if a == b {
                s - 1.0
            } else {
                s
            }
        };
        match samples {
            None => {
                let g = self.matrix.adjoint() * &self.matrix;
                let mut worst = 0.0f64;
                for c in 0..n {
                    for r in 0..n {
                        let d = if r == c { g[(r, c)] - 1.0 } else { g[(r, c)] };
                        worst = worst.max(d.norm());
                    }
                }
                worst
            }
            Some(count) => {
                // a fixed quasi-random walk over column pairs, with diagonal ones mixed in
                let mut worst = 0.0f64;
                for i in 0..count {
                    let a = (i * 7919 + 13) % n;
                    let b = if i % 5 == 0 { a } else { (i * 104_729 + 71) % n };
                    worst = worst.max(gram(a, b).norm());
                }
                worst
            }
        }
    }
}

const UNITARITY_TOL: f64 = 1e-10;

/// Builds the transform for `N = F_j` and validates unitarity (in full up
/// to `N = 987`, by 100 sampled column pairs above).
pub fn dual_matrix(j: usize) -> Result<DualTransform> {
    let fib = fibonacci_approx(j)?;
    let n = fib.current as usize;
    let matrix = Mat::from_fn(n, n, |r, c| DualTransform::entry(&fib, r as i64 + 1, c as i64 + 1));
    let t = DualTransform { fib, matrix };
    let defect = t.unitarity_defect(if n <= 987 { None } else { Some(100) });
    if !(defect < UNITARITY_TOL) {
        return Err(Error::Consistency(format!("dual transform at N = {n} not unitary: defect {defect:e}")));
    }
    Ok(t)
}

fn check_compatible(h: &LatticeMatrix, f: &DualTransform) -> Result<()> {
    if h.size() != f.size() {
        return invalid(format!("matrix size {} does not match transform size {}", h.size(), f.size()));
    }
    if h.bc != BoundaryCondition::Pbc {
        return invalid("duality requires periodic boundaries");
    }
    if h.spec.tau_mode != TauMode::RationalApprox(f.fib.j) {
        return invalid(format!("matrix uses {:?}, transform needs RationalApprox({})", h.spec.tau_mode, f.fib.j));
    }
    Ok(())
}

/// `F† H F`.
pub fn dualize(h: &LatticeMatrix, f: &DualTransform) -> Result<Mat<C64>> {
    check_compatible(h, f)?;
    Ok(dualize_dense(&h.entries, f))
}

/// `F† A F` for any square matrix of matching size.
pub fn dualize_dense(a: &Mat<C64>, f: &DualTransform) -> Mat<C64> {
    let af = a * &f.matrix;
    f.matrix.adjoint() * af
}

/// Single entry `(F† H F)_{rc}` (0-based) in `O(nnz)`, for spot checks at
/// sizes where the dense product is too costly.
pub fn dualize_entry(h: &LatticeMatrix, f: &DualTransform, r: usize, c: usize) -> Result<C64> {
    check_compatible(h, f)?;
    let sparse = SparseRows::from_dense(&h.entries);
    let fib = &f.fib;
    let mut acc = C64::new(0.0, 0.0);
    for (n, row) in sparse.rows.iter().enumerate() {
        let left = DualTransform::entry(fib, n as i64 + 1, r as i64 + 1).conj();
        for &(m, v) in row {
            acc += left * v * DualTransform::entry(fib, m as i64 + 1, c as i64 + 1);
        }
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// One FD localized, its partner extended.
    DualityHolds,
    /// Anything else that is not a breakdown, including two localized states.
    Critical,
    /// Both FDs extended.
    Breakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityThresholds {
    pub fd_loc_max: f64,
    pub fd_ext_min: f64,
    pub match_tol: f64,
    /// Minimum fraction of H1 eigenvalues that must find a partner.
    pub min_matched_fraction: f64,
}

impl Default for DualityThresholds {
    fn default() -> Self {
        DualityThresholds { fd_loc_max: 0.3, fd_ext_min: 0.7, match_tol: 1e-6, min_matched_fraction: 0.99 }
    }
}

impl DualityThresholds {
    pub fn verdict(&self, fd1: f64, fd2: f64) -> Verdict {
        let loc = |x: f64| x < self.fd_loc_max;
        let ext = |x: f64| x > self.fd_ext_min;
        if (loc(fd1) && ext(fd2)) || (ext(fd1) && loc(fd2)) {
            Verdict::DualityHolds
        } else if ext(fd1) && ext(fd2) {
            Verdict::Breakdown
        } else {
            Verdict::Critical
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 < self.fd_loc_max && self.fd_loc_max < self.fd_ext_min && self.fd_ext_min < 1.0) {
            return invalid(format!(
                "need 0 < fd_loc_max < fd_ext_min < 1, got {} and {}",
                self.fd_loc_max, self.fd_ext_min
            ));
        }
        if !(self.match_tol > 0.0) || !(0.0..=1.0).contains(&self.min_matched_fraction) {
            return invalid("match_tol must be positive and min_matched_fraction within [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPair {
    pub index_h1: usize,
    pub index_h2: usize,
    pub e1: [f64; 2],
    pub e2: [f64; 2],
    pub fd1: f64,
    pub fd2: f64,
    pub distance: f64,
    pub ambiguous: bool,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub duality_holds: usize,
    pub critical: usize,
    pub breakdown: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub g: f64,
    pub h: f64,
    pub n: usize,
    pub j: usize,
    pub thresholds: DualityThresholds,
    pub pairs: Vec<DualPair>,
    pub verdict_counts: VerdictCounts,
    pub unmatched_h1: Vec<usize>,
    pub unmatched_h2: Vec<usize>,
}

impl DualityReport {
    pub fn matched_fraction(&self) -> f64 {
        self.pairs.len() as f64 / self.n as f64
    }
}

/// H1 and H2 at `N = F_j` under PBC with matched `τ_RA`.
pub fn dual_models(g: f64, h: f64, j: usize) -> Result<(LatticeMatrix, LatticeMatrix)> {
    let fib = fibonacci_approx(j)?;
    let n = fib.current as usize;
    let mode = TauMode::RationalApprox(j);
    let h1 = build_matrix(&ModelSpec::h1(g, h).with_tau(mode), n, BoundaryCondition::Pbc)?;
    let h2 = build_matrix(&ModelSpec::h2(g, h).with_tau(mode), n, BoundaryCondition::Pbc)?;
    Ok((h1, h2))
}

pub fn duality_report(g: f64, h: f64, j: usize, fd_loc_max: f64, fd_ext_min: f64) -> Result<DualityReport> {
    let thresholds = DualityThresholds { fd_loc_max, fd_ext_min, ..DualityThresholds::default() };
    thresholds.validate()?;
    let (h1, h2) = dual_models(g, h, j)?;
    let s1 = eig(&h1)?;
    let s2 = eig(&h2)?;
    duality_report_from_sets(g, h, j, &s1, &s2, &thresholds)
}

/// Report from already diagonalized H1 (`s1`) and H2 (`s2`).
pub fn duality_report_from_sets(
    g: f64,
    h: f64,
    j: usize,
    s1: &EigenSet,
    s2: &EigenSet,
    thresholds: &DualityThresholds,
) -> Result<DualityReport> {
    thresholds.validate()?;
    let n = s1.len();
    let matched = match_spectra(&s1.eigenvalues, &s2.eigenvalues, thresholds.match_tol);
    if (matched.pairs.len() as f64) < thresholds.min_matched_fraction * n as f64 {
        return Err(Error::Matching { matched: matched.pairs.len(), total: n, tol: thresholds.match_tol });
    }
    let mut counts = VerdictCounts::default();
    let pairs = matched
        .pairs
        .iter()
        .map(|p| {
            let (fd1, fd2) = (s1.fds[p.index_a], s2.fds[p.index_b]);
            let verdict = thresholds.verdict(fd1, fd2);
            match verdict {
                Verdict::DualityHolds => counts.duality_holds += 1,
                Verdict::Critical => counts.critical += 1,
                Verdict::Breakdown => counts.breakdown += 1,
            }
            let (e1, e2) = (s1.eigenvalues[p.index_a], s2.eigenvalues[p.index_b]);
            DualPair {
                index_h1: p.index_a,
                index_h2: p.index_b,
                e1: [e1.re, e1.im],
                e2: [e2.re, e2.im],
                fd1,
                fd2,
                distance: p.distance,
                ambiguous: p.ambiguous,
                verdict,
            }
        })
        .collect();
    Ok(DualityReport {
        g,
        h,
        n,
        j,
        thresholds: *thresholds,
        pairs,
        verdict_counts: counts,
        unmatched_h1: matched.unmatched_a,
        unmatched_h2: matched.unmatched_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..a.ncols() {
            for r in 0..a.nrows() {
                worst = worst.max((a[(r, c)] - b[(r, c)]).norm());
            }
        }
        worst
    }

    #[test]
    fn transform_is_unitary_with_flat_columns() {
        let f = dual_matrix(8).unwrap();
        assert_eq!(f.size(), 13);
        assert!(f.unitarity_defect(None) < 1e-12);
        for c in 0..13 {
            for r in 0..13 {
                assert!((f.matrix[(r, c)].norm() - 13f64.sqrt().recip()).abs() < 1e-15);
            }
        }
        assert!(dual_matrix(2).is_err());
    }

    #[test]
    fn h1_maps_onto_h2() {
        let f = dual_matrix(8).unwrap();
        let (h1, h2) = dual_models(1.0, 0.6, 8).unwrap();
        let d = dualize(&h1, &f).unwrap();
        assert!(max_diff(&d, &h2.entries) < 1e-10, "{}", max_diff(&d, &h2.entries));
        let e = dualize_entry(&h1, &f, 3, 4).unwrap();
        assert!((e - d[(3, 4)]).norm() < 1e-12);
    }

    #[test]
    fn identity_and_inverse() {
        let f = dual_matrix(9).unwrap();
        let id = Mat::<C64>::identity(21, 21);
        assert!(max_diff(&dualize_dense(&id, &f), &id) < 1e-12);
        let (h1, _) = dual_models(1.0, 0.4, 9).unwrap();
        let d = dualize(&h1, &f).unwrap();
        let back = &f.matrix * d * f.matrix.adjoint();
        assert!(max_diff(&back, &h1.entries) < 1e-10);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let f = dual_matrix(8).unwrap();
        let obc = build_matrix(&ModelSpec::h1(1.0, 0.1).with_tau(TauMode::RationalApprox(8)), 13, BoundaryCondition::Obc)
            .unwrap();
        assert!(dualize(&obc, &f).is_err());
        let (h1, _) = dual_models(1.0, 0.1, 9).unwrap();
        assert!(dualize(&h1, &f).is_err());
        let irr = build_matrix(&ModelSpec::h1(1.0, 0.1), 13, BoundaryCondition::Pbc).unwrap();
        assert!(dualize(&irr, &f).is_err());
    }

    #[test]
    fn verdict_thresholds() {
        let t = DualityThresholds::default();
        assert_eq!(t.verdict(0.1, 0.9), Verdict::DualityHolds);
        assert_eq!(t.verdict(0.95, 0.2), Verdict::DualityHolds);
        assert_eq!(t.verdict(0.8, 0.9), Verdict::Breakdown);
        assert_eq!(t.verdict(0.5, 0.9), Verdict::Critical);
        assert_eq!(t.verdict(0.1, 0.1), Verdict::Critical);
        assert!(duality_report(1.0, 0.1, 8, 0.7, 0.3).is_err());
    }

    #[test]
    fn small_report_matches_every_state() {
        let r = duality_report(1.0, 0.4, 10, 0.3, 0.7).unwrap();
        assert_eq!(r.n, 34);
        assert_eq!(r.pairs.len(), 34);
        assert!(r.pairs.iter().all(|p| p.distance <= r.thresholds.match_tol));
        let c = &r.verdict_counts;
        assert_eq!(c.duality_holds + c.critical + c.breakdown, 34);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"verdict_counts\""));
    }

    #[test]
    fn hermitian_parent_is_self_dual_in_spectrum() {
        let r = duality_report(0.0, 0.0, 10, 0.3, 0.7).unwrap();
        assert!(r.pairs.iter().all(|p| p.e1[1].abs() < 1e-12));
        assert_eq!(r.pairs.len(), r.n);
    }
}
