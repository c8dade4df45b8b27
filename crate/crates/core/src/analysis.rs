//! Real-space localization fits and finite-size scaling sweeps.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{build_matrix, fibonacci_approx, BoundaryCondition, ModelSpec, TauMode};
use crate::spectral::nearest_eigenpair;
use crate::transfer::{lyapunov_spectrum, sign_pattern};

pub const DEFAULT_FLOOR: f64 = 1e-13;
pub const DEFAULT_WINDOW: usize = 200;

/// Least-squares line `y = a + b x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_stderr: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares; standard errors are NaN with only two points.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::DegenerateFit(format!("need at least two points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let sst: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sigma2 = if n > 2 { ssr / (nf - 2.0) } else { f64::NAN };
    let slope_stderr = (sigma2 / sxx).sqrt();
    let intercept_stderr = (sigma2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    Ok(LineFit { intercept, slope, intercept_stderr, slope_stderr, r_squared, points: n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationFit {
    /// 1-based site of the largest amplitude.
    pub center: usize,
    /// `d ln|ψ| / dn` left of the center (positive for a localized state).
    pub left_slope: f64,
    pub left_stderr: f64,
    pub right_slope: f64,
    pub right_stderr: f64,
    /// Sites actually used on each side.
    pub window: (usize, usize),
    pub r_squared: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub window_sites: usize,
    pub floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { window_sites: DEFAULT_WINDOW, floor: DEFAULT_FLOOR }
    }
}

pub fn localization_fit(state: &[C64], bc: BoundaryCondition, window_sites: usize) -> Result<LocalizationFit> {
    localization_fit_with(state, bc, &FitOptions { window_sites, ..FitOptions::default() })
}

pub fn localization_fit_with(state: &[C64], bc: BoundaryCondition, opts: &FitOptions) -> Result<LocalizationFit> {
    let n = state.len();
    let w = opts.window_sites;
    if w < 4 {
        return invalid(format!("fit window must be at least 4 sites, got {w}"));
    }
    if bc == BoundaryCondition::Pbc && w > n / 2 {
        return invalid(format!("fit window {w} exceeds half the ring of {n} sites"));
    }
    let norm: f64 = state.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return invalid(format!("state is not normalized: ‖ψ‖ = {norm}"));
    }
    let center = (0..n).max_by(|&a, &b| state[a].norm().total_cmp(&state[b].norm())).unwrap_or(0);

    let side = |dir: i64| -> Result<(LineFit, usize)> {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for d in 1..=w as i64 {
            let site = center as i64 + dir * d;
            let site = match bc {
                BoundaryCondition::Pbc => site.rem_euclid(n as i64),
                BoundaryCondition::Obc if site < 0 || site >= n as i64 => break,
                BoundaryCondition::Obc => site,
            };
            let amp = state[site as usize].norm();
            if amp >= opts.floor {
                xs.push((dir * d) as f64);
                ys.push(amp.ln());
            }
        }
        if xs.len() < 3 {
            let name = if dir < 0 { "left" } else { "right" };
            return Err(Error::DegenerateFit(format!(
                "only {} usable sites {name} of the center at site {}",
                xs.len(),
                center + 1
            )));
        }
        let used = xs.len();
        Ok((fit_line(&xs, &ys)?, used))
    };
    let (left, nl) = side(-1)?;
    let (right, nr) = side(1)?;
    Ok(LocalizationFit {
        center: center + 1,
        left_slope: left.slope,
        left_stderr: left.slope_stderr,
        right_slope: right.slope,
        right_stderr: right.slope_stderr,
        window: (nl, nr),
        r_squared: (left.r_squared, right.r_squared),
    })
}

/// Probability-weighted mean position `Σ n |ψ_n|²` (1-based sites).
pub fn weighted_center(state: &[C64]) -> f64 {
    let total: f64 = state.iter().map(|v| v.norm_sqr()).sum();
    state.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v.norm_sqr()).sum::<f64>() / total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// FD of the eigenstate nearest the reference energy.
    TrackedFd,
    /// The `2M` exponents at the tracked eigenvalue, with `steps = N`.
    LyapunovPattern,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tracking {
    pub reference: C64,
    /// Largest accepted `|E − reference|`.
    pub window: f64,
    pub bc: BoundaryCondition,
    pub epsilon_zero: f64,
}

impl Tracking {
    pub fn new(reference: C64) -> Self {
        Tracking { reference, window: 0.05, bc: BoundaryCondition::Pbc, epsilon_zero: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub energy: [f64; 2],
    pub values: Vec<f64>,
    /// Sign pattern, for the Lyapunov observable.
    pub pattern: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub observable: Observable,
    pub sizes: Vec<usize>,
    pub points: Vec<ScalingPoint>,
    /// Sizes at which no eigenvalue fell inside the tracking window.
    pub gaps: Vec<usize>,
    /// Fit of each value column against `1/ln N`; the intercept is the
    /// `N → ∞` estimate. Absent with fewer than two points.
    pub extrapolation: Vec<Option<LineFit>>,
}

/// Tracks the eigenstate nearest `tracking.reference` over Fibonacci sizes.
/// With a rational `τ` mode the approximant follows the size.
pub fn scaling_sweep(
    spec: &ModelSpec,
    observable: Observable,
    j_range: &[usize],
    tracking: &Tracking,
) -> Result<ScalingCurve> {
    check_sweep(j_range, tracking)?;
    let points = j_range
        .iter()
        .map(|&j| scaling_point(spec, observable, j, tracking))
        .collect::<Result<Vec<_>>>()?;
    ScalingCurve::assemble(observable, j_range, points)
}

pub fn check_sweep(j_range: &[usize], tracking: &Tracking) -> Result<()> {
    if j_range.is_empty() || j_range.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("j_range must be non-empty and strictly increasing");
    }
    if !(tracking.window > 0.0) {
        return invalid("tracking window must be positive");
    }
    Ok(())
}

/// One size of a sweep; `None` when no eigenvalue lies inside the window.
pub fn scaling_point(spec: &ModelSpec, observable: Observable, j: usize, tracking: &Tracking) -> Result<Option<ScalingPoint>> {
    let n = fibonacci_approx(j)?.current as usize;
    let s = match spec.tau_mode {
        TauMode::Irrational => spec.clone(),
        TauMode::RationalApprox(_) => spec.clone().with_tau(TauMode::RationalApprox(j)),
    };
    let matrix = build_matrix(&s, n, tracking.bc)?;
    let pair = nearest_eigenpair(&matrix, tracking.reference)?;
    if (pair.value - tracking.reference).norm() > tracking.window {
        return Ok(None);
    }
    let energy = [pair.value.re, pair.value.im];
    Ok(Some(match observable {
        Observable::TrackedFd => ScalingPoint { n, energy, values: vec![pair.fd], pattern: None },
        Observable::LyapunovPattern => {
            let l = lyapunov_spectrum(&s, pair.value, n, tracking.epsilon_zero)?;
            ScalingPoint { n, energy, pattern: Some(sign_pattern(&l.gammas, tracking.epsilon_zero)), values: l.gammas }
        }
    }))
}

impl ScalingCurve {
    /// Collects per-size results, given in `j_range` order, and fits each
    /// value column against `1/ln N`.
    pub fn assemble(observable: Observable, j_range: &[usize], results: Vec<Option<ScalingPoint>>) -> Result<Self> {
        let mut sizes = Vec::new();
        let mut points = Vec::new();
        let mut gaps = Vec::new();
        for (&j, result) in j_range.iter().zip(results) {
            let n = fibonacci_approx(j)?.current as usize;
            sizes.push(n);
            match result {
                Some(p) => points.push(p),
                None => gaps.push(n),
            }
        }
        let columns = points.first().map_or(0, |p| p.values.len());
        let x: Vec<f64> = points.iter().map(|p| 1.0 / (p.n as f64).ln()).collect();
        let extrapolation = (0..columns)
            .map(|k| {
                let y: Vec<f64> = points.iter().map(|p| p.values[k]).collect();
                fit_line(&x, &y).ok()
            })
            .collect();
        Ok(ScalingCurve { observable, sizes, points, gaps, extrapolation })
    }
}
