use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;
use quasiloc::analysis::{check_sweep, localization_fit, scaling_point, Observable, ScalingCurve, Tracking};
use quasiloc::duality::{dual_models, duality_report_from_sets, DualityThresholds};
use quasiloc::transfer::lyapunov_spectrum;
use quasiloc::{build_matrix, eig, eigenvalues, nearest_eigenpair};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{energies, ExperimentConfig};
use crate::output::{num, schema, Table};
use crate::CliError;

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let matrix = build_matrix(&cfg.model(), cfg.size()?, cfg.bc)?;
    let set = eig(&matrix)?;
    let mut table = Table::new("spectrum", strings(&["index", "re_E", "im_E", "fd", "residual"]));
    for k in 0..set.len() {
        let e = set.eigenvalues[k];
        table.rows.push(vec![k.to_string(), num(e.re), num(e.im), num(set.fds[k]), num(set.residuals[k])]);
    }
    table.write(out, &cfg.echo())
}

pub fn lyapunov(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let spec = cfg.model();
    let block = &cfg.lyapunov;
    let targets = if block.from_spectrum {
        eigenvalues(&build_matrix(&spec, cfg.size()?, cfg.bc)?)?
    } else {
        energies(&block.energies)
    };
    if targets.is_empty() {
        return Err(CliError::Config("lyapunov needs energies or from_spectrum = true".into()));
    }
    let d = 2 * spec.range;
    let mut header = strings(&["re_E", "im_E"]);
    header.extend((1..=d).map(|i| format!("gamma_{i}")));
    header.extend(strings(&["scenario", "epsilon_zero", "steps", "status"]));
    let results: Vec<_> =
        targets.par_iter().map(|&e| lyapunov_spectrum(&spec, e, block.steps, block.epsilon_zero)).collect();

    let mut table = Table::new("lyapunov", header);
    let mut failures = 0;
    for (e, result) in targets.iter().zip(results) {
        let mut row = vec![num(e.re), num(e.im)];
        match result {
            Ok(l) => {
                row.extend(l.gammas.iter().map(|&g| num(g)));
                row.push(l.scenario.to_string());
                row.extend([num(block.epsilon_zero), block.steps.to_string(), "ok".into()]);
            }
            Err(err) => {
                failures += 1;
                row.extend((0..d + 1).map(|_| String::new()));
                row.extend([num(block.epsilon_zero), block.steps.to_string(), err.to_string()]);
            }
        }
        table.rows.push(row);
    }
    table.write(out, &cfg.echo())?;
    if failures == targets.len() {
        return Err(CliError::Numerical(format!("all {failures} energies failed")));
    }
    Ok(())
}

#[derive(Serialize)]
struct DualityFile<'a> {
    schema: String,
    config: &'a ExperimentConfig,
    report: &'a quasiloc::duality::DualityReport,
}

pub fn duality(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let j = cfg.j()?;
    let block = &cfg.duality;
    let thresholds = DualityThresholds {
        fd_loc_max: block.fd_loc_max,
        fd_ext_min: block.fd_ext_min,
        match_tol: block.match_tol,
        min_matched_fraction: block.min_matched_fraction,
    };
    let (h1, h2) = dual_models(cfg.g, cfg.h, j)?;
    let (s1, s2) = rayon::join(|| eig(&h1), || eig(&h2));
    let report = duality_report_from_sets(cfg.g, cfg.h, j, &s1?, &s2?, &thresholds)?;

    fs::create_dir_all(out)?;
    let file = DualityFile { schema: schema("duality"), config: cfg, report: &report };
    let mut json = serde_json::to_string_pretty(&file).map_err(|e| CliError::Io(e.into()))?;
    json.push('\n');
    fs::write(out.join("duality.json"), json)?;

    let mut table = Table::new(
        "duality_pairs",
        strings(&[
            "index_h1", "index_h2", "re_E1", "im_E1", "re_E2", "im_E2", "fd1", "fd2", "distance", "ambiguous", "verdict",
        ]),
    );
    for p in &report.pairs {
        let verdict = serde_json::to_value(p.verdict).expect("verdict serializes");
        table.rows.push(vec![
            p.index_h1.to_string(),
            p.index_h2.to_string(),
            num(p.e1[0]),
            num(p.e1[1]),
            num(p.e2[0]),
            num(p.e2[1]),
            num(p.fd1),
            num(p.fd2),
            num(p.distance),
            p.ambiguous.to_string(),
            verdict.as_str().unwrap_or_default().to_string(),
        ]);
    }
    table.write(out, &cfg.echo())
}

/// Fit of the state nearest `target` at nonreciprocity `g`, next to the two
/// largest exponents at its eigenvalue.
fn fit_row(cfg: &ExperimentConfig, g: f64, target: C64) -> Result<Vec<String>, CliError> {
    let spec = cfg.model().with_g(g);
    let n = cfg.size()?;
    let pair = nearest_eigenpair(&build_matrix(&spec, n, cfg.bc)?, target)?;
    let l = lyapunov_spectrum(&spec, pair.value, cfg.fit.steps.unwrap_or(n), cfg.fit.epsilon_zero)?;
    let fit = localization_fit(&pair.vector, cfg.bc, cfg.fit.window)?;
    let d = l.gammas.len();
    let (right, left) = (l.gammas[d - 2], l.gammas[d - 1]);
    Ok(vec![
        num(pair.value.re),
        num(pair.value.im),
        num(g),
        fit.center.to_string(),
        num(fit.left_slope),
        num(fit.right_slope),
        num(right),
        num(left),
        num((fit.left_slope - left).abs() / left.abs()),
        num((fit.right_slope - right).abs() / right.abs()),
    ])
}

pub fn fit(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if cfg.fit.energies.is_empty() {
        return Err(CliError::Config("fit needs fit.energies".into()));
    }
    let g_values = if cfg.fit.g_values.is_empty() { vec![cfg.g] } else { cfg.fit.g_values.clone() };
    let items: Vec<(f64, C64)> =
        g_values.iter().flat_map(|&g| energies(&cfg.fit.energies).into_iter().map(move |e| (g, e))).collect();
    let rows = items.par_iter().map(|&(g, e)| fit_row(cfg, g, e)).collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(
        "fits",
        strings(&[
            "re_E", "im_E", "g", "center", "left_slope", "right_slope", "gamma3", "gamma4", "rel_err_left", "rel_err_right",
        ]),
    );
    table.rows = rows;
    table.write(out, &cfg.echo())
}

pub fn scaling(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let block = &cfg.scaling;
    let tracking = Tracking {
        reference: C64::new(block.reference[0], block.reference[1]),
        window: block.window,
        bc: cfg.bc,
        epsilon_zero: block.epsilon_zero,
    };
    check_sweep(&block.j_range, &tracking)?;
    let spec = cfg.model();
    let points = block
        .j_range
        .par_iter()
        .map(|&j| scaling_point(&spec, block.observable, j, &tracking))
        .collect::<quasiloc::Result<Vec<_>>>()?;
    let curve = ScalingCurve::assemble(block.observable, &block.j_range, points)?;

    let columns: Vec<String> = match block.observable {
        Observable::TrackedFd => strings(&["fd"]),
        Observable::LyapunovPattern => (1..=2 * spec.range).map(|i| format!("gamma_{i}")).collect(),
    };
    let mut header = strings(&["N", "inv_log_N", "re_E", "im_E"]);
    header.extend(columns.iter().cloned());
    if block.observable == Observable::LyapunovPattern {
        header.push("pattern".into());
    }
    let mut table = Table::new("scaling", header);
    for (name, fit) in columns.iter().zip(&curve.extrapolation) {
        table.notes.push(match fit {
            Some(f) => format!(
                "extrapolation {name}: intercept={} intercept_stderr={} slope={}",
                num(f.intercept),
                num(f.intercept_stderr),
                num(f.slope)
            ),
            None => format!("extrapolation {name}: none"),
        });
    }
    if !curve.gaps.is_empty() {
        let gaps: Vec<String> = curve.gaps.iter().map(|n| n.to_string()).collect();
        table.notes.push(format!("no eigenvalue within the window at N = {}", gaps.join(" ")));
    }
    for p in &curve.points {
        let mut row = vec![p.n.to_string(), num(1.0 / (p.n as f64).ln()), num(p.energy[0]), num(p.energy[1])];
        row.extend(p.values.iter().map(|&v| num(v)));
        if let Some(pattern) = &p.pattern {
            row.push(pattern.clone());
        }
        table.rows.push(row);
    }
    table.write(out, &cfg.echo())
}
