use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn quasiloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasiloc")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = quasiloc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Header names and data rows of a CSV output, comment lines skipped.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<String> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].clone()).collect()
}

fn floats(v: Vec<String>) -> Vec<f64> {
    v.iter().map(|s| s.parse().unwrap()).collect()
}

#[test]
fn spectrum_boundary_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run_ok(&["spectrum", "-s", "g=1", "-s", "size=987", "-s", "bc=obc", "--out", d]);
    let (h, rows) = read_csv(&dir.path().join("spectrum.csv"));
    assert_eq!(h, ["index", "re_E", "im_E", "fd", "residual"]);
    assert_eq!(rows.len(), 987);
    assert!(floats(column(&h, &rows, "im_E")).iter().all(|x| x.abs() < 1e-6));

    run_ok(&["spectrum", "-s", "g=1", "-s", "size=987", "--out", d]);
    let (h, rows) = read_csv(&dir.path().join("spectrum.csv"));
    assert!(floats(column(&h, &rows, "im_E")).iter().any(|x| x.abs() > 1e-3), "no loop under PBC");
    assert!(floats(column(&h, &rows, "fd")).iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));

    run_ok(&["spectrum", "-s", "size=233", "--out", d]);
    let (h, rows) = read_csv(&dir.path().join("spectrum.csv"));
    assert!(floats(column(&h, &rows, "im_E")).iter().all(|x| x.abs() < 1e-9));
}

#[test]
fn lyapunov_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run_ok(&["lyapunov", "-s", "g=1", "-s", "lyapunov.energies=[[0.025, 0.0]]", "--out", d]);
    let (h, rows) = read_csv(&dir.path().join("lyapunov.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(column(&h, &rows, "scenario"), ["V"]);
    assert_eq!(column(&h, &rows, "steps"), ["10946"]);

    run_ok(&["lyapunov", "-s", "kind=uniform_chain", "-s", "lyapunov.energies=[[0.0, 0.0]]", "--out", d]);
    let (h, rows) = read_csv(&dir.path().join("lyapunov.csv"));
    assert_eq!(h.len(), 2 + 2 + 4);
    assert_eq!(column(&h, &rows, "scenario"), ["I"]);
    assert!(floats(column(&h, &rows, "gamma_1")).iter().chain(&floats(column(&h, &rows, "gamma_2"))).all(|g| g.abs() < 1e-3));
}

#[test]
fn dual_model_at_a_matched_real_energy_has_a_zero_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run_ok(&["duality", "-s", "j=13", "-s", "g=1", "-s", "h=0.6", "--out", d]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("duality.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "quasiloc.duality/1");
    assert_eq!(report["report"]["n"], 144);
    let (h, rows) = read_csv(&dir.path().join("duality_pairs.csv"));
    assert_eq!(rows.len(), 144);
    assert!(column(&h, &rows, "verdict").iter().all(|v| v == "breakdown"));

    let im = floats(column(&h, &rows, "im_E2"));
    let re = floats(column(&h, &rows, "re_E2"));
    let k = (0..rows.len()).find(|&k| im[k].abs() < 1e-9).expect("a real eigenvalue");
    let energy = format!("lyapunov.energies=[[{}, 0.0]]", re[k]);
    run_ok(&["lyapunov", "-s", "kind=h2", "-s", "g=1", "-s", "h=0.6", "-s", "tau=fibonacci", "-s", "j=13", "-s", &energy, "--out", d]);
    let text = fs::read_to_string(dir.path().join("lyapunov.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let gammas: Vec<f64> = last.split(',').skip(2).take(2).map(|s| s.parse().unwrap()).collect();
    assert!(gammas.iter().any(|g| g.abs() < 0.02), "{last}");
}

#[test]
fn output_is_deterministic_and_reproducible_from_its_header() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let base = ["lyapunov", "-s", "g=0.5", "-s", "h=0.2", "-s", "size=144", "-s", "lyapunov.from_spectrum=true", "-s", "lyapunov.steps=2000"];
    let with = |dir: &Path, jobs: &str| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--jobs", jobs, "--out", dir.to_str().unwrap()]);
        args.iter().map(|s| s.to_string()).collect::<Vec<_>>()
    };
    run_ok(&with(&a, "1").iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&with(&b, "3").iter().map(String::as_str).collect::<Vec<_>>());
    let first = fs::read(a.join("lyapunov.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("lyapunov.csv")).unwrap());

    let text = String::from_utf8(first.clone()).unwrap();
    let echo = text.lines().find_map(|l| l.strip_prefix("# config: ")).unwrap();
    let cfg = dir.path().join("echo.json");
    fs::write(&cfg, echo).unwrap();
    run_ok(&["lyapunov", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(first, fs::read(c.join("lyapunov.csv")).unwrap());
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "kind = \"h1\"\ng = 1.0\nsize = 610\nbc = \"pbc\"\n\n[fit]\nenergies = [[0.025, 0.0]]\nwindow = 80\n").unwrap();
    let d = dir.path().to_str().unwrap();
    run_ok(&["fit", "--config", cfg.to_str().unwrap(), "-s", "fit.g_values=[1.0, 1.5]", "--out", d]);
    let (h, rows) = read_csv(&dir.path().join("fits.csv"));
    assert_eq!(
        h,
        ["re_E", "im_E", "g", "center", "left_slope", "right_slope", "gamma3", "gamma4", "rel_err_left", "rel_err_right"]
    );
    assert_eq!(column(&h, &rows, "g"), ["1", "1.5"]);
    let left = floats(column(&h, &rows, "left_slope"));
    let right = floats(column(&h, &rows, "right_slope"));
    assert!(left.iter().all(|&x| x > 0.0) && right.iter().all(|&x| x < 0.0));
}

#[test]
fn scaling_writes_extrapolation_notes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run_ok(&[
        "scaling", "-s", "kind=uniform_chain", "-s", "bc=obc", "-s", "scaling.j_range=[12, 13, 14]", "-s", "scaling.reference=[0.31, 0.0]", "--out", d,
    ]);
    let text = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# extrapolation fd: intercept=")));
    let (h, rows) = read_csv(&dir.path().join("scaling.csv"));
    assert_eq!(h, ["N", "inv_log_N", "re_E", "im_E", "fd"]);
    assert_eq!(column(&h, &rows, "N"), ["89", "144", "233"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(quasiloc(&["spectrum", "-s", "size=13", "-s", "typo=1", "--out", d]).status.code(), Some(2));
    assert_eq!(quasiloc(&["spectrum", "-s", "size=13", "--seedless=yes", "--out", d]).status.code(), Some(2));
    assert_eq!(quasiloc(&["spectrum", "--out", d]).status.code(), Some(2), "size missing");
    assert_eq!(quasiloc(&["spectrum", "-s", "size=13", "--seedless", "--out", d]).status.code(), Some(0));
    let failed = quasiloc(&["lyapunov", "-s", "lyapunov.energies=[[0.1, 0.0]]", "-s", "lyapunov.steps=0", "--out", d]);
    assert_eq!(failed.status.code(), Some(3));
    let (h, rows) = read_csv(&dir.path().join("lyapunov.csv"));
    assert_ne!(column(&h, &rows, "status")[0], "ok");
}
