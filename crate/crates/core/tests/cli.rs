use std::path::Path;

use choquard::cli::{run, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE};
use choquard::solution::SolutionFile;
use tempfile::TempDir;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn invoke(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["choquard"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn config(dir: &TempDir, body: &str) -> String {
    let path = dir.path().join("run.ini");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn solve(dir: &TempDir, body: &str) -> (Run, String) {
    let cfg = config(dir, body);
    let out = dir.path().to_str().unwrap().to_string();
    let r = invoke(&["solve", "--config", &cfg, "--out", &out]);
    (r, dir.path().join("solution.json").to_str().unwrap().to_string())
}

const DIRICHLET: &str = "[problem]\ndim = 3\nalpha = 1.0\np = 2.0\nbc = dirichlet\n[grid]\nn = 96\n";

#[test]
fn solve_reports_mu_twice_j_and_pins_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (r, path) = solve(&dir, DIRICHLET);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let file = SolutionFile::read(Path::new(&path)).unwrap();
    assert!(file.converged);
    assert!((file.mu - 2.0 * file.j).abs() <= 1e-12 * file.j);
    let u = file.u.values;
    assert_eq!(u[0], 0.0);
    assert_eq!(*u.last().unwrap(), 0.0);
    let v = file.v.unwrap().values;
    assert_eq!(v[0], 0.0);
    assert_eq!(*v.last().unwrap(), 0.0);
    assert!(r.out.contains("converged = true"));
}

#[test]
fn bad_alpha_is_a_located_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "[problem]\ndim = 3\nalpha = 3.5\n");
    let r = invoke(&["solve", "--config", &cfg]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("line 3"), "{}", r.err);
}

#[test]
fn bad_override_is_located() {
    let r = invoke(&["solve", "--set", "problem.p=banana"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("problem.p"), "{}", r.err);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(invoke(&["bogus"]).code, EXIT_USAGE);
}

#[test]
fn help_exits_cleanly() {
    let r = invoke(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("sweep-alpha"));
}

#[test]
fn iteration_cap_exits_not_converged_but_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let (r, path) = solve(&dir, &format!("{DIRICHLET}[solver]\nmax_iters = 3\n"));
    assert_eq!(r.code, EXIT_NOT_CONVERGED);
    assert!(!SolutionFile::read(Path::new(&path)).unwrap().converged);
}

#[test]
fn pohozaev_rejects_neumann_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let (r, path) = solve(&dir, "[problem]\ndim = 3\nalpha = 1.0\np = 2.0\nbc = neumann\n[grid]\nn = 64\n");
    assert_eq!(r.code, EXIT_OK);
    let r = invoke(&["pohozaev", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn pohozaev_of_zero_field_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = solve(&dir, DIRICHLET);
    let mut file = SolutionFile::read(Path::new(&path)).unwrap();
    for x in file.v.as_mut().unwrap().values.iter_mut() {
        *x = 0.0;
    }
    std::fs::write(&path, file.to_json()).unwrap();
    let r = invoke(&["pohozaev", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let csv = std::fs::read_to_string(dir.path().join("pohozaev.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(value, 0.0, "{line}");
        assert!(!line.contains("-0"), "{line}");
    }
}

#[test]
fn pohozaev_constant_potential_has_no_drift_and_labels_regime() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = solve(&dir, "[problem]\ndim = 3\nalpha = 1.0\np = 4.0\nbc = dirichlet\n[grid]\nn = 96\n");
    let r = invoke(&["pohozaev", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("CriticalThreshold"), "{}", r.out);
    let csv = std::fs::read_to_string(dir.path().join("pohozaev.csv")).unwrap();
    let drift = csv.lines().find(|l| l.contains("drift")).unwrap();
    assert_eq!(drift.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0);
}

#[test]
fn single_alpha_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "[problem]\ndim = 3\nalpha = 0.5\np = 2.0\n[grid]\nn = 64\n[sweep]\nalphas = 0.5\n");
    let r = invoke(&["sweep-alpha", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let csv = std::fs::read_to_string(dir.path().join("gamma_sweep.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "alpha,J_alpha,J0,h1_dist,mu_alpha");
    assert_eq!(lines.len(), 2);
}

#[test]
fn kernel_check_passes_in_two_dims() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "[problem]\ndim = 2\nalpha = 1.0\n[grid]\nn = 64\n[kernel]\nmc_samples = 20000\n");
    let r = invoke(&["kernel-check", "--config", &cfg]);
    assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
    assert!(r.out.contains("monte-carlo"));
}

#[test]
fn p_one_writes_no_rescaled_field() {
    let dir = tempfile::tempdir().unwrap();
    let (r, path) = solve(&dir, "[problem]\ndim = 3\nalpha = 1.0\np = 1.0\nbc = dirichlet\n[grid]\nn = 64\n");
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(SolutionFile::read(Path::new(&path)).unwrap().v.is_none());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"v\": null"));
}
