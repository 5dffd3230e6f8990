use std::fs;
use std::path::Path;

use lfe_core::cli::run;
use lfe_core::trajectory::PeriodicTrajectory;
use lfe_core::verify::circular_orbit_radius;
use lfe_core::Vec3;
use serde_json::Value;

fn lfe(args: &[&str]) -> i32 {
    run(std::iter::once("lfe").chain(args.iter().copied()))
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn lemmas_with_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(lfe(&["lemmas", "--out", out, "--nodes", "64", "--samples", "5"]), 0);
    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    assert_eq!(r["command"], "lemmas");
    assert!(dir.path().join("timings.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "tol_crit = -1e-7\n").unwrap();
    let out = dir.path().join("out");
    let args = ["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(lfe(&args), 1);
    fs::write(&cfg, "lambda = 50\nlamda = 3\n").unwrap();
    assert_eq!(lfe(&args), 1);
    assert_eq!(lfe(&["solve", "--no-such-flag"]), 1);
    assert_eq!(lfe(&["verify", "--out", out.to_str().unwrap()]), 1);
    assert_eq!(lfe(&["--help"]), 0);
}

#[test]
fn verify_accepts_circle_and_rejects_non_solution() {
    let dir = tempfile::tempdir().unwrap();
    let rho = circular_orbit_radius(50.0, 1).unwrap();
    let good = dir.path().join("circle.csv");
    PeriodicTrajectory::from_fn(128, |t| Vec3::new(rho * t.cos(), rho * t.sin(), 0.0)).save_csv(&good).unwrap();
    let bad = dir.path().join("ellipse.csv");
    PeriodicTrajectory::from_fn(128, |t| Vec3::new(0.4 * t.cos(), 0.2 * t.sin(), 0.0)).save_csv(&bad).unwrap();
    let out = dir.path().join("v");
    let o = out.to_str().unwrap();
    assert_eq!(lfe(&["verify", "--trajectory", good.to_str().unwrap(), "--electric", "arctan", "--lambda", "50", "--out", o]), 0);
    let r = report(&out);
    assert_eq!(r["result"]["verdict"]["status"], "verified");
    assert!(r["result"]["residuals"]["ode_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(lfe(&["verify", "--trajectory", bad.to_str().unwrap(), "--lambda", "50", "--out", o]), 2);
    assert_eq!(report(&out)["result"]["verdict"]["status"], "rejected");
}

#[test]
fn subproblem_writes_solution() {
    let dir = tempfile::tempdir().unwrap();
    let forcing = dir.path().join("f.csv");
    PeriodicTrajectory::from_fn(64, |t| Vec3::new(0.5 * t.cos(), (2.0 * t).sin(), 0.1)).save_csv(&forcing).unwrap();
    let out = dir.path().join("s");
    let args = ["subproblem", "--forcing", forcing.to_str().unwrap(), "--nodes", "128", "--tol", "1e-11", "--out", out.to_str().unwrap()];
    assert_eq!(lfe(&args), 0);
    let q = PeriodicTrajectory::load_csv(&out.join("subproblem.csv")).unwrap();
    assert_eq!(q.node_count(), 128);
    let r = report(&out);
    assert!(r["result"]["solution"]["closure_residual"].as_f64().unwrap() <= 1e-11);
    assert!((q.mean() + Vec3::new(0.0, 0.0, 0.1)).norm() < 1e-12);
}

#[test]
fn sweep_table_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, "# small sweep\nlambda_grid = 0.3, 50\nnodes = 64\nstarts = 4\nsamples = 10\n").unwrap();
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert_eq!(lfe(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let table = fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "lambda,orbit_count,min_level,lambda_hat,negativity_margin");
    assert_eq!(rows.len(), 3);
    // no circular orbit exists below λ = 1/2
    assert!(rows[1].starts_with("0.3,0,,"));
    let count: usize = rows[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!(count >= 1);
    assert!(dir.path().join("a/lambda_01_orbit_00.csv").exists());
    let echo = report(&dir.path().join("a"))["config"].as_str().unwrap().to_string();
    assert!(echo.contains("lambda_grid = 0.3,50\n"));
}
