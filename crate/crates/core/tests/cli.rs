use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ldpc_scaling::cli::{AnalyzeReport, CsvTable, FitReport, CURVE_COLUMNS};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ldpc-scaling"));
    c.env_remove("LDPC_SCALING_SEED").env_remove("LDPC_SCALING_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const R36: &str = r#"{"kind":"standard","lambda":{"3":1.0},"rho":{"6":1.0},"n":512}"#;

fn simulate_args<'a>(ens: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "simulate", "--ensemble", ens, "--eps-min", "0.38", "--eps-max", "0.46", "--eps-steps", "9", "--trials",
        "600", "--seed", "11", "--out", out,
    ]
}

#[test]
fn analyze_reports_threshold_and_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let ens = write(dir.path(), "e.json", R36);
    let out = dir.path().join("a.json");
    ok(&["analyze", "--ensemble", s(&ens), "--scaling", "--out", s(&out)]);
    let r: AnalyzeReport = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!((r.eps_star - 0.4294398).abs() < 1e-6);
    assert!((r.beta.unwrap() - 0.616949).abs() < 1e-5);
    assert!(r.alpha_rand.unwrap() > r.alpha_exact.unwrap());
    assert_eq!(r.meta.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(r.meta.config_hash.len(), 16);
    assert!(!r.marginally_stable);

    // equivalent ensemble files hash alike
    let ens2 = write(dir.path(), "e2.json", r#"{"kind":"standard","lambda":{"3":2.0},"rho":{"6":5.0},"n":512}"#);
    let o2 = ok(&["analyze", "--ensemble", s(&ens2), "--scaling"]);
    let r2: AnalyzeReport = serde_json::from_slice(&o2.stdout).unwrap();
    assert_eq!(r2.meta.config_hash, r.meta.config_hash);
}

#[test]
fn analyze_cycle_code_is_marginal() {
    let dir = tempfile::tempdir().unwrap();
    let ens = write(dir.path(), "c.json", r#"{"kind":"poisson","lambda":{"2":1.0},"rate":0.5}"#);
    let o = ok(&["analyze", "--ensemble", s(&ens), "--scaling"]);
    let r: AnalyzeReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.marginally_stable);
    assert!((r.eps_star - 0.25).abs() < 1e-12);
    assert!(r.cycle.is_some() && r.alpha_exact.is_none());
}

#[test]
fn simulate_schema_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let ens = write(dir.path(), "e.json", R36);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&simulate_args(s(&ens), s(&a)));
    let out = bin().args(simulate_args(s(&ens), s(&b))).env("LDPC_SCALING_THREADS", "3").output().unwrap();
    assert!(out.status.success());
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap(), "output depends on the thread count");
    assert!(!bytes.contains(&b'\r'));

    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with(&format!("# ldpc-scaling {} simulate config=", env!("CARGO_PKG_VERSION"))));
    assert!(text.lines().next().unwrap().ends_with("seed=11"));
    let t = CsvTable::parse(&text).unwrap();
    assert_eq!(t.headers, CURVE_COLUMNS);
    assert_eq!(t.rows.len(), 9);
    assert_eq!(t.header_value("n").as_deref(), Some("512"));
    for col in ["eps", "pB", "pB_se", "pBgamma", "pb"] {
        let v = t.column(col).unwrap();
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
    }
    let eps_field = &t.rows[0][0];
    assert_eq!(eps_field.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    let pb = t.column("pB").unwrap();
    assert!(pb[8] > pb[0]);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let ens = write(dir.path(), "e.json", R36);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let base = ["simulate", "--ensemble", s(&ens), "--eps-min", "0.42", "--eps-max", "0.42", "--eps-steps", "1", "--trials", "300"];
    let mut args_a = base.to_vec();
    args_a.extend(["--seed", "5", "--out", s(&a)]);
    ok(&args_a);
    let mut args_b = base.to_vec();
    args_b.extend(["--out", s(&b)]);
    assert!(bin().args(&args_b).env("LDPC_SCALING_SEED", "5").status().unwrap().success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn predict_and_fit_consume_upstream_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ens = write(dir.path(), "e.json", R36);
    let params = dir.path().join("a.json");
    let curve = dir.path().join("c.csv");
    let pred = dir.path().join("p.csv");
    let fitted = dir.path().join("f.json");
    ok(&["analyze", "--ensemble", s(&ens), "--scaling", "--out", s(&params)]);
    ok(&simulate_args(s(&ens), s(&curve)));
    ok(&["predict", "--params", s(&params), "--n", "512", "--grid-from", s(&curve), "--out", s(&pred)]);
    ok(&["fit", "--curve", s(&curve), "--params", s(&params), "--out", s(&fitted)]);

    let p = CsvTable::read(&pred).unwrap();
    assert_eq!(p.headers, ["eps", "pB", "pb"]);
    let sim = CsvTable::read(&curve).unwrap();
    assert_eq!(p.column("eps").unwrap(), sim.column("eps").unwrap());
    let pb = p.column("pB").unwrap();
    assert!(pb.windows(2).all(|w| w[1] >= w[0]));

    let f: FitReport = serde_json::from_str(&fs::read_to_string(&fitted).unwrap()).unwrap();
    assert_eq!(f.n, 512);
    assert_eq!(f.points, 9);
    assert!(f.alpha > 0.3 && f.alpha < 0.9, "alpha {}", f.alpha);
}

#[test]
fn cycle_modes() {
    let o = ok(&["cycle", "--n", "128", "--mode", "exact", "--eps-min", "0.125", "--eps-max", "0.25", "--eps-steps", "2"]);
    let t = CsvTable::parse(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    assert_eq!(t.headers, ["eps", "erasures", "pB"]);
    let p = t.column("pB").unwrap();
    assert!(p[0] > 0.0 && p[0] < p[1] && p[1] < 1.0);

    for mode in ["scaling", "limit", "floor"] {
        ok(&["cycle", "--n", "1024", "--mode", mode, "--s", "1", "--eps-min", "0.05", "--eps-max", "0.2", "--eps-steps", "3"]);
    }
    let out = run(&["cycle", "--n", "128", "--s", "1", "--mode", "exact", "--eps-min", "0.1", "--eps-max", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trajectory_has_prediction_columns() {
    let dir = tempfile::tempdir().unwrap();
    let ens = write(dir.path(), "e.json", R36);
    let o = ok(&["trajectory", "--ensemble", s(&ens), "--trials", "200", "--nu", "0.4,0.35", "--seed", "2"]);
    let t = CsvTable::parse(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 3);
    let sim = t.column("s_mean").unwrap();
    let ce = t.column("sigma_ce").unwrap();
    for (a, b) in sim.iter().zip(&ce) {
        assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--ensemble"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--ensemble", "/nonexistent.json", "--eps-min", "0.1", "--eps-max", "0.2"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "b.json", r#"{"kind":"standard","lambda":{"3":-1.0, "4": 2.0},"rho":{"6":1.0},"n":64}"#);
    let out = run(&["analyze", "--ensemble", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["exit_code"], 2);

    let irregular = write(dir.path(), "i.json", r#"{"kind":"standard","lambda":{"3":0.5,"4":0.5},"rho":{"7":1.0},"n":64}"#);
    assert_eq!(run(&["analyze", "--ensemble", s(&irregular), "--scaling"]).status.code(), Some(2));
    assert_eq!(run(&["predict", "--n", "100", "--eps-min", "0.1", "--eps-max", "0.2"]).status.code(), Some(2));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn numerical_failure_exits_3() {
    // no graph of this size avoids every short cycle, so sampling gives up
    let dir = tempfile::tempdir().unwrap();
    let ens = write(dir.path(), "x.json", r#"{"kind":"standard","lambda":{"2":1.0},"rho":{"4":1.0},"n":8,"s":4}"#);
    let out = run(&["simulate", "--ensemble", s(&ens), "--eps-min", "0.1", "--eps-max", "0.1", "--eps-steps", "1", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "numerical");
}

#[test]
fn repro_quick_subset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = ok(&["repro", "--quick", "--criteria", "3,4", "--out", s(&out)]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("criterion")).count(), 2);
    assert!(text.contains("quick mode"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
}
