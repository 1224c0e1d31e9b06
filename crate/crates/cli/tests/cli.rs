use std::collections::HashMap;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dre-krylov");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("RK_DRE_SEED").output().unwrap()
}

fn run_env(args: &[&str], seed: &str) -> Output {
    Command::new(BIN).args(args).env("RK_DRE_SEED", seed).output().unwrap()
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn parse(out: &Output) -> Self {
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout.clone()).unwrap();
        let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
        let header = lines.next().unwrap();
        Self { header, rows: lines.collect() }
    }

    fn col(&self, name: &str) -> Vec<Option<f64>> {
        let idx: HashMap<&str, usize> = self.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
        let i = idx[name];
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }

    fn values(&self, name: &str) -> Vec<f64> {
        self.col(name).into_iter().map(Option::unwrap).collect()
    }
}

const SCALAR: &str = r#"{"generator":"scalar","a":0,"q":1,"s":1,"x0":0}"#;
const DENSE30: &str = r#"{"generator":"random_dense","n":30,"p":2,"q":2,"r":2,"seed":4}"#;
const TOY: &str = r#"{"generator":"laplacian1d","n":400,"seed":5}"#;

#[test]
fn solve_scalar_tanh() {
    let csv = Csv::parse(&run(&["solve", "--problem", SCALAR, "--t", "1", "--k", "1"]));
    assert_eq!(csv.header, ["k_used", "basis_cols", "est", "rank", "norm_X", "arnoldi_s", "small_solve_s"]);
    assert!((csv.values("norm_X")[0] - 0.761594).abs() <= 1e-6);
    assert!((csv.values("norm_X")[0] - 1f64.tanh()).abs() <= 1e-8);
}

#[test]
fn solve_oracle_check_at_full_k() {
    let csv = Csv::parse(&run(&["solve", "--problem", DENSE30, "--k", "30", "--oracle-check", "--no-timings"]));
    assert_eq!(csv.header.last().unwrap(), "error");
    assert!(csv.values("error")[0] <= 1e-8);
    assert!(!csv.header.iter().any(|h| h.ends_with("_s")));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"problem\": {\"generator\": \"laplacian1d\"}, \"k\": }").unwrap();
    let out = run(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));

    std::fs::write(&path, r#"{"problem": {"generator": "scalar", "a": 0, "q": 1, "s": 1, "x0": 0}, "k": 2, "tol": 1e-3}"#).unwrap();
    assert_eq!(run(&["solve", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--problem", SCALAR, "--k", "2", "--tol", "1e-3"]).status.code(), Some(2));
    assert_eq!(run(&["solve"]).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, format!(r#"{{"problem": {DENSE30}, "t": 0.5, "tol": 1e-3, "m": 10}}"#)).unwrap();
    let cfg = path.to_str().unwrap();
    let from_file = Csv::parse(&run(&["solve", "--config", cfg]));
    assert!(from_file.values("est")[0] <= 1e-3);
    let overridden = Csv::parse(&run(&["solve", "--config", cfg, "--k", "2"]));
    assert_eq!(overridden.values("k_used")[0], 2.0);
}

#[test]
fn tolerance_not_met_exits_one() {
    let out = run(&["solve", "--problem", TOY, "--tol", "1e-14", "--k-max", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn sweep_k_single_row_and_schema() {
    let csv = Csv::parse(&run(&["sweep-k", "--problem", TOY, "--k-max", "1"]));
    assert_eq!(csv.header, ["k", "est", "bound_thm41", "bound_eq43", "bound_thm45", "elapsed"]);
    assert_eq!(csv.rows.len(), 1);
}

#[test]
fn sweep_k_on_toy_tracks_and_is_dominated() {
    let csv = Csv::parse(&run(&["sweep-k", "--problem", TOY, "--t", "0.1", "--k-max", "30", "--oracle-check", "--no-timings"]));
    let est = csv.values("est");
    assert!(est[est.len() - 1] < 1e-6 * est[0]);
    let err = csv.values("error");
    for name in ["bound_thm41", "bound_eq43", "bound_thm45"] {
        for (e, b) in err.iter().zip(csv.col(name)) {
            if let Some(b) = b {
                assert!(*e <= b + 1e-10, "{name}: {e} > {b}");
            }
        }
    }
}

#[test]
fn sweep_k_output_independent_of_jobs() {
    let base = ["sweep-k", "--problem", DENSE30, "--k-max", "8", "--no-timings"];
    let one = run(&[&base[..], &["--jobs", "1"]].concat());
    let four = run(&[&base[..], &["--jobs", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn seed_from_environment_and_flag() {
    let base = ["solve", "--problem", DENSE30, "--k", "2", "--no-timings"];
    let plain = run(&base).stdout;
    let env7 = run_env(&base, "7").stdout;
    let flag7 = run(&[&base[..], &["--seed", "7"]].concat()).stdout;
    let env_and_flag = run_env(&[&base[..], &["--seed", "4"]].concat(), "7").stdout;
    assert_ne!(plain, env7);
    assert_eq!(env7, flag7);
    assert_eq!(env_and_flag, plain);
    assert_eq!(run_env(&base, "x").status.code(), Some(2));
}

#[test]
fn timestep_budget_columns_and_totals() {
    let args = [
        "timestep", "--problem", r#"{"generator":"laplacian1d","n":200,"p":6,"q":6,"r":1,"seed":11}"#, "--h", "0.002", "--steps", "10",
        "--rank", "10", "--k", "12", "--oracle-check", "--no-timings",
    ];
    let csv = Csv::parse(&run(&args));
    assert_eq!(csv.header, ["step", "k_used", "est", "rank", "eps", "budget_62", "budget_71", "error"]);
    assert_eq!(csv.rows.len(), 11);
    assert_eq!(csv.rows[10][0], "total");
    let eps = csv.values("eps");
    let b71 = csv.values("budget_71");
    let mut running = 0.0;
    for i in 0..10 {
        running += eps[i];
        assert!((b71[i] - running).abs() <= 1e-15 * running.max(1.0));
    }
    let err = csv.values("error");
    assert!(err[9] <= 10.0 * b71[9]);
    assert_eq!(err[10], err[9]);
}

#[test]
fn timestep_single_step_matches_solve_and_cut() {
    let problem = r#"{"generator":"random_dense","n":25,"p":3,"q":2,"r":1,"seed":8}"#;
    let step = Csv::parse(&run(&["timestep", "--problem", problem, "--h", "0.3", "--steps", "1", "--rank", "25", "--k", "4", "--no-timings"]));
    let solve = Csv::parse(&run(&["solve", "--problem", problem, "--t", "0.3", "--k", "4", "--no-timings"]));
    assert_eq!(step.values("est")[0], solve.values("est")[0]);
    assert!(step.values("rank")[0] >= solve.values("rank")[0]);
    assert_eq!(step.values("eps")[0], 0.0);
}

#[test]
fn compare_rational_orders_errors() {
    let args = [
        "compare-rational", "--problem", r#"{"generator":"laplacian1d","n":200,"r":1,"seed":7}"#, "--t", "1", "--m", "100", "--k-max", "10",
        "--poles", "1",
    ];
    let csv = Csv::parse(&run(&args));
    assert_eq!(csv.header, ["basis_dim", "err_poly", "err_rational", "err_best_svd"]);
    let (poly, rat, svd) = (csv.values("err_poly"), csv.values("err_rational"), csv.values("err_best_svd"));
    for i in 0..csv.rows.len() {
        assert!(svd[i] <= poly[i] && svd[i] <= rat[i]);
        assert!(rat[i] <= poly[i], "row {i}");
    }
}

#[test]
fn compare_rational_full_space_is_exact() {
    let csv = Csv::parse(&run(&[
        "compare-rational", "--problem", r#"{"generator":"laplacian1d","n":12,"scale":1,"r":1,"seed":2}"#, "--t", "0.5", "--k-max", "12",
    ]));
    let last = csv.rows.len() - 1;
    assert_eq!(csv.values("basis_dim")[last], 12.0);
    for name in ["err_poly", "err_rational", "err_best_svd"] {
        assert!(csv.values(name)[last] <= 1e-12, "{name}");
    }
}

#[test]
fn bounds_and_oracle_check() {
    let csv = Csv::parse(&run(&["bounds", "--problem", DENSE30, "--k-max", "4"]));
    assert_eq!(csv.header, ["k", "exp_error", "bound_thm41", "bound_eq43", "bound_thm45"]);
    assert!(csv.col("bound_thm41").iter().all(Option::is_none));

    let csv = Csv::parse(&run(&["oracle-check", "--problem", DENSE30, "--no-timings"]));
    assert!(csv.values("difference")[0] <= 1e-7);
    let big = run(&["oracle-check", "--problem", r#"{"generator":"laplacian1d","n":600}"#]);
    assert_eq!(big.status.code(), Some(2));
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = run(&["bounds", "--problem", SCALAR, "--k-max", "2", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
}
