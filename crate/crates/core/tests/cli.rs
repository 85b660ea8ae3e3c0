use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dataconform::linalg::{Mat, SymMat, Vector};
use dataconform::lqr::{solve_riccati, LqrWeights};
use dataconform::simulator::{benchmark_initial_law, benchmark_model, simulate, ControlLaw, Plant};
use serde_json::Value;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dataconform"));
    cmd.args(args).env_remove("DATACONFORM_SEED");
    if let Some(s) = seed_env {
        cmd.env("DATACONFORM_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A bundled config with its design list replaced.
fn with_designs(base: &str, designs: &str, dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(bundled(base)).unwrap();
    let head = &text[..text.find("[[designs]]").unwrap()];
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{head}{designs}")).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn matrix(v: &Value) -> Mat {
    let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone()).unwrap();
    dataconform::linalg::mat_from_rows(&rows).unwrap()
}

fn write_trajectory(dir: &Path, law: &ControlLaw, horizon: usize) -> PathBuf {
    let data = simulate(&Plant::linear(benchmark_model()), law, &Vector::zeros(2), horizon, 5).unwrap();
    let path = dir.join("data.csv");
    data.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn identify_reports_a_two_by_two_model() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_trajectory(dir.path(), &benchmark_initial_law(), 500);
    let o = run(&["identify", path_str(&csv), "--out", path_str(dir.path())], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("identification.json"));
    let a = matrix(&report["A_hat"]);
    assert_eq!(a.shape(), (2, 2));
    assert!((a[(0, 0)] - 0.98).abs() < 0.1, "{a}");
}

#[test]
fn identify_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "k,x1,x2,u1\n0,1.0,2.0,0.5\n").unwrap();
    assert_eq!(code(&run(&["identify", path_str(&short)], None)), 3);

    let quiet = ControlLaw { k: Mat::from_row_slice(1, 2, &[0.0, 0.0]), v: SymMat::zeros(1) };
    let csv = write_trajectory(dir.path(), &quiet, 200);
    assert_eq!(code(&run(&["identify", path_str(&csv)], None)), 2);

    assert_eq!(code(&run(&["identify", "/nonexistent/data.csv"], None)), 3);
    assert_eq!(code(&run(&["frobnicate"], None)), 3);
}

#[test]
fn standard_design_matches_riccati() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_designs("linear_scatter.toml", "[[designs]]\nlabel = \"lqr\"\nformulation = { kind = \"standard\" }\n", dir.path());
    let o = run(&["design", path_str(&cfg), "--out", path_str(dir.path())], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let k = matrix(&read_json(&dir.path().join("design.json"))["K"]);
    let weights = LqrWeights::identity(2, SymMat::from_diag(&[0.5])).unwrap();
    let (k_ric, _) = solve_riccati(&benchmark_model(), &weights).unwrap();
    assert!((&k - &k_ric).amax() <= 1e-5, "{k} vs {k_ric}");
}

#[test]
fn hard_state_constraint_on_sampled_data_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_designs("linear_scatter.toml", "[[designs]]\nlabel = \"hard\"\nformulation = { kind = \"state_hard\" }\n", dir.path());
    assert_eq!(code(&run(&["design", path_str(&cfg)], None)), 5);
}

#[test]
fn joint_design_on_the_input_coupled_plant_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_designs(
        "coupled_series.toml",
        "[[designs]]\nlabel = \"joint\"\nformulation = { kind = \"joint_regularized\", gamma = 10.0 }\n",
        dir.path(),
    );
    let o = run(&["design", path_str(&cfg), "--out", path_str(dir.path())], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(matrix(&read_json(&dir.path().join("design.json"))["K"]).shape(), (1, 2));
}

#[test]
fn unreachable_solver_tolerance_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_designs("linear_scatter.toml", "[[designs]]\nlabel = \"lqr\"\nformulation = { kind = \"standard\" }\n", dir.path());
    assert_eq!(code(&run(&["design", path_str(&cfg), "--solver-tol", "1e-30"], None)), 4);
}

#[test]
fn malformed_configs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = with_designs("linear_scatter.toml", "designs = []\n", dir.path());
    assert_eq!(code(&run(&["design", path_str(&empty)], None)), 3);

    let text = std::fs::read_to_string(bundled("linear_scatter.toml")).unwrap();
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, format!("mystery_knob = 3\n{text}")).unwrap();
    assert_eq!(code(&run(&["campaign", path_str(&unknown)], None)), 3);

    assert_eq!(code(&run(&["campaign", path_str(&bundled("linear_scatter.toml")), "--jobs", "0"], None)), 3);
    assert_eq!(code(&run(&["campaign", path_str(&bundled("linear_scatter.toml"))], Some("not-a-number"))), 3);
}

fn campaign_json(args: &[&str], seed_env: Option<&str>) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let mut all = vec!["campaign"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path_str(dir.path())]);
    let o = run(&all, seed_env);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    read_json(&dir.path().join("campaign.json"))
}

#[test]
fn seed_precedence_is_flag_then_environment_then_config() {
    let cfg = bundled("quadratic_campaign.toml");
    let c = path_str(&cfg);
    assert_eq!(campaign_json(&[c, "--reps", "2"], None)["master_seed"], 42);
    assert_eq!(campaign_json(&[c, "--reps", "2"], Some("9"))["master_seed"], 9);
    assert_eq!(campaign_json(&[c, "--reps", "2", "--seed", "3"], Some("9"))["master_seed"], 3);
}

#[test]
fn single_repetition_campaigns_are_reproducible() {
    let cfg = bundled("coupled_campaign.toml");
    let c = path_str(&cfg);
    let a = campaign_json(&[c, "--reps", "1", "--jobs", "1"], None);
    let b = campaign_json(&[c, "--reps", "1", "--jobs", "3"], None);
    assert_eq!(a, b);
    assert_eq!(a["repetitions"], 1);
}

#[test]
fn bundled_configs_run() {
    for name in ["quadratic_campaign.toml", "coupled_campaign.toml"] {
        let report = campaign_json(&[path_str(&bundled(name)), "--reps", "20"], None);
        assert_eq!(report["designs"].as_array().unwrap().len(), 4, "{name}");
    }
    for (name, files) in [
        ("linear_scatter.toml", vec!["ce_experiment.csv", "ce_closed_loop.csv", "gamma_prime_100_closed_loop.csv"]),
        ("quadratic_series.toml", vec!["experiment.csv", "ce.csv", "gamma_prime_5.csv"]),
        ("coupled_series.toml", vec!["experiment.csv", "joint_gamma_10.csv"]),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["figure-data", path_str(&bundled(name)), "--out", path_str(dir.path())], None);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            let text = std::fs::read_to_string(dir.path().join(f)).unwrap_or_else(|_| panic!("{name}: {f} missing"));
            assert!(text.starts_with("k,x1"), "{name}: {f}");
            assert!(text.lines().count() > 100, "{name}: {f}");
        }
    }
}
