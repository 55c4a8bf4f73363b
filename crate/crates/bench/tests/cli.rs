use std::path::Path;
use std::process::{Command, Output};

fn nashdyn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nashdyn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_writes_traces_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("toy_constrained.toml");
    let out = dir.path().join("run");
    let o = nashdyn(
        &[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("second_constrained"));
    assert!(text.contains("StrictLocalNash"));
    assert!(out.join("second_constrained.csv").exists());
    assert!(out.join("dnd.csv").exists());
    let plot = std::fs::read_to_string(out.join("plot.csv")).unwrap();
    assert!(plot.starts_with("algorithm,k,mode,z_0,z_1"));
}

#[test]
fn solve_accepts_an_initial_point_and_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("toy_sweep.toml");
    let out = dir.path().join("run");
    let o = nashdyn(
        &[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--algo",
            "gda",
            "--x0",
            "-12,-8",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(out.join("gda.csv").exists());
}

#[test]
fn rate_reads_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("toy_constrained.toml");
    let out = dir.path().join("run");
    let o = nashdyn(
        &[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let trace = out.join("dnd.csv");
    let o = nashdyn(
        &[
            "rate",
            "--trace",
            trace.to_str().unwrap(),
            "--zstar",
            "-12.476604,-8.677926",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.get("order").is_some());
}

#[test]
fn classify_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("qre.toml");
    let o = nashdyn(
        &[
            "classify",
            "--config",
            cfg.to_str().unwrap(),
            "--point",
            "0.5,0.5,0.5,0.5",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "BoundaryGNE");
}

#[test]
fn sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        r#"
algorithms = ["gda", "second"]
[problem]
kind = "toy2d"
negate = true
[init]
mode = "uniform_box"
lo = -5.0
hi = 5.0
count = 100
[solver]
alpha = 0.01
max_iters = 500
[output]
summary_path = "out/summary.json"
plot_data_path = "out/plot.csv"
"#,
    )
    .unwrap();
    let o = nashdyn(
        &["sweep", "--config", "s.toml", "--count", "4", "--seed", "3"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v["count"], 4);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["algorithms"].as_array().unwrap().len(), 2);
    let plot = std::fs::read_to_string(dir.path().join("out/plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 8);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nashdyn(&["bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(
        nashdyn(&["solve", "--config", "missing.toml"], dir.path())
            .status
            .code(),
        Some(2)
    );
    std::fs::write(
        dir.path().join("bad.toml"),
        "algorithms = [\"gda\"]\n[problem]\nkind = \"toy2d\"\n",
    )
    .unwrap();
    assert_eq!(
        nashdyn(&["solve", "--config", "bad.toml"], dir.path())
            .status
            .code(),
        Some(2)
    );
    std::fs::write(
        dir.path().join("eval.toml"),
        r#"
algorithms = ["gda"]
[problem]
kind = "qre"
A = [[1.0, 0.0], [0.0, 1.0]]
[init]
mode = "fixed"
z0 = [-0.5, 1.5, 0.9, 0.1]
"#,
    )
    .unwrap();
    let o = nashdyn(&["solve", "--config", "eval.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("eval_error"));
}
