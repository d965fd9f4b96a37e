use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_valdesign");

const PROJECTILE: &str = r#"
family = "projectile"
seed = 5
output_dir = "out"
qoi = "max_altitude"
observables = ["altitude"]
x_pred = [0.05, 0.01, 1.0, 100.0]
x_lab = [[1.0, 5.0], [0.05, 0.1], [0.0, 2.0], [10.0, 120.0]]

[theta]
type = "product"
components = [
    { type = "normal", mean = 9.81, std = 0.01 },
    { type = "normal", mean = -11.512925464970229, std = 0.5 },
]

[optimizer]
n_starts = 2
n_samples = 50
max_evals = 300

[propagate]
n = 2000

[verify]
x_full = [[0.005, 5.0], [0.005, 0.1], [0.0, 2.0], [10.0, 120.0]]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("VALDESIGN_THREADS")
        .output()
        .unwrap()
}

fn csv_body(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn malformed_config_exits_2_with_field_path() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &PROJECTILE.replace("n_starts = 2", "n_starts = \"two\""));
    let o = run(&["design-scenario", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("optimizer.n_starts"), "{err}");
}

#[test]
fn unknown_functional_and_missing_file_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &PROJECTILE.replace("\"max_altitude\"", "\"range\""));
    assert_eq!(run(&["propagate", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["propagate", "/no/such/config.toml"]).status.code(), Some(2));
    let text = format!(
        "{PROJECTILE}\n[calibration]\nsigma = 0.5\nobservable = \"altitude\"\nproposal_scale = [0.01, 0.1]\n"
    );
    let cfg = write_config(d.path(), &text);
    let o = run(&["calibrate", cfg.to_str().unwrap(), "--observations", "missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dirac_propagation_gives_one_atom() {
    let d = tempfile::tempdir().unwrap();
    let text = PROJECTILE.replace(
        r#"type = "product"
components = [
    { type = "normal", mean = 9.81, std = 0.01 },
    { type = "normal", mean = -11.512925464970229, std = 0.5 },
]"#,
        "type = \"dirac\"\npoint = [9.81, -11.5]",
    );
    let cfg = write_config(d.path(), &text);
    let o = run(&["propagate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_path(d.path().join("out/propagate/qoi_samples.csv")).unwrap();
    let vals: Vec<String> = r.records().map(|x| x.unwrap()[1].to_string()).collect();
    assert_eq!(vals.len(), 2000);
    assert!(vals.iter().all(|v| *v == vals[0]));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), PROJECTILE);
    let c = cfg.to_str().unwrap();
    let mut bodies = vec![];
    for threads in ["1", "3"] {
        let out = d.path().join(format!("t{threads}"));
        let o = run(&["design-scenario", c, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(&["propagate", c, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        bodies.push((
            csv_body(&out.join("design-scenario/scenario_design.csv")),
            csv_body(&out.join("propagate/qoi_samples.csv")),
        ));
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn seed_flag_overrides_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), PROJECTILE);
    let c = cfg.to_str().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    run(&["propagate", c, "--seed", "5", "--out", a.to_str().unwrap()]);
    run(&["propagate", c, "--seed", "6", "--out", b.to_str().unwrap()]);
    let same = csv_body(&a.join("propagate/qoi_samples.csv"));
    let c2 = d.path().join("c");
    run(&["propagate", c, "--out", c2.to_str().unwrap()]);
    assert_eq!(same, csv_body(&c2.join("propagate/qoi_samples.csv")));
    assert_ne!(same, csv_body(&b.join("propagate/qoi_samples.csv")));
}

#[test]
fn verify_smoke_run_with_one_start() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), PROJECTILE);
    let o = run(&["verify", cfg.to_str().unwrap(), "--starts", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(d.path().join("out/verify/verification.csv")).unwrap();
    assert_eq!(r.records().count(), 1);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/verify/manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["verification.csv", "verification.json"]);
    assert_eq!(m["artifacts"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn self_validation_is_not_invalidated() {
    let d = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[validation]\nepsilon = 1e-9\neta = 0.9\nsource = \"model\"\nn_exp = 300\nn_model = 300\nsensor = {{ observable = \"altitude\", z = \"time_of_max\" }}\n",
        PROJECTILE.replace(
            r#"type = "product"
components = [
    { type = "normal", mean = 9.81, std = 0.01 },
    { type = "normal", mean = -11.512925464970229, std = 0.5 },
]"#,
            "type = \"dirac\"\npoint = [9.81, -11.5]",
        )
    );
    let cfg = write_config(d.path(), &text);
    let o = run(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d.path().join("out/validate/verdict.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v["gamma"], 1.0);
    assert_eq!(v["verdict"], "not-invalidated");
}

#[test]
fn cov_gate_reports_exit_validation() {
    let d = tempfile::tempdir().unwrap();
    let text = PROJECTILE.replace("[propagate]\nn = 2000", "[propagate]\nn = 2000\ncov_budget = 1e-6");
    let cfg = write_config(d.path(), &text);
    let o = run(&["propagate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("exit validation"));
    let s: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d.path().join("out/propagate/qoi_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(s["status"], "uncertainty-too-large");
}

#[test]
fn single_candidate_is_returned() {
    let d = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[sensor]\ngrid = [{{ lo = 0.5, hi = 4.0, n = 8 }}]\n",
        PROJECTILE.replace("observables = [\"altitude\"]", "observables = [\"acceleration\"]")
            .replace("x_lab =", "x_val = [2.5, 0.05, 1.0, 20.0]\nx_lab =")
    );
    let cfg = write_config(d.path(), &text);
    let o = run(&["design-sensor", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d.path().join("out/design-sensor/sensor_design.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(s["functional"], "acceleration");
    assert!(d.path().join("out/design-sensor/sensor_scan_acceleration.csv").exists());
}
