use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rsma-ofdm"))
}

fn tiny_spec(dir: &Path, min_rate: f64) -> String {
    format!(
        r#"
[system]
users = 2
tx_antennas = 4
subcarriers = 4
cp_len = 2
paths = 6
total_power = 4.0
min_rates = [{min_rate}, {min_rate}]

[pso]
swarm_size = 6
iterations = 4

[optimizer]
outer_rounds = 1

[sweep]
snr_grid = [10.0, 20.0]
g_grid = [1, 4]
schemes = ["RSMA", "NOMA"]
trials = 2
master_seed = 5
trace_trials = 1

[output]
dir = "{}"
"#,
        dir.join("out").display()
    )
}

fn write_spec(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("spec.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn run_writes_all_outputs_and_repeats_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &tiny_spec(tmp.path(), 0.0));
    let spec = spec.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");

    let out = run(&["run", spec, "-q", "--out", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["run", spec, "-q", "--out", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    for name in ["results.csv", "summary.json", "metadata.json", "traces.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty(), "{name} empty");
        assert_eq!(x, y, "{name} differs between reruns");
    }
    let csv = fs::read_to_string(a.join("results.csv")).unwrap();
    // header plus 2 trials x 2 schemes x 2 G x 2 SNR
    assert_eq!(csv.lines().count(), 1 + 16);
    assert!(csv.starts_with("trial,seed,scheme,clusters,snr_db,sum_rate,user_rate_1,user_rate_2,epochs,complexity_ops\n"));
}

#[test]
fn overrides_and_json_format() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &tiny_spec(tmp.path(), 0.0));
    let out_dir = tmp.path().join("j");
    let out = run(&[
        "run",
        spec.to_str().unwrap(),
        "-q",
        "--trials",
        "1",
        "--seed",
        "99",
        "--format",
        "json",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("results.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.get("wall_time").is_none()));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 99);
    assert!(meta["snr_convention"].as_str().unwrap().contains("per-subcarrier"));
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tiny_spec(tmp.path(), 0.0).replace("g_grid = [1, 4]", "g_grid = []");
    let spec = write_spec(tmp.path(), &bad);
    let out = run(&["run", spec.to_str().unwrap(), "-q"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("g_grid"));
    assert!(!tmp.path().join("out").join("results.csv").exists());

    assert_eq!(run(&["run", "/nonexistent/spec.toml"]).status.code(), Some(1));
    assert_eq!(run(&["run"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn failure_threshold_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &tiny_spec(tmp.path(), 1000.0));
    let out = run(&["run", spec.to_str().unwrap(), "-q", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("out").join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failures"], 8);
    assert_eq!(summary["rows"], 0);
}

#[test]
fn table1_prints_complexity() {
    let out = run(&["table1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "clusters,ops,ratio");
    // K=2, N_t=16, N_c=16: 2*2*16*256 + 2*256
    assert_eq!(lines[1], "1,16896.0,1.0");
    assert_eq!(lines[4], "16,25344.0,1.5");

    let out = run(&["table1", "--g", "1,2"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
    assert_eq!(run(&["table1", "--g", "0"]).status.code(), Some(1));
}

#[test]
fn trace_writes_per_iteration_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &tiny_spec(tmp.path(), 0.0));
    let out = run(&["trace", spec.to_str().unwrap(), "-q"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("out").join("traces.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,scheme,clusters,snr_db,stage,run,iteration,value"
    );
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|l| l.contains(",wmmse,")));
    assert!(rows.iter().any(|l| l.contains(",pso,")));
    assert!(rows.iter().all(|l| l.starts_with("1,")));
}

#[test]
fn default_spec_parses_back() {
    let out = run(&["default-spec"]);
    assert_eq!(out.status.code(), Some(0));
    let tmp = tempfile::tempdir().unwrap();
    let path = write_spec(tmp.path(), &String::from_utf8(out.stdout).unwrap());
    let out = run(&["table1", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}
