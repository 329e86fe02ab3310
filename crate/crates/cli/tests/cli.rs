use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CASE3: &str = r#"{"kind":"independent","e12":0.2,"e13":0.9,"e14":0.1,"e23":0.1,"e24":0.5}"#;
const SYMMETRIC: &str =
    r#"{"kind":"independent","e12":"0.5","e13":"0.5","e14":"0.5","e23":"0.5","e24":"0.5"}"#;

fn cogcoop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogcoop"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("case3.json"), CASE3).unwrap();
    std::fs::write(dir.path().join("sym.json"), SYMMETRIC).unwrap();
    dir
}

fn json_file(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn classify_reports_case_and_bound() {
    let dir = setup();
    let out = cogcoop(dir.path(), &["classify", "--model", "case3.json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["case"], "Case3");
    // B = 1/A with A = (0.9-0.18)/(0.9·0.82) + 1/0.82
    let a = (0.9 - 0.18) / (0.9 * 0.82) + 1.0 / 0.82;
    assert!((v["B"].as_f64().unwrap() - 1.0 / a).abs() < 1e-12);
}

#[test]
fn simulate_writes_result_and_manifest_that_replays() {
    let dir = setup();
    let out = cogcoop(
        dir.path(),
        &[
            "simulate", "--alg", "alg1", "--model", "sym.json", "--k1", "1000", "--k2", "1000",
            "--seed", "7", "--out", "sim.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_file(dir.path().join("sim.json"));
    let t = v["T"].as_u64().unwrap();
    let phases: u64 = v["phases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["slots"].as_u64().unwrap())
        .sum();
    assert_eq!(phases, t);
    let tau = &v["schedule_counters"];
    assert_eq!(
        tau["tau_1"].as_u64().unwrap() + tau["tau_2"].as_u64().unwrap(),
        t
    );
    assert_eq!(v["decoded_ok"]["node3"], true);
    assert_eq!(v["decoded_ok"]["node4"], true);

    let m = json_file(dir.path().join("sim.json.manifest.json"));
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"]["main"], "sim.json");

    let replay = cogcoop(
        dir.path(),
        &["replay", "sim.json.manifest.json", "--verify"],
    );
    assert!(
        replay.status.success(),
        "{}",
        String::from_utf8_lossy(&replay.stderr)
    );

    std::fs::write(dir.path().join("sim.json"), "{}").unwrap();
    let tampered = cogcoop(
        dir.path(),
        &["replay", "sim.json.manifest.json", "--verify"],
    );
    assert_eq!(tampered.status.code(), Some(4));
    assert_eq!(stderr_error(&tampered)["error"], "mismatch");

    // plain replay restores the file
    assert!(cogcoop(dir.path(), &["replay", "sim.json.manifest.json"])
        .status
        .success());
    assert_eq!(
        json_file(dir.path().join("sim.json"))["T"].as_u64(),
        Some(t)
    );
}

#[test]
fn mixing_flags_without_alg2_are_rejected_up_front() {
    let dir = setup();
    let out = cogcoop(
        dir.path(),
        &[
            "simulate", "--g", "0.3", "--model", "sym.json", "--k1", "5", "--k2", "5", "--seed",
            "1", "--out", "x.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"], "usage");
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = setup();
    let missing = cogcoop(dir.path(), &["classify", "--model", "nope.json"]);
    assert_eq!(missing.status.code(), Some(2));

    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"kind":"independent","e12":0.5,"e13":0.2,"e14":0.5,"e23":0.4,"e24":0.5}"#,
    )
    .unwrap();
    let pre = cogcoop(dir.path(), &["classify", "--model", "bad.json"]);
    assert_eq!(pre.status.code(), Some(3));
    assert_eq!(stderr_error(&pre)["error"], "precondition");

    std::fs::write(
        dir.path().join("range.json"),
        r#"{"kind":"independent","e12":1.5,"e13":0.2,"e14":0.5,"e23":0.1,"e24":0.5}"#,
    )
    .unwrap();
    let dom = cogcoop(dir.path(), &["classify", "--model", "range.json"]);
    assert_eq!(dom.status.code(), Some(3));

    let unknown = cogcoop(dir.path(), &["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = setup();
    let cfg = format!(
        r#"{{"model": {SYMMETRIC}, "alg": "alg2", "g": 0.2, "s": 0.3, "u": 0.5, "k1": 40, "k2": 40, "seed": 1}}"#
    );
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = cogcoop(
        dir.path(),
        &[
            "simulate", "--config", "cfg.json", "--seed", "2", "--out", "r.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = json_file(dir.path().join("r.json.manifest.json"));
    assert_eq!(m["seed"], 2);
    assert_eq!(m["job"]["alg"]["name"], "alg2");
    assert_eq!(m["job"]["alg"]["g"], 0.2);
    assert_eq!(json_file(dir.path().join("r.json"))["algorithm"], "alg2");

    std::fs::write(dir.path().join("typo.json"), r#"{"sead": 3}"#).unwrap();
    let bad = cogcoop(dir.path(), &["simulate", "--config", "typo.json"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn missing_seed_is_generated_and_recorded() {
    let dir = setup();
    let out = cogcoop(
        dir.path(),
        &[
            "simulate", "--model", "sym.json", "--k1", "20", "--k2", "20", "--out", "r.json",
        ],
    );
    assert!(out.status.success());
    let first: Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().next().unwrap()).unwrap();
    let seed = first["generated_seed"].as_u64().unwrap();
    assert_eq!(
        json_file(dir.path().join("r.json.manifest.json"))["seed"].as_u64(),
        Some(seed)
    );
}

#[test]
fn simulate_with_rates_and_trace() {
    let dir = setup();
    let out = cogcoop(
        dir.path(),
        &[
            "simulate", "--model", "sym.json", "--r1", "0.3", "--r2", "0.3", "--n", "1000",
            "--seed", "5", "--out", "r.json", "--trace", "t.jsonl",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_file(dir.path().join("r.json"));
    assert_eq!(v["k1"], 300);
    assert_eq!(v["deadline"], 1000);
    assert!((v["T_hat"].as_f64().unwrap() - 1.0571428571).abs() < 1e-9);
    let trace = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let lines: Vec<Value> = trace
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len() as u64, v["T"].as_u64().unwrap());
    assert_eq!(lines[0]["slot"], 1);
    assert!(lines[0]["queues_after"].is_object());
}

#[test]
fn region_case1_curves_coincide() {
    let dir = setup();
    let out = cogcoop(
        dir.path(),
        &["region", "--model", "sym.json", "--points", "11"],
    );
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["case"], "Case1");
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 11);
    for s in samples {
        assert_eq!(s["outer_R2"], s["inner_R2"]);
    }
    let csv = cogcoop(
        dir.path(),
        &[
            "region",
            "--model",
            "case3.json",
            "--format",
            "csv",
            "--points",
            "5",
        ],
    );
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("case,R1,outer_R2,inner_R2"));
}

#[test]
fn sweep_csv_and_deadline_json() {
    let dir = setup();
    let out = cogcoop(
        dir.path(),
        &[
            "sweep", "--model", "sym.json", "--r1", "0.3", "--r2", "0.3", "--n-list", "200,400",
            "--seeds", "3", "--seed", "9",
        ],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("n,runs,mean_t_over_n,stderr,t_hat")
    );
    assert_eq!(text.lines().count(), 3);

    let out = cogcoop(
        dir.path(),
        &[
            "sweep",
            "--model",
            "sym.json",
            "--r1",
            "0.2",
            "--r2",
            "0.2",
            "--n-list",
            "500",
            "--seeds",
            "4",
            "--seed",
            "9",
            "--deadline",
            "--format",
            "json",
            "--jobs",
            "2",
        ],
    );
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["runs"], 4);
}

#[test]
fn small_deviation_grid_writes_csv_and_summary() {
    let dir = setup();
    std::fs::write(
        dir.path().join("grid.json"),
        r#"{"values": [0.1, 0.5, 0.9]}"#,
    )
    .unwrap();
    let out = cogcoop(
        dir.path(),
        &["deviation", "--grid", "grid.json", "--out", "dev.csv"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("dev.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("e12,e13,e14,e23,e24,R1_frac,R1,B,outer_R2,inner_R2,D")
    );
    let s = json_file(dir.path().join("dev.summary.json"));
    let cells = s["cells"].as_u64().unwrap();
    assert_eq!(cells as usize, csv.lines().count() - 1);
    let h = &s["histogram"];
    let mass: u64 = h["counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_u64().unwrap())
        .sum::<u64>()
        + h["overflow"].as_u64().unwrap();
    assert_eq!(mass, cells);
    for key in ["frac_below_0_05", "max_D"] {
        assert!(s[key].is_number());
        assert!(s["restricted"][key].is_number());
    }
    assert!(s["restricted"]["cells"].is_number());
    let replay = cogcoop(dir.path(), &["replay", "dev.csv.manifest.json", "--verify"]);
    assert!(replay.status.success());

    let with_model = cogcoop(dir.path(), &["deviation", "--model", "sym.json"]);
    assert_eq!(with_model.status.code(), Some(2));
}

#[test]
fn default_deviation_grid_reads_three_quarters() {
    let dir = setup();
    let out = cogcoop(
        dir.path(),
        &["deviation", "--grid", "default", "--out", "dev.csv"],
    );
    assert!(out.status.success());
    let s = json_file(dir.path().join("dev.summary.json"));
    let frac = s["frac_below_0_05"].as_f64().unwrap();
    assert!((0.70..=0.80).contains(&frac), "{frac}");
}
