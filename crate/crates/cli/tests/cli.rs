use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rdd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdd")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rdd-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_report_replay_round_trip() {
    let dir = scratch("round");
    let manifest = dir.join("m.jsonl");
    let out = rdd(&[
        "run", "--task", "length-reversal", "--levels", "3,5", "--count", "3", "-o", s(&manifest),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("RDD+CoT"));

    let csv = rdd(&["report", s(&manifest), "--format", "csv"]);
    let text = stdout(&csv);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "Method,n0,Accuracy,Time,Calls,ContextTokens,OutputTokens");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("RDD+CoT,3,1.0000,"));

    let json = rdd(&["report", s(&manifest), "--format", "json"]);
    let sums: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(sums.as_array().unwrap().len(), 2);

    let first = std::fs::read_to_string(&manifest).unwrap();
    let record: serde_json::Value = serde_json::from_str(first.lines().nth(1).unwrap()).unwrap();
    let id = record["id"].as_str().unwrap();
    let dot = rdd(&["report", s(&manifest), "--format", "dot", "--instance", id]);
    assert!(dot.status.success());
    assert!(stdout(&dot).starts_with("digraph decomposition {"));

    let replay = rdd(&["replay", s(&manifest)]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    assert!(stdout(&replay).contains("identical"));
}

#[test]
fn unknown_instance_fails() {
    let dir = scratch("unknown");
    let manifest = dir.join("m.jsonl");
    assert!(rdd(&["run", "--levels", "3", "--count", "1", "-o", s(&manifest)]).status.success());
    let out = rdd(&["report", s(&manifest), "--format", "dot", "--instance", "missing"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = scratch("config");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        "task = \"letter_concat\"\nmethod = \"CoT+SC\"\nlevels = [4]\ncount = 2\nseed = 3\n\n\
         [vote]\nk = 3\n\n[backend]\nkind = \"fault\"\nfault_seed = 1\n",
    )
    .unwrap();
    let manifest = dir.join("m.jsonl");
    let out = rdd(&["run", "--config", s(&config), "--levels", "6", "-o", s(&manifest)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&manifest).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let cfg = &header["config"];
    assert_eq!(cfg["method"], "CoT+SC");
    assert_eq!(cfg["levels"], serde_json::json!([6]));
    assert_eq!(cfg["vote"]["k"], 3);
    assert_eq!(cfg["backend"]["kind"], "fault");
}

#[test]
fn bad_config_is_rejected() {
    let dir = scratch("bad");
    let config = dir.join("run.toml");
    std::fs::write(&config, "levels = \"many\"\n").unwrap();
    let out = rdd(&["run", "--config", s(&config), "-o", s(&dir.join("m.jsonl"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = rdd(&["run", "--p-u", "1.5", "-o", s(&dir.join("m.jsonl"))]);
    assert!(!out.status.success());
    let out = rdd(&["run", "--count", "0", "-o", s(&dir.join("m.jsonl"))]);
    assert!(!out.status.success());
}

#[test]
fn generate_is_seeded() {
    let a = rdd(&["generate", "--task", "letter-concat", "--n0", "5", "--count", "4", "--seed", "9"]);
    let b = rdd(&["generate", "--task", "letter-concat", "--n0", "5", "--count", "4", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["words"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn simulate_reports_closed_form_and_estimate() {
    let out = rdd(&[
        "simulate", "--width", "2", "--depth", "1", "--phi-d", "1", "--phi-u", "0.9", "--phi-m", "1", "--trials", "20000",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let closed = v["closed_form"].as_f64().unwrap();
    assert!((closed - 0.81).abs() < 1e-12);
    let mean = v["monte_carlo"]["mean"].as_f64().unwrap();
    let se = v["monte_carlo"]["stderr"].as_f64().unwrap();
    assert!((mean - closed).abs() <= 4.0 * se);
    assert_eq!(v["theorems"]["cond1"], true);
}
