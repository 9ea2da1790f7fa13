use pacsketch::sketch_ir::{ComponentRegistry, Valuation};
use pacsketch::sketcher::{sketch, SketchJob};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pacsketch"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_classifier(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["gen-data", "classifier", "--out", p(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn every_subcommand_has_help_with_examples() {
    for sub in ["sketch", "verify", "synthesize", "monitor", "analyze", "validate", "gen-data"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(stdout(&o).contains("Examples:"), "{sub}");
    }
    assert!(stdout(&run(&["--help"])).contains("Exit codes"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["sketch", "--bogus"])), 1);
    assert_eq!(code(&run(&["verify", "--program", "x", "--data", "y", "--delta", "1.5"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
}

#[test]
fn sketch_matches_library_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = gen_classifier(&dir, "d.jsonl", &["--n", "1000", "--accuracy", "0.9", "--seed", "3"]);
    let out = dir.path().join("p.json");
    let sketch_file = fixture("classifier_sketch.json");
    let args = ["sketch", "--program", p(&sketch_file), "--data", p(&data), "--out", p(&out)];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let cli: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(fixture("classifier_sketch.json")).unwrap()).unwrap();
    let program = serde_json::from_value(doc["program"].clone()).unwrap();
    let rows: Vec<Valuation> = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let reg = ComponentRegistry::standard();
    let lib = sketch(SketchJob::new(&program, &rows, 0.05, &reg)).unwrap();
    assert_eq!(cli, serde_json::to_value(&lib).unwrap());
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(written["program"], cli["completed"]);
    assert_eq!(written["schema_version"], 1);
}

#[test]
fn empty_data_warns_with_infinite_threshold() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = run(&["sketch", "--program", p(&fixture("classifier_sketch.json")), "--data", p(&empty)]);
    assert_eq!(code(&o), 2);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["records"][0]["value"], "inf");
    assert!(String::from_utf8_lossy(&o.stderr).contains("fallback"));
}

#[test]
fn concrete_program_and_malformed_data_are_errors() {
    let dir = TempDir::new().unwrap();
    let data = gen_classifier(&dir, "d.jsonl", &["--n", "50"]);
    let o = run(&["sketch", "--program", p(&fixture("classifier_program.json")), "--data", p(&data)]);
    assert_eq!(code(&o), 1);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"inputs\": {\"x.conf\": 0.5}}\nnot json\n").unwrap();
    let o = run(&["sketch", "--program", p(&fixture("classifier_sketch.json")), "--data", p(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2"));
}

#[test]
fn verify_accepts_good_data_and_rejects_shifted() {
    let dir = TempDir::new().unwrap();
    let good = gen_classifier(&dir, "good.jsonl", &["--n", "1000", "--accuracy", "0.99"]);
    let bad = gen_classifier(&dir, "bad.jsonl", &["--n", "1000", "--accuracy", "0.8"]);
    let prog = fixture("classifier_program.json");
    let o = run(&["verify", "--program", p(&prog), "--data", p(&good)]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["accepted"], true);
    assert_eq!(code(&run(&["verify", "--program", p(&prog), "--data", p(&bad)])), 2);
    assert_eq!(code(&run(&["verify", "--program", p(&fixture("classifier_sketch.json")), "--data", p(&good)])), 1);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = TempDir::new().unwrap();
    let data = gen_classifier(&dir, "d.jsonl", &["--n", "300"]);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"delta": 0.2}"#).unwrap();
    let prog = fixture("classifier_sketch.json");
    let delta = |extra: &[&str]| {
        let mut args = vec!["sketch", "--program", p(&prog), "--data", p(&data)];
        args.extend_from_slice(extra);
        let report: serde_json::Value = serde_json::from_slice(&run(&args).stdout).unwrap();
        report["delta"].as_f64().unwrap()
    };
    assert_eq!(delta(&[]), 0.05);
    assert_eq!(delta(&["--config", p(&cfg)]), 0.2);
    assert_eq!(delta(&["--config", p(&cfg), "--delta", "0.1"]), 0.1);
    fs::write(&cfg, r#"{"delta": 0.2, "typo": 1}"#).unwrap();
    assert_eq!(code(&run(&["sketch", "--program", p(&prog), "--data", p(&data), "--config", p(&cfg)])), 1);
}

#[test]
fn monitor_flags_a_shift_on_stdin() {
    let dir = TempDir::new().unwrap();
    let stream = gen_classifier(&dir, "s.jsonl", &["--n", "1500", "--shift-after", "750", "--seed", "5"]);
    let mut child = bin()
        .args(["monitor", "--program", p(&fixture("classifier_program.json")), "--refresh", "250"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&fs::read(&stream).unwrap()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 2);
    let verdicts: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(verdicts.len(), 5);
    assert_eq!(verdicts[0]["accepted"], true);
    assert_eq!(verdicts.last().unwrap()["accepted"], false);
    assert_eq!(verdicts.last().unwrap()["arrival"], 1500);
}

#[test]
fn monitor_follows_a_file_until_idle() {
    let dir = TempDir::new().unwrap();
    let stream = gen_classifier(&dir, "s.jsonl", &["--n", "600"]);
    let o = run(&[
        "monitor",
        "--program",
        p(&fixture("classifier_program.json")),
        "--follow",
        p(&stream),
        "--idle-timeout",
        "0.2",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn analyze_reports_counts_and_error_form() {
    let o = run(&["analyze", "--task", p(&fixture("conditional_sum_task.json"))]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("f1 (cond-≤) = 3, f2 (predict_int) = 3, f3 (predict_float) = 3"), "{text}");
    assert!(text.contains("error bound: 3·e_f3"));
    assert!(text.contains("error candidates: 1\n  e_f3 = 2\n"));

    let o = run(&[
        "analyze",
        "--expr",
        "(fold + (map predict_float input1) 0)",
        "--type",
        "list(image) -> float",
        "--json",
    ]);
    let a: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(a["counts"]["f1"], 3);
    assert_eq!(a["error_form_text"], "3·e_f1");
}

#[test]
fn synthesize_end_to_end() {
    let dir = TempDir::new().unwrap();
    let task = fixture("conditional_sum_task.json");
    let o = run(&["synthesize", "--task", p(&task), "--sketch-only"]);
    assert_eq!(stdout(&o).trim(), "(fold + (filter (cond-≤ (predict_int input1)) (map predict_float input2)) 0)");

    let data = dir.path().join("e.jsonl");
    let o = run(&["gen-data", "examples", "--task", p(&task), "--n", "800", "--seed", "2", "--out", p(&data)]);
    assert_eq!(code(&o), 0);
    let out = dir.path().join("r.json");
    let o = run(&["synthesize", "--task", p(&task), "--data", p(&data), "--no-search", "--out", p(&out)]);
    assert!(code(&o) != 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("(fold +"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["candidates"], 1);
    assert_eq!(r["n"], 3);

    assert_eq!(code(&run(&["synthesize", "--task", p(&task)])), 1);
    let o = run(&["synthesize", "--task", p(&task), "--data", p(&data), "--k0"]);
    assert!(code(&o) != 1);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["candidates"].as_u64().unwrap() > 1);
}

#[test]
fn validate_suites_report_and_pass() {
    let o = run(&["validate", "threshold", "--dist", "exponential:2", "--trials", "300", "--n", "200"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["outcome"]["passed"], true);
    assert_eq!(code(&run(&["validate", "threshold", "--dist", "cauchy:0,1"])), 1);
    assert_eq!(code(&run(&["validate", "lower-bound", "--mu", "0.5", "--trials", "200"])), 0);
    assert_eq!(code(&run(&["validate", "threshold", "--trials", "50"])), 1);
}

#[test]
fn records_are_reproducible() {
    let a = run(&["gen-data", "records", "--n", "20", "--seed", "7"]);
    let b = run(&["gen-data", "records", "--n", "20", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 20);
}
