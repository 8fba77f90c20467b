use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    let config = out.join("run.json");
    if !config.exists() {
        fs::create_dir_all(out).unwrap();
        fs::write(
            &config,
            r#"{"train": {"hash_dim": 16, "epochs": 30}, "disruptor": {"k": 10}}"#,
        )
        .unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_facecloak"))
        .arg("--out")
        .arg(out)
        .arg("--config")
        .arg(&config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn setup(dir: &Path, identities: &str) {
    ok(&run(dir, &["--seed", "3", "gen-data", "--identities", identities, "--samples", "3", "--dim", "32"]));
    ok(&run(dir, &["--seed", "3", "enroll"]));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn generation_and_enrollment_are_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    setup(a.path(), "5");
    setup(b.path(), "5");
    assert_eq!(tree(a.path()), tree(b.path()));
    ok(&run(a.path(), &["--seed", "3", "enroll"]));
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn enrollment_writes_only_records() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "4");
    let names: Vec<String> = fs::read_dir(dir.path().join("enrollments"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 4);
    assert!(names.iter().all(|n| n.starts_with('s') && n.ends_with(".json")));
    for n in &names {
        let text = fs::read_to_string(dir.path().join("enrollments").join(n)).unwrap();
        for word in ["positives", "negatives", "anchor_values", "\"values\""] {
            assert!(!text.contains(word), "{n} contains {word}");
        }
    }
    let mut top: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["attributes.csv", "enrollments", "run.json", "stats.json", "templates.csv"]);
}

#[test]
fn verification_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "4");
    let record = dir.path().join("enrollments/s0000.json");
    let record = record.to_str().unwrap();
    let accept = run(dir.path(), &["verify", "--enrollment", record, "--subject", "s0000", "--sample", "00", "--threshold", "0.9"]);
    let text = ok(&accept);
    assert!(text.contains("hamming_distance: 0"));
    assert!(text.contains("decision: accept"));

    let no_threshold = run(dir.path(), &["verify", "--enrollment", record, "--subject", "s0000", "--sample", "00"]);
    assert_eq!(no_threshold.status.code(), Some(2));

    ok(&run(dir.path(), &["--seed", "3", "eval-biometric"]));
    let reject = run(dir.path(), &["verify", "--enrollment", record, "--subject", "s0002", "--sample", "01"]);
    assert_eq!(reject.status.code(), Some(1), "{}", String::from_utf8_lossy(&reject.stdout));
    let report = fs::read_to_string(dir.path().join("reports/biometric.json")).unwrap();
    assert!(report.contains("\"version\": 1"));
}

#[test]
fn missing_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["enroll"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen-data"));

    let single = tempfile::tempdir().unwrap();
    setup(single.path(), "1");
    assert_eq!(run(single.path(), &["eval-biometric"]).status.code(), Some(2));
}

#[test]
fn equal_seed_unlinkability_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["--seed", "5", "gen-data", "--identities", "4", "--samples", "2", "--dim", "32"]));
    let text = ok(&run(dir.path(), &["--seed", "5", "eval-unlink", "--seed-b", "5"]));
    assert!(text.contains("equal seeds"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reports/unlinkability.json")).unwrap()).unwrap();
    assert_eq!(report["mated_mean"].as_f64(), Some(1.0));
    assert_eq!(report["version"].as_u64(), Some(1));
}

#[test]
fn opl_and_attack_reports() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "4");
    let text = ok(&run(dir.path(), &["opl-loss", "--normalize"]));
    assert!(text.contains("OPL loss"));
    let text = ok(&run(dir.path(), &["--seed", "3", "attack", "--subjects", "2", "--restarts", "2", "--steps", "50"]));
    assert!(text.contains("SAR:"));
    assert!(text.contains("positive control success:"));
}

#[test]
fn attribute_probe_report() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "24");
    let text = ok(&run(dir.path(), &["--seed", "3", "probe-attribute"]));
    assert!(text.contains("cloak probe accuracy"));
    let report = fs::read_to_string(dir.path().join("reports/probe.json")).unwrap();
    assert!(report.contains("\"raw_templates\""));
}
