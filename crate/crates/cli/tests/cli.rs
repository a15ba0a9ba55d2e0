use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn spec(name: &str) -> String {
    specs().join(name).to_string_lossy().into_owned()
}

fn pdb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn number_after(text: &str, label: &str) -> f64 {
    let start = text
        .find(label)
        .unwrap_or_else(|| panic!("{label} missing in {text}"))
        + label.len();
    text[start..]
        .split(|c: char| c == ',' || c.is_whitespace())
        .find(|s| !s.is_empty())
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn validate_reports_mass_and_size() {
    let o = pdb(&["validate", &spec("letters.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        stdout(&o).trim(),
        "TI, total mass 2.600, convergent, expected size 2.600"
    );

    let o = pdb(&["validate", &spec("two_blocks.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("BID, total mass 1.200"));
}

#[test]
fn validate_rejects_bad_specs() {
    let o = pdb(&["validate", &spec("divergent.json")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Divergent"), "{}", stderr(&o));

    let o = pdb(&["validate", &spec("heavy_block.json")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("BlockMassExceedsOne"), "{}", stderr(&o));

    let dir = TempDir::new().unwrap();
    let bad = write(
        &dir,
        "bad.json",
        r#"{"kind": "ti", "schema": [], "universe": {"kind": "naturals"}, "bogus": 1}"#,
    );
    assert_eq!(code(&pdb(&["validate", &bad])), 2);
    assert_eq!(code(&pdb(&["validate", "/nonexistent/spec.json"])), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&pdb(&[])), 1);
    assert_eq!(code(&pdb(&["frobnicate"])), 1);
    let o = pdb(&[
        "query",
        "--epsilon",
        "0.9",
        "--query",
        &spec("some_fact.fo"),
        &spec("letters.json"),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = pdb(&[
        "sample",
        "--n",
        "1",
        "--delta",
        "0",
        "--seed",
        "1",
        &spec("letters.json"),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn expected_size_and_prob() {
    let o = pdb(&["expected-size", &spec("letters_tail.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!((stdout(&o).trim().parse::<f64>().unwrap() - 2.625).abs() < 1e-12);

    let o = pdb(&[
        "prob",
        "--instance",
        &spec("f1_g1.json"),
        &spec("two_blocks.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!((stdout(&o).trim().parse::<f64>().unwrap() - 0.15).abs() < 1e-12);

    let o = pdb(&["expected-size", &spec("divergent.json")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn query_on_head_only_spec() {
    let o = pdb(&[
        "query",
        "--epsilon",
        "0.01",
        "--query",
        &spec("some_fact.fo"),
        &spec("letters.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(
        (number_after(&out, "probability:") - 0.994).abs() < 1e-12,
        "{out}"
    );
    assert!(out.contains("certificate: n = 4"), "{out}");
}

#[test]
fn query_with_tail_is_within_epsilon() {
    let o = pdb(&[
        "query",
        "--epsilon",
        "0.1",
        "--query",
        &spec("some_fact.fo"),
        &spec("letters_open.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = number_after(&stdout(&o), "probability:");
    // 1 - P(no fact) with the tail product taken far enough to be exact in f64.
    let mut none = 0.2 * 0.6 * 0.5 * 0.1;
    for level in 1..60 {
        for row in ["A", "B", "C", "D"] {
            let head = matches!((row, level), ("A", 1) | ("B", 1) | ("B", 2) | ("C", 3));
            if !head {
                none *= 1.0 - 0.5f64.powi(level);
            }
        }
    }
    assert!((p - (1.0 - none)).abs() <= 0.1, "{p}");
}

#[test]
fn query_cap_is_reported_and_overridable() {
    let o = pdb(&[
        "query",
        "--epsilon",
        "0.01",
        "--query",
        &spec("some_fact.fo"),
        &spec("letters_open.json"),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("CapExceeded"), "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_pdb"))
        .env("PDB_WORLD_CAP", "3")
        .args([
            "query",
            "--epsilon",
            "0.01",
            "--query",
            &spec("some_fact.fo"),
            &spec("letters.json"),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("4 facts needed"), "{}", stderr(&o));
}

#[test]
fn open_query_prints_answer_table() {
    let o = pdb(&[
        "query",
        "--epsilon",
        "0.05",
        "--query",
        &spec("rows.fo"),
        &spec("letters.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "x\tprobability");
    let b: f64 = rows.iter().find(|r| r.starts_with("'B'\t")).unwrap()[4..]
        .parse()
        .unwrap();
    assert!((b - 0.7).abs() < 1e-12);
    assert!(out.contains("residual:"));
}

#[test]
fn sampling_is_deterministic() {
    let args = [
        "sample",
        "--n",
        "50",
        "--delta",
        "0.001",
        "--seed",
        "7",
        &spec("letters_open.json"),
    ];
    let a = pdb(&args);
    let b = pdb(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 50);
    for line in stdout(&a).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.is_array());
    }
    let other = pdb(&[
        "sample",
        "--n",
        "50",
        "--delta",
        "0.001",
        "--seed",
        "8",
        &spec("letters_open.json"),
    ]);
    assert_ne!(a.stdout, other.stdout);

    let empty = pdb(&[
        "sample",
        "--n",
        "0",
        "--delta",
        "0.001",
        "--seed",
        "7",
        &spec("letters.json"),
    ]);
    assert_eq!(code(&empty), 0);
    assert!(empty.stdout.is_empty());
}

#[test]
fn sample_marginals_match() {
    let n = 4000;
    let o = pdb(&[
        "sample",
        "--n",
        &n.to_string(),
        "--delta",
        "0.001",
        "--seed",
        "11",
        &spec("letters.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut hits = 0;
    for line in stdout(&o).lines() {
        let facts: Vec<serde_json::Value> = serde_json::from_str(line).unwrap();
        if facts
            .iter()
            .any(|f| f["args"] == serde_json::json!(["B", 2]))
        {
            hits += 1;
        }
    }
    let freq = hits as f64 / n as f64;
    let sigma = (0.25f64 / n as f64).sqrt();
    assert!((freq - 0.5).abs() <= 3.0 * sigma, "{freq}");
}

#[test]
fn complete_reproduces_tail_mass() {
    let dir = TempDir::new().unwrap();
    let out = dir
        .path()
        .join("completion.json")
        .to_string_lossy()
        .into_owned();
    let o = pdb(&[
        "complete",
        &spec("letters.json"),
        &spec("letters_tail.json"),
        "-o",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = pdb(&["validate", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("completion"), "{text}");
    assert!(
        (number_after(&text, "tail mass") - 2.625).abs() < 1e-3,
        "{text}"
    );

    let o = pdb(&["expected-size", &out]);
    assert!((stdout(&o).trim().parse::<f64>().unwrap() - (2.6 + 2.625)).abs() < 1e-12);

    let spec_text = std::fs::read_to_string(&out).unwrap();
    let again = dir.path().join("again.json");
    std::fs::write(&again, &spec_text).unwrap();
    let o = pdb(&["validate", &again.to_string_lossy()]);
    assert_eq!(stdout(&o), text);
}

#[test]
fn complete_rejects_unit_tail_and_unclosed_base() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.json").to_string_lossy().into_owned();
    let unit_tail = write(
        &dir,
        "unit.json",
        r#"{"kind": "ti", "schema": [{"name": "R", "arity": 2}], "universe": {"kind": "mixed", "alphabet": "ABCD"},
            "head_facts": [{"fact": {"relation": "R", "args": ["D", 1]}, "p": "1"}]}"#,
    );
    let o = pdb(&["complete", &spec("letters.json"), &unit_tail, "-o", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("UnitTailProbability"), "{}", stderr(&o));

    let base = write(
        &dir,
        "base.json",
        r#"{"kind": "finite", "schema": [{"name": "R", "arity": 2}], "universe": {"kind": "mixed", "alphabet": "ABCD"},
            "worlds": [{"facts": [{"relation": "R", "args": ["A", 1]}], "p": "0.5"},
                       {"facts": [{"relation": "R", "args": ["B", 1]}], "p": "0.5"}]}"#,
    );
    let o = pdb(&["complete", &base, &spec("letters_tail.json"), "-o", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("NotClosed"), "{}", stderr(&o));

    let o = pdb(&[
        "complete",
        &base,
        &spec("letters_tail.json"),
        "--c",
        "0.9",
        "-o",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = pdb(&["validate", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn oracle_compare_agrees_and_detects_perturbation() {
    let o = pdb(&[
        "oracle-compare",
        &spec("letters.json"),
        "--query",
        &spec("some_fact.fo"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let diff = number_after(&stdout(&o), "max difference:");
    assert!(diff <= 1e-10, "{diff}");

    let o = pdb(&[
        "oracle-compare",
        &spec("letters.json"),
        "--query",
        &spec("rows.fo"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = pdb(&[
        "oracle-compare",
        &spec("letters.json"),
        "--query",
        &spec("some_fact.fo"),
        "--perturb",
        "1e-6",
    ]);
    assert_ne!(code(&o), 0);

    let dir = TempDir::new().unwrap();
    let empty = write(
        &dir,
        "empty.json",
        r#"{"kind": "ti", "schema": [{"name": "R", "arity": 2}], "universe": {"kind": "naturals"}}"#,
    );
    let o = pdb(&["oracle-compare", &empty, "--query", &spec("some_fact.fo")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
