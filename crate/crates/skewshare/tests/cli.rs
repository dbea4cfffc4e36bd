//! End-to-end tests of the command-line interface: pipeline wiring,
//! document formats, determinism under --seed, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skewshare"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates a skewed two-way instance and returns the workdir.
fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("q.txt"), "# two-way join\nR(A,B); S(B,C)\n").unwrap();
    for (schema, seed) in [("R(A,B)", "11"), ("S(B,C)", "12")] {
        let out = run(
            &[
                "gen", "--schema", schema, "--n", "1500", "--seed", seed, "--plant", "B=7:0.4",
                "--out", "data",
            ],
            tmp.path(),
        );
        assert_ok(&out);
    }
    tmp
}

#[test]
fn pipeline_detect_plan_simulate_compare() {
    let tmp = setup();
    let dir = tmp.path();

    let out = run(
        &[
            "detect", "--query", "q.txt", "--data", "data", "--tau", "0.3", "--out", "hh.json",
        ],
        dir,
    );
    assert_ok(&out);
    let hh = json(&dir.join("hh.json"));
    assert_eq!(hh["format_version"], 1);
    let b = hh["attributes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["attribute"] == "B")
        .unwrap();
    assert_eq!(b["values"][0]["value"], "7");
    assert_eq!(b["values"][0]["counts"]["R"], 600);

    let out = run(
        &[
            "plan",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--hh",
            "hh.json",
            "-k",
            "16",
            "--out",
            "plan.json",
        ],
        dir,
    );
    assert_ok(&out);
    let plan = json(&dir.join("plan.json"));
    assert_eq!(plan["format_version"], 1);
    assert_eq!(plan["entries"].as_array().unwrap().len(), 2);
    assert_eq!(plan["entries"][1]["types"]["B"], "7");
    assert_eq!(plan["entries"][1]["cost_expression"], "r*c + s*a");
    let k_sum: u64 = plan["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["k_i"].as_u64().unwrap())
        .sum();
    assert_eq!(k_sum, 16);

    let out = run(
        &[
            "simulate",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--plan",
            "plan.json",
            "--seed",
            "5",
            "--verify",
            "--results",
            "rows.tsv",
            "--out",
            "sim.json",
        ],
        dir,
    );
    assert_ok(&out);
    let sim = json(&dir.join("sim.json"));
    assert_eq!(sim["cost_match"], true);
    assert_eq!(sim["verified"], true);
    assert_eq!(sim["exactly_once"], true);
    assert_eq!(sim["measured_cost"], sim["predicted_cost"]);
    let rows = fs::read_to_string(dir.join("rows.tsv")).unwrap();
    assert!(rows.starts_with("A\tB\tC\n"));
    assert_eq!(
        rows.lines().count() as u64 - 1,
        sim["output_size"].as_u64().unwrap()
    );

    let out = run(
        &[
            "compare", "--query", "q.txt", "--data", "data", "-k", "16", "--tau", "0.3", "--seed",
            "5", "--out", "cmp.json",
        ],
        dir,
    );
    assert_ok(&out);
    let cmp = json(&dir.join("cmp.json"));
    let hh_cost = cmp["hh_aware"]["communication"].as_u64().unwrap();
    let base_cost = cmp["baseline"]["communication"].as_u64().unwrap();
    assert!(
        hh_cost <= base_cost,
        "hh-aware {hh_cost} vs baseline {base_cost}"
    );
    let hh_load = cmp["hh_aware"]["max_load"].as_u64().unwrap();
    let plain_load = cmp["plain_shares"]["max_load"].as_u64().unwrap();
    assert!(
        hh_load < plain_load,
        "hh-aware load {hh_load} vs plain {plain_load}"
    );
}

#[test]
fn seed_pins_everything() {
    let tmp = setup();
    let dir = tmp.path();
    // same seed, same bytes
    let out = run(
        &[
            "gen", "--schema", "R(A,B)", "--n", "1500", "--seed", "11", "--plant", "B=7:0.4",
            "--out", "data2",
        ],
        dir,
    );
    assert_ok(&out);
    assert_eq!(
        fs::read_to_string(dir.join("data/R.tsv")).unwrap(),
        fs::read_to_string(dir.join("data2/R.tsv")).unwrap()
    );

    run(
        &[
            "detect", "--query", "q.txt", "--data", "data", "--tau", "0.3", "--out", "hh.json",
        ],
        dir,
    );
    run(
        &[
            "plan",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--hh",
            "hh.json",
            "-k",
            "12",
            "--out",
            "plan.json",
        ],
        dir,
    );
    for (args, name) in [
        (vec!["--seed", "9"], "a.json"),
        (vec!["--seed", "9"], "b.json"),
        (vec!["--seed", "9", "--single-thread"], "c.json"),
    ] {
        let mut full = vec![
            "simulate",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--plan",
            "plan.json",
            "--out",
            name,
        ];
        full.extend(args);
        assert_ok(&run(&full, dir));
    }
    let a = fs::read_to_string(dir.join("a.json")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.join("b.json")).unwrap());
    assert_eq!(a, fs::read_to_string(dir.join("c.json")).unwrap());
}

#[test]
fn plan_from_stats_without_data() {
    let tmp = setup();
    let dir = tmp.path();
    run(
        &[
            "detect", "--query", "q.txt", "--data", "data", "--tau", "0.3", "--out", "hh.json",
        ],
        dir,
    );
    let stats = r#"{
        "format_version": 1,
        "combinations": [
            { "types": {}, "sizes": { "R": 900, "S": 900 } },
            { "types": { "B": "7" }, "sizes": { "R": 600, "S": 600 } }
        ]
    }"#;
    fs::write(dir.join("stats.json"), stats).unwrap();
    let out = run(
        &[
            "plan",
            "--query",
            "q.txt",
            "--hh",
            "hh.json",
            "--stats",
            "stats.json",
            "-k",
            "16",
            "--out",
            "plan.json",
        ],
        dir,
    );
    assert_ok(&out);
    let plan = json(&dir.join("plan.json"));
    assert_eq!(plan["entries"][0]["relevant_sizes"]["R"], 900);
    assert_eq!(plan["entries"][1]["relevant_sizes"]["S"], 600);
}

#[test]
fn exit_codes() {
    let tmp = setup();
    let dir = tmp.path();

    // usage error
    let out = run(&["frobnicate"], dir);
    assert_eq!(out.status.code(), Some(1));

    // input errors
    let out = run(
        &[
            "detect", "--query", "q.txt", "--data", "data", "--tau", "1.5",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    let out = run(
        &[
            "detect",
            "--query",
            "q.txt",
            "--data",
            "missing-dir",
            "--tau",
            "0.3",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('R'.to_string().as_str()));

    // k below the non-empty residual count
    run(
        &[
            "detect", "--query", "q.txt", "--data", "data", "--tau", "0.3", "--out", "hh.json",
        ],
        dir,
    );
    let out = run(
        &[
            "plan", "--query", "q.txt", "--data", "data", "--hh", "hh.json", "-k", "1",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));

    // verification failure: tamper with the plan's predicted cost
    run(
        &[
            "plan",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--hh",
            "hh.json",
            "-k",
            "8",
            "--out",
            "plan.json",
        ],
        dir,
    );
    let tampered = fs::read_to_string(dir.join("plan.json")).unwrap().replacen(
        "\"predicted_cost_integer\":",
        "\"predicted_cost_integer\": 1, \"x\":",
        1,
    );
    fs::write(dir.join("tampered.json"), tampered).unwrap();
    let out = run(
        &[
            "simulate",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--plan",
            "tampered.json",
            "--out",
            "t.json",
        ],
        dir,
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // plan/query mismatch
    fs::write(dir.join("other.txt"), "R(A,B); S(B,D)\n").unwrap();
    run(
        &[
            "plan",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--tau",
            "0.3",
            "--out",
            "plan.json",
        ],
        dir,
    );
    let out = run(
        &[
            "simulate",
            "--query",
            "other.txt",
            "--data",
            "data",
            "--plan",
            "plan.json",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn three_way_plan_lists_all_residual_expressions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("q.txt"), "R(A,B); S(B,E,C); T(C,D)\n").unwrap();
    // two heavy values on B, one on C
    let gens = [
        vec![
            "--schema",
            "R(A,B)",
            "--seed",
            "21",
            "--plant",
            "B=70:0.3",
            "--plant",
            "B=71:0.25",
        ],
        vec![
            "--schema",
            "S(B,E,C)",
            "--seed",
            "22",
            "--plant",
            "B=70:0.3",
            "--plant",
            "B=71:0.25",
            "--plant",
            "C=90:0.3",
        ],
        vec!["--schema", "T(C,D)", "--seed", "23", "--plant", "C=90:0.3"],
    ];
    for extra in gens {
        let mut args = vec!["gen", "--n", "800", "--out", "data"];
        args.extend(extra);
        assert_ok(&run(&args, dir));
    }
    assert_ok(&run(
        &[
            "plan",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--tau",
            "0.2",
            "-k",
            "24",
            "--out",
            "plan.json",
        ],
        dir,
    ));
    let plan = json(&dir.join("plan.json"));
    let entries = plan["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 6);
    let texts: Vec<&str> = entries
        .iter()
        .map(|e| e["cost_expression"].as_str().unwrap())
        .collect();
    assert_eq!(
        texts,
        vec![
            "r*c + s + t*b",
            "r*c + s*a + t*a",
            "r*c + s*a + t*a",
            "r*d + s*d + t*b",
            "r*d*e + s*a*d + t*a*e",
            "r*d*e + s*a*d + t*a*e",
        ]
    );
    let k_sum: u64 = entries.iter().map(|e| e["k_i"].as_u64().unwrap()).sum();
    assert_eq!(k_sum, 24);
}

#[test]
fn oracle_verb_matches_simulation() {
    let tmp = setup();
    let dir = tmp.path();
    run(
        &[
            "plan",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--tau",
            "0.3",
            "-k",
            "8",
            "--out",
            "plan.json",
        ],
        dir,
    );
    assert_ok(&run(
        &[
            "simulate",
            "--query",
            "q.txt",
            "--data",
            "data",
            "--plan",
            "plan.json",
            "--results",
            "sim.tsv",
        ],
        dir,
    ));
    assert_ok(&run(
        &[
            "oracle", "--query", "q.txt", "--data", "data", "--out", "ora.tsv",
        ],
        dir,
    ));
    assert_eq!(
        fs::read_to_string(dir.join("sim.tsv")).unwrap(),
        fs::read_to_string(dir.join("ora.tsv")).unwrap()
    );
}
