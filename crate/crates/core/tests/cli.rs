//! End-to-end tests of the `chainminer` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chainminer::bif::{load_bundled, write_network};
use chainminer::export::{read_rules_csv, write_rules_csv};
use chainminer::rule::Rule;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    run_env(args, None)
}

fn run_env(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chainminer"));
    cmd.args(args).env_remove("CHAINMINER_SEED");
    if let Some(s) = seed_env {
        cmd.env("CHAINMINER_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_dir(tmp: &TempDir, name: &str) -> String {
    tmp.path().join(name).to_string_lossy().into_owned()
}

fn read(dir: &str, file: &str) -> String {
    fs::read_to_string(Path::new(dir).join(file)).unwrap()
}

fn manifest(dir: &str, command: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, &format!("{command}.manifest.json"))).unwrap()
}

fn assert_single_summary_line(o: &Output) {
    let text = stdout(o);
    assert_eq!(text.lines().count(), 1, "stdout: {text:?}");
    assert!(text.ends_with('\n'));
}

#[test]
fn help_and_usage_errors() {
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("extract"));

    let missing = run(&["extract", "--network", "asia"]);
    assert_eq!(code(&missing), 2);
    assert!(stdout(&missing).is_empty());
    assert!(stderr(&missing).contains("--target"));

    assert_eq!(code(&run(&["frobnicate"])), 2);
    let unknown = run(&["extract", "--network", "alarm", "--target", "x"]);
    assert_eq!(code(&unknown), 2);
    assert!(stderr(&unknown).contains("asia, cancer, earthquake, sachs, survey"));
    let bad_target = run(&["extract", "--network", "asia", "--target", "planet"]);
    assert_eq!(code(&bad_target), 2);
}

#[test]
fn extract_rules_reverify_and_repeat() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    for dir in [&a, &b] {
        let o = run(&[
            "extract",
            "--network",
            "asia",
            "--target",
            "dysp",
            "--seed",
            "7",
            "--out",
            dir,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_single_summary_line(&o);
    }
    for file in ["rules.csv", "trace.csv", "extract.manifest.json"] {
        assert_eq!(read(&a, file), read(&b, file), "{file}");
    }

    let net = load_bundled("asia").unwrap();
    let dysp = net.require_variable("dysp").unwrap();
    let text = read(&a, "rules.csv");
    let rules = read_rules_csv(&net, dysp, &text).unwrap();
    assert!(!rules.is_empty());
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    for (rule, rec) in rules.iter().zip(reader.records()) {
        let rec = rec.unwrap();
        let p = rec.get(rec.len() - 1).unwrap();
        match rule.probability(&net) {
            Ok(expected) => assert_eq!(p.parse::<f64>().unwrap(), expected),
            Err(_) => assert!(p.is_empty()),
        }
    }

    let trace = read(&a, "trace.csv");
    assert!(trace.starts_with("generation,best_fitness,mean_fitness,best_size\n"));
    assert_eq!(trace.lines().count(), 1 + 201);
}

#[test]
fn seed_precedence() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("cfg.json");
    fs::write(&config, r#"{"seed": 3, "gen_max": 5}"#).unwrap();
    let no_seed = tmp.path().join("noseed.json");
    fs::write(&no_seed, r#"{"gen_max": 5}"#).unwrap();
    let cfg = config.to_string_lossy().into_owned();
    let cfg_plain = no_seed.to_string_lossy().into_owned();

    let seed_of = |args: &[&str], env: Option<&str>, name: &str| {
        let dir = out_dir(&tmp, name);
        let mut all = vec!["extract", "--network", "cancer", "--target", "Cancer", "--out", &dir];
        all.extend_from_slice(args);
        let o = run_env(&all, env);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        manifest(&dir, "extract")["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&["--config", &cfg, "--seed", "5"], Some("9"), "flag"), 5);
    assert_eq!(seed_of(&["--config", &cfg], Some("9"), "file"), 3);
    assert_eq!(seed_of(&["--config", &cfg_plain], Some("9"), "env"), 9);
    assert_eq!(seed_of(&["--config", &cfg_plain], None, "default"), 0);

    let bad = run_env(
        &[
            "extract",
            "--network",
            "cancer",
            "--target",
            "Cancer",
            "--out",
            &out_dir(&tmp, "x"),
        ],
        Some("-1"),
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn invalid_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    for (i, text) in [
        r#"{"popsize": 3}"#,
        r#"{"max_rules": 0}"#,
        r#"{"beta": 2.0}"#,
        "not json",
    ]
    .iter()
    .enumerate()
    {
        let path = tmp.path().join(format!("c{i}.json"));
        fs::write(&path, text).unwrap();
        let o = run(&[
            "extract",
            "--network",
            "asia",
            "--target",
            "dysp",
            "--config",
            &path.to_string_lossy(),
            "--out",
            &out_dir(&tmp, "o"),
        ]);
        assert_eq!(code(&o), 2, "{text}: {}", stderr(&o));
        assert!(stdout(&o).is_empty());
    }
}

#[test]
fn brute_zero_threshold_keeps_every_candidate() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "b");
    let o = run(&[
        "brute",
        "--network",
        "cancer",
        "--target",
        "Cancer",
        "--threshold",
        "0.0",
        "--out",
        &dir,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_single_summary_line(&o);
    let summary: serde_json::Value = serde_json::from_str(&read(&dir, "brute_summary.json")).unwrap();
    // four binary antecedent variables, each absent or in one of two states,
    // times two consequent states
    let closed_form = (3u64.pow(4) - 1) * 2;
    assert_eq!(summary["candidates"], closed_form);
    let zero = summary["zero_evidence"].as_u64().unwrap();
    assert_eq!(summary["rule_count"].as_u64().unwrap(), closed_form - zero);
    assert_eq!(
        read(&dir, "brute_rules.csv").lines().count() as u64,
        1 + closed_form - zero
    );
}

#[test]
fn brute_survey_single_rule_and_bad_threshold() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "s");
    let o = run(&[
        "brute",
        "--network",
        "survey",
        "--target",
        "T",
        "--threshold",
        "0.7",
        "--scope",
        "blanket",
        "--out",
        &dir,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&read(&dir, "brute_summary.json")).unwrap();
    assert_eq!(summary["rule_count"], 1);
    assert!((summary["average_probability"].as_f64().unwrap() - 0.7).abs() < 1e-12);

    let bad = run(&[
        "brute",
        "--network",
        "survey",
        "--target",
        "T",
        "--threshold",
        "1.5",
        "--out",
        &dir,
    ]);
    assert_eq!(code(&bad), 2);
    let bad_scope = run(&[
        "brute",
        "--network",
        "survey",
        "--target",
        "T",
        "--scope",
        "nearby",
        "--out",
        &dir,
    ]);
    assert_eq!(code(&bad_scope), 2);
}

fn reference_rules_csv(tmp: &TempDir) -> String {
    let net = load_bundled("asia").unwrap();
    let dysp = net.require_variable("dysp").unwrap();
    let rules: Vec<_> = include_str!("data/asia_reference_rules.txt")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| (Rule::parse(&net, l).unwrap(), None))
        .collect();
    let path = tmp.path().join("reference.csv");
    fs::write(&path, write_rules_csv(&net, dysp, &rules).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn dot_edges(dot: &str) -> std::collections::BTreeSet<String> {
    dot.lines().filter(|l| l.contains("->")).map(str::to_string).collect()
}

#[test]
fn chain_modes_and_golden_output() {
    let tmp = TempDir::new().unwrap();
    let rules = reference_rules_csv(&tmp);
    let (path_dir, all_dir) = (out_dir(&tmp, "path"), out_dir(&tmp, "all"));
    let o = run(&[
        "chain",
        "--network",
        "asia",
        "--target",
        "dysp",
        "--rules",
        &rules,
        "--out",
        &path_dir,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_single_summary_line(&o);
    let o = run(&[
        "chain",
        "--network",
        "asia",
        "--target",
        "dysp",
        "--rules",
        &rules,
        "--mode",
        "all",
        "--out",
        &all_dir,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let path_dot = read(&path_dir, "asia_dysp_chain.dot");
    let golden =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/asia_dysp_chain.dot")).unwrap();
    assert_eq!(path_dot, golden);
    let all_dot = read(&all_dir, "asia_dysp_chain.dot");
    assert!(dot_edges(&path_dot).is_subset(&dot_edges(&all_dot)));
    assert!(all_dot.contains("\"either\" -> \"xray\""));
}

#[test]
fn chain_input_errors() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "c");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "asia,dysp\nno,yes\nmaybe,yes\n").unwrap();
    let o = run(&[
        "chain",
        "--network",
        "asia",
        "--target",
        "dysp",
        "--rules",
        &bad.to_string_lossy(),
        "--out",
        &dir,
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "asia,dysp,probability\n").unwrap();
    let o = run(&[
        "chain",
        "--network",
        "asia",
        "--target",
        "dysp",
        "--rules",
        &empty.to_string_lossy(),
        "--out",
        &dir,
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no rules"));

    let o = run(&[
        "chain",
        "--network",
        "asia",
        "--target",
        "dysp",
        "--rules",
        "/nonexistent.csv",
        "--out",
        &dir,
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_tables_and_reproducibility() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    for dir in [&a, &b] {
        let o = run(&[
            "eval",
            "--networks",
            "cancer",
            "--repeats",
            "2",
            "--seed",
            "1",
            "--out",
            dir,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_single_summary_line(&o);
    }
    let summary = read(&a, "eval_summary.csv");
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("cancer,Cancer,2,"));
    let runs = read(&a, "eval_runs.csv");
    assert_eq!(runs.lines().count(), 3);
    assert!(runs.lines().nth(2).unwrap().starts_with("cancer,Cancer,1,2,"));
    for file in [
        "eval_summary.csv",
        "eval_runs.csv",
        "traces/cancer_run000.csv",
        "traces/cancer_run001.csv",
    ] {
        assert_eq!(read(&a, file), read(&b, file), "{file}");
    }

    let zero = run(&["eval", "--networks", "cancer", "--repeats", "0", "--out", &a]);
    assert_eq!(code(&zero), 2);
    let stray = run(&[
        "eval",
        "--networks",
        "cancer",
        "--repeats",
        "1",
        "--target",
        "asia=dysp",
        "--out",
        &a,
    ]);
    assert_eq!(code(&stray), 2);
}

#[test]
fn file_networks_and_replay() {
    let tmp = TempDir::new().unwrap();
    let bif = tmp.path().join("mine.bif");
    fs::write(&bif, write_network(&load_bundled("earthquake").unwrap())).unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    let o = run(&[
        "brute",
        "--network",
        &bif.to_string_lossy(),
        "--target",
        "Alarm",
        "--out",
        &a,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&a, "brute");
    assert_eq!(m["command"], "brute");
    assert!(Path::new(m["network"].as_str().unwrap()).is_absolute());
    assert_eq!(m["target"]["states"], serde_json::json!(["True", "False"]));

    let manifest_path = Path::new(&a).join("brute.manifest.json");
    let o = run(&["replay", "--manifest", &manifest_path.to_string_lossy(), "--out", &b]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_single_summary_line(&o);
    for file in ["brute_rules.csv", "brute_summary.json", "brute.manifest.json"] {
        assert_eq!(read(&a, file), read(&b, file), "{file}");
    }

    assert_eq!(code(&run(&["replay", "--manifest", "/nonexistent/x.json"])), 2);
    let junk = tmp.path().join("junk.json");
    fs::write(&junk, "{\"command\": \"dance\"}").unwrap();
    assert_eq!(code(&run(&["replay", "--manifest", &junk.to_string_lossy()])), 2);
}
