use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use itnet::data::load_epochs;
use itnet::model::{io::save, ArchConfig, ItNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn itnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itnet")).args(args).output().expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes `subjectNN.{train,test}.eegepoch` pairs of short trials.
fn cohort(dir: &Path, subjects: usize) {
    for s in 1..=subjects {
        for (session, seed) in [("train", 10 * s), ("test", 10 * s + 1)] {
            let out = dir.join(format!("subject{s:02}.{session}.eegepoch"));
            let o = itnet(&["synth", "--spec", path_arg(&small_spec(dir)), "--out", path_arg(&out), "--seed", &seed.to_string()]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
    }
}

fn small_spec(dir: &Path) -> PathBuf {
    let p = dir.join("small.spec");
    fs::write(&p, "synth.n_trials = 24\nsynth.duration_s = 1\n").unwrap();
    p
}

const QUICK: [&str; 8] = ["--max-epochs", "2", "--patience", "1", "--extra-epochs", "1", "--folds", "2"];

#[test]
fn synth_default_spec_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.eegepoch");
    let o = itnet(&["synth", "--out", path_arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let set = load_epochs(&out).unwrap();
    assert_eq!((set.n_trials, set.n_channels, set.n_samples), (200, 8, 250));
    assert_eq!(set.class_counts(), vec![100, 100]);
    assert!(stdout(&o).contains("200 trials x 8 channels x 250 samples"));
    let echo = fs::read_to_string(dir.path().join("s.eegepoch.cfg")).unwrap();
    assert!(echo.contains("synth.n_trials=200"));
}

#[test]
fn synth_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(itnet(&["synth", "--spec", path_arg(&spec), "--out", path_arg(&out), "--seed", seed]).status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.eegepoch", "7"), run("b.eegepoch", "7"));
    assert_ne!(run("a.eegepoch", "7"), run("c.eegepoch", "8"));
}

#[test]
fn synth_rejects_sources_above_nyquist_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.spec");
    fs::write(&spec, "synth.source.1.center_hz = 70\n").unwrap();
    let out = dir.path().join("x.eegepoch");
    let o = itnet(&["synth", "--spec", path_arg(&spec), "--out", path_arg(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("typo.spec");
    fs::write(&spec, "synth.n_trails = 10\n").unwrap();
    let o = itnet(&["synth", "--spec", path_arg(&spec), "--out", path_arg(&dir.path().join("x.eegepoch"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("synth.n_trails"), "{}", stderr(&o));
}

#[test]
fn plan_inverts_the_receptive_field() {
    let o = itnet(&["plan", "--target-r", "91", "--m", "2", "--b", "2", "--n", "4"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "T=4, r=91");
    let o = itnet(&["plan", "--target-r", "121", "--m", "2", "--b", "2", "--n", "4"]);
    assert_eq!(stdout(&o).trim(), "T=5, r=121");
    assert_eq!(itnet(&["plan", "--target-r", "5", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn within_training_writes_models_histories_and_a_reproducible_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    cohort(&data, 1);
    let config = dir.path().join("run.cfg");
    fs::write(&config, "train.seed = 1\ntrain.batch_size = 8\n").unwrap();
    let train = |out: &Path| {
        let mut args = vec!["train", "--scenario", "within", "--data", path_arg(&data), "--config", path_arg(&config), "--out", path_arg(out), "--seed", "4", "--jobs", "1"];
        args.extend(QUICK);
        itnet(&args)
    };
    let first = dir.path().join("run1");
    let o = train(&first);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["subject"], "subject01");
    assert_eq!(lines[0]["scenario"], "within");
    assert!(lines[0]["accuracy"].as_f64().is_some());
    for file in ["subject01.itnetmdl", "subject01.itnetmdl.cfg", "subject01.history.csv", "table.csv", "effective.cfg"] {
        assert!(first.join(file).exists(), "{file}");
    }
    let effective = fs::read_to_string(first.join("effective.cfg")).unwrap();
    assert!(effective.contains("train.seed=4"), "flag must win over file");
    assert!(effective.contains("train.batch_size=8"));
    assert!(effective.contains("arch.dropout_rate=0.4"));

    let second = dir.path().join("run2");
    assert!(train(&second).status.success());
    assert_eq!(fs::read(first.join("table.csv")).unwrap(), fs::read(second.join("table.csv")).unwrap());
    // Rerunning into the same directory replaces the outputs.
    assert!(train(&first).status.success());
    assert_eq!(fs::read(first.join("table.csv")).unwrap(), fs::read(second.join("table.csv")).unwrap());
}

#[test]
fn cross_training_uses_cross_dropout_and_reports_every_subject() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    cohort(&data, 2);
    let out = dir.path().join("out");
    let mut args = vec!["train", "--scenario", "cross", "--data", path_arg(&data), "--out", path_arg(&out)];
    args.extend(QUICK);
    let o = itnet(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    assert!(fs::read_to_string(out.join("effective.cfg")).unwrap().contains("arch.dropout_rate=0.2"));
}

#[test]
fn cross_needs_two_subjects() {
    let dir = tempfile::tempdir().unwrap();
    cohort(dir.path(), 1);
    let o = itnet(&["train", "--scenario", "cross", "--data", path_arg(dir.path()), "--out", path_arg(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("cross requires ≥ 2 subjects"), "{}", stderr(&o));
}

#[test]
fn missing_session_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    cohort(dir.path(), 1);
    fs::remove_file(dir.path().join("subject01.test.eegepoch")).unwrap();
    let o = itnet(&["train", "--scenario", "within", "--data", path_arg(dir.path()), "--out", path_arg(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("subject01.test.eegepoch"));
    let o = itnet(&["train", "--scenario", "within", "--data", "/nonexistent/dir", "--out", path_arg(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn explain_on_the_default_model_writes_the_atlas() {
    let dir = tempfile::tempdir().unwrap();
    let model = ItNet::<f32>::build(ArchConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let path = dir.path().join("m.itnetmdl");
    save(&model, &path).unwrap();
    let out = dir.path().join("atlas");
    let o = itnet(&["explain", "--model", path_arg(&path), "--fs", "125", "--out", path_arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    let count = |prefix: &str, ext: &str| names.iter().filter(|n| n.starts_with(prefix) && n.ends_with(ext)).count();
    assert_eq!(count("spectrum_", ".csv"), 14);
    assert_eq!(count("pattern_", ".csv"), 14);
    assert_eq!(count("", ".svg"), 1);
    assert_eq!(stdout(&o).lines().count(), 14);
    assert!(stderr(&o).contains("valid below 62.5 Hz"));
    let o = itnet(&["explain", "--model", path_arg(&dir.path().join("absent")), "--out", path_arg(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

const ITNET_TABLE: &str = "subject,accuracy\nA01,84.38\nA02,62.85\nA03,89.93\nA04,69.10\nA05,74.31\nA06,57.64\nA07,88.54\nA08,83.68\nA09,80.21\nAverage,76.74\n";
const EEGNET_TABLE: &str = "subject,accuracy\nA09,78.12\nA01,81.94\nA02,56.94\nA03,90.62\nA04,67.01\nA05,72.57\nA06,58.68\nA07,76.04\nA08,81.25\n";

#[test]
fn stats_compares_matched_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, ITNET_TABLE).unwrap();
    fs::write(&b, EEGNET_TABLE).unwrap();
    let o = itnet(&["stats", "--table", path_arg(&a), "--vs", path_arg(&b), "--test", "wilcoxon"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("W=3") && line.contains("p=0.009766") && line.contains("significant at 0.05"), "{line}");
    let o = itnet(&["stats", "--table", path_arg(&a), "--vs", path_arg(&b), "--test", "ttest"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("df=8"));
}

#[test]
fn stats_rejects_identical_and_mismatched_tables() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    fs::write(&a, ITNET_TABLE).unwrap();
    let o = itnet(&["stats", "--table", path_arg(&a), "--vs", path_arg(&a)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("zero"), "{}", stderr(&o));
    let short = dir.path().join("short.csv");
    fs::write(&short, "subject,accuracy\nA01,80\nA02,70\n").unwrap();
    let o = itnet(&["stats", "--table", path_arg(&a), "--vs", path_arg(&short)]);
    assert_eq!(o.status.code(), Some(4));
    let o = itnet(&["stats", "--table", path_arg(&a), "--vs", path_arg(&a), "--test", "anova"]);
    assert_eq!(o.status.code(), Some(2));
}
