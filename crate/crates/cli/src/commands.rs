use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use itnet::data::{generate, load_epochs, save_epochs, EpochSet};
use itnet::explain::{build_atlas, export_atlas};
use itnet::fsio::write_atomic;
use itnet::kv::KvDoc;
use itnet::model::{self, plan_kernel, receptive_field_blocks, ArchConfig, ItNet};
use itnet::stats::{paired_t_right, wilcoxon_one_sided, AccuracyTable};
use itnet::train::{history_csv, run_scenario, scenario_table_csv, Scenario, Subject};

use crate::config::{self, override_with, Defaults};
use crate::failure::{Class, Failure};
use crate::{ExplainArgs, PlanArgs, StatsArgs, StatTest, SynthArgs, TrainArgs};

pub const ALPHA: f64 = 0.05;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(|e| Failure::io(path, e))
}

/// `<out>.cfg` beside the generated file.
pub fn spec_echo_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".cfg");
    out.with_file_name(name)
}

pub fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let mut doc = config::load_doc(args.spec.as_deref())?;
    override_with(&mut doc, "synth.seed", args.seed);
    override_with(&mut doc, "synth.n_trials", args.trials);
    let spec = config::resolve(&doc, Defaults::standalone())?.synth;
    spec.validate()?;
    let set = generate(&spec)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_epochs(&set, &args.out)?;
    let mut effective = KvDoc::new();
    spec.write_kv(&mut effective);
    write(&spec_echo_path(&args.out), effective.render().as_bytes())?;
    let counts: Vec<String> = set
        .class_names
        .iter()
        .zip(set.class_counts())
        .map(|(name, n)| format!("{name}={n}"))
        .collect();
    println!(
        "{}: {} trials x {} channels x {} samples at {} Hz; classes {}",
        args.out.display(),
        set.n_trials,
        set.n_channels,
        set.n_samples,
        set.fs,
        counts.join(" ")
    );
    Ok(())
}

/// Finds `subjectNN.train.eegepoch` / `subjectNN.test.eegepoch` pairs.
pub fn discover_subjects(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut found: BTreeMap<u32, (String, Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(rest) = name.strip_prefix("subject") else {
            continue;
        };
        let Some((digits, session)) = rest.split_once('.') else {
            continue;
        };
        let Ok(number) = digits.parse::<u32>() else {
            continue;
        };
        let slot = found.entry(number).or_insert_with(|| (format!("subject{digits}"), None, None));
        match session {
            "train.eegepoch" => slot.1 = Some(path.clone()),
            "test.eegepoch" => slot.2 = Some(path.clone()),
            _ => {}
        }
    }
    if found.is_empty() {
        return Err(Failure::data(format!("{}: no subjectNN.{{train,test}}.eegepoch files", dir.display())));
    }
    found
        .into_values()
        .map(|(name, train, test)| match (train, test) {
            (Some(a), Some(b)) => Ok((name, a, b)),
            (None, _) => Err(Failure::data(format!("{name}: missing {name}.train.eegepoch"))),
            (_, None) => Err(Failure::data(format!("{name}: missing {name}.test.eegepoch"))),
        })
        .collect()
}

fn load_subjects(dir: &Path) -> Result<Vec<Subject>, Failure> {
    discover_subjects(dir)?
        .into_iter()
        .map(|(name, train, test)| {
            Ok(Subject {
                name,
                train: load_epochs(&train)?,
                test: load_epochs(&test)?,
            })
        })
        .collect()
}

fn arch_for(set: &EpochSet) -> ArchConfig {
    ArchConfig::for_data(set.n_channels, set.n_samples, set.n_classes())
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    let scenario: Scenario = args.scenario.parse().map_err(Failure::usage)?;
    let mut doc = config::load_doc(args.config.as_deref())?;
    override_with(&mut doc, "train.seed", args.seed);
    override_with(&mut doc, "train.max_epochs_cv", args.max_epochs);
    override_with(&mut doc, "train.patience", args.patience);
    override_with(&mut doc, "train.extra_epochs_max", args.extra_epochs);
    override_with(&mut doc, "train.folds", args.folds);
    override_with(&mut doc, "train.batch_size", args.batch_size);
    override_with(&mut doc, "arch.dropout_rate", args.dropout);
    let subjects = load_subjects(&args.data)?;
    let resolved = config::resolve(&doc, Defaults::for_scenario(scenario, arch_for(&subjects[0].train)))?;
    let (arch, train) = (resolved.arch, resolved.train);

    create_dir(&args.out)?;
    let mut effective = KvDoc::new();
    effective.set("run.scenario", scenario.as_str());
    effective.set("run.data", args.data.display());
    effective.set("run.subjects", subjects.len());
    arch.write_kv(&mut effective);
    train.write_kv(&mut effective);
    if doc.keys().any(|k| k.starts_with("synth.")) {
        resolved.synth.write_kv(&mut effective);
    }
    write(&args.out.join("effective.cfg"), effective.render().as_bytes())?;

    let run = || run_scenario(scenario, &subjects, &arch, &train);
    let report = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build()
            .map_err(|e| Failure::usage(format!("--jobs {jobs}: {e}")))?
            .install(run),
        None => run(),
    }?;
    if report.test_leaks != 0 {
        return Err(Failure::new(Class::Numeric, format!("{} test-session trial accesses reached training", report.test_leaks)));
    }

    for (result, subject) in report.subjects.iter().zip(&subjects) {
        let mut trained = result.model.clone();
        trained.set_montage(Some(subject.train.montage.clone()));
        model::io::save(&trained, &args.out.join(format!("{}.itnetmdl", result.subject)))?;
        write(&args.out.join(format!("{}.history.csv", result.subject)), history_csv(&result.history).as_bytes())?;
        let line = serde_json::json!({
            "subject": result.subject,
            "scenario": scenario.as_str(),
            "accuracy": result.accuracy,
            "best_epoch_accuracy": result.best_epoch_accuracy,
            "epochs_run": result.epochs_run,
        });
        println!("{line}");
    }
    write(&args.out.join("table.csv"), scenario_table_csv(&report).as_bytes())?;
    eprintln!(
        "{}: mean accuracy {:.2}% (std {:.2}) over {} subject(s); outputs in {}",
        scenario.as_str(),
        report.mean,
        report.std,
        report.subjects.len(),
        args.out.display()
    );
    Ok(())
}

pub fn explain(args: &ExplainArgs) -> Result<(), Failure> {
    let trained: ItNet<f32> = model::io::load(&args.model)?;
    let atlas = build_atlas(&trained, args.fs, args.savgol_l, args.savgol_p)?;
    let written = export_atlas(&atlas, &args.out)?;
    for e in &atlas.entries {
        let flag = if e.degenerate { " (degenerate spatial filter)" } else { "" };
        println!("branch {} filter {}: peak {:.2} Hz{flag}", e.branch, e.filter, e.peak_hz());
    }
    eprintln!("{}; {} files written to {}", atlas.annotation(), written.len(), args.out.display());
    Ok(())
}

pub fn plan(args: &PlanArgs) -> Result<(), Failure> {
    if args.target_r == 0 || args.m == 0 || args.b == 0 {
        return Err(Failure::usage("--target-r, --m and --b must be positive"));
    }
    let kernel = plan_kernel(args.target_r, args.m, args.b, args.n)
        .ok_or_else(|| Failure::usage(format!("no kernel reaches r={} with n={}", args.target_r, args.n)))?;
    let r = receptive_field_blocks(args.m, kernel, args.b, args.n);
    println!("T={kernel}, r={r}");
    Ok(())
}

fn load_table(path: &Path) -> Result<AccuracyTable, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    AccuracyTable::parse(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Values of `column` in `b` reordered to follow the subjects of `a`.
fn paired_columns(a: &AccuracyTable, b: &AccuracyTable, col_a: &str, col_b: &str) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let xs = a.column(col_a)?;
    let ys = b.column(col_b)?;
    if a.subjects.len() != b.subjects.len() {
        return Err(Failure::data(format!("tables list {} and {} subjects", a.subjects.len(), b.subjects.len())));
    }
    let mut paired = Vec::with_capacity(xs.len());
    for (subject, &x) in a.subjects.iter().zip(xs) {
        let j = b
            .subjects
            .iter()
            .position(|s| s == subject)
            .ok_or_else(|| Failure::data(format!("subject {subject} missing from the second table")))?;
        paired.push((x, ys[j]));
    }
    Ok(paired.into_iter().unzip())
}

pub fn stats(args: &StatsArgs) -> Result<(), Failure> {
    let a = load_table(&args.table)?;
    let b = load_table(&args.vs)?;
    let col_b = args.vs_column.as_deref().unwrap_or(&args.column);
    let (xs, ys) = paired_columns(&a, &b, &args.column, col_b)?;
    let (line, p) = match args.test {
        StatTest::Wilcoxon => {
            let r = wilcoxon_one_sided(&xs, &ys)?;
            let method = if r.exact { "exact" } else { "normal approximation" };
            (format!("wilcoxon: W={} (W+={}) n={} p={:.6} [{method}]", r.w_minus, r.w_plus, r.n_eff, r.p_value), r.p_value)
        }
        StatTest::Ttest => {
            let r = paired_t_right(&xs, &ys)?;
            (format!("paired t: t={:.4} df={} p={:.6}", r.t, r.df, r.p_value), r.p_value)
        }
    };
    let verdict = if p < ALPHA { "significant" } else { "not significant" };
    println!("{line}; {verdict} at {ALPHA}");
    Ok(())
}
