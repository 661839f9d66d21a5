//! Within-subject, cross-subject and fine-tuned cross-subject evaluation.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    evaluate, fit_with_early_stopping, refit_extra_epochs, stratified_kfold, Access, AccessLog, EpochRecord,
    Labeled, Model, Session, TrainConfig, TrainError,
};
use crate::data::{ChannelStats, EpochSet};
use crate::model::ArchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Within,
    Cross,
    CrossFinetuned,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Within => "within",
            Scenario::Cross => "cross",
            Scenario::CrossFinetuned => "cross-ft",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "within" => Ok(Scenario::Within),
            "cross" => Ok(Scenario::Cross),
            "cross-ft" | "cross_ft" | "cross_finetuned" => Ok(Scenario::CrossFinetuned),
            other => Err(format!("unknown scenario {other:?} (within, cross, cross-ft)")),
        }
    }
}

/// One subject's two recording sessions.
#[derive(Debug, Clone)]
pub struct Subject {
    pub name: String,
    pub train: EpochSet,
    pub test: EpochSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    pub fold: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct SubjectResult {
    pub subject: String,
    /// Test accuracy (%) after the last extra epoch.
    pub accuracy: f64,
    /// Highest test accuracy (%) seen across extra epochs. Selected on the
    /// test set, so reported for comparison only.
    pub best_epoch_accuracy: f64,
    pub selected_fold: usize,
    /// Epochs run in the selected fold before early stopping.
    pub epochs_run: usize,
    /// Selected fold's curve followed by the extra epochs.
    pub history: Vec<EpochRecord>,
    pub folds: Vec<FoldSummary>,
    /// Training-pool trial counts per contributing subject.
    pub pool: Vec<(String, usize)>,
    pub standardization: ChannelStats,
    pub model: Model,
}

#[derive(Debug)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub subjects: Vec<SubjectResult>,
    pub mean: f64,
    pub std: f64,
    /// Test-session trial accesses that could have influenced a model.
    pub test_leaks: u64,
    pub access: AccessLog,
    pub metadata: Vec<(String, String)>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// SplitMix64 finaliser over a base seed and a path of indices.
fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut z = base;
    for &p in path {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

struct Outcome {
    model: Model,
    history: Vec<EpochRecord>,
    folds: Vec<FoldSummary>,
    selected: usize,
    accuracy: f64,
    best_epoch_accuracy: f64,
}

/// Cross-validation on `labeled`, extra epochs on all of it from the best
/// fold's checkpoint, then evaluation on `test`.
fn protocol(
    labeled: &Labeled,
    test: &Labeled,
    arch: &ArchConfig,
    config: &TrainConfig,
    init: Option<&Model>,
    seed: u64,
    log: &AccessLog,
) -> Result<Outcome, TrainError> {
    let folds = stratified_kfold(&labeled.set.labels, config.folds, seed)?;
    let fits = folds
        .par_iter()
        .enumerate()
        .map(|(f, val_idx)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, f as u64]));
            let train_idx: Vec<usize> = (0..labeled.len()).filter(|i| val_idx.binary_search(i).is_err()).collect();
            let model = match init {
                Some(m) => m.clone(),
                None => Model::build(arch.clone(), &mut rng)?,
            };
            fit_with_early_stopping(model, &labeled.subset(&train_idx), &labeled.subset(val_idx), config, &mut rng, log)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let summaries: Vec<FoldSummary> = fits
        .iter()
        .enumerate()
        .map(|(fold, r)| FoldSummary {
            fold,
            best_epoch: r.best_epoch,
            epochs_run: r.epochs_run,
            val_loss: r.best_val_loss,
            val_acc: r.best_val_acc,
        })
        .collect();
    let selected = summaries
        .iter()
        .max_by(|a, b| {
            a.val_acc
                .total_cmp(&b.val_acc)
                .then(b.val_loss.total_cmp(&a.val_loss))
                .then(b.fold.cmp(&a.fold))
        })
        .map(|s| s.fold)
        .expect("at least two folds");
    let best = fits.into_iter().nth(selected).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    let (model, extra, monitored) =
        refit_extra_epochs(best.model, labeled, config, best.epochs_run + 1, Some(test), &mut rng, log)?;
    let accuracy = 100.0 * evaluate(&model, test, log)?.1;
    let best_epoch_accuracy = monitored.iter().map(|a| 100.0 * a).fold(accuracy, f64::max);
    let mut history = best.history;
    history.extend(extra);
    Ok(Outcome {
        model,
        history,
        folds: summaries,
        selected,
        accuracy,
        best_epoch_accuracy,
    })
}

fn check_subjects(scenario: Scenario, subjects: &[Subject]) -> Result<(), TrainError> {
    if subjects.is_empty() {
        return Err(TrainError::Data("no subjects given".into()));
    }
    if scenario != Scenario::Within && subjects.len() < 2 {
        return Err(TrainError::Data(format!("{} requires ≥ 2 subjects", scenario.as_str())));
    }
    let reference = &subjects[0].train;
    for s in subjects {
        for set in [&s.train, &s.test] {
            if set.class_names != reference.class_names {
                return Err(TrainError::Data(format!(
                    "label-space mismatch: subject {} has classes {:?}, expected {:?}",
                    s.name, set.class_names, reference.class_names
                )));
            }
            if !set.compatible(reference) {
                return Err(TrainError::Data(format!(
                    "subject {} differs in channels, trial length or sampling rate",
                    s.name
                )));
            }
        }
    }
    Ok(())
}

/// Standardises `pool` in place with its own statistics and returns them.
fn fit_standardization(pool: &mut Labeled, log: &AccessLog) -> Result<ChannelStats, TrainError> {
    log.record(&pool.tags, Access::Stats);
    let stats = ChannelStats::fit(&pool.set)?;
    stats.apply(&mut pool.set)?;
    Ok(stats)
}

fn standardized(set: &EpochSet, subject: usize, session: Session, stats: &ChannelStats) -> Result<Labeled, TrainError> {
    let mut l = Labeled::new(set.clone(), subject, session);
    stats.apply(&mut l.set)?;
    Ok(l)
}

/// Standardised training pool for `target`: every other subject's training
/// session. The target's data is never read.
pub fn cross_pool(
    subjects: &[Subject],
    target: usize,
    log: &AccessLog,
) -> Result<(Labeled, ChannelStats, Vec<(String, usize)>), TrainError> {
    let parts: Vec<Labeled> = subjects
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(j, s)| Labeled::new(s.train.clone(), j, Session::Train))
        .collect();
    let refs: Vec<&Labeled> = parts.iter().collect();
    let mut pool = Labeled::concat(&refs)?;
    let composition = subjects
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, s)| (s.name.clone(), s.train.n_trials))
        .collect();
    let stats = fit_standardization(&mut pool, log)?;
    Ok((pool, stats, composition))
}

fn run_subject(
    scenario: Scenario,
    subjects: &[Subject],
    target: usize,
    arch: &ArchConfig,
    config: &TrainConfig,
    log: &AccessLog,
) -> Result<SubjectResult, TrainError> {
    let subject = &subjects[target];
    let seed = derive_seed(config.seed, &[target as u64]);
    match scenario {
        Scenario::Within => {
            let mut train = Labeled::new(subject.train.clone(), target, Session::Train);
            let stats = fit_standardization(&mut train, log)?;
            let test = standardized(&subject.test, target, Session::Test, &stats)?;
            let out = protocol(&train, &test, arch, config, None, seed, log)?;
            Ok(result(subject, out, vec![(subject.name.clone(), subject.train.n_trials)], stats))
        }
        Scenario::Cross | Scenario::CrossFinetuned => {
            let (pool, stats, composition) = cross_pool(subjects, target, log)?;
            let test = standardized(&subject.test, target, Session::Test, &stats)?;
            let cross = protocol(&pool, &test, arch, config, None, seed, log)?;
            if scenario == Scenario::Cross {
                return Ok(result(subject, cross, composition, stats));
            }
            let own = standardized(&subject.train, target, Session::Train, &stats)?;
            let ft_seed = derive_seed(seed, &[3]);
            let out = protocol(&own, &test, arch, config, Some(&cross.model), ft_seed, log)?;
            let mut composition = composition;
            composition.push((subject.name.clone(), subject.train.n_trials));
            Ok(result(subject, out, composition, stats))
        }
    }
}

fn result(subject: &Subject, out: Outcome, pool: Vec<(String, usize)>, stats: ChannelStats) -> SubjectResult {
    let epochs_run = out.folds[out.selected].epochs_run;
    SubjectResult {
        subject: subject.name.clone(),
        accuracy: out.accuracy,
        best_epoch_accuracy: out.best_epoch_accuracy,
        selected_fold: out.selected,
        epochs_run,
        history: out.history,
        folds: out.folds,
        pool,
        standardization: stats,
        model: out.model,
    }
}

/// Runs `scenario` for every subject. Subjects run in parallel; results
/// depend only on the inputs.
pub fn run_scenario(
    scenario: Scenario,
    subjects: &[Subject],
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<ScenarioReport, TrainError> {
    let all: Vec<usize> = (0..subjects.len()).collect();
    run_scenario_for(scenario, subjects, &all, arch, config)
}

/// Like [`run_scenario`] but evaluates only the subjects at `targets`; the
/// others still contribute to cross-subject pools.
pub fn run_scenario_for(
    scenario: Scenario,
    subjects: &[Subject],
    targets: &[usize],
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<ScenarioReport, TrainError> {
    config.validate()?;
    if let Some(&t) = targets.iter().find(|&&t| t >= subjects.len()) {
        return Err(TrainError::Data(format!("target {t} out of range for {} subjects", subjects.len())));
    }
    arch.validate()?;
    check_subjects(scenario, subjects)?;
    let first = &subjects[0].train;
    if arch.n_channels != first.n_channels || arch.n_samples != first.n_samples || arch.n_classes != first.n_classes() {
        return Err(TrainError::Data(format!(
            "architecture expects {}x{} trials with {} classes, data has {}x{} with {}",
            arch.n_channels,
            arch.n_samples,
            arch.n_classes,
            first.n_channels,
            first.n_samples,
            first.n_classes()
        )));
    }
    let log = AccessLog::default();
    let results = targets
        .par_iter()
        .map(|&t| run_subject(scenario, subjects, t, arch, config, &log))
        .collect::<Result<Vec<_>, _>>()?;
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    let metadata = vec![
        ("scenario".into(), scenario.as_str().into()),
        (
            "standardization".into(),
            "per-channel mean/std fitted on the epoched training pool, applied unchanged to test trials".into(),
        ),
        ("headline".into(), "accuracy after the final extra epoch".into()),
    ];
    Ok(ScenarioReport {
        scenario,
        subjects: results,
        mean,
        std,
        test_leaks: log.test_leaks(),
        access: log,
        metadata,
    })
}

/// Accuracy table: one row per subject, then `Average` and `Std`.
pub fn scenario_table_csv(report: &ScenarioReport) -> String {
    let mut out = String::from("subject,accuracy,best_epoch_accuracy,selected_fold,epochs_run\n");
    for r in &report.subjects {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.subject, r.accuracy, r.best_epoch_accuracy, r.selected_fold, r.epochs_run
        );
    }
    let best: Vec<f64> = report.subjects.iter().map(|r| r.best_epoch_accuracy).collect();
    let (best_mean, best_std) = mean_std(&best);
    let _ = writeln!(out, "Average,{},{},,", report.mean, best_mean);
    let _ = writeln!(out, "Std,{},{},,", report.std, best_std);
    out
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,phase,train_loss,val_loss,train_acc,val_acc\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            r.phase.as_str(),
            r.train_loss,
            r.val_loss,
            r.train_acc,
            r.val_acc
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthSpec};
    use crate::model::Branch;

    fn small_arch() -> ArchConfig {
        let mut a = ArchConfig::for_data(8, 125, 2);
        a.inception_branches = vec![Branch { filters: 2, kernel: 8 }, Branch { filters: 2, kernel: 16 }];
        a
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            max_epochs_cv: 3,
            patience: 1,
            extra_epochs_max: 1,
            batch_size: 8,
            folds: 2,
            seed: 4,
            ..TrainConfig::within()
        }
    }

    fn subject(i: u64) -> Subject {
        Subject {
            name: format!("S{}", i + 1),
            train: generate(&SynthSpec::two_class(16, 1.0, 100 + i)).unwrap(),
            test: generate(&SynthSpec::two_class(8, 1.0, 200 + i)).unwrap(),
        }
    }

    #[test]
    fn within_single_subject() {
        let report = run_scenario(Scenario::Within, &[subject(0)], &small_arch(), &quick()).unwrap();
        assert_eq!(report.subjects.len(), 1);
        let r = &report.subjects[0];
        assert!((0.0..=100.0).contains(&r.accuracy));
        assert_eq!(report.test_leaks, 0);
        assert!(report.access.count(|t, a| t.session == Session::Test && a == Access::Eval) > 0);
        let (m, s) = mean_std(&[r.accuracy]);
        assert!((m - report.mean).abs() < 1e-9 && (s - report.std).abs() < 1e-9);
        let table = scenario_table_csv(&report);
        assert!(table.starts_with("subject,accuracy"));
        assert!(table.contains("\nAverage,") && table.contains("\nStd,"));
        let hist = history_csv(&r.history);
        assert_eq!(hist.lines().count(), r.history.len() + 1);
    }

    #[test]
    fn cross_needs_two_subjects() {
        let err = run_scenario(Scenario::Cross, &[subject(0)], &small_arch(), &quick()).unwrap_err();
        assert!(err.to_string().contains("≥ 2 subjects"));
    }

    #[test]
    fn label_space_mismatch_is_rejected() {
        let mut b = subject(1);
        b.train.class_names[1] = "other".into();
        let err = run_scenario(Scenario::Cross, &[subject(0), b], &small_arch(), &quick()).unwrap_err();
        assert!(err.to_string().contains("label-space"));
    }

    #[test]
    fn cross_model_never_reads_the_target() {
        let subjects = vec![subject(0), subject(1), subject(2)];
        let mut altered = subjects.clone();
        altered[0].train = generate(&SynthSpec::two_class(30, 1.0, 999)).unwrap();
        let log = AccessLog::default();
        let (pool_a, stats_a, _) = cross_pool(&subjects, 0, &log).unwrap();
        let (pool_b, stats_b, _) = cross_pool(&altered, 0, &log).unwrap();
        assert_eq!(pool_a, pool_b);
        assert_eq!(stats_a, stats_b);
        assert!(pool_a.tags.iter().all(|t| t.subject != 0));

        let a = run_scenario(Scenario::Cross, &subjects, &small_arch(), &quick()).unwrap();
        let b = run_scenario(Scenario::Cross, &altered, &small_arch(), &quick()).unwrap();
        assert_eq!(a.subjects[0].model, b.subjects[0].model);
        assert_eq!(a.subjects[0].accuracy, b.subjects[0].accuracy);
        assert_eq!(a.test_leaks, 0);
    }

    #[test]
    fn fine_tuning_adds_the_target_session() {
        let subjects = vec![subject(0), subject(1)];
        let r = run_scenario(Scenario::CrossFinetuned, &subjects, &small_arch(), &quick()).unwrap();
        assert_eq!(r.test_leaks, 0);
        assert_eq!(r.subjects[1].pool.last().unwrap().0, "S2");
    }

    #[test]
    fn reports_are_reproducible() {
        let subjects = vec![subject(0), subject(1)];
        let a = run_scenario(Scenario::Within, &subjects, &small_arch(), &quick()).unwrap();
        let b = run_scenario(Scenario::Within, &subjects, &small_arch(), &quick()).unwrap();
        assert_eq!(scenario_table_csv(&a), scenario_table_csv(&b));
        assert_eq!(a.subjects[1].model, b.subjects[1].model);
    }

    #[test]
    fn scenario_names_parse() {
        for s in [Scenario::Within, Scenario::Cross, Scenario::CrossFinetuned] {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        assert!("loso".parse::<Scenario>().is_err());
    }
}
