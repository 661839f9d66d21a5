//! Cross-validated training with early stopping, extra-epoch refitting and
//! the three evaluation scenarios.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{DataError, EpochSet};
use crate::kv::{KvDoc, KvError, KvReader};
use crate::model::{ItNet, ModelError};
use crate::tensor::{Adam, Mode, Tape, TensorError};

mod scenario;

pub use scenario::{
    cross_pool, history_csv, mean_std, run_scenario, run_scenario_for, scenario_table_csv, Scenario, ScenarioReport, Subject, SubjectResult,
};

/// Networks are trained in single precision.
pub type Model = ItNet<f32>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Epochs(#[from] DataError),
    #[error("training diverged: non-finite loss at epoch {0}")]
    Diverged(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs_cv: usize,
    pub patience: usize,
    pub extra_epochs_max: usize,
    pub extra_lr: f64,
    pub base_lr: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn within() -> Self {
        TrainConfig {
            max_epochs_cv: 500,
            patience: 100,
            extra_epochs_max: 50,
            extra_lr: 1e-4,
            base_lr: 1e-3,
            batch_size: 16,
            folds: 10,
            seed: 0,
        }
    }

    pub fn cross() -> Self {
        TrainConfig {
            max_epochs_cv: 150,
            patience: 15,
            ..Self::within()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.patience == 0 || self.patience >= self.max_epochs_cv {
            return bad(format!(
                "patience {} must be positive and below max_epochs_cv {}",
                self.patience, self.max_epochs_cv
            ));
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size {} leaves batch norm undefined", self.batch_size));
        }
        if !(self.base_lr >= 0.0 && self.extra_lr >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        Ok(())
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        doc.set("train.max_epochs_cv", self.max_epochs_cv);
        doc.set("train.patience", self.patience);
        doc.set("train.extra_epochs_max", self.extra_epochs_max);
        doc.set("train.extra_lr", self.extra_lr);
        doc.set("train.base_lr", self.base_lr);
        doc.set("train.batch_size", self.batch_size);
        doc.set("train.folds", self.folds);
        doc.set("train.seed", self.seed);
    }

    pub fn read_kv(mut self, r: &mut KvReader<'_>) -> Result<Self, KvError> {
        self.max_epochs_cv = r.or("train.max_epochs_cv", self.max_epochs_cv)?;
        self.patience = r.or("train.patience", self.patience)?;
        self.extra_epochs_max = r.or("train.extra_epochs_max", self.extra_epochs_max)?;
        self.extra_lr = r.or("train.extra_lr", self.extra_lr)?;
        self.base_lr = r.or("train.base_lr", self.base_lr)?;
        self.batch_size = r.or("train.batch_size", self.batch_size)?;
        self.folds = r.or("train.folds", self.folds)?;
        self.seed = r.or("train.seed", self.seed)?;
        Ok(self)
    }
}

/// Which recording session a trial came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Session {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialTag {
    pub subject: usize,
    pub session: Session,
}

/// Trials with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub set: EpochSet,
    pub tags: Vec<TrialTag>,
}

impl Labeled {
    pub fn new(set: EpochSet, subject: usize, session: Session) -> Self {
        let tags = vec![TrialTag { subject, session }; set.n_trials];
        Labeled { set, tags }
    }

    pub fn len(&self) -> usize {
        self.set.n_trials
    }

    pub fn is_empty(&self) -> bool {
        self.set.n_trials == 0
    }

    pub fn subset(&self, indices: &[usize]) -> Labeled {
        Labeled {
            set: self.set.subset(indices),
            tags: indices.iter().map(|&i| self.tags[i]).collect(),
        }
    }

    pub fn concat(parts: &[&Labeled]) -> Result<Labeled, TrainError> {
        let sets: Vec<&EpochSet> = parts.iter().map(|p| &p.set).collect();
        Ok(Labeled {
            set: EpochSet::concat(&sets)?,
            tags: parts.iter().flat_map(|p| p.tags.iter().copied()).collect(),
        })
    }
}

/// How a block of trials was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Access {
    /// Contributed to a gradient step.
    Update,
    /// Contributed to standardisation statistics.
    Stats,
    /// Evaluated without influencing the model.
    Eval,
}

/// Counts every trial access by provenance and kind.
#[derive(Debug, Default)]
pub struct AccessLog {
    counts: Mutex<HashMap<(TrialTag, Access), u64>>,
}

impl AccessLog {
    pub fn record(&self, tags: &[TrialTag], access: Access) {
        let mut counts = self.counts.lock().unwrap();
        for &t in tags {
            *counts.entry((t, access)).or_default() += 1;
        }
    }

    pub fn count(&self, filter: impl Fn(TrialTag, Access) -> bool) -> u64 {
        let counts = self.counts.lock().unwrap();
        counts.iter().filter(|((t, a), _)| filter(*t, *a)).map(|(_, &n)| n).sum()
    }

    /// Accesses to test-session trials that could have influenced a model.
    pub fn test_leaks(&self) -> u64 {
        self.count(|t, a| t.session == Session::Test && a != Access::Eval)
    }

    pub fn snapshot(&self) -> Vec<((TrialTag, Access), u64)> {
        let mut v: Vec<_> = self.counts.lock().unwrap().iter().map(|(k, v)| (*k, *v)).collect();
        v.sort();
        v
    }
}

/// Splits indices into `k` folds keeping every fold's class counts within one
/// of the exact proportion.
pub fn stratified_kfold(labels: &[u32], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if k < 2 {
        return Err(TrainError::Config(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(TrainError::Data(format!(
                "class {class} has {} trials, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        // Dealing continues where the previous class stopped, so fold sizes
        // also stay within one of each other.
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Outcome of feeding one epoch's validation loss to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss and keeps a checkpoint from that epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping<C> {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    since_best: usize,
    best: Option<C>,
    best_trace: Vec<f64>,
}

impl<C> EarlyStopping<C> {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
            best: None,
            best_trace: Vec::new(),
        }
    }

    /// Records epoch `epoch` (1-based). `checkpoint` runs only on improvement.
    pub fn observe(&mut self, epoch: usize, val_loss: f64, checkpoint: impl FnOnce() -> C) -> Verdict {
        let verdict = if val_loss < self.best_loss || self.best.is_none() {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            self.best = Some(checkpoint());
            Verdict::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        };
        self.best_trace.push(self.best_loss);
        verdict
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    /// Best loss after each observed epoch; non-increasing.
    pub fn best_trace(&self) -> &[f64] {
        &self.best_trace
    }

    pub fn into_best(self) -> Option<C> {
        self.best
    }
}

/// Training phase of a history row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cv,
    Extra,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Cv => "cv",
            Phase::Extra => "extra",
        }
    }
}

/// One epoch of a training curve. In the extra phase the validation columns
/// are measured on the combined training data.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_acc: f64,
    pub epochs_run: usize,
}

/// Mean cross-entropy and accuracy (fraction) of `model` on `data`.
pub fn evaluate(model: &Model, data: &Labeled, log: &AccessLog) -> Result<(f64, f64), TrainError> {
    if data.is_empty() {
        return Err(TrainError::Data("cannot evaluate on an empty set".into()));
    }
    log.record(&data.tags, Access::Eval);
    let all: Vec<usize> = (0..data.len()).collect();
    let probs = model.predict_proba(&data.set.to_tensor(&all))?;
    let k = model.config().n_classes;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &label) in probs.data().chunks(k).zip(&data.set.labels) {
        loss -= (row[label as usize] as f64).max(1e-12).ln();
        let pred = argmax(row);
        correct += (pred == label as usize) as usize;
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Shuffled mini-batches; a trailing batch of one trial is merged into the
/// previous batch because batch norm needs at least two.
pub fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

/// One pass over `data`; returns mean batch loss and accuracy.
pub fn train_epoch(
    model: &mut Model,
    data: &Labeled,
    opt: &mut Adam<f32>,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    log: &AccessLog,
) -> Result<(f64, f64), TrainError> {
    if data.len() < 2 {
        return Err(TrainError::Data(format!("need at least 2 training trials, got {}", data.len())));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let k = model.config().n_classes;
    for batch in batches(data.len(), batch_size, rng) {
        let tags: Vec<TrialTag> = batch.iter().map(|&i| data.tags[i]).collect();
        log.record(&tags, Access::Update);
        let labels = data.set.labels_usize(&batch);
        let mut tape = Tape::new();
        let x = tape.constant(data.set.to_tensor(&batch));
        let fwd = model.forward(&mut tape, x, Mode::Train, rng)?;
        let loss = tape.softmax_cross_entropy(fwd.logits, &labels)?;
        let loss_value = tape.value(loss).data()[0] as f64;
        for (row, &l) in tape.value(fwd.logits).data().chunks(k).zip(&labels) {
            correct += (argmax(row) == l) as usize;
        }
        let grads = tape.backward(loss)?;
        model.apply_gradients(&grads, &fwd.param_vars, opt)?;
        model.update_running_stats(&fwd.moments);
        loss_sum += loss_value * batch.len() as f64;
    }
    let n = data.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Trains until the validation loss stops improving for `patience` epochs
/// (or `max_epochs_cv` is reached) and returns the best-epoch checkpoint.
pub fn fit_with_early_stopping(
    mut model: Model,
    train: &Labeled,
    val: &Labeled,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    log: &AccessLog,
) -> Result<FitResult, TrainError> {
    if val.is_empty() {
        return Err(TrainError::Data("validation set is empty".into()));
    }
    let mut opt = Adam::new(config.base_lr);
    let mut stopper = EarlyStopping::<(Model, f64)>::new(config.patience);
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs_cv {
        let (train_loss, train_acc) = train_epoch(&mut model, train, &mut opt, config.batch_size, rng, log)?;
        let (val_loss, val_acc) = evaluate(&model, val, log)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(TrainError::Diverged(epoch));
        }
        history.push(EpochRecord {
            epoch,
            phase: Phase::Cv,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        if stopper.observe(epoch, val_loss, || (model.clone(), val_acc)) == Verdict::Stop {
            break;
        }
    }
    let epochs_run = history.len();
    let best_epoch = stopper.best_epoch();
    let best_val_loss = stopper.best_loss();
    let (model, best_val_acc) = stopper.into_best().expect("at least one epoch ran");
    Ok(FitResult {
        model,
        history,
        best_epoch,
        best_val_loss,
        best_val_acc,
        epochs_run,
    })
}

/// Continues training on all labelled data with a fresh optimiser at
/// `extra_lr`. `monitor` is evaluated after every epoch for reporting only.
pub fn refit_extra_epochs(
    mut model: Model,
    all: &Labeled,
    config: &TrainConfig,
    first_epoch: usize,
    monitor: Option<&Labeled>,
    rng: &mut ChaCha8Rng,
    log: &AccessLog,
) -> Result<(Model, Vec<EpochRecord>, Vec<f64>), TrainError> {
    let mut opt = Adam::new(config.extra_lr);
    let mut history = Vec::with_capacity(config.extra_epochs_max);
    let mut monitored = Vec::new();
    for i in 0..config.extra_epochs_max {
        let epoch = first_epoch + i;
        let (train_loss, train_acc) = train_epoch(&mut model, all, &mut opt, config.batch_size, rng, log)?;
        let (val_loss, val_acc) = evaluate(&model, all, log)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(TrainError::Diverged(epoch));
        }
        history.push(EpochRecord {
            epoch,
            phase: Phase::Extra,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        if let Some(m) = monitor {
            monitored.push(evaluate(&model, m, log)?.1);
        }
    }
    Ok((model, history, monitored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthSpec};
    use crate::model::ArchConfig;

    #[test]
    fn balanced_folds_hold_one_of_each_class() {
        let labels: Vec<u32> = (0..40).map(|i| i % 4).collect();
        let folds = stratified_kfold(&labels, 10, 3).unwrap();
        for f in &folds {
            let mut counts = [0; 4];
            for &i in f {
                counts[labels[i] as usize] += 1;
            }
            assert_eq!(counts, [1, 1, 1, 1]);
        }
    }

    #[test]
    fn folds_partition_and_depend_on_seed() {
        let labels: Vec<u32> = (0..53).map(|i| (i * 7 % 3) as u32).collect();
        let a = stratified_kfold(&labels, 5, 1).unwrap();
        let mut all: Vec<usize> = a.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
        assert_eq!(a, stratified_kfold(&labels, 5, 1).unwrap());
        let b = stratified_kfold(&labels, 5, 2).unwrap();
        assert_ne!(a, b);
        for folds in [&a, &b] {
            for class in 0..3u32 {
                let total = labels.iter().filter(|&&l| l == class).count() as f64;
                for f in folds.iter() {
                    let c = f.iter().filter(|&&i| labels[i] == class).count() as f64;
                    assert!((c - total / 5.0).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn small_class_is_rejected() {
        let labels = [0, 0, 0, 1, 1];
        assert!(stratified_kfold(&labels, 3, 0).is_err());
    }

    #[test]
    fn patience_one_stops_on_first_worsening() {
        let mut es = EarlyStopping::new(1);
        let schedule = [0.5, 0.6, 0.7, 0.8];
        let mut stopped_at = None;
        for (i, &loss) in schedule.iter().enumerate() {
            let epoch = i + 1;
            if es.observe(epoch, loss, || format!("weights@{epoch}")) == Verdict::Stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(2));
        assert_eq!(es.best_epoch(), 1);
        assert_eq!(es.into_best().as_deref(), Some("weights@1"));
    }

    #[test]
    fn best_trace_never_increases() {
        let mut es = EarlyStopping::new(3);
        for (i, l) in [3.0, 2.0, 2.5, 1.0, 1.5, 1.2, 0.9, 4.0].into_iter().enumerate() {
            es.observe(i + 1, l, || ());
        }
        assert!(es.best_trace().windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(es.best_epoch(), 7);
    }

    #[test]
    fn lone_trailing_trial_joins_previous_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = batches(33, 16, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![16, 17]);
        let b = batches(34, 16, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![16, 16, 2]);
    }

    #[test]
    fn config_invariants() {
        TrainConfig::within().validate().unwrap();
        TrainConfig::cross().validate().unwrap();
        let mut c = TrainConfig::within();
        c.patience = c.max_epochs_cv;
        assert!(c.validate().is_err());
        c = TrainConfig::within();
        c.folds = 1;
        assert!(c.validate().is_err());
        let mut doc = KvDoc::new();
        TrainConfig::cross().write_kv(&mut doc);
        let parsed = KvDoc::parse(&doc.render()).unwrap();
        let mut r = parsed.reader();
        assert_eq!(TrainConfig::within().read_kv(&mut r).unwrap(), TrainConfig::cross());
        r.finish().unwrap();
    }

    fn tiny_problem() -> (Model, Labeled, Labeled) {
        let mut spec = SynthSpec::two_class(24, 1.0, 5);
        spec.noise_sigma = 0.1;
        let set = generate(&spec).unwrap();
        let data = Labeled::new(set, 0, Session::Train);
        let train = data.subset(&(0..16).collect::<Vec<_>>());
        let val = data.subset(&(16..24).collect::<Vec<_>>());
        let mut arch = ArchConfig::for_data(8, 125, 2);
        arch.inception_branches = vec![
            crate::model::Branch { filters: 2, kernel: 8 },
            crate::model::Branch { filters: 2, kernel: 16 },
        ];
        let model = Model::build(arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (model, train, val)
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            max_epochs_cv: 6,
            patience: 2,
            extra_epochs_max: 2,
            batch_size: 8,
            folds: 2,
            ..TrainConfig::within()
        }
    }

    #[test]
    fn returned_model_is_the_best_epoch_checkpoint() {
        let (model, train, val) = tiny_problem();
        let log = AccessLog::default();
        let cfg = quick_config();
        let fit = fit_with_early_stopping(model.clone(), &train, &val, &cfg, &mut ChaCha8Rng::seed_from_u64(9), &log).unwrap();
        assert!(fit.best_epoch >= 1 && fit.best_epoch <= fit.epochs_run);
        assert_eq!(fit.history.len(), fit.epochs_run);
        let rec = &fit.history[fit.best_epoch - 1];
        assert_eq!(rec.val_loss, fit.best_val_loss);

        // Replaying exactly `best_epoch` epochs reproduces the checkpoint.
        let replay_cfg = TrainConfig {
            max_epochs_cv: fit.best_epoch,
            patience: fit.best_epoch.max(1),
            ..cfg
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = model;
        let mut opt = Adam::new(replay_cfg.base_lr);
        for _ in 0..fit.best_epoch {
            train_epoch(&mut m, &train, &mut opt, replay_cfg.batch_size, &mut rng, &log).unwrap();
        }
        assert_eq!(m, fit.model);
    }

    #[test]
    fn empty_validation_is_rejected() {
        let (model, train, val) = tiny_problem();
        let empty = val.subset(&[]);
        let r = fit_with_early_stopping(model, &train, &empty, &quick_config(), &mut ChaCha8Rng::seed_from_u64(0), &AccessLog::default());
        assert!(matches!(r, Err(TrainError::Data(_))));
    }

    #[test]
    fn refit_contracts() {
        let (model, train, _) = tiny_problem();
        let log = AccessLog::default();
        let mut cfg = quick_config();
        cfg.extra_epochs_max = 0;
        let (same, hist, _) = refit_extra_epochs(model.clone(), &train, &cfg, 1, None, &mut ChaCha8Rng::seed_from_u64(0), &log).unwrap();
        assert_eq!(same, model);
        assert!(hist.is_empty());

        cfg.extra_epochs_max = 3;
        cfg.extra_lr = 0.0;
        let (frozen, hist, _) = refit_extra_epochs(model.clone(), &train, &cfg, 4, None, &mut ChaCha8Rng::seed_from_u64(0), &log).unwrap();
        assert_eq!(frozen.params(), model.params());
        assert_eq!(hist.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![4, 5, 6]);
        assert!(hist.iter().all(|r| r.train_loss.is_finite() && r.val_loss.is_finite() && r.phase == Phase::Extra));
    }
}
