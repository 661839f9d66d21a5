//! Configuration files merged with command-line overrides.
//!
//! A file holds `arch.*`, `train.*` and `synth.*` keys. Every command parses
//! every section, so a typo anywhere is rejected even if the command does
//! not use that section. Flags are written into the document before parsing
//! and therefore win over the file.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use itnet::data::SynthSpec;
use itnet::kv::{KvDoc, KvError};
use itnet::model::{ArchConfig, DROPOUT_CROSS, DROPOUT_WITHIN};
use itnet::train::{Scenario, TrainConfig};

use crate::failure::Failure;

pub fn load_doc(path: Option<&Path>) -> Result<KvDoc, Failure> {
    let Some(path) = path else {
        return Ok(KvDoc::new());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    KvDoc::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Sets `key` when the flag was given.
pub fn override_with<T: Display>(doc: &mut KvDoc, key: &str, flag: Option<T>) {
    if let Some(v) = flag {
        doc.set(key, v);
    }
}

/// Sections resolved from one document.
pub struct Resolved {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
}

/// Defaults that depend on the command before any key is applied.
pub struct Defaults {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
}

impl Defaults {
    pub fn standalone() -> Self {
        Defaults {
            arch: ArchConfig::default(),
            train: TrainConfig::within(),
            synth: default_synth(),
        }
    }

    /// Dropout and schedule defaults follow the scenario.
    pub fn for_scenario(scenario: Scenario, arch: ArchConfig) -> Self {
        let (dropout_rate, train) = match scenario {
            Scenario::Within => (DROPOUT_WITHIN, TrainConfig::within()),
            Scenario::Cross | Scenario::CrossFinetuned => (DROPOUT_CROSS, TrainConfig::cross()),
        };
        Defaults {
            arch: ArchConfig { dropout_rate, ..arch },
            train,
            synth: default_synth(),
        }
    }
}

/// Two classes, 8 electrodes, 200 trials of 2 s.
pub fn default_synth() -> SynthSpec {
    SynthSpec::two_class(200, 2.0, 0)
}

pub fn resolve(doc: &KvDoc, defaults: Defaults) -> Result<Resolved, Failure> {
    let mut r = doc.reader();
    let arch = defaults.arch.read_kv(&mut r)?;
    let train = defaults.train.read_kv(&mut r)?;
    let synth = defaults.synth.read_kv(&mut r)?;
    r.finish().map_err(|e| match e {
        KvError::Unknown(keys) => Failure::usage(format!("unknown configuration key(s): {}", keys.join(", "))),
        other => other.into(),
    })?;
    Ok(Resolved { arch, train, synth })
}
