//! Error classes and their process exit codes.

use std::fmt;
use std::process::ExitCode;

use itnet::data::DataError;
use itnet::explain::ExplainError;
use itnet::kv::KvError;
use itnet::model::ModelError;
use itnet::stats::StatsError;
use itnet::train::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    /// Bad flags, unknown or malformed configuration keys. Exit 2.
    Usage,
    /// A file or directory could not be read or written. Exit 3.
    Io,
    /// Input files are malformed or inconsistent with each other. Exit 4.
    Data,
    /// A computation could not produce a meaningful result. Exit 5.
    Numeric,
}

impl Class {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Class::Usage => 2,
            Class::Io => 3,
            Class::Data => 4,
            Class::Numeric => 5,
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub message: String,
}

impl Failure {
    pub fn new(class: Class, message: impl Into<String>) -> Self {
        Failure { class, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Class::Usage, message)
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new(Class::Io, format!("{}: {err}", path.display()))
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Class::Data, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<KvError> for Failure {
    fn from(e: KvError) -> Self {
        Failure::usage(format!("config: {e}"))
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let class = match e {
            DataError::Io { .. } => Class::Io,
            DataError::Spec(_) => Class::Usage,
            _ => Class::Data,
        };
        Failure::new(class, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let class = match e {
            ModelError::Io { .. } => Class::Io,
            ModelError::Config(_) | ModelError::InvalidConfig(_) => Class::Usage,
            ModelError::Tensor(_) => Class::Numeric,
            _ => Class::Data,
        };
        Failure::new(class, e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::usage(e.to_string()),
            TrainError::Data(_) => Failure::data(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Epochs(d) => d.into(),
            TrainError::Tensor(_) | TrainError::Diverged(_) => Failure::new(Class::Numeric, e.to_string()),
        }
    }
}

impl From<ExplainError> for Failure {
    fn from(e: ExplainError) -> Self {
        let class = match e {
            ExplainError::Io { .. } => Class::Io,
            ExplainError::Montage { .. } => Class::Data,
            ExplainError::Savgol(_) | ExplainError::Spectrum(_) => Class::Numeric,
        };
        Failure::new(class, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        let class = match e {
            StatsError::Length(..) | StatsError::Table(_) => Class::Data,
            _ => Class::Numeric,
        };
        Failure::new(class, e.to_string())
    }
}
