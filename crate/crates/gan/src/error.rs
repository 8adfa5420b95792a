use qrm_core::CoreError;
use qrm_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid label rule: {0}")]
    LabelRule(String),
    #[error("training data has no labeled samples in band {band}")]
    NoLabeledData { band: u8 },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite {which} loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, which: &'static str },
    #[error("lattice side {actual} does not match the model side {expected}")]
    SideMismatch { expected: usize, actual: usize },
    #[error("lattice side {0} must be even and at least 4")]
    UnsupportedSide(usize),
    #[error("no test samples at g = {0}")]
    EmptyTestSet(f64),
    #[error("mode collapse: probe bond-field std {sigma:.3e} below threshold for {epochs} epochs (epoch {epoch})")]
    ModeCollapse { epoch: usize, epochs: usize, sigma: f64 },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("benchmarks are not comparable: {0}")]
    Incomparable(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = GanError> = std::result::Result<T, E>;
