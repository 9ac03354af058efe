use std::path::PathBuf;

use discharge_core::cluster::ClusterError;
use discharge_core::ingest::IngestError;
use discharge_core::mdp::MdpError;
use discharge_core::ope::OpeError;
use discharge_core::policies::PolicyError;
use discharge_core::synth::SynthError;
use discharge_core::transitions::TransitionError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) | Self::Io { .. } => 3,
            Self::Numeric(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::NonFinite => Self::Numeric(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<TransitionError> for CliError {
    fn from(e: TransitionError) -> Self {
        match e {
            TransitionError::TooFewSimulations(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<MdpError> for CliError {
    fn from(e: MdpError) -> Self {
        match e {
            MdpError::InvalidDiscount(_) | MdpError::InvalidTolerance(_) | MdpError::NonFiniteCost => {
                Self::Config(e.to_string())
            }
            MdpError::DimensionMismatch { .. } => Self::Data(e.to_string()),
            _ => Self::Numeric(e.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::InvalidGamma(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<OpeError> for CliError {
    fn from(e: OpeError) -> Self {
        match e {
            OpeError::InvalidConfig(_) => Self::Config(e.to_string()),
            OpeError::Mdp(m) => m.into(),
            OpeError::Policy(p) => p.into(),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        Self::Config(e.to_string())
    }
}
