use std::fmt;

/// Processing stage of the multiband pipeline, used to label propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Per-subsystem sparse recovery.
    Coarse,
    /// Anchor selection, offset estimation and compensation.
    Coherence,
    /// Focused-grid fusion over all subbands.
    Fusion,
    /// Temporal aggregation over a window of slots.
    Aggregation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Coarse => "coarse estimation",
            Stage::Coherence => "coherence",
            Stage::Fusion => "fusion",
            Stage::Aggregation => "aggregation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid frequency plan: {0}")]
    InvalidPlan(String),

    #[error("invalid delay grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no anchor path")]
    NoAnchor,

    #[error("slice belongs to subsystem {got}, solution is for subsystem {expected}")]
    SubsystemMismatch { expected: usize, got: usize },

    #[error("missing slice for subsystem {subsystem}, subband {subband}")]
    MissingSubband { subsystem: usize, subband: usize },

    #[error("slices come from different slots ({first} and {other})")]
    InconsistentSlots { first: usize, other: usize },

    #[error("delay grids differ across the aggregation window")]
    GridMismatch,

    #[error("unknown subsystem id {0}")]
    UnknownSubsystem(usize),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("{stage} failed{}: {source}", subsystem.map(|id| format!(" for subsystem {id}")).unwrap_or_default())]
    Stage {
        stage: Stage,
        subsystem: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage, subsystem: Option<usize>) -> Self {
        Error::Stage {
            stage,
            subsystem,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
