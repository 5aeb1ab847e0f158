//! Scenario execution: actions, productions, reactive rules, closure and
//! violation detection over an [`InstitutionalState`](crate::model::InstitutionalState).

mod delta;
mod engine;
mod eval;
mod query;
mod scenario;

pub use delta::{DescriptorChange, DescriptorChangeKind, StateDelta};
pub use engine::Engine;
pub use query::{EnabledAction, PositionFilter};
pub use scenario::{AssertObject, DoAction, Literal, RunOutcome, Scenario, Step, Trace, TraceError, TraceStep};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Reactive firings allowed within one step.
    pub cascade_budget: usize,
    /// Closure passes before giving up.
    pub closure_passes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            cascade_budget: 10_000,
            closure_passes: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown actor `{0}`")]
    UnknownActor(String),
    #[error("cannot resolve `{0}`")]
    UnresolvablePath(String),
    #[error("reactive cascade exceeded {0} firings; the program probably produces events in a loop")]
    CascadeLimit(usize),
    #[error("closure did not reach a fixpoint within {0} passes")]
    ClosureDivergence(usize),
    #[error("arithmetic overflow")]
    Overflow,
    #[error("no such instance: {0}")]
    MissingTarget(String),
    #[error("{0}")]
    Evaluation(String),
    #[error("invalid step: {0}")]
    InvalidStep(String),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownActor(_) => "unknown-actor",
            EngineError::UnresolvablePath(_) => "unresolvable-path",
            EngineError::CascadeLimit(_) => "cascade-limit",
            EngineError::ClosureDivergence(_) => "closure-divergence",
            EngineError::Overflow => "arithmetic-overflow",
            EngineError::MissingTarget(_) => "missing-target",
            EngineError::Evaluation(_) => "evaluation",
            EngineError::InvalidStep(_) => "invalid-step",
        }
    }
}
