//! Scenario steps, traces and whole-scenario runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::delta::StateDelta;
use super::engine::Engine;
use super::EngineError;
use crate::model::*;

/// A scalar as written in scenario JSON. Text of the form `name#7` or `#7`
/// refers to a live instance; any other text names an object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Text(String),
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(n) => Value::Int(*n),
            Literal::Text(s) => match s.rsplit_once('#') {
                Some((name, n)) if (name.is_empty() || Ident::is_valid(name)) && n.parse::<u64>().is_ok() => {
                    Value::Ref(InstanceId(n.parse().unwrap()))
                }
                _ => Value::Sym(s.clone()),
            },
        }
    }
}

impl From<&Value> for Literal {
    fn from(v: &Value) -> Self {
        match v {
            Value::Bool(b) => Literal::Bool(*b),
            Value::Int(n) => Literal::Int(*n),
            Value::Sym(s) => Literal::Text(s.clone()),
            Value::Ref(id) => Literal::Text(id.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertObject {
    pub name: String,
    #[serde(default)]
    pub descriptors: Vec<String>,
    #[serde(default)]
    pub properties: BTreeMap<String, Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoAction {
    pub actor: String,
    /// Event name, with or without the leading `#`.
    pub event: String,
    #[serde(default)]
    pub refinements: BTreeMap<String, Literal>,
}

impl DoAction {
    pub fn ground_event(&self) -> GroundEvent {
        let mut event = GroundEvent::new(self.event.trim_start_matches('#'));
        for (k, v) in &self.refinements {
            event.refinements.insert(k.clone(), v.to_value());
        }
        event
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Assert(AssertObject),
    Do(DoAction),
    /// A duration literal such as `1m` or `30d`.
    Advance(String),
    /// A production in source syntax, e.g. `+raining` or `-borrowing#7`.
    Produce(String),
}

impl Step {
    pub fn assert(name: &str, descriptors: &[&str], properties: &[(&str, Literal)]) -> Step {
        Step::Assert(AssertObject {
            name: name.to_string(),
            descriptors: descriptors.iter().map(|d| d.to_string()).collect(),
            properties: properties.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        })
    }

    pub fn act(actor: &str, event: &str, refinements: &[(&str, Literal)]) -> Step {
        Step::Do(DoAction {
            actor: actor.to_string(),
            event: event.to_string(),
            refinements: refinements.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        })
    }

    pub fn advance(duration: &str) -> Step {
        Step::Advance(duration.to_string())
    }

    pub fn produce(production: &str) -> Step {
        Step::Produce(production.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scenario {
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: Step,
    pub delta: StateDelta,
    pub clock: Ticks,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceError {
    /// Index of the failing step.
    pub step: usize,
    pub code: String,
    pub message: String,
}

/// The initial snapshot plus one delta per completed step. The final state
/// is obtained by [`Trace::replay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub initial: InstitutionalState,
    pub steps: Vec<TraceStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TraceError>,
}

impl Trace {
    pub fn new(initial: InstitutionalState) -> Trace {
        Trace {
            initial,
            steps: Vec::new(),
            error: None,
        }
    }

    pub fn replay(&self) -> InstitutionalState {
        let mut state = self.initial.clone();
        for s in &self.steps {
            s.delta.apply(&mut state);
        }
        state
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub state: InstitutionalState,
    pub error: Option<EngineError>,
}

impl Engine {
    pub fn apply_step(&self, state: &mut InstitutionalState, step: &Step) -> Result<StateDelta, EngineError> {
        match step {
            Step::Assert(a) => {
                let props = a.properties.iter().map(|(k, v)| (k.clone(), v.to_value())).collect();
                self.assert_object(state, &a.name, props, &a.descriptors)
            }
            Step::Do(d) => self.do_action(state, &d.actor, &d.ground_event()),
            Step::Advance(text) => {
                let d: Duration = text
                    .trim()
                    .parse()
                    .map_err(|e| EngineError::InvalidStep(format!("{e}")))?;
                self.advance_clock(state, d)
            }
            Step::Produce(text) => {
                let production = crate::parser::parse_production(text.trim())
                    .map_err(|d| EngineError::InvalidStep(d.to_string()))?;
                self.produce(state, &production)
            }
        }
    }

    /// Runs a scenario from a fresh state at t=0. Stops at the first failing
    /// step; the partial trace is kept.
    pub fn run(&self, scenario: &Scenario) -> RunOutcome {
        let mut state = match self.init_state(0) {
            Ok(s) => s,
            Err(e) => {
                let empty = InstitutionalState::empty(0);
                let mut trace = Trace::new(empty.clone());
                trace.error = Some(TraceError {
                    step: 0,
                    code: e.code().to_string(),
                    message: e.to_string(),
                });
                return RunOutcome {
                    trace,
                    state: empty,
                    error: Some(e),
                };
            }
        };
        let mut trace = Trace::new(state.clone());
        for (i, step) in scenario.steps.iter().enumerate() {
            match self.apply_step(&mut state, step) {
                Ok(delta) => trace.steps.push(TraceStep {
                    step: step.clone(),
                    delta,
                    clock: state.clock,
                }),
                Err(e) => {
                    trace.error = Some(TraceError {
                        step: i,
                        code: e.code().to_string(),
                        message: e.to_string(),
                    });
                    return RunOutcome {
                        trace,
                        state,
                        error: Some(e),
                    };
                }
            }
        }
        RunOutcome {
            trace,
            state,
            error: None,
        }
    }
}
