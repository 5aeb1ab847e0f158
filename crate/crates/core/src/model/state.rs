//! Runtime data model: the institutional state a scenario evolves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Frame, Polarity};
use super::time::Ticks;
use super::value::{Bindings, InstanceId, Value};

/// Identifies a rule: a top-level declaration index, or a member index inside
/// the compound instance given by `scope`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleRef {
    pub scope: Option<InstanceId>,
    pub index: usize,
}

impl fmt::Display for RuleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scope {
            Some(scope) => write!(f, "{scope}/rule {}", self.index),
            None => write!(f, "rule {}", self.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Asserted,
    Derived { rules: BTreeSet<RuleRef> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectOrigin {
    Asserted,
    Produced,
    Derived { rules: BTreeSet<RuleRef> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: InstanceId,
    pub name: String,
    pub properties: BTreeMap<String, Value>,
    /// Descriptors the object carries, each with how it was obtained.
    pub descriptors: BTreeMap<String, Provenance>,
    pub origin: ObjectOrigin,
}

impl ObjectInstance {
    pub fn has_descriptor(&self, descriptor: &str) -> bool {
        self.descriptors.contains_key(descriptor)
    }

    /// Whether `name` designates this object, either by name or by descriptor.
    pub fn answers_to(&self, name: &str) -> bool {
        self.name == name || self.has_descriptor(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionKind {
    Power,
    Duty,
    Other,
}

impl PositionKind {
    pub fn of(frame: &Frame) -> PositionKind {
        match frame {
            Frame::Power(_) => PositionKind::Power,
            Frame::Duty(_) => PositionKind::Duty,
            Frame::Other(_) => PositionKind::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PositionKind::Power => "power",
            PositionKind::Duty => "duty",
            PositionKind::Other => "other",
        }
    }
}

impl std::str::FromStr for PositionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power" => Ok(PositionKind::Power),
            "duty" => Ok(PositionKind::Duty),
            "other" => Ok(PositionKind::Other),
            _ => Err(format!("unknown position kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionOrigin {
    /// Unconditional top-level frame.
    Static,
    /// Holds while the condition of `rule` holds.
    Derived { rule: RuleRef },
    /// Created by the production event with this sequence number.
    Produced { event: u64 },
    /// Member of a live compound instance.
    CompoundMember { compound: InstanceId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionInstance {
    pub id: InstanceId,
    pub kind: PositionKind,
    pub label: Option<String>,
    #[serde(with = "frame_text")]
    pub frame: Frame,
    /// Bindings in force where the position was created (compound parameters,
    /// member labels, captured action variables).
    pub env: Bindings,
    pub origin: PositionOrigin,
    pub violated: bool,
}

impl PositionInstance {
    /// `d1` for labeled positions, `duty#5` otherwise.
    pub fn display_name(&self) -> String {
        match &self.label {
            Some(label) => label.clone(),
            None => format!("{}#{}", self.frame.keyword(), self.id.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompoundInstance {
    pub id: InstanceId,
    pub decl: String,
    /// Parameter bindings in declaration order.
    pub args: Vec<(String, Value)>,
    /// Member frame labels to the positions created for them.
    pub labels: BTreeMap<String, InstanceId>,
    /// Live member positions.
    pub members: Vec<InstanceId>,
}

impl CompoundInstance {
    pub fn bindings(&self) -> Bindings {
        let mut env: Bindings = self.args.iter().cloned().collect();
        for (label, id) in &self.labels {
            env.insert(label.clone(), Value::Ref(*id));
        }
        env
    }

    pub fn arg_values(&self) -> impl Iterator<Item = &Value> {
        self.args.iter().map(|(_, v)| v)
    }
}

impl fmt::Display for CompoundInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.decl)?;
        for (i, v) in self.arg_values().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// An action occurrence with ground refinements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundEvent {
    pub name: String,
    pub refinements: BTreeMap<String, Value>,
}

impl GroundEvent {
    pub fn new(name: impl Into<String>) -> Self {
        GroundEvent {
            name: name.into(),
            refinements: BTreeMap::new(),
        }
    }

    pub fn with(mut self, field: &str, value: Value) -> Self {
        self.refinements.insert(field.to_string(), value);
        self
    }
}

impl fmt::Display for GroundEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.name)?;
        if !self.refinements.is_empty() {
            f.write_str(" { ")?;
            for (i, (k, v)) in self.refinements.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{k}: {v}")?;
            }
            f.write_str(" }")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProducedTarget {
    Object {
        name: String,
    },
    Compound {
        id: InstanceId,
        decl: String,
        args: Vec<Value>,
    },
    Position {
        id: InstanceId,
        kind: PositionKind,
    },
    /// A boolean flag on an object or instance, e.g. a duty's `violation`.
    Flag {
        owner: Value,
        flag: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundProduction {
    pub polarity: Polarity,
    pub target: ProducedTarget,
    /// Human-readable form, e.g. `+d1.violation`.
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occurrence {
    Action(GroundEvent),
    Production(GroundProduction),
}

impl fmt::Display for Occurrence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Occurrence::Action(e) => write!(f, "{e}"),
            Occurrence::Production(p) => f.write_str(&p.rendered),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventProvenance {
    External,
    Reactive { rule: RuleRef },
    Consequence { power: InstanceId },
    Violation { duty: InstanceId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOccurrence {
    pub seq: u64,
    pub at: Ticks,
    pub actor: Option<InstanceId>,
    pub event: Occurrence,
    pub provenance: EventProvenance,
    /// Set for actions that no power enabled and no duty matched.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disabled: bool,
}

/// Everything a scenario has established at one point in simulated time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstitutionalState {
    pub clock: Ticks,
    pub next_id: u64,
    /// Top-level frame labels.
    pub globals: Bindings,
    pub objects: BTreeMap<InstanceId, ObjectInstance>,
    pub positions: BTreeMap<InstanceId, PositionInstance>,
    pub compounds: BTreeMap<InstanceId, CompoundInstance>,
    pub event_log: Vec<EventOccurrence>,
}

impl InstitutionalState {
    pub fn empty(clock: Ticks) -> Self {
        InstitutionalState {
            clock,
            next_id: 1,
            ..Default::default()
        }
    }

    pub fn alloc_id(&mut self) -> InstanceId {
        let id = InstanceId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn object_named(&self, name: &str) -> Option<&ObjectInstance> {
        self.objects.values().find(|o| o.name == name)
    }

    pub fn object_named_mut(&mut self, name: &str) -> Option<&mut ObjectInstance> {
        self.objects.values_mut().find(|o| o.name == name)
    }

    pub fn contains(&self, id: InstanceId) -> bool {
        self.objects.contains_key(&id) || self.positions.contains_key(&id) || self.compounds.contains_key(&id)
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.positions.is_empty() && self.compounds.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes")
    }
}

/// Positions serialize their frame as DPCL source text.
mod frame_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::ast::Frame;

    pub fn serialize<S: Serializer>(frame: &Frame, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::model::pretty::frame_to_string(frame))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Frame, D::Error> {
        let text = String::deserialize(d)?;
        crate::parser::parse_frame(&text).map_err(|diags| serde::de::Error::custom(diags.to_string()))
    }
}
