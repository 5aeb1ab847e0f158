use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Engine-assigned identity of an object, position or compound instance.
/// Ids are allocated from one sequential counter per state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Runtime value of a term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    /// A named object (objects are identified by name).
    Sym(String),
    Int(i64),
    Bool(bool),
    /// A position or compound instance.
    Ref(InstanceId),
}

impl Value {
    pub fn sym(name: impl Into<String>) -> Value {
        Value::Sym(name.into())
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Value::Sym(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Sym(s) => f.write_str(s),
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Ref(id) => write!(f, "{id}"),
        }
    }
}

/// Name bindings captured by a position, rule scope or compound instance.
pub type Bindings = BTreeMap<String, Value>;
