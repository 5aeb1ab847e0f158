use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::engine::Engine;
use super::EngineError;
use crate::model::*;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionFilter {
    pub kind: Option<PositionKind>,
    /// Object name the holder slot must designate.
    pub holder: Option<String>,
    pub action: Option<String>,
    pub violated: Option<bool>,
}

/// A power the actor could exercise now. Refinements are shown resolved
/// against the actor where possible; open slots read `?name`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnabledAction {
    pub power: InstanceId,
    pub label: Option<String>,
    pub action: String,
    pub refinements: BTreeMap<String, String>,
}

impl fmt::Display for EnabledAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.action)?;
        if !self.refinements.is_empty() {
            let parts: Vec<String> = self.refinements.iter().map(|(k, v)| format!("{k}: {v}")).collect();
            write!(f, " {{ {} }}", parts.join(", "))?;
        }
        Ok(())
    }
}

impl Engine {
    /// Positions matching every given criterion, in id order.
    pub fn query_positions<'s>(
        &self,
        state: &'s InstitutionalState,
        filter: &PositionFilter,
    ) -> Vec<&'s PositionInstance> {
        let ctx = self.ctx(state);
        state
            .positions
            .values()
            .filter(|p| filter.kind.is_none_or(|k| p.kind == k))
            .filter(|p| filter.violated.is_none_or(|v| p.violated == v))
            .filter(|p| {
                filter.action.as_deref().is_none_or(|a| {
                    p.frame
                        .action()
                        .is_some_and(|e| e.name.as_str() == a.trim_start_matches('#'))
                })
            })
            .filter(|p| {
                let Some(name) = filter.holder.as_deref() else {
                    return true;
                };
                let Some(holder) = p.frame.holder() else { return false };
                match state.object_named(name) {
                    Some(obj) => ctx.holder_matches(holder, &p.env, obj),
                    None => p.env.get("holder") == Some(&Value::sym(name)),
                }
            })
            .collect()
    }

    pub fn enabled_actions(&self, state: &InstitutionalState, actor: &str) -> Result<Vec<EnabledAction>, EngineError> {
        let actor_id = self.resolve_actor(state, actor)?;
        let actor = &state.objects[&actor_id];
        let ctx = self.ctx(state);
        let mut out = Vec::new();
        for pos in state.positions.values() {
            let Frame::Power(p) = &pos.frame else { continue };
            if !ctx.holder_matches(&p.holder, &pos.env, actor) {
                continue;
            }
            let mut env = pos.env.clone();
            env.insert("holder".into(), Value::sym(actor.name.clone()));
            let mut refinements = BTreeMap::new();
            for (k, t) in &p.action.refinements {
                let shown = match t {
                    Term::Atom(a) if ctx.is_free(&env, a.as_str()) => format!("?{a}"),
                    _ => match ctx.eval(t, &env) {
                        Ok(Value::Ref(id)) => state
                            .positions
                            .get(&id)
                            .and_then(|p| p.label.clone())
                            .map(|l| format!("{l}{id}"))
                            .unwrap_or_else(|| id.to_string()),
                        Ok(v) => v.to_string(),
                        Err(_) => format!("?{t}"),
                    },
                };
                refinements.insert(k.to_string(), shown);
            }
            out.push(EnabledAction {
                power: pos.id,
                label: pos.label.clone(),
                action: p.action.name.to_string(),
                refinements,
            });
        }
        Ok(out)
    }
}
