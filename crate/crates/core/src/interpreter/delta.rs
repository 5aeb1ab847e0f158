use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorChangeKind {
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorChange {
    pub object: InstanceId,
    pub name: String,
    pub descriptor: String,
    pub change: DescriptorChangeKind,
}

/// Difference between two states. Records are stored whole, so applying a
/// delta to its pre-state reproduces the post-state exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateDelta {
    pub clock_before: Ticks,
    pub clock_after: Ticks,
    pub next_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub globals: Option<Bindings>,
    pub objects_created: Vec<ObjectInstance>,
    pub objects_updated: Vec<ObjectInstance>,
    pub objects_removed: Vec<InstanceId>,
    pub descriptor_changes: Vec<DescriptorChange>,
    pub positions_created: Vec<PositionInstance>,
    pub positions_updated: Vec<PositionInstance>,
    pub positions_removed: Vec<InstanceId>,
    pub violations_raised: Vec<InstanceId>,
    pub compounds_created: Vec<CompoundInstance>,
    pub compounds_updated: Vec<CompoundInstance>,
    pub compounds_removed: Vec<InstanceId>,
    pub events: Vec<EventOccurrence>,
    /// The external action matched no power and no duty.
    #[serde(default)]
    pub disabled: bool,
}

fn diff_map<T: Clone + PartialEq>(
    pre: &BTreeMap<InstanceId, T>,
    post: &BTreeMap<InstanceId, T>,
) -> (Vec<T>, Vec<T>, Vec<InstanceId>) {
    let mut created = Vec::new();
    let mut updated = Vec::new();
    for (id, v) in post {
        match pre.get(id) {
            None => created.push(v.clone()),
            Some(old) if old != v => updated.push(v.clone()),
            Some(_) => {}
        }
    }
    let removed = pre.keys().filter(|id| !post.contains_key(id)).copied().collect();
    (created, updated, removed)
}

impl StateDelta {
    pub fn between(pre: &InstitutionalState, post: &InstitutionalState) -> StateDelta {
        let (objects_created, objects_updated, objects_removed) = diff_map(&pre.objects, &post.objects);
        let (positions_created, positions_updated, positions_removed) = diff_map(&pre.positions, &post.positions);
        let (compounds_created, compounds_updated, compounds_removed) = diff_map(&pre.compounds, &post.compounds);

        let mut descriptor_changes = Vec::new();
        for (id, obj) in &post.objects {
            let before = pre.objects.get(id).map(|o| &o.descriptors);
            for d in obj.descriptors.keys() {
                if !before.is_some_and(|b| b.contains_key(d)) {
                    descriptor_changes.push(DescriptorChange {
                        object: *id,
                        name: obj.name.clone(),
                        descriptor: d.clone(),
                        change: DescriptorChangeKind::Added,
                    });
                }
            }
            if let Some(before) = before {
                for d in before.keys().filter(|d| !obj.descriptors.contains_key(*d)) {
                    descriptor_changes.push(DescriptorChange {
                        object: *id,
                        name: obj.name.clone(),
                        descriptor: d.clone(),
                        change: DescriptorChangeKind::Removed,
                    });
                }
            }
        }

        let violations_raised = post
            .positions
            .values()
            .filter(|p| p.violated && !pre.positions.get(&p.id).is_some_and(|old| old.violated))
            .map(|p| p.id)
            .collect();

        StateDelta {
            clock_before: pre.clock,
            clock_after: post.clock,
            next_id: post.next_id,
            globals: (pre.globals != post.globals).then(|| post.globals.clone()),
            objects_created,
            objects_updated,
            objects_removed,
            descriptor_changes,
            positions_created,
            positions_updated,
            positions_removed,
            violations_raised,
            compounds_created,
            compounds_updated,
            compounds_removed,
            events: post.event_log[pre.event_log.len().min(post.event_log.len())..].to_vec(),
            disabled: false,
        }
    }

    pub fn apply(&self, state: &mut InstitutionalState) {
        state.clock = self.clock_after;
        state.next_id = self.next_id;
        if let Some(g) = &self.globals {
            state.globals = g.clone();
        }
        for id in &self.objects_removed {
            state.objects.remove(id);
        }
        for o in self.objects_created.iter().chain(&self.objects_updated) {
            state.objects.insert(o.id, o.clone());
        }
        for id in &self.positions_removed {
            state.positions.remove(id);
        }
        for p in self.positions_created.iter().chain(&self.positions_updated) {
            state.positions.insert(p.id, p.clone());
        }
        for id in &self.compounds_removed {
            state.compounds.remove(id);
        }
        for c in self.compounds_created.iter().chain(&self.compounds_updated) {
            state.compounds.insert(c.id, c.clone());
        }
        state.event_log.extend(self.events.iter().cloned());
    }

    /// True when nothing but possibly the id counter changed.
    pub fn is_empty(&self) -> bool {
        self.clock_before == self.clock_after
            && self.globals.is_none()
            && self.objects_created.is_empty()
            && self.objects_updated.is_empty()
            && self.objects_removed.is_empty()
            && self.positions_created.is_empty()
            && self.positions_updated.is_empty()
            && self.positions_removed.is_empty()
            && self.compounds_created.is_empty()
            && self.compounds_updated.is_empty()
            && self.compounds_removed.is_empty()
            && self.events.is_empty()
    }
}

fn position_summary(p: &PositionInstance) -> String {
    let mut s = match &p.label {
        Some(label) => format!("{} {label} {}", p.kind.as_str(), p.id),
        None => format!("{} {}", p.kind.as_str(), p.id),
    };
    if let Some(action) = p.frame.action() {
        s.push_str(&format!(" (#{})", action.name));
    }
    if let Some(Value::Sym(holder)) = p.env.get("holder") {
        s.push_str(&format!(" held by {holder}"));
    }
    s
}

/// One line per change, e.g. `d1 violated`.
impl fmt::Display for StateDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut lines: Vec<String> = Vec::new();
        if self.clock_before != self.clock_after {
            lines.push(format!("clock {} -> {}", self.clock_before, self.clock_after));
        }
        for e in &self.events {
            let mut line = format!("event {}", e.event);
            if e.disabled {
                line.push_str(" (disabled: no power or duty matched)");
            }
            lines.push(line);
        }
        for o in &self.objects_created {
            lines.push(format!("+ object {}", o.name));
        }
        for id in &self.objects_removed {
            lines.push(format!("- object {id}"));
        }
        for c in &self.descriptor_changes {
            lines.push(match c.change {
                DescriptorChangeKind::Added => format!("{} in {}", c.name, c.descriptor),
                DescriptorChangeKind::Removed => format!("{} no longer in {}", c.name, c.descriptor),
            });
        }
        for c in &self.compounds_created {
            lines.push(format!("+ {c} {}", c.id));
        }
        for id in &self.compounds_removed {
            lines.push(format!("- compound {id}"));
        }
        for p in &self.positions_created {
            lines.push(format!("+ {}", position_summary(p)));
        }
        for id in &self.positions_removed {
            lines.push(format!("- position {id}"));
        }
        for id in &self.violations_raised {
            let name = self
                .positions_updated
                .iter()
                .chain(&self.positions_created)
                .find(|p| p.id == *id)
                .map(|p| p.display_name())
                .unwrap_or_else(|| id.to_string());
            lines.push(format!("{name} violated"));
        }
        if lines.is_empty() {
            return f.write_str("no change");
        }
        f.write_str(&lines.join("\n"))
    }
}
