//! Term evaluation, holder matching and refinement matching against a state.

use std::cmp::Ordering;

use super::EngineError;
use crate::model::*;

/// Read-only view used to evaluate terms.
pub(crate) struct Ctx<'a> {
    pub program: &'a Program,
    pub state: &'a InstitutionalState,
}

fn is_compound(program: &Program, name: &str) -> bool {
    program.compound(name).is_some()
}

impl<'a> Ctx<'a> {
    pub fn new(program: &'a Program, state: &'a InstitutionalState) -> Self {
        Ctx { program, state }
    }

    pub fn lookup(&self, env: &Bindings, name: &str) -> Option<Value> {
        env.get(name).or_else(|| self.state.globals.get(name)).cloned()
    }

    /// An atom is a pattern variable when it names nothing: no binding, no
    /// live object and no declared compound.
    pub fn is_free(&self, env: &Bindings, name: &str) -> bool {
        self.lookup(env, name).is_none() && self.state.object_named(name).is_none() && !is_compound(self.program, name)
    }

    pub fn eval(&self, term: &Term, env: &Bindings) -> Result<Value, EngineError> {
        match term {
            Term::Atom(a) => Ok(self.lookup(env, a.as_str()).unwrap_or_else(|| Value::sym(a.as_str()))),
            Term::Path(segs) => {
                let head = segs[0].as_str();
                let mut value = match self.lookup(env, head) {
                    Some(v) => v,
                    None if self.state.object_named(head).is_some() => Value::sym(head),
                    None => return Err(EngineError::UnresolvablePath(term.to_string())),
                };
                for seg in &segs[1..] {
                    value = self
                        .field(&value, seg.as_str())
                        .ok_or_else(|| EngineError::UnresolvablePath(term.to_string()))?;
                }
                Ok(value)
            }
            Term::Call { name, args } => {
                let values = args.iter().map(|a| self.eval(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.find_compound(name.as_str(), &values)
                    .map(Value::Ref)
                    .ok_or_else(|| EngineError::Evaluation(format!("no live instance of `{term}`")))
            }
            Term::Object { head, fields } => {
                if let Some(decl) = self.program.compound(head.as_str()) {
                    let values = decl
                        .params
                        .iter()
                        .map(|p| match fields.get(p) {
                            Some(t) => self.eval(t, env),
                            None => Err(EngineError::Evaluation(format!("missing argument `{p}`"))),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    self.find_compound(head.as_str(), &values)
                        .map(Value::Ref)
                        .ok_or_else(|| EngineError::Evaluation(format!("no live instance of `{head}`")))
                } else {
                    Ok(Value::sym(head.as_str()))
                }
            }
            Term::Alternation(_) => Err(EngineError::Evaluation(format!("`{term}` has no single value"))),
            Term::Now => Ok(Value::Int(self.state.clock)),
            Term::Duration(d) => Ok(Value::Int(d.to_ticks().map_err(|_| EngineError::Overflow)?)),
            Term::Int(n) => Ok(Value::Int(*n)),
            Term::Compare { lhs, op, rhs } => {
                let l = self.eval(lhs, env)?;
                let r = self.eval(rhs, env)?;
                Ok(Value::Bool(compare(&l, *op, &r)?))
            }
            Term::Arith { lhs, op, rhs } => {
                let l = self.eval(lhs, env)?;
                let r = self.eval(rhs, env)?;
                match (l, r) {
                    (Value::Int(a), Value::Int(b)) => {
                        let v = match op {
                            ArithOp::Add => a.checked_add(b),
                            ArithOp::Sub => a.checked_sub(b),
                        };
                        v.map(Value::Int).ok_or(EngineError::Overflow)
                    }
                    (l, r) => Err(EngineError::Evaluation(format!(
                        "cannot compute `{l} {} {r}`",
                        op.symbol()
                    ))),
                }
            }
            Term::Qualify { subject, descriptor } => {
                let v = self.eval(subject, env)?;
                Ok(Value::Bool(self.has_descriptor(&v, descriptor.as_str())))
            }
            Term::Ref { id, .. } => {
                let id = InstanceId(*id);
                if self.state.contains(id) {
                    Ok(Value::Ref(id))
                } else {
                    Err(EngineError::MissingTarget(term.to_string()))
                }
            }
        }
    }

    fn has_descriptor(&self, value: &Value, descriptor: &str) -> bool {
        match value {
            Value::Sym(name) => self
                .state
                .object_named(name)
                .is_some_and(|o| o.has_descriptor(descriptor)),
            _ => false,
        }
    }

    /// Field access through objects, positions and compound instances.
    pub fn field(&self, owner: &Value, field: &str) -> Option<Value> {
        match owner {
            Value::Sym(name) => self.state.object_named(name)?.properties.get(field).cloned(),
            Value::Ref(id) => {
                if let Some(pos) = self.state.positions.get(id) {
                    let term = match (&pos.frame, field) {
                        (_, "violation") => return Some(Value::Bool(pos.violated)),
                        (Frame::Power(p), "holder") => &p.holder,
                        (Frame::Duty(d), "holder") => &d.holder,
                        (Frame::Duty(d), "counterparty") => &d.counterparty,
                        _ => return None,
                    };
                    let mut env = pos.env.clone();
                    env.remove("holder");
                    env.remove("counterparty");
                    return pos.env.get(field).cloned().or_else(|| self.eval(term, &env).ok());
                }
                let c = self.state.compounds.get(id)?;
                c.args
                    .iter()
                    .find(|(k, _)| k == field)
                    .map(|(_, v)| v.clone())
                    .or_else(|| c.labels.get(field).map(|id| Value::Ref(*id)))
            }
            _ => None,
        }
    }

    pub fn find_compound(&self, decl: &str, args: &[Value]) -> Option<InstanceId> {
        self.state
            .compounds
            .values()
            .find(|c| c.decl == decl && c.args.len() == args.len() && c.arg_values().zip(args).all(|(a, b)| a == b))
            .map(|c| c.id)
    }

    pub fn truthy(&self, value: &Value) -> bool {
        match value {
            Value::Bool(b) => *b,
            Value::Int(n) => *n != 0,
            Value::Sym(name) => {
                self.state.object_named(name).is_some() || self.state.compounds.values().any(|c| c.decl == *name)
            }
            Value::Ref(id) => self.state.contains(*id),
        }
    }

    /// Whether a condition holds in the current state.
    pub fn truth(&self, term: &Term, env: &Bindings) -> Result<bool, EngineError> {
        match term {
            Term::Atom(a) => match self.lookup(env, a.as_str()) {
                Some(v) => Ok(self.truthy(&v)),
                None => Ok(self.truthy(&Value::sym(a.as_str()))),
            },
            Term::Call { .. } => Ok(self.eval(term, env).is_ok()),
            Term::Object { head, fields } => {
                if is_compound(self.program, head.as_str()) {
                    return Ok(self.eval(term, env).is_ok());
                }
                let Some(obj) = self.state.object_named(head.as_str()) else {
                    return Ok(false);
                };
                for (k, t) in fields {
                    let v = self.eval(t, env)?;
                    if obj.properties.get(k.as_str()) != Some(&v) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Term::Alternation(branches) => {
                for b in branches {
                    if self.truth(b, env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            _ => {
                let v = self.eval(term, env)?;
                Ok(self.truthy(&v))
            }
        }
    }

    /// Whether `actor` fills the holder slot described by `pattern`.
    pub fn holder_matches(&self, pattern: &Term, env: &Bindings, actor: &ObjectInstance) -> bool {
        match pattern {
            Term::Alternation(branches) => branches.iter().any(|b| self.holder_matches(b, env, actor)),
            Term::Atom(a) => match self.lookup(env, a.as_str()) {
                Some(v) => value_designates(&v, actor),
                None => actor.answers_to(a.as_str()),
            },
            other => match self.eval(other, env) {
                Ok(v) => value_designates(&v, actor),
                Err(_) => false,
            },
        }
    }

    /// Matches an event pattern against a ground event. Unbound atoms in the
    /// pattern capture the event's value. Returns the captured bindings, or
    /// `None` when the event does not match.
    pub fn match_event(
        &self,
        pattern: &EventRef,
        env: &Bindings,
        event: &GroundEvent,
    ) -> Result<Option<Bindings>, EngineError> {
        if pattern.name.as_str() != event.name {
            return Ok(None);
        }
        let mut captures = Bindings::new();
        for (field, term) in &pattern.refinements {
            let Some(actual) = event.refinements.get(field.as_str()) else {
                return Ok(None);
            };
            if let Term::Atom(a) = term {
                if self.is_free(env, a.as_str()) {
                    match captures.get(a.as_str()) {
                        Some(prev) if prev != actual => return Ok(None),
                        _ => {
                            captures.insert(a.to_string(), actual.clone());
                            continue;
                        }
                    }
                }
            }
            let mut scope = env.clone();
            scope.extend(captures.clone());
            let expected = self.eval(term, &scope)?;
            if !self.values_match(&expected, actual) {
                return Ok(None);
            }
        }
        Ok(Some(captures))
    }

    /// Equality, except that a position reference also matches its label.
    pub fn values_match(&self, expected: &Value, actual: &Value) -> bool {
        if expected == actual {
            return true;
        }
        let label_of = |id: &InstanceId| self.state.positions.get(id).and_then(|p| p.label.clone());
        match (expected, actual) {
            (Value::Ref(id), Value::Sym(s)) | (Value::Sym(s), Value::Ref(id)) => label_of(id).as_deref() == Some(s),
            _ => false,
        }
    }
}

fn value_designates(value: &Value, actor: &ObjectInstance) -> bool {
    match value {
        Value::Sym(s) => actor.answers_to(s),
        _ => false,
    }
}

fn compare(l: &Value, op: CmpOp, r: &Value) -> Result<bool, EngineError> {
    let ord = match (l, r) {
        (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
        _ => None,
    };
    match op {
        CmpOp::Eq => Ok(l == r),
        CmpOp::Ne => Ok(l != r),
        _ => {
            let Some(ord) = ord else {
                return Err(EngineError::Evaluation(format!("cannot order `{l}` and `{r}`")));
            };
            Ok(match op {
                CmpOp::Gt => ord == Ordering::Greater,
                CmpOp::Ge => ord != Ordering::Less,
                CmpOp::Lt => ord == Ordering::Less,
                CmpOp::Le => ord != Ordering::Greater,
                CmpOp::Eq | CmpOp::Ne => unreachable!(),
            })
        }
    }
}
