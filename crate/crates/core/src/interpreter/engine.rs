use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::delta::StateDelta;
use super::eval::Ctx;
use super::{EngineError, Limits};
use crate::model::*;

/// Executes scenarios against one validated program.
///
/// Every operation works on a copy of the state and only writes it back when
/// the whole step succeeded, so a failed step leaves the state untouched.
#[derive(Debug, Clone)]
pub struct Engine {
    program: Program,
    limits: Limits,
}

/// A production target with every argument evaluated.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub(crate) enum Resolved {
    Object {
        name: String,
        properties: BTreeMap<String, Value>,
    },
    Compound {
        decl: String,
        args: Vec<(String, Value)>,
    },
    Frame {
        frame: Frame,
        env: Bindings,
    },
    Flag {
        owner: Value,
        flag: String,
    },
    Instance(InstanceId),
}

#[allow(clippy::large_enum_variant)]
pub(crate) enum Pending {
    Production {
        polarity: Polarity,
        target: Resolved,
        provenance: EventProvenance,
        actor: Option<InstanceId>,
    },
    Action {
        actor: InstanceId,
        event: GroundEvent,
        provenance: EventProvenance,
    },
}

/// A rule together with the bindings of the scope it lives in.
pub(crate) struct RuleSite<'p> {
    pub rule_ref: RuleRef,
    pub rule: &'p Rule,
    pub env: Bindings,
}

pub(crate) struct Txn<'e> {
    pub engine: &'e Engine,
    pub state: InstitutionalState,
    queue: VecDeque<Pending>,
    firings: usize,
    pub disabled: bool,
}

impl Engine {
    /// The program should have passed [`crate::parser::validate`].
    pub fn new(program: Program) -> Engine {
        Engine {
            program,
            limits: Limits::default(),
        }
    }

    pub fn with_limits(program: Program, limits: Limits) -> Engine {
        Engine { program, limits }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub(crate) fn ctx<'a>(&'a self, state: &'a InstitutionalState) -> Ctx<'a> {
        Ctx::new(&self.program, state)
    }

    /// Instantiates every top-level frame and computes the closure.
    pub fn init_state(&self, at: Ticks) -> Result<InstitutionalState, EngineError> {
        let mut txn = Txn::new(self, InstitutionalState::empty(at));
        let frames: Vec<(InstanceId, &Frame)> = self
            .program
            .declarations
            .iter()
            .filter_map(|d| match d {
                Declaration::Frame(f) => Some(f),
                _ => None,
            })
            .map(|f| (txn.state.alloc_id(), f))
            .collect();
        for (id, f) in &frames {
            if let Some(label) = f.label() {
                txn.state.globals.insert(label.to_string(), Value::Ref(*id));
            }
        }
        for (id, f) in frames {
            txn.create_position(id, f.clone(), &Bindings::new(), PositionOrigin::Static);
        }
        txn.closure()?;
        Ok(txn.state)
    }

    fn commit(
        &self,
        state: &mut InstitutionalState,
        f: impl FnOnce(&mut Txn<'_>) -> Result<(), EngineError>,
    ) -> Result<StateDelta, EngineError> {
        let mut txn = Txn::new(self, state.clone());
        f(&mut txn)?;
        let mut delta = StateDelta::between(state, &txn.state);
        delta.disabled = txn.disabled;
        *state = txn.state;
        Ok(delta)
    }

    /// Looks up an actor by object name, `#id` or `name#id`.
    pub fn resolve_actor(&self, state: &InstitutionalState, actor: &str) -> Result<InstanceId, EngineError> {
        let by_id = actor
            .rsplit_once('#')
            .and_then(|(_, n)| n.parse::<u64>().ok())
            .map(InstanceId)
            .filter(|id| state.objects.contains_key(id));
        by_id
            .or_else(|| state.object_named(actor).map(|o| o.id))
            .ok_or_else(|| EngineError::UnknownActor(actor.to_string()))
    }

    /// Creates the object if needed, then sets the given properties and adds
    /// the given descriptors as asserted.
    pub fn assert_object(
        &self,
        state: &mut InstitutionalState,
        name: &str,
        properties: BTreeMap<String, Value>,
        descriptors: &[String],
    ) -> Result<StateDelta, EngineError> {
        if !Ident::is_valid(name) {
            return Err(EngineError::InvalidStep(format!("`{name}` is not a valid object name")));
        }
        self.commit(state, |txn| {
            let id = match txn.state.object_named(name) {
                Some(o) => o.id,
                None => {
                    let id = txn.state.alloc_id();
                    txn.state.objects.insert(
                        id,
                        ObjectInstance {
                            id,
                            name: name.to_string(),
                            properties: BTreeMap::new(),
                            descriptors: BTreeMap::new(),
                            origin: ObjectOrigin::Asserted,
                        },
                    );
                    id
                }
            };
            let obj = txn.state.objects.get_mut(&id).expect("just ensured");
            obj.origin = ObjectOrigin::Asserted;
            obj.properties.extend(properties);
            for d in descriptors {
                obj.descriptors.insert(d.clone(), Provenance::Asserted);
            }
            txn.settle()
        })
    }

    /// Performs an external action. Matching powers apply their consequences,
    /// matching duties are discharged, and reactive rules fire until quiet.
    pub fn do_action(
        &self,
        state: &mut InstitutionalState,
        actor: &str,
        event: &GroundEvent,
    ) -> Result<StateDelta, EngineError> {
        let actor = self.resolve_actor(state, actor)?;
        self.commit(state, |txn| {
            let enabled = txn.perform(actor, event.clone(), EventProvenance::External)?;
            txn.disabled = !enabled;
            txn.settle()
        })
    }

    /// Grounds refinements written as terms (`holder.id_card`, `d1#5`).
    pub fn ground_event(&self, state: &InstitutionalState, event: &EventRef) -> Result<GroundEvent, EngineError> {
        let ctx = self.ctx(state);
        let mut ground = GroundEvent::new(event.name.as_str());
        for (k, t) in &event.refinements {
            ground.refinements.insert(k.to_string(), ctx.eval(t, &Bindings::new())?);
        }
        Ok(ground)
    }

    pub fn advance_clock(&self, state: &mut InstitutionalState, by: Duration) -> Result<StateDelta, EngineError> {
        let ticks = by.to_ticks().map_err(|_| EngineError::Overflow)?;
        self.advance_ticks(state, ticks)
    }

    pub fn advance_ticks(&self, state: &mut InstitutionalState, ticks: Ticks) -> Result<StateDelta, EngineError> {
        if ticks < 0 {
            return Err(EngineError::InvalidStep("cannot move the clock backwards".into()));
        }
        self.commit(state, |txn| {
            txn.state.clock = txn.state.clock.checked_add(ticks).ok_or(EngineError::Overflow)?;
            txn.settle()
        })
    }

    /// Applies a ground production from outside the program.
    pub fn produce(&self, state: &mut InstitutionalState, event: &ProductionEvent) -> Result<StateDelta, EngineError> {
        self.commit(state, |txn| {
            let target = txn.resolve_target(&event.target, &Bindings::new())?;
            txn.queue.push_back(Pending::Production {
                polarity: event.polarity,
                target,
                provenance: EventProvenance::External,
                actor: None,
            });
            txn.settle()
        })
    }

    pub fn recompute_closure(&self, state: &mut InstitutionalState) -> Result<StateDelta, EngineError> {
        self.commit(state, |txn| txn.closure())
    }

    /// Adds an asserted descriptor.
    pub fn qualify(
        &self,
        state: &mut InstitutionalState,
        object: &str,
        descriptor: &str,
    ) -> Result<StateDelta, EngineError> {
        self.commit(state, |txn| {
            let obj = txn
                .state
                .object_named_mut(object)
                .ok_or_else(|| EngineError::MissingTarget(object.to_string()))?;
            obj.descriptors.insert(descriptor.to_string(), Provenance::Asserted);
            txn.settle()
        })
    }

    /// Removes a descriptor whatever its provenance. The closure may derive
    /// it again if a rule still supports it.
    pub fn disqualify(
        &self,
        state: &mut InstitutionalState,
        object: &str,
        descriptor: &str,
    ) -> Result<StateDelta, EngineError> {
        self.commit(state, |txn| {
            let obj = txn
                .state
                .object_named_mut(object)
                .ok_or_else(|| EngineError::MissingTarget(object.to_string()))?;
            if obj.descriptors.remove(descriptor).is_none() {
                return Err(EngineError::MissingTarget(format!("{object} in {descriptor}")));
            }
            txn.settle()
        })
    }

    /// Rules with the scope they belong to: top-level rules first, then the
    /// members of each live compound instance in id order.
    pub(crate) fn rule_sites<'p>(&'p self, state: &InstitutionalState) -> Vec<RuleSite<'p>> {
        let mut sites = Vec::new();
        for (i, d) in self.program.declarations.iter().enumerate() {
            if let Declaration::Rule(rule) = d {
                sites.push(RuleSite {
                    rule_ref: RuleRef { scope: None, index: i },
                    rule,
                    env: Bindings::new(),
                });
            }
        }
        for inst in state.compounds.values() {
            let Some(decl) = self.program.compound(&inst.decl) else {
                continue;
            };
            let env = inst.bindings();
            for (j, m) in decl.members.iter().enumerate() {
                if let Member::Rule(rule) = m {
                    sites.push(RuleSite {
                        rule_ref: RuleRef {
                            scope: Some(inst.id),
                            index: j,
                        },
                        rule,
                        env: env.clone(),
                    });
                }
            }
        }
        sites
    }
}

impl<'e> Txn<'e> {
    fn new(engine: &'e Engine, state: InstitutionalState) -> Self {
        Txn {
            engine,
            state,
            queue: VecDeque::new(),
            firings: 0,
            disabled: false,
        }
    }

    fn budget(&mut self) -> Result<(), EngineError> {
        self.firings += 1;
        if self.firings > self.engine.limits.cascade_budget {
            Err(EngineError::CascadeLimit(self.engine.limits.cascade_budget))
        } else {
            Ok(())
        }
    }

    fn log(
        &mut self,
        actor: Option<InstanceId>,
        event: Occurrence,
        provenance: EventProvenance,
        disabled: bool,
    ) -> u64 {
        let seq = self.state.event_log.len() as u64;
        self.state.event_log.push(EventOccurrence {
            seq,
            at: self.state.clock,
            actor,
            event,
            provenance,
            disabled,
        });
        seq
    }

    /// Registers a position. The frame's holder and counterparty are
    /// evaluated once in the creating scope so that `holder` inside the new
    /// frame means its own holder.
    pub(crate) fn create_position(&mut self, id: InstanceId, frame: Frame, scope: &Bindings, origin: PositionOrigin) {
        let mut env = scope.clone();
        env.remove("holder");
        env.remove("counterparty");
        let ctx = self.engine.ctx(&self.state);
        let holder = frame.holder().and_then(|t| ctx.eval(t, scope).ok());
        let counterparty = match &frame {
            Frame::Duty(d) => ctx.eval(&d.counterparty, scope).ok(),
            _ => None,
        };
        if let Some(v) = holder {
            env.insert("holder".into(), v);
        }
        if let Some(v) = counterparty {
            env.insert("counterparty".into(), v);
        }
        let position = PositionInstance {
            id,
            kind: PositionKind::of(&frame),
            label: frame.label().map(|l| l.to_string()),
            frame,
            env,
            origin,
            violated: false,
        };
        self.state.positions.insert(id, position);
    }

    /// Runs an action occurrence. Returns whether any power or duty matched.
    fn perform(
        &mut self,
        actor: InstanceId,
        event: GroundEvent,
        provenance: EventProvenance,
    ) -> Result<bool, EngineError> {
        let actor_obj = self
            .state
            .objects
            .get(&actor)
            .cloned()
            .ok_or_else(|| EngineError::UnknownActor(actor.to_string()))?;
        let actor_value = Value::sym(actor_obj.name.clone());

        let mut powers = Vec::new();
        let mut duties = Vec::new();
        {
            let ctx = self.engine.ctx(&self.state);
            for pos in self.state.positions.values() {
                let (holder, action) = match &pos.frame {
                    Frame::Power(p) => (&p.holder, &p.action),
                    Frame::Duty(d) if !pos.violated => (&d.holder, &d.action),
                    _ => continue,
                };
                if action.name.as_str() != event.name || !ctx.holder_matches(holder, &pos.env, &actor_obj) {
                    continue;
                }
                let mut env = pos.env.clone();
                env.insert("holder".into(), actor_value.clone());
                let Some(captures) = ctx.match_event(action, &env, &event)? else {
                    continue;
                };
                env.extend(captures);
                match pos.kind {
                    PositionKind::Power => powers.push((pos.id, env)),
                    _ => duties.push(pos.id),
                }
            }
        }

        let enabled = !(powers.is_empty() && duties.is_empty());
        self.log(Some(actor), Occurrence::Action(event.clone()), provenance, !enabled);
        if !enabled {
            return Ok(false);
        }

        for (power, env) in powers {
            let Some(Frame::Power(p)) = self.state.positions.get(&power).map(|p| p.frame.clone()) else {
                continue;
            };
            self.apply_effect(
                &p.consequence,
                &env,
                EventProvenance::Consequence { power },
                Some(actor),
            )?;
        }
        for duty in duties {
            self.remove_position(duty);
        }
        self.fire_on_action(actor, &event)?;
        Ok(true)
    }

    fn remove_position(&mut self, id: InstanceId) {
        if let Some(pos) = self.state.positions.remove(&id) {
            if let PositionOrigin::CompoundMember { compound } = pos.origin {
                if let Some(c) = self.state.compounds.get_mut(&compound) {
                    c.members.retain(|m| *m != id);
                }
            }
        }
    }

    fn apply_effect(
        &mut self,
        effect: &Effect,
        env: &Bindings,
        provenance: EventProvenance,
        actor: Option<InstanceId>,
    ) -> Result<(), EngineError> {
        match effect {
            Effect::Produce(p) => {
                let target = self.resolve_target(&p.target, env)?;
                self.queue.push_back(Pending::Production {
                    polarity: p.polarity,
                    target,
                    provenance,
                    actor,
                });
            }
            Effect::Event(e) => {
                let Some(actor) = actor else {
                    return Err(EngineError::Evaluation(format!("no actor to perform `{e}`")));
                };
                let ctx = self.engine.ctx(&self.state);
                let mut ground = GroundEvent::new(e.name.as_str());
                for (k, t) in &e.refinements {
                    ground.refinements.insert(k.to_string(), ctx.eval(t, env)?);
                }
                self.queue.push_back(Pending::Action {
                    actor,
                    event: ground,
                    provenance,
                });
            }
            Effect::Term(Term::Qualify { subject, descriptor }) => {
                let subject_value = self.engine.ctx(&self.state).eval(subject, env)?;
                let obj = match &subject_value {
                    Value::Sym(name) => self.state.object_named_mut(name),
                    _ => None,
                };
                let Some(obj) = obj else {
                    return Err(EngineError::MissingTarget(format!("{subject_value} in {descriptor}")));
                };
                obj.descriptors.insert(descriptor.to_string(), Provenance::Asserted);
            }
            Effect::Term(t @ (Term::Atom(_) | Term::Call { .. } | Term::Object { .. })) => {
                let target = self.resolve_target(&Target::Term(t.clone()), env)?;
                self.queue.push_back(Pending::Production {
                    polarity: Polarity::Create,
                    target,
                    provenance,
                    actor,
                });
            }
            Effect::Term(t) => {
                return Err(EngineError::Evaluation(format!("`{t}` is not an effect")));
            }
        }
        Ok(())
    }

    /// Evaluates the arguments of a production target in `env`.
    pub(crate) fn resolve_target(&self, target: &Target, env: &Bindings) -> Result<Resolved, EngineError> {
        let program = &self.engine.program;
        let ctx = self.engine.ctx(&self.state);
        Ok(match target {
            Target::Frame(f) => Resolved::Frame {
                frame: (**f).clone(),
                env: env.clone(),
            },
            Target::Term(Term::Atom(a)) => {
                if program.compound(a.as_str()).is_some() {
                    Resolved::Compound {
                        decl: a.to_string(),
                        args: Vec::new(),
                    }
                } else {
                    match ctx.lookup(env, a.as_str()) {
                        Some(Value::Sym(name)) => Resolved::Object {
                            name,
                            properties: BTreeMap::new(),
                        },
                        Some(Value::Ref(id)) => Resolved::Instance(id),
                        Some(other) => {
                            return Err(EngineError::Evaluation(format!(
                                "`{a}` is bound to {other}, which cannot be produced"
                            )))
                        }
                        None => Resolved::Object {
                            name: a.to_string(),
                            properties: BTreeMap::new(),
                        },
                    }
                }
            }
            Target::Term(Term::Call { name, args }) => {
                let decl = program
                    .compound(name.as_str())
                    .ok_or_else(|| EngineError::MissingTarget(format!("compound `{name}`")))?;
                if decl.params.len() != args.len() {
                    return Err(EngineError::Evaluation(format!(
                        "`{name}` takes {} arguments",
                        decl.params.len()
                    )));
                }
                let mut bound = Vec::new();
                for (p, a) in decl.params.iter().zip(args) {
                    bound.push((p.to_string(), ctx.eval(a, env)?));
                }
                Resolved::Compound {
                    decl: name.to_string(),
                    args: bound,
                }
            }
            Target::Term(Term::Object { head, fields }) => {
                if let Some(decl) = program.compound(head.as_str()) {
                    let mut bound = Vec::new();
                    for p in &decl.params {
                        let t = fields
                            .get(p)
                            .ok_or_else(|| EngineError::Evaluation(format!("`{head}` needs argument `{p}`")))?;
                        bound.push((p.to_string(), ctx.eval(t, env)?));
                    }
                    Resolved::Compound {
                        decl: head.to_string(),
                        args: bound,
                    }
                } else {
                    let mut properties = BTreeMap::new();
                    for (k, t) in fields {
                        properties.insert(k.to_string(), ctx.eval(t, env)?);
                    }
                    Resolved::Object {
                        name: head.to_string(),
                        properties,
                    }
                }
            }
            Target::Term(path @ Term::Path(segs)) => {
                let owner_path = if segs.len() == 2 {
                    Term::Atom(segs[0].clone())
                } else {
                    Term::Path(segs[..segs.len() - 1].to_vec())
                };
                let owner = match &owner_path {
                    Term::Atom(a) => ctx
                        .lookup(env, a.as_str())
                        .or_else(|| ctx.state.object_named(a.as_str()).map(|_| Value::sym(a.as_str())))
                        .ok_or_else(|| EngineError::UnresolvablePath(path.to_string()))?,
                    other => ctx.eval(other, env)?,
                };
                Resolved::Flag {
                    owner,
                    flag: segs.last().unwrap().to_string(),
                }
            }
            Target::Term(Term::Ref { id, .. }) => Resolved::Instance(InstanceId(*id)),
            Target::Term(other) => {
                return Err(EngineError::Evaluation(format!("`{other}` cannot be produced")));
            }
        })
    }

    fn render(&self, polarity: Polarity, target: &ProducedTarget) -> String {
        let body = match target {
            ProducedTarget::Object { name } => name.clone(),
            ProducedTarget::Compound { decl, args, .. } => {
                let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                format!("{decl}({})", args.join(", "))
            }
            ProducedTarget::Position { id, kind } => format!("{}{id}", kind.as_str()),
            ProducedTarget::Flag { owner, flag } => {
                let owner = match owner {
                    Value::Ref(id) => match self.state.positions.get(id) {
                        Some(p) => p.display_name(),
                        None => id.to_string(),
                    },
                    other => other.to_string(),
                };
                format!("{owner}.{flag}")
            }
        };
        format!("{}{body}", polarity.sign())
    }

    /// Applies a production. Returns the logged target when the production
    /// changed the state.
    fn apply_production(
        &mut self,
        polarity: Polarity,
        target: Resolved,
    ) -> Result<Option<ProducedTarget>, EngineError> {
        match (polarity, target) {
            (Polarity::Create, Resolved::Object { name, properties }) => {
                if !Ident::is_valid(&name) {
                    return Err(EngineError::Evaluation(format!("`{name}` is not a valid object name")));
                }
                if let Some(obj) = self.state.object_named_mut(&name) {
                    let before = obj.properties.clone();
                    obj.properties.extend(properties);
                    if obj.properties == before {
                        return Ok(None);
                    }
                } else {
                    let id = self.state.alloc_id();
                    self.state.objects.insert(
                        id,
                        ObjectInstance {
                            id,
                            name: name.clone(),
                            properties,
                            descriptors: BTreeMap::new(),
                            origin: ObjectOrigin::Produced,
                        },
                    );
                }
                Ok(Some(ProducedTarget::Object { name }))
            }
            (Polarity::Create, Resolved::Compound { decl, args }) => {
                let values: Vec<Value> = args.iter().map(|(_, v)| v.clone()).collect();
                if self.engine.ctx(&self.state).find_compound(&decl, &values).is_some() {
                    return Ok(None);
                }
                let id = self.instantiate(&decl, args)?;
                Ok(Some(ProducedTarget::Compound { id, decl, args: values }))
            }
            (Polarity::Create, Resolved::Frame { frame, env }) => {
                let id = self.state.alloc_id();
                let kind = PositionKind::of(&frame);
                let seq = self.state.event_log.len() as u64;
                self.create_position(id, frame, &env, PositionOrigin::Produced { event: seq });
                Ok(Some(ProducedTarget::Position { id, kind }))
            }
            (polarity, Resolved::Flag { owner, flag }) => {
                let on = polarity == Polarity::Create;
                let changed = match &owner {
                    Value::Ref(id) => {
                        let pos = self
                            .state
                            .positions
                            .get_mut(id)
                            .ok_or_else(|| EngineError::MissingTarget(format!("{id}.{flag}")))?;
                        if flag != "violation" {
                            return Err(EngineError::Evaluation(format!("positions have no `{flag}` flag")));
                        }
                        let changed = pos.violated != on;
                        pos.violated = on;
                        changed
                    }
                    Value::Sym(name) => {
                        let obj = self
                            .state
                            .object_named_mut(name)
                            .ok_or_else(|| EngineError::MissingTarget(format!("{name}.{flag}")))?;
                        let changed = obj.properties.get(&flag) != Some(&Value::Bool(on));
                        obj.properties.insert(flag.clone(), Value::Bool(on));
                        changed
                    }
                    other => return Err(EngineError::Evaluation(format!("`{other}` has no flags"))),
                };
                Ok(changed.then_some(ProducedTarget::Flag { owner, flag }))
            }
            (Polarity::Create, Resolved::Instance(id)) => Err(EngineError::Evaluation(format!(
                "instance {id} already exists and cannot be created again"
            ))),
            (Polarity::Remove, Resolved::Object { name, .. }) => {
                let ctx = self.engine.ctx(&self.state);
                if let Some(obj) = ctx.state.object_named(&name) {
                    let id = obj.id;
                    self.state.objects.remove(&id);
                    Ok(Some(ProducedTarget::Object { name }))
                } else if let Some(c) = self
                    .state
                    .compounds
                    .values()
                    .find(|c| c.decl == name && c.args.is_empty())
                {
                    let id = c.id;
                    self.remove_instance(id).map(Some)
                } else {
                    Err(EngineError::MissingTarget(name))
                }
            }
            (Polarity::Remove, Resolved::Compound { decl, args }) => {
                let values: Vec<Value> = args.into_iter().map(|(_, v)| v).collect();
                let id = self
                    .engine
                    .ctx(&self.state)
                    .find_compound(&decl, &values)
                    .ok_or_else(|| EngineError::MissingTarget(format!("{decl}(...)")))?;
                self.remove_instance(id).map(Some)
            }
            (Polarity::Remove, Resolved::Instance(id)) => self.remove_instance(id).map(Some),
            (Polarity::Remove, Resolved::Frame { frame, .. }) => {
                let id = self
                    .state
                    .positions
                    .values()
                    .find(|p| p.frame == frame)
                    .map(|p| p.id)
                    .ok_or_else(|| EngineError::MissingTarget(frame.to_string()))?;
                self.remove_instance(id).map(Some)
            }
        }
    }

    fn remove_instance(&mut self, id: InstanceId) -> Result<ProducedTarget, EngineError> {
        if let Some(obj) = self.state.objects.remove(&id) {
            return Ok(ProducedTarget::Object { name: obj.name });
        }
        if let Some(pos) = self.state.positions.get(&id) {
            let kind = pos.kind;
            self.remove_position(id);
            return Ok(ProducedTarget::Position { id, kind });
        }
        if let Some(c) = self.state.compounds.remove(&id) {
            for m in &c.members {
                self.state.positions.remove(m);
            }
            return Ok(ProducedTarget::Compound {
                id,
                decl: c.decl,
                args: c.args.into_iter().map(|(_, v)| v).collect(),
            });
        }
        Err(EngineError::MissingTarget(id.to_string()))
    }

    /// Creates a compound instance and its member positions. The instance id
    /// comes first, then one id per member frame in declaration order.
    fn instantiate(&mut self, decl_name: &str, args: Vec<(String, Value)>) -> Result<InstanceId, EngineError> {
        let decl = self
            .engine
            .program
            .compound(decl_name)
            .ok_or_else(|| EngineError::MissingTarget(format!("compound `{decl_name}`")))?;
        let id = self.state.alloc_id();
        let mut frames = Vec::new();
        for m in &decl.members {
            if let Member::Frame(f) = m {
                frames.push((self.state.alloc_id(), f));
            }
        }
        let labels: BTreeMap<String, InstanceId> = frames
            .iter()
            .filter_map(|(pid, f)| f.label().map(|l| (l.to_string(), *pid)))
            .collect();
        let instance = CompoundInstance {
            id,
            decl: decl_name.to_string(),
            args,
            labels,
            members: frames.iter().map(|(pid, _)| *pid).collect(),
        };
        let env = instance.bindings();
        self.state.compounds.insert(id, instance);
        for (pid, f) in frames {
            self.create_position(pid, f.clone(), &env, PositionOrigin::CompoundMember { compound: id });
        }
        Ok(id)
    }

    fn fire_on_action(&mut self, actor: InstanceId, event: &GroundEvent) -> Result<(), EngineError> {
        let mut effects = Vec::new();
        {
            let ctx = self.engine.ctx(&self.state);
            for site in self.engine.rule_sites(&self.state) {
                let Rule::Reactive {
                    trigger: Trigger::Event(pattern),
                    effect,
                } = site.rule
                else {
                    continue;
                };
                if let Ok(Some(captures)) = ctx.match_event(pattern, &site.env, event) {
                    let mut env = site.env.clone();
                    env.extend(captures);
                    effects.push((site.rule_ref, effect, env));
                }
            }
        }
        for (rule, effect, env) in effects {
            self.budget()?;
            self.apply_effect(effect, &env, EventProvenance::Reactive { rule }, Some(actor))?;
        }
        Ok(())
    }

    fn fire_on_production(
        &mut self,
        polarity: Polarity,
        produced: &ProducedTarget,
        actor: Option<InstanceId>,
    ) -> Result<(), EngineError> {
        let mut effects = Vec::new();
        for site in self.engine.rule_sites(&self.state) {
            let Rule::Reactive {
                trigger: Trigger::Production(pattern),
                effect,
            } = site.rule
            else {
                continue;
            };
            if pattern.polarity != polarity {
                continue;
            }
            let Ok(resolved) = self.resolve_target(&pattern.target, &site.env) else {
                continue;
            };
            if production_matches(&resolved, produced) {
                effects.push((site.rule_ref, effect, site.env));
            }
        }
        for (rule, effect, env) in effects {
            self.budget()?;
            self.apply_effect(effect, &env, EventProvenance::Reactive { rule }, actor)?;
        }
        Ok(())
    }

    fn process(&mut self, pending: Pending) -> Result<(), EngineError> {
        match pending {
            Pending::Action {
                actor,
                event,
                provenance,
            } => {
                self.perform(actor, event, provenance)?;
            }
            Pending::Production {
                polarity,
                target,
                provenance,
                actor,
            } => {
                if let Some(produced) = self.apply_production(polarity, target)? {
                    let rendered = self.render(polarity, &produced);
                    self.log(
                        actor,
                        Occurrence::Production(GroundProduction {
                            polarity,
                            target: produced.clone(),
                            rendered,
                        }),
                        provenance,
                        false,
                    );
                    self.fire_on_production(polarity, &produced, actor)?;
                }
            }
        }
        Ok(())
    }

    /// Drains pending events, recomputes the closure and raises violations,
    /// repeating until nothing is left to do.
    pub(crate) fn settle(&mut self) -> Result<(), EngineError> {
        loop {
            while let Some(p) = self.queue.pop_front() {
                self.process(p)?;
            }
            self.closure()?;
            self.detect_violations()?;
            if self.queue.is_empty() {
                return Ok(());
            }
        }
    }

    fn detect_violations(&mut self) -> Result<(), EngineError> {
        let mut due = Vec::new();
        {
            let ctx = self.engine.ctx(&self.state);
            for pos in self.state.positions.values() {
                let Frame::Duty(d) = &pos.frame else { continue };
                let Some(cond) = &d.violation else { continue };
                if !pos.violated && ctx.truth(cond, &pos.env).unwrap_or(false) {
                    due.push(pos.id);
                }
            }
        }
        for duty in due {
            self.budget()?;
            self.queue.push_back(Pending::Production {
                polarity: Polarity::Create,
                target: Resolved::Flag {
                    owner: Value::Ref(duty),
                    flag: "violation".into(),
                },
                provenance: EventProvenance::Violation { duty },
                actor: None,
            });
        }
        Ok(())
    }

    /// Fixpoint of the transformational rules. Conclusions are keyed by the
    /// rule that supports them; a conclusion whose rule no longer holds (or
    /// whose scope is gone) is retracted.
    pub(crate) fn closure(&mut self) -> Result<(), EngineError> {
        let limit = self.engine.limits.closure_passes;
        for _ in 0..limit {
            if !self.closure_pass() {
                return Ok(());
            }
        }
        Err(EngineError::ClosureDivergence(limit))
    }

    fn closure_pass(&mut self) -> bool {
        let mut changed = self.drop_dead_supports();
        for site in self.engine.rule_sites(&self.state) {
            let Rule::Transformational { condition, conclusion } = site.rule else {
                continue;
            };
            let holds = self
                .engine
                .ctx(&self.state)
                .truth(condition, &site.env)
                .unwrap_or(false);
            changed |= match conclusion {
                Conclusion::Frame(frame) => self.maintain_position(site.rule_ref, frame, &site.env, holds),
                Conclusion::Fact(fact) => self.maintain_fact(site.rule_ref, fact, &site.env, holds),
            };
        }
        changed
    }

    fn drop_dead_supports(&mut self) -> bool {
        let live = |r: &RuleRef, state: &InstitutionalState| r.scope.is_none_or(|s| state.compounds.contains_key(&s));
        let dead_positions: Vec<InstanceId> = self
            .state
            .positions
            .values()
            .filter(|p| matches!(&p.origin, PositionOrigin::Derived { rule } if !live(rule, &self.state)))
            .map(|p| p.id)
            .collect();
        let mut changed = !dead_positions.is_empty();
        for id in dead_positions {
            self.state.positions.remove(&id);
        }
        let snapshot = self.state.compounds.keys().copied().collect::<BTreeSet<_>>();
        let alive = |r: &RuleRef| r.scope.is_none_or(|s| snapshot.contains(&s));
        let mut emptied = Vec::new();
        for obj in self.state.objects.values_mut() {
            if let ObjectOrigin::Derived { rules } = &mut obj.origin {
                let before = rules.len();
                rules.retain(alive);
                changed |= rules.len() != before;
                if rules.is_empty() {
                    emptied.push(obj.id);
                }
            }
            obj.descriptors.retain(|_, prov| {
                if let Provenance::Derived { rules } = prov {
                    let before = rules.len();
                    rules.retain(alive);
                    changed |= rules.len() != before;
                    !rules.is_empty()
                } else {
                    true
                }
            });
        }
        for id in emptied {
            self.state.objects.remove(&id);
        }
        changed
    }

    fn maintain_position(&mut self, rule: RuleRef, frame: &Frame, env: &Bindings, holds: bool) -> bool {
        let existing: Vec<InstanceId> = self
            .state
            .positions
            .values()
            .filter(|p| p.origin == PositionOrigin::Derived { rule })
            .map(|p| p.id)
            .collect();
        match (holds, existing.is_empty()) {
            (true, true) => {
                let id = self.state.alloc_id();
                self.create_position(id, frame.clone(), env, PositionOrigin::Derived { rule });
                true
            }
            (false, false) => {
                for id in existing {
                    self.state.positions.remove(&id);
                }
                true
            }
            _ => false,
        }
    }

    fn maintain_fact(&mut self, rule: RuleRef, fact: &Term, env: &Bindings, holds: bool) -> bool {
        match fact {
            Term::Qualify { subject, descriptor } => {
                let target = if holds {
                    match self.engine.ctx(&self.state).eval(subject, env) {
                        Ok(Value::Sym(name)) => self.state.object_named(&name).map(|o| o.id),
                        _ => None,
                    }
                } else {
                    None
                };
                let mut changed = false;
                for obj in self.state.objects.values_mut() {
                    if Some(obj.id) == target {
                        continue;
                    }
                    if let Some(Provenance::Derived { rules }) = obj.descriptors.get_mut(descriptor.as_str()) {
                        if rules.remove(&rule) {
                            changed = true;
                            if rules.is_empty() {
                                obj.descriptors.remove(descriptor.as_str());
                            }
                        }
                    }
                }
                if let Some(id) = target {
                    let obj = self.state.objects.get_mut(&id).expect("target exists");
                    match obj.descriptors.get_mut(descriptor.as_str()) {
                        None => {
                            obj.descriptors.insert(
                                descriptor.to_string(),
                                Provenance::Derived {
                                    rules: BTreeSet::from([rule]),
                                },
                            );
                            changed = true;
                        }
                        Some(Provenance::Derived { rules }) => changed |= rules.insert(rule),
                        Some(Provenance::Asserted) => {}
                    }
                }
                changed
            }
            Term::Atom(a) => {
                let name = match self.engine.ctx(&self.state).lookup(env, a.as_str()) {
                    Some(Value::Sym(n)) => n,
                    Some(_) => return false,
                    None => a.to_string(),
                };
                let mut changed = false;
                let mut emptied = Vec::new();
                for obj in self.state.objects.values_mut() {
                    if holds && obj.name == name {
                        continue;
                    }
                    if let ObjectOrigin::Derived { rules } = &mut obj.origin {
                        if rules.remove(&rule) {
                            changed = true;
                            if rules.is_empty() {
                                emptied.push(obj.id);
                            }
                        }
                    }
                }
                for id in emptied {
                    self.state.objects.remove(&id);
                }
                if holds {
                    match self.state.object_named_mut(&name) {
                        Some(obj) => {
                            if let ObjectOrigin::Derived { rules } = &mut obj.origin {
                                changed |= rules.insert(rule);
                            }
                        }
                        None => {
                            let id = self.state.alloc_id();
                            self.state.objects.insert(
                                id,
                                ObjectInstance {
                                    id,
                                    name,
                                    properties: BTreeMap::new(),
                                    descriptors: BTreeMap::new(),
                                    origin: ObjectOrigin::Derived {
                                        rules: BTreeSet::from([rule]),
                                    },
                                },
                            );
                            changed = true;
                        }
                    }
                }
                changed
            }
            _ => false,
        }
    }
}

fn production_matches(pattern: &Resolved, produced: &ProducedTarget) -> bool {
    match (pattern, produced) {
        (Resolved::Object { name, properties }, ProducedTarget::Object { name: n }) => {
            name == n && properties.is_empty()
        }
        (Resolved::Compound { decl, args }, ProducedTarget::Compound { decl: d, args: a, .. }) => {
            decl == d && args.len() == a.len() && args.iter().zip(a).all(|((_, x), y)| x == y)
        }
        (Resolved::Flag { owner, flag }, ProducedTarget::Flag { owner: o, flag: f }) => owner == o && flag == f,
        (Resolved::Instance(id), ProducedTarget::Compound { id: i, .. } | ProducedTarget::Position { id: i, .. }) => {
            id == i
        }
        _ => false,
    }
}
