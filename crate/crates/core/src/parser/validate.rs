//! Name resolution and arity checks over a parsed program.

use std::collections::{BTreeSet, HashMap};

use super::diagnostic::{Diagnostic, Diagnostics, SourceSpan};
use crate::model::*;

/// Checks a parsed program. On success returns the warnings (possibly none);
/// on failure returns every diagnostic found, errors and warnings alike.
pub fn validate(program: &Program) -> Result<Diagnostics, Diagnostics> {
    let mut v = Validator {
        compounds: HashMap::new(),
        diags: Vec::new(),
        file: &program.source_name,
    };
    let mut globals = BTreeSet::new();

    for (i, decl) in program.declarations.iter().enumerate() {
        let span = v.decl_span(program, i);
        match decl {
            Declaration::Compound(c) => {
                if v.compounds.insert(c.name.as_str(), c).is_some() {
                    v.error(
                        span,
                        "duplicate-name",
                        format!("compound `{}` is declared more than once", c.name),
                    );
                }
            }
            Declaration::Frame(f) => {
                if let Some(label) = f.label() {
                    if !globals.insert(label.to_string()) {
                        v.error(
                            span,
                            "duplicate-name",
                            format!("label `{label}` is used by more than one frame"),
                        );
                    }
                }
            }
            Declaration::Rule(_) => {}
        }
    }

    let scope = Scope(globals);
    for (i, decl) in program.declarations.iter().enumerate() {
        let span = v.decl_span(program, i);
        match decl {
            Declaration::Frame(f) => v.frame(f, &scope, &span),
            Declaration::Rule(r) => v.rule(r, &scope, &span),
            Declaration::Compound(c) => v.compound(program, i, c, &scope),
        }
    }

    let diags = Diagnostics(v.diags);
    if diags.has_errors() {
        Err(diags)
    } else {
        Ok(diags)
    }
}

#[derive(Clone)]
struct Scope(BTreeSet<String>);

impl Scope {
    fn with<I, S>(&self, names: I) -> Scope
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut next = self.clone();
        next.0.extend(names.into_iter().map(Into::into));
        next
    }

    fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }
}

/// Atoms in refinement position act as pattern variables and are in scope
/// for whatever follows the event.
fn captured(event: &EventRef) -> Vec<String> {
    event
        .refinements
        .values()
        .filter_map(|t| match t {
            Term::Atom(a) => Some(a.to_string()),
            _ => None,
        })
        .collect()
}

struct Validator<'p> {
    compounds: HashMap<&'p str, &'p CompoundDecl>,
    diags: Vec<Diagnostic>,
    file: &'p str,
}

impl<'p> Validator<'p> {
    fn decl_span(&self, program: &Program, i: usize) -> SourceSpan {
        program
            .spans
            .declarations
            .get(i)
            .cloned()
            .unwrap_or_else(|| SourceSpan::point(self.file, 1, 1))
    }

    fn error(&mut self, span: SourceSpan, code: &str, message: String) {
        self.diags.push(Diagnostic::error(span, code, message));
    }

    fn compound(&mut self, program: &Program, i: usize, c: &CompoundDecl, globals: &Scope) {
        let decl_span = self.decl_span(program, i);
        let mut names = BTreeSet::new();
        for p in &c.params {
            if !names.insert(p.to_string()) {
                self.error(
                    decl_span.clone(),
                    "duplicate-name",
                    format!("parameter `{p}` of `{}` is declared more than once", c.name),
                );
            }
        }
        for m in &c.members {
            if let Member::Frame(f) = m {
                if let Some(label) = f.label() {
                    if !names.insert(label.to_string()) {
                        self.error(
                            decl_span.clone(),
                            "duplicate-name",
                            format!(
                                "label `{label}` in `{}` clashes with another label or parameter",
                                c.name
                            ),
                        );
                    }
                }
            }
        }
        let scope = globals.with(names);
        for (j, m) in c.members.iter().enumerate() {
            let span = program
                .spans
                .members
                .get(i)
                .and_then(|ms| ms.get(j))
                .cloned()
                .unwrap_or_else(|| decl_span.clone());
            match m {
                Member::Frame(f) => self.frame(f, &scope, &span),
                Member::Rule(r) => self.rule(r, &scope, &span),
            }
        }
    }

    fn frame(&mut self, frame: &Frame, scope: &Scope, span: &SourceSpan) {
        match frame {
            Frame::Power(p) => {
                self.term(&p.holder, scope, span);
                let inner = scope.with(["holder"]);
                self.event(&p.action, &inner, span);
                let inner = inner.with(captured(&p.action));
                self.effect(&p.consequence, &inner, span);
            }
            Frame::Duty(d) => {
                self.term(&d.holder, scope, span);
                self.term(&d.counterparty, scope, span);
                let inner = scope.with(["holder", "counterparty"]);
                self.event(&d.action, &inner, span);
                if let Some(v) = &d.violation {
                    let inner = inner.with(captured(&d.action));
                    self.term(v, &inner, span);
                }
            }
            Frame::Other(o) => {
                self.diags.push(Diagnostic::warning(
                    span.clone(),
                    "no-semantics",
                    format!(
                        "`{}` frames are stored but have no effect when a scenario runs",
                        o.kind.keyword()
                    ),
                ));
                for effect in o.body.values() {
                    self.effect(effect, scope, span);
                }
            }
        }
    }

    fn rule(&mut self, rule: &Rule, scope: &Scope, span: &SourceSpan) {
        match rule {
            Rule::Transformational { condition, conclusion } => {
                self.term(condition, scope, span);
                match conclusion {
                    Conclusion::Frame(f) => self.frame(f, scope, span),
                    Conclusion::Fact(t) => {
                        if !matches!(t, Term::Atom(_) | Term::Qualify { .. }) {
                            self.error(
                                span.clone(),
                                "unsupported",
                                format!("`{t}` cannot be derived; a rule may conclude a frame, an object or a qualification"),
                            );
                        }
                        if let Term::Atom(a) = t {
                            self.no_compound_atom(a, span, "derived");
                        }
                        self.term(t, scope, span);
                    }
                }
            }
            Rule::Reactive { trigger, effect } => {
                let inner = match trigger {
                    Trigger::Event(e) => {
                        self.event(e, scope, span);
                        scope.with(captured(e))
                    }
                    Trigger::Production(p) => {
                        if let Target::Frame(_) = p.target {
                            self.error(
                                span.clone(),
                                "unsupported",
                                "a reactive rule cannot be triggered by the production of a frame".into(),
                            );
                        } else {
                            self.production(p, scope, span);
                        }
                        scope.clone()
                    }
                };
                self.effect(effect, &inner, span);
            }
        }
    }

    fn no_compound_atom(&mut self, name: &Ident, span: &SourceSpan, what: &str) {
        if let Some(c) = self.compounds.get(name.as_str()) {
            let msg = if c.params.is_empty() {
                format!("compound `{name}` cannot be {what} by a rule")
            } else {
                format!(
                    "compound `{name}` takes {} argument(s) but none were given",
                    c.params.len()
                )
            };
            let code = if c.params.is_empty() { "unsupported" } else { "arity" };
            self.error(span.clone(), code, msg);
        }
    }

    fn effect(&mut self, effect: &Effect, scope: &Scope, span: &SourceSpan) {
        match effect {
            Effect::Produce(p) => self.production(p, scope, span),
            Effect::Event(e) => self.event(e, scope, span),
            Effect::Term(t) => self.term(t, scope, span),
        }
    }

    fn production(&mut self, p: &ProductionEvent, scope: &Scope, span: &SourceSpan) {
        match &p.target {
            Target::Frame(f) => self.frame(f, scope, span),
            Target::Term(t) => {
                if let Term::Atom(a) = t {
                    if let Some(c) = self.compounds.get(a.as_str()) {
                        if !c.params.is_empty() {
                            let n = c.params.len();
                            self.error(
                                span.clone(),
                                "arity",
                                format!("compound `{a}` takes {n} argument(s) but none were given"),
                            );
                        }
                    }
                }
                self.term(t, scope, span);
            }
        }
    }

    fn event(&mut self, e: &EventRef, scope: &Scope, span: &SourceSpan) {
        for value in e.refinements.values() {
            self.term(value, scope, span);
        }
    }

    fn term(&mut self, term: &Term, scope: &Scope, span: &SourceSpan) {
        match term {
            Term::Atom(_) | Term::Now | Term::Duration(_) | Term::Int(_) => {}
            Term::Path(segs) => {
                let head = segs[0].as_str();
                if !scope.contains(head) {
                    self.error(
                        span.clone(),
                        "unresolved-name",
                        format!("`{head}` in `{term}` is not a parameter, label or frame field in scope"),
                    );
                }
            }
            Term::Call { name, args } => {
                match self.compounds.get(name.as_str()) {
                    None => self.error(
                        span.clone(),
                        "unknown-compound",
                        format!("`{name}` is not a declared compound"),
                    ),
                    Some(c) if c.params.len() != args.len() => {
                        let n = c.params.len();
                        self.error(
                            span.clone(),
                            "arity",
                            format!("compound `{name}` takes {n} argument(s) but {} were given", args.len()),
                        );
                    }
                    Some(_) => {}
                }
                for a in args {
                    self.term(a, scope, span);
                }
            }
            Term::Object { head, fields } => {
                if let Some(c) = self.compounds.get(head.as_str()) {
                    let params: BTreeSet<&str> = c.params.iter().map(Ident::as_str).collect();
                    let given: BTreeSet<&str> = fields.keys().map(Ident::as_str).collect();
                    if params != given {
                        let missing: Vec<_> = params.difference(&given).map(|s| format!("`{s}`")).collect();
                        let extra: Vec<_> = given.difference(&params).map(|s| format!("`{s}`")).collect();
                        let mut msg = format!("arguments to compound `{head}` do not match its parameters");
                        if !missing.is_empty() {
                            msg.push_str(&format!("; missing {}", missing.join(", ")));
                        }
                        if !extra.is_empty() {
                            msg.push_str(&format!("; unknown {}", extra.join(", ")));
                        }
                        self.error(span.clone(), "arity", msg);
                    }
                }
                for v in fields.values() {
                    self.term(v, scope, span);
                }
            }
            Term::Alternation(branches) => {
                for b in branches {
                    self.term(b, scope, span);
                }
            }
            Term::Compare { lhs, rhs, .. } | Term::Arith { lhs, rhs, .. } => {
                self.term(lhs, scope, span);
                self.term(rhs, scope, span);
            }
            Term::Qualify { subject, .. } => self.term(subject, scope, span),
            Term::Ref { .. } => self.error(
                span.clone(),
                "unexpected-ref",
                format!("instance reference `{term}` is only allowed in scenarios and commands"),
            ),
        }
    }
}
