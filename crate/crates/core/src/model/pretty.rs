//! Canonical concrete syntax for the AST. Output re-parses to a structurally
//! equal tree.

use std::fmt;

use super::ast::*;

const INDENT: &str = "    ";

// Binding strength, loosest first.
const ALT: u8 = 1;
const CMP: u8 = 2;
const QUAL: u8 = 3;
const ARITH: u8 = 4;
const PRIMARY: u8 = 5;

fn precedence(term: &Term) -> u8 {
    match term {
        Term::Alternation(_) => ALT,
        Term::Compare { .. } => CMP,
        Term::Qualify { .. } => QUAL,
        Term::Arith { .. } => ARITH,
        _ => PRIMARY,
    }
}

/// Renders a whole program. The empty program renders as the empty string.
pub fn pretty_print(program: &Program) -> String {
    let mut p = Printer::default();
    for (i, decl) in program.declarations.iter().enumerate() {
        if i > 0 {
            p.out.push('\n');
        }
        match decl {
            Declaration::Frame(f) => p.frame(f),
            Declaration::Rule(r) => p.rule(r),
            Declaration::Compound(c) => p.compound(c),
        }
        p.out.push('\n');
    }
    p.out
}

pub fn frame_to_string(frame: &Frame) -> String {
    let mut p = Printer::default();
    p.frame(frame);
    p.out
}

#[derive(Default)]
struct Printer {
    out: String,
    depth: usize,
}

impl Printer {
    fn newline(&mut self) {
        self.out.push('\n');
        for _ in 0..self.depth {
            self.out.push_str(INDENT);
        }
    }

    fn word(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn compound(&mut self, c: &CompoundDecl) {
        self.word(c.name.as_str());
        self.word("(");
        for (i, p) in c.params.iter().enumerate() {
            if i > 0 {
                self.word(", ");
            }
            self.word(p.as_str());
        }
        self.word(") {");
        if c.members.is_empty() {
            self.word("}");
            return;
        }
        self.depth += 1;
        for m in &c.members {
            self.newline();
            match m {
                Member::Frame(f) => self.frame(f),
                Member::Rule(r) => self.rule(r),
            }
        }
        self.depth -= 1;
        self.newline();
        self.word("}");
    }

    fn field(&mut self, name: &str) {
        self.newline();
        self.word(name);
        self.word(": ");
    }

    fn frame(&mut self, frame: &Frame) {
        self.word(frame.keyword());
        if let Some(label) = frame.label() {
            self.word(" ");
            self.word(label.as_str());
        }
        self.word(" {");
        self.depth += 1;
        match frame {
            Frame::Power(p) => {
                self.field("holder");
                self.term(&p.holder, ALT);
                self.field("action");
                self.event(&p.action);
                self.field("consequence");
                self.effect(&p.consequence);
            }
            Frame::Duty(d) => {
                self.field("holder");
                self.term(&d.holder, ALT);
                self.field("counterparty");
                self.term(&d.counterparty, ALT);
                self.field("action");
                self.event(&d.action);
                if let Some(v) = &d.violation {
                    self.field("violation");
                    self.term(v, ALT);
                }
            }
            Frame::Other(o) => {
                for (name, value) in &o.body {
                    self.field(name.as_str());
                    self.effect(value);
                }
            }
        }
        self.depth -= 1;
        self.newline();
        self.word("}");
    }

    fn rule(&mut self, rule: &Rule) {
        match rule {
            Rule::Transformational { condition, conclusion } => {
                self.term(condition, ALT);
                self.word(" -> ");
                match conclusion {
                    Conclusion::Frame(f) => self.frame(f),
                    Conclusion::Fact(t) => self.fact(t),
                }
            }
            Rule::Reactive { trigger, effect } => {
                match trigger {
                    Trigger::Event(e) => self.event(e),
                    Trigger::Production(p) => self.production(p),
                }
                self.word(" => ");
                match effect {
                    Effect::Term(t) => self.fact(t),
                    other => self.effect(other),
                }
            }
        }
    }

    // Conclusions admit only a primary term followed by `in` qualifications.
    fn fact(&mut self, term: &Term) {
        match term {
            Term::Qualify { subject, descriptor } => {
                self.fact(subject);
                self.word(" in ");
                self.word(descriptor.as_str());
            }
            other => self.term(other, PRIMARY),
        }
    }

    fn effect(&mut self, effect: &Effect) {
        match effect {
            Effect::Produce(p) => self.production(p),
            Effect::Event(e) => self.event(e),
            Effect::Term(t) => self.term(t, ALT),
        }
    }

    fn production(&mut self, p: &ProductionEvent) {
        self.out.push(p.polarity.sign());
        match &p.target {
            Target::Term(t) => self.term(t, PRIMARY),
            Target::Frame(f) => self.frame(f),
        }
    }

    fn event(&mut self, e: &EventRef) {
        self.word("#");
        self.word(e.name.as_str());
        if !e.refinements.is_empty() {
            self.word(" { ");
            for (i, (k, v)) in e.refinements.iter().enumerate() {
                if i > 0 {
                    self.word(", ");
                }
                self.word(k.as_str());
                self.word(": ");
                self.term(v, ALT);
            }
            self.word(" }");
        }
    }

    fn term(&mut self, term: &Term, min: u8) {
        let wrap = precedence(term) < min;
        if wrap {
            self.word("(");
        }
        match term {
            Term::Atom(a) => self.word(a.as_str()),
            Term::Path(segs) => {
                for (i, s) in segs.iter().enumerate() {
                    if i > 0 {
                        self.word(".");
                    }
                    self.word(s.as_str());
                }
            }
            Term::Call { name, args } => {
                self.word(name.as_str());
                self.word("(");
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        self.word(", ");
                    }
                    self.term(a, ALT);
                }
                self.word(")");
            }
            Term::Object { head, fields } => {
                self.word(head.as_str());
                if fields.is_empty() {
                    self.word(" {}");
                } else {
                    self.word(" {");
                    self.depth += 1;
                    for (k, v) in fields {
                        self.field(k.as_str());
                        self.term(v, ALT);
                    }
                    self.depth -= 1;
                    self.newline();
                    self.word("}");
                }
            }
            Term::Alternation(branches) => {
                for (i, b) in branches.iter().enumerate() {
                    if i > 0 {
                        self.word(" | ");
                    }
                    self.term(b, CMP);
                }
            }
            Term::Now => self.word("now()"),
            Term::Duration(d) => self.word(&d.to_string()),
            Term::Int(n) => self.word(&n.to_string()),
            Term::Compare { lhs, op, rhs } => {
                self.term(lhs, CMP);
                self.word(" ");
                self.word(op.symbol());
                self.word(" ");
                self.term(rhs, QUAL);
            }
            Term::Arith { lhs, op, rhs } => {
                self.term(lhs, ARITH);
                self.word(" ");
                self.word(op.symbol());
                self.word(" ");
                self.term(rhs, PRIMARY);
            }
            Term::Qualify { subject, descriptor } => {
                self.term(subject, QUAL);
                self.word(" in ");
                self.word(descriptor.as_str());
            }
            Term::Ref { name, id } => {
                if let Some(n) = name {
                    self.word(n.as_str());
                }
                self.word(&format!("#{id}"));
            }
        }
        if wrap {
            self.word(")");
        }
    }
}

macro_rules! display_via_printer {
    ($ty:ty, |$p:ident, $v:ident| $body:expr) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let mut $p = Printer::default();
                let $v = self;
                $body;
                f.write_str(&$p.out)
            }
        }
    };
}

display_via_printer!(Term, |p, t| p.term(t, ALT));
display_via_printer!(EventRef, |p, e| p.event(e));
display_via_printer!(ProductionEvent, |p, e| p.production(e));
display_via_printer!(Effect, |p, e| p.effect(e));
display_via_printer!(Frame, |p, fr| p.frame(fr));
display_via_printer!(Rule, |p, r| p.rule(r));
display_via_printer!(CompoundDecl, |p, c| p.compound(c));

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}
