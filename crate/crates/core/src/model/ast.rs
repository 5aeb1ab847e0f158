//! Abstract syntax of DPCL programs.
//!
//! Structural equality (`PartialEq`) on these types ignores source positions
//! and the order of fields inside `{ ... }` bodies.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::time::Duration;

/// Words reserved by the grammar; none of them can be used as an identifier.
pub const KEYWORDS: &[&str] = &[
    "power",
    "duty",
    "claim",
    "liability",
    "liberty",
    "disability",
    "no_claim",
    "immunity",
    "in",
    "now",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not a valid identifier")]
pub struct InvalidIdent(pub String);

/// A name matching `[a-z][A-Za-z0-9_]*` that is not a keyword.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Ident(String);

impl Ident {
    pub fn new(name: impl Into<String>) -> Result<Self, InvalidIdent> {
        let name = name.into();
        if Self::is_valid(&name) {
            Ok(Ident(name))
        } else {
            Err(InvalidIdent(name))
        }
    }

    pub fn is_valid(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_lowercase() => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !KEYWORDS.contains(&name)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Ident {
    type Error = InvalidIdent;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Ident::new(value)
    }
}

impl From<Ident> for String {
    fn from(value: Ident) -> Self {
        value.0
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for Ident {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// `{ field: term ... }` bodies. Source order is kept for printing only.
pub type Fields = IndexMap<Ident, Term>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    /// Object literal or bound name: `user`, `holder`.
    Atom(Ident),
    /// Dotted access, at least two segments: `holder.id_card`.
    Path(Vec<Ident>),
    /// Positional compound instantiation: `fine(borrower, lender)`.
    Call {
        name: Ident,
        args: Vec<Term>,
    },
    /// Refined object: `borrowing { lender: library ... }`.
    Object {
        head: Ident,
        fields: Fields,
    },
    /// `student | staff`; never directly nested.
    Alternation(Vec<Term>),
    Now,
    Duration(Duration),
    Int(i64),
    Compare {
        lhs: Box<Term>,
        op: CmpOp,
        rhs: Box<Term>,
    },
    Arith {
        lhs: Box<Term>,
        op: ArithOp,
        rhs: Box<Term>,
    },
    /// `holder in member`.
    Qualify {
        subject: Box<Term>,
        descriptor: Ident,
    },
    /// Reference to a live instance, `borrowing#7`. Only meaningful in
    /// scenario steps and interactive commands, never in programs.
    Ref {
        name: Option<Ident>,
        id: u64,
    },
}

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::Atom(Ident::new(name).expect("valid identifier"))
    }

    pub fn path(segments: &[&str]) -> Term {
        Term::Path(
            segments
                .iter()
                .map(|s| Ident::new(*s).expect("valid identifier"))
                .collect(),
        )
    }

    /// Builds an alternation, flattening nested alternations.
    pub fn alternation(branches: Vec<Term>) -> Term {
        let mut flat = Vec::with_capacity(branches.len());
        for b in branches {
            match b {
                Term::Alternation(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Term::Alternation(flat)
        }
    }
}

/// `#borrow { item: book }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRef {
    pub name: Ident,
    pub refinements: Fields,
}

impl EventRef {
    pub fn bare(name: &str) -> EventRef {
        EventRef {
            name: Ident::new(name).expect("valid identifier"),
            refinements: Fields::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Create,
    Remove,
}

impl Polarity {
    pub fn sign(self) -> char {
        match self {
            Polarity::Create => '+',
            Polarity::Remove => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Atom, path (flag), call, refined object or instance reference.
    Term(Term),
    /// A normative position, `+power { ... }`.
    Frame(Box<Frame>),
}

/// `+raining`, `-borrowing#7`, `+d1.violation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionEvent {
    pub polarity: Polarity,
    pub target: Target,
}

/// Something a power brings about or a reactive rule triggers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Effect {
    Produce(ProductionEvent),
    Event(EventRef),
    Term(Term),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFrame {
    pub label: Option<Ident>,
    pub holder: Term,
    pub action: EventRef,
    pub consequence: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DutyFrame {
    pub label: Option<Ident>,
    pub holder: Term,
    pub counterparty: Term,
    pub action: EventRef,
    pub violation: Option<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OtherKind {
    Claim,
    Liability,
    Liberty,
    Disability,
    NoClaim,
    Immunity,
}

impl OtherKind {
    pub const ALL: [OtherKind; 6] = [
        OtherKind::Claim,
        OtherKind::Liability,
        OtherKind::Liberty,
        OtherKind::Disability,
        OtherKind::NoClaim,
        OtherKind::Immunity,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            OtherKind::Claim => "claim",
            OtherKind::Liability => "liability",
            OtherKind::Liberty => "liberty",
            OtherKind::Disability => "disability",
            OtherKind::NoClaim => "no_claim",
            OtherKind::Immunity => "immunity",
        }
    }
}

/// Claim, liability, liberty, disability, no-claim and immunity frames are
/// kept verbatim; they take part in state but drive no execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtherPositionFrame {
    pub kind: OtherKind,
    pub label: Option<Ident>,
    pub body: IndexMap<Ident, Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Frame {
    Power(PowerFrame),
    Duty(DutyFrame),
    Other(OtherPositionFrame),
}

impl Frame {
    pub fn label(&self) -> Option<&Ident> {
        match self {
            Frame::Power(p) => p.label.as_ref(),
            Frame::Duty(d) => d.label.as_ref(),
            Frame::Other(o) => o.label.as_ref(),
        }
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            Frame::Power(_) => "power",
            Frame::Duty(_) => "duty",
            Frame::Other(o) => o.kind.keyword(),
        }
    }

    pub fn action(&self) -> Option<&EventRef> {
        match self {
            Frame::Power(p) => Some(&p.action),
            Frame::Duty(d) => Some(&d.action),
            Frame::Other(_) => None,
        }
    }

    pub fn holder(&self) -> Option<&Term> {
        match self {
            Frame::Power(p) => Some(&p.holder),
            Frame::Duty(d) => Some(&d.holder),
            Frame::Other(o) => o.body.get("holder").and_then(|e| match e {
                Effect::Term(t) => Some(t),
                _ => None,
            }),
        }
    }
}

/// Conclusion of a transformational rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum Conclusion {
    Frame(Frame),
    /// An object that holds (`wet`) or a qualification (`x in y`).
    Fact(Term),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    Event(EventRef),
    Production(ProductionEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum Rule {
    /// `condition -> conclusion`: the conclusion holds as long as the condition does.
    Transformational { condition: Term, conclusion: Conclusion },
    /// `trigger => effect`: each occurrence of the trigger causes the effect.
    Reactive { trigger: Trigger, effect: Effect },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Member {
    Frame(Frame),
    Rule(Rule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundDecl {
    pub name: Ident,
    pub params: Vec<Ident>,
    pub members: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Declaration {
    Frame(Frame),
    Rule(Rule),
    Compound(CompoundDecl),
}

/// Source positions for declarations and compound members, used by the
/// validator. Not part of a program's identity.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SpanIndex {
    pub declarations: Vec<crate::parser::SourceSpan>,
    pub members: Vec<Vec<crate::parser::SourceSpan>>,
}

impl PartialEq for SpanIndex {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Program {
    pub source_name: String,
    pub declarations: Vec<Declaration>,
    #[serde(skip)]
    pub spans: SpanIndex,
}

impl Program {
    pub fn new(source_name: impl Into<String>, declarations: Vec<Declaration>) -> Self {
        Program {
            source_name: source_name.into(),
            declarations,
            spans: SpanIndex::default(),
        }
    }

    pub fn compound(&self, name: &str) -> Option<&CompoundDecl> {
        self.declarations.iter().find_map(|d| match d {
            Declaration::Compound(c) if c.name.as_str() == name => Some(c),
            _ => None,
        })
    }

    pub fn compounds(&self) -> impl Iterator<Item = &CompoundDecl> {
        self.declarations.iter().filter_map(|d| match d {
            Declaration::Compound(c) => Some(c),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers() {
        assert!(Ident::new("user").is_ok());
        assert!(Ident::new("id_card").is_ok());
        assert!(Ident::new("d1").is_ok());
        assert!(Ident::new("requestReturn").is_ok());
        assert!(Ident::new("User").is_err());
        assert!(Ident::new("1x").is_err());
        assert!(Ident::new("").is_err());
        assert!(Ident::new("in").is_err());
        assert!(Ident::new("no-claim").is_err());
        assert_ne!(Ident::new("a").unwrap(), Ident::new("b").unwrap());
    }

    #[test]
    fn alternation_is_flat() {
        let t = Term::alternation(vec![
            Term::atom("a"),
            Term::alternation(vec![Term::atom("b"), Term::atom("c")]),
        ]);
        assert_eq!(
            t,
            Term::Alternation(vec![Term::atom("a"), Term::atom("b"), Term::atom("c")])
        );
    }

    #[test]
    fn field_order_is_insignificant() {
        let mut a = Fields::new();
        a.insert(Ident::new("x").unwrap(), Term::Int(1));
        a.insert(Ident::new("y").unwrap(), Term::Int(2));
        let mut b = Fields::new();
        b.insert(Ident::new("y").unwrap(), Term::Int(2));
        b.insert(Ident::new("x").unwrap(), Term::Int(1));
        assert_eq!(a, b);
    }
}
