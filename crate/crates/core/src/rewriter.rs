//! Program-to-program transformations.
//!
//! The one shipped transformation, `violation-to-power`, replaces a duty's
//! `violation:` condition with a guarded power of the counterparty to declare
//! the violation:
//!
//! ```text
//! <cond> -> power {
//!     holder: d1.counterparty
//!     action: #declare_violation { target: d1 }
//!     consequence: +d1.violation
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::*;

pub const VIOLATION_TO_POWER: &str = "violation-to-power";

/// Location of a rewrite site: a frame label, inside a compound or at top
/// level. Displays as `borrowing/d1` or `d1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SitePath {
    pub compound: Option<String>,
    pub label: String,
}

impl fmt::Display for SitePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.compound {
            Some(c) => write!(f, "{c}/{}", self.label),
            None => f.write_str(&self.label),
        }
    }
}

impl SitePath {
    pub fn parse(text: &str) -> SitePath {
        match text.split_once('/') {
            Some((c, l)) => SitePath {
                compound: Some(c.to_string()),
                label: l.to_string(),
            },
            None => SitePath {
                compound: None,
                label: text.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("unknown transformation `{0}`")]
    UnknownTransformation(String),
    #[error("no duty labeled `{0}`")]
    LabelNotFound(String),
    #[error("`{0}` is not a site for this transformation: {1}")]
    NotApplicable(String, String),
}

impl RewriteError {
    pub fn code(&self) -> &'static str {
        match self {
            RewriteError::UnknownTransformation(_) => "unknown-transformation",
            RewriteError::LabelNotFound(_) => "label-not-found",
            RewriteError::NotApplicable(..) => "not-applicable",
        }
    }
}

/// A named transformation: where it applies and how to apply it at one site.
#[derive(Clone, Copy)]
pub struct Transformation {
    pub name: &'static str,
    pub summary: &'static str,
    sites: fn(&Program) -> Vec<SitePath>,
    apply: fn(&Program, &SitePath) -> Result<Program, RewriteError>,
}

impl Transformation {
    pub fn sites(&self, program: &Program) -> Vec<SitePath> {
        (self.sites)(program)
    }

    pub fn apply(&self, program: &Program, site: &SitePath) -> Result<Program, RewriteError> {
        (self.apply)(program, site)
    }

    /// Applies the transformation at every site, in source order.
    pub fn apply_all(&self, program: &Program) -> Result<(Program, Vec<SitePath>), RewriteError> {
        let sites = self.sites(program);
        let mut out = program.clone();
        for site in &sites {
            out = self.apply(&out, site)?;
        }
        Ok((out, sites))
    }
}

impl fmt::Debug for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transformation").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    transformations: BTreeMap<&'static str, Transformation>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry {
            transformations: BTreeMap::new(),
        };
        r.register(Transformation {
            name: VIOLATION_TO_POWER,
            summary: "replace a duty's violation condition with a counterparty power to declare the violation",
            sites: violation_sites,
            apply: apply_violation_site,
        });
        r
    }
}

impl Registry {
    pub fn register(&mut self, t: Transformation) {
        self.transformations.insert(t.name, t);
    }

    pub fn get(&self, name: &str) -> Result<&Transformation, RewriteError> {
        self.transformations
            .get(name)
            .ok_or_else(|| RewriteError::UnknownTransformation(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.transformations.keys().copied()
    }
}

pub fn list_applicable(program: &Program, transformation: &str) -> Result<Vec<SitePath>, RewriteError> {
    Ok(Registry::default().get(transformation)?.sites(program))
}

/// Applies a transformation everywhere. Returns the new program and the sites
/// that were rewritten; a second application finds none.
pub fn apply_all(program: &Program, transformation: &str) -> Result<(Program, Vec<SitePath>), RewriteError> {
    Registry::default().get(transformation)?.apply_all(program)
}

/// Rewrites one duty. `label` is either `d1` (first duty with that label in
/// source order) or `compound/d1`.
pub fn rewrite_violation_to_power(program: &Program, label: &str) -> Result<Program, RewriteError> {
    let wanted = SitePath::parse(label);
    let found = labeled_duties(program)
        .into_iter()
        .find(|(site, _)| site.label == wanted.label && (wanted.compound.is_none() || site.compound == wanted.compound))
        .map(|(site, _)| site)
        .ok_or_else(|| RewriteError::LabelNotFound(label.to_string()))?;
    apply_violation_site(program, &found)
}

fn labeled_duties(program: &Program) -> Vec<(SitePath, &DutyFrame)> {
    let mut out = Vec::new();
    for decl in &program.declarations {
        match decl {
            Declaration::Frame(Frame::Duty(d)) => {
                if let Some(label) = &d.label {
                    out.push((
                        SitePath {
                            compound: None,
                            label: label.to_string(),
                        },
                        d,
                    ));
                }
            }
            Declaration::Compound(c) => {
                for m in &c.members {
                    if let Member::Frame(Frame::Duty(d)) = m {
                        if let Some(label) = &d.label {
                            out.push((
                                SitePath {
                                    compound: Some(c.name.to_string()),
                                    label: label.to_string(),
                                },
                                d,
                            ));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn violation_sites(program: &Program) -> Vec<SitePath> {
    labeled_duties(program)
        .into_iter()
        .filter(|(_, d)| d.violation.is_some())
        .map(|(s, _)| s)
        .collect()
}

/// The rule that replaces `violation: <cond>` on duty `label`.
pub fn declare_violation_rule(label: &Ident, condition: Term) -> Rule {
    let mut refinements = Fields::new();
    refinements.insert(Ident::new("target").unwrap(), Term::Atom(label.clone()));
    Rule::Transformational {
        condition,
        conclusion: Conclusion::Frame(Frame::Power(PowerFrame {
            label: None,
            holder: Term::Path(vec![label.clone(), Ident::new("counterparty").unwrap()]),
            action: EventRef {
                name: Ident::new("declare_violation").unwrap(),
                refinements,
            },
            consequence: Effect::Produce(ProductionEvent {
                polarity: Polarity::Create,
                target: Target::Term(Term::Path(vec![label.clone(), Ident::new("violation").unwrap()])),
            }),
        })),
    }
}

fn strip(duty: &mut DutyFrame, site: &SitePath) -> Result<Term, RewriteError> {
    duty.violation
        .take()
        .ok_or_else(|| RewriteError::NotApplicable(site.to_string(), "the duty has no violation condition".into()))
}

fn apply_violation_site(program: &Program, site: &SitePath) -> Result<Program, RewriteError> {
    let mut out = program.clone();
    out.spans = SpanIndex::default();
    let is_site = |f: &Frame| matches!(f, Frame::Duty(d) if d.label.as_ref().is_some_and(|l| l.as_str() == site.label));
    match &site.compound {
        None => {
            let i = out
                .declarations
                .iter()
                .position(|d| matches!(d, Declaration::Frame(f) if is_site(f)))
                .ok_or_else(|| RewriteError::LabelNotFound(site.to_string()))?;
            let Declaration::Frame(Frame::Duty(duty)) = &mut out.declarations[i] else {
                unreachable!()
            };
            let label = duty.label.clone().unwrap();
            let cond = strip(duty, site)?;
            out.declarations
                .insert(i + 1, Declaration::Rule(declare_violation_rule(&label, cond)));
        }
        Some(name) => {
            let compound = out
                .declarations
                .iter_mut()
                .find_map(|d| match d {
                    Declaration::Compound(c) if c.name.as_str() == name => Some(c),
                    _ => None,
                })
                .ok_or_else(|| RewriteError::LabelNotFound(site.to_string()))?;
            let j = compound
                .members
                .iter()
                .position(|m| matches!(m, Member::Frame(f) if is_site(f)))
                .ok_or_else(|| RewriteError::LabelNotFound(site.to_string()))?;
            let Member::Frame(Frame::Duty(duty)) = &mut compound.members[j] else {
                unreachable!()
            };
            let label = duty.label.clone().unwrap();
            let cond = strip(duty, site)?;
            compound
                .members
                .insert(j + 1, Member::Rule(declare_violation_rule(&label, cond)));
        }
    }
    Ok(out)
}
