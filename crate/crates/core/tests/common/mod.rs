#![allow(dead_code)]

pub mod gen;
pub mod props;

use dpcl::interpreter::*;
use dpcl::model::*;
use dpcl::parser;

pub const LIBRARY: &str = include_str!("../../corpus/library.dpcl");
pub const LIBRARY_REWRITTEN: &str = include_str!("../../corpus/library.rewritten.dpcl");
pub const CANONICAL: &str = include_str!("../../corpus/library.scenario.json");
pub const DISCHARGE: &str = include_str!("../../corpus/library.discharge.scenario.json");
pub const REQUEST_RETURN: &str = include_str!("../../corpus/library.request_return.scenario.json");
pub const DECLARE: &str = include_str!("../../corpus/library.declare.scenario.json");

/// Conditions here can become false again, unlike the library's clock test.
pub const WEATHER: &str = "\
raining -> power {
    holder: shop
    action: #sell_umbrella
    consequence: +sold
}
alice in member -> duty fee {
    holder: alice
    counterparty: shop
    action: #pay
    violation: now() > 10
}
raining -> wet
";

pub fn program(name: &str, src: &str) -> Program {
    match parser::check(name, src) {
        Ok((p, _)) => p,
        Err(d) => panic!("{name} does not check:\n{d}"),
    }
}

pub fn library() -> Engine {
    Engine::new(program("library.dpcl", LIBRARY))
}

pub fn rewritten() -> Engine {
    Engine::new(program("library.rewritten.dpcl", LIBRARY_REWRITTEN))
}

pub fn weather() -> Engine {
    Engine::new(program("weather.dpcl", WEATHER))
}

pub fn scenario(json: &str) -> Scenario {
    Scenario::from_json(json).unwrap()
}

pub fn text(s: &str) -> Literal {
    Literal::Text(s.into())
}

/// The first four canonical steps: alice registered and holding book1 at t=0.
pub fn borrowed() -> Vec<Step> {
    vec![
        Step::assert("alice", &["student"], &[("id_card", text("c1"))]),
        Step::assert("library", &[], &[]),
        Step::act("alice", "register", &[("instrument", text("c1"))]),
        Step::act("alice", "borrow", &[("item", text("book1"))]),
    ]
}

pub fn run_steps(engine: &Engine, steps: Vec<Step>) -> RunOutcome {
    let out = engine.run(&Scenario { steps });
    assert!(out.error.is_none(), "scenario failed: {:?}", out.error);
    out
}

pub fn compounds<'s>(state: &'s InstitutionalState, decl: &str) -> Vec<&'s CompoundInstance> {
    state.compounds.values().filter(|c| c.decl == decl).collect()
}

pub fn powers_for<'s>(state: &'s InstitutionalState, action: &str) -> Vec<&'s PositionInstance> {
    state
        .positions
        .values()
        .filter(|p| p.kind == PositionKind::Power && p.frame.action().is_some_and(|a| a.name.as_str() == action))
        .collect()
}

pub fn labeled<'s>(state: &'s InstitutionalState, label: &str) -> Vec<&'s PositionInstance> {
    state
        .positions
        .values()
        .filter(|p| p.label.as_deref() == Some(label))
        .collect()
}

/// Productions in the log rendered exactly as `text`, e.g. `+d1.violation`.
pub fn productions(log: &[EventOccurrence], text: &str) -> usize {
    log.iter()
        .filter(|e| matches!(&e.event, Occurrence::Production(p) if p.rendered == text))
        .count()
}

pub fn holder(p: &PositionInstance) -> Option<String> {
    p.env.get("holder").map(|v| v.to_string())
}

/// Positions, objects and compounds with instance ids factored out, so runs
/// of the original and rewritten programs can be compared. The rewrite's own
/// declare powers are left out.
pub fn observable(state: &InstitutionalState) -> Vec<String> {
    let mut out = Vec::new();
    for p in state.positions.values() {
        if p.frame.action().is_some_and(|a| a.name.as_str() == "declare_violation") {
            continue;
        }
        let env: Vec<String> = p
            .env
            .iter()
            .filter(|(_, v)| !matches!(v, Value::Ref(_)))
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        // The rewrite moves d1's violation condition out of the frame.
        let mut frame = p.frame.clone();
        if let Frame::Duty(d) = &mut frame {
            d.violation = None;
        }
        let scope = match &p.origin {
            PositionOrigin::CompoundMember { compound } => state.compounds[compound].to_string(),
            _ => String::new(),
        };
        out.push(format!(
            "position {} {:?} {} [{}] in {scope} violated={}",
            p.kind.as_str(),
            p.label,
            frame_to_string(&frame),
            env.join(", "),
            p.violated
        ));
    }
    for o in state.objects.values() {
        let d: Vec<&String> = o.descriptors.keys().collect();
        out.push(format!("object {} {:?} {:?}", o.name, d, o.properties));
    }
    for c in state.compounds.values() {
        out.push(format!("compound {c}"));
    }
    out.sort();
    out
}

/// In the rewritten program, has the counterparty of every overdue,
/// undeclared d1 declare the violation. Returns how many were declared.
pub fn declare_overdue(engine: &Engine, state: &mut InstitutionalState) -> usize {
    let mut pending = Vec::new();
    for c in state.compounds.values().filter(|c| c.decl == "borrowing") {
        let Some(Value::Int(timeout)) = c.args.iter().find(|(k, _)| k == "timeout").map(|(_, v)| v.clone()) else {
            continue;
        };
        let Some(d1) = c.labels.get("d1").and_then(|id| state.positions.get(id)) else {
            continue;
        };
        if state.clock > timeout && !d1.violated {
            let lender = d1.env["counterparty"].to_string();
            pending.push((lender, d1.id));
        }
    }
    for (lender, d1) in &pending {
        let event = GroundEvent::new("declare_violation").with("target", Value::Ref(*d1));
        let delta = engine.do_action(state, lender, &event).expect("declaring succeeds");
        assert!(!delta.disabled, "{lender} could not declare {d1}");
    }
    pending.len()
}

/// Runs `steps` through both programs, declaring violations in the
/// rewritten one right after each timeout passes, and checks the observable
/// states agree after every step. Returns the number of declarations made.
pub fn check_equivalence(steps: &[Step]) -> Result<usize, String> {
    let (orig, rw) = (library(), rewritten());
    let mut a = orig.init_state(0).unwrap();
    let mut b = rw.init_state(0).unwrap();
    let mut declared = 0;
    for (i, step) in steps.iter().enumerate() {
        match (orig.apply_step(&mut a, step), rw.apply_step(&mut b, step)) {
            (Ok(_), Ok(_)) => {}
            (Err(x), Err(y)) if x.code() == y.code() => return Ok(declared),
            (x, y) => return Err(format!("step {i} {step:?}: {x:?} vs {y:?}")),
        }
        declared += declare_overdue(&rw, &mut b);
        let (oa, ob) = (observable(&a), observable(&b));
        if oa != ob {
            return Err(format!(
                "after step {i} {step:?}:\n original {oa:#?}\n rewritten {ob:#?}"
            ));
        }
    }
    Ok(declared)
}
