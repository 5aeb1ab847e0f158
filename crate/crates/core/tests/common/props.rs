//! Property bodies shared by the proptest suite and the acceptance run.

use std::collections::BTreeMap;

use dpcl::interpreter::*;
use dpcl::model::*;
use dpcl::parser;
use dpcl::rewriter::{self, VIOLATION_TO_POWER};
use proptest::prelude::*;

pub type Outcome = Result<(), TestCaseError>;

pub fn run(engine: &Engine, steps: Vec<Step>) -> RunOutcome {
    engine.run(&Scenario { steps })
}

/// States after each completed step, starting with the initial one.
pub fn states(trace: &Trace) -> Vec<InstitutionalState> {
    let mut state = trace.initial.clone();
    let mut out = vec![state.clone()];
    for s in &trace.steps {
        s.delta.apply(&mut state);
        out.push(state.clone());
    }
    out
}

pub fn violating_duties(program: &Program) -> usize {
    let duty = |f: &Frame| matches!(f, Frame::Duty(d) if d.label.is_some() && d.violation.is_some());
    program
        .declarations
        .iter()
        .map(|d| match d {
            Declaration::Frame(f) => duty(f) as usize,
            Declaration::Compound(c) => c
                .members
                .iter()
                .filter(|m| matches!(m, Member::Frame(f) if duty(f)))
                .count(),
            Declaration::Rule(_) => 0,
        })
        .sum()
}

pub fn engines() -> [Engine; 2] {
    [super::library(), super::rewritten()]
}

pub fn printed_programs_parse_back_to_the_same_ast(program: Program) -> Outcome {
    let text = pretty_print(&program);
    let parsed = parser::parse(&text).map_err(|d| TestCaseError::fail(format!("{d}\n---\n{text}")))?;
    prop_assert_eq!(parsed.declarations, program.declarations, "\n{}", text);
    Ok(())
}

pub fn rewriting_twice_changes_nothing_more(program: Program) -> Outcome {
    let (once, sites) = rewriter::apply_all(&program, VIOLATION_TO_POWER).unwrap();
    prop_assert_eq!(sites.len(), violating_duties(&program));
    let (twice, again) = rewriter::apply_all(&once, VIOLATION_TO_POWER).unwrap();
    prop_assert!(again.is_empty());
    prop_assert_eq!(twice, once);
    Ok(())
}

pub fn rewritten_programs_still_validate(src: String) -> Outcome {
    let (program, _) = parser::check("gen.dpcl", &src).map_err(|d| TestCaseError::fail(format!("{d}\n---\n{src}")))?;
    let (rewritten, sites) = rewriter::apply_all(&program, VIOLATION_TO_POWER).unwrap();
    prop_assert_eq!(sites.len(), violating_duties(&program));
    prop_assert_eq!(violating_duties(&rewritten), 0);
    let text = pretty_print(&rewritten);
    let (reparsed, _) =
        parser::check("rewritten.dpcl", &text).map_err(|d| TestCaseError::fail(format!("{d}\n---\n{text}")))?;
    prop_assert_eq!(&reparsed.declarations, &rewritten.declarations);
    let (_, again) = rewriter::apply_all(&reparsed, VIOLATION_TO_POWER).unwrap();
    prop_assert!(again.is_empty());
    Ok(())
}

pub fn closure_is_idempotent(steps: Vec<Step>, weather: Vec<Step>) -> Outcome {
    let runs = engines()
        .into_iter()
        .map(|e| (e, steps.clone()))
        .chain([(super::weather(), weather)]);
    for (engine, steps) in runs {
        for mut state in states(&run(&engine, steps).trace) {
            let before = state.clone();
            let delta = engine.recompute_closure(&mut state).unwrap();
            prop_assert!(delta.is_empty(), "closure changed a settled state:\n{}", delta);
            prop_assert_eq!(&state, &before);
        }
    }
    Ok(())
}

pub fn derived_facts_hold_exactly_while_their_condition_does(steps: Vec<Step>) -> Outcome {
    // Removing rain that is not there fails the step; the trace up to
    // that point is still checked.
    let out = run(&super::weather(), steps);
    for state in states(&out.trace) {
        let raining = state.object_named("raining").is_some();
        let member = state.object_named("alice").is_some_and(|a| a.has_descriptor("member"));
        prop_assert_eq!(super::powers_for(&state, "sell_umbrella").len(), raining as usize);
        prop_assert_eq!(state.object_named("wet").is_some(), raining);
        prop_assert_eq!(super::labeled(&state, "fee").len(), member as usize);
        for p in state.positions.values() {
            prop_assert!(matches!(p.origin, PositionOrigin::Derived { .. }), "{:?}", p.origin);
        }
    }
    Ok(())
}

pub fn declare_powers_exist_exactly_after_the_timeout(steps: Vec<Step>) -> Outcome {
    let out = run(&super::rewritten(), steps);
    for state in states(&out.trace) {
        let mut expected: BTreeMap<InstanceId, bool> = BTreeMap::new();
        for c in super::compounds(&state, "borrowing") {
            let timeout = c.args.iter().find(|(k, _)| k == "timeout").map(|(_, v)| v.clone());
            let Some(Value::Int(timeout)) = timeout else {
                panic!("timeout not an int: {c:?}")
            };
            expected.insert(c.id, state.clock > timeout);
        }
        let mut actual: BTreeMap<InstanceId, bool> = expected.keys().map(|k| (*k, false)).collect();
        for p in super::powers_for(&state, "declare_violation") {
            let PositionOrigin::Derived { rule } = &p.origin else {
                panic!("{:?}", p.origin)
            };
            let scope = rule.scope.expect("declared inside the borrowing");
            prop_assert!(state.compounds.contains_key(&scope), "power outlived its compound");
            prop_assert!(
                !actual.insert(scope, true).unwrap(),
                "two declare powers in one borrowing"
            );
        }
        prop_assert_eq!(actual, expected);
    }
    Ok(())
}

pub fn runs_are_deterministic(steps: Vec<Step>) -> Outcome {
    for engine in engines() {
        let a = run(&engine, steps.clone());
        let b = run(&engine, steps.clone());
        prop_assert_eq!(a.trace.to_json(), b.trace.to_json());
        prop_assert_eq!(a.state.to_json(), b.state.to_json());
    }
    Ok(())
}

pub fn replaying_a_trace_gives_the_final_state(steps: Vec<Step>, weather: Vec<Step>) -> Outcome {
    let runs = engines()
        .into_iter()
        .map(|e| (e, steps.clone()))
        .chain([(super::weather(), weather)]);
    for (engine, steps) in runs {
        let out = run(&engine, steps);
        prop_assert_eq!(&out.trace.replay(), &out.state);
        let stored: Trace = serde_json::from_str(&out.trace.to_json()).unwrap();
        prop_assert_eq!(stored.replay(), out.state);
    }
    Ok(())
}

pub fn the_clock_never_goes_back(steps: Vec<Step>) -> Outcome {
    for engine in engines() {
        let out = run(&engine, steps.clone());
        let mut last = out.trace.initial.clock;
        for s in &out.trace.steps {
            prop_assert_eq!(s.delta.clock_before, last);
            prop_assert!(s.delta.clock_after >= s.delta.clock_before);
            prop_assert_eq!(s.clock, s.delta.clock_after);
            last = s.clock;
        }
        let times: Vec<Ticks> = out.state.event_log.iter().map(|e| e.at).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]), "{:?}", times);
    }
    Ok(())
}

pub fn each_duty_is_violated_at_most_once(steps: Vec<Step>, weather: Vec<Step>) -> Outcome {
    let runs = engines()
        .into_iter()
        .map(|e| (e, steps.clone()))
        .chain([(super::weather(), weather)]);
    for (engine, steps) in runs {
        let out = run(&engine, steps);
        let mut raised: BTreeMap<InstanceId, usize> = BTreeMap::new();
        for s in &out.trace.steps {
            for id in &s.delta.violations_raised {
                *raised.entry(*id).or_default() += 1;
            }
        }
        let mut produced: BTreeMap<InstanceId, usize> = BTreeMap::new();
        for e in &out.state.event_log {
            if let EventProvenance::Violation { duty } = e.provenance {
                *produced.entry(duty).or_default() += 1;
            }
        }
        prop_assert!(raised.values().all(|n| *n == 1), "{:?}", raised);
        prop_assert!(produced.values().all(|n| *n == 1), "{:?}", produced);
    }
    Ok(())
}

pub fn the_rewrite_is_equivalent_once_violations_are_declared(steps: Vec<Step>) -> Outcome {
    let steps: Vec<Step> = steps
        .into_iter()
        .filter(|s| !matches!(s, Step::Do(d) if d.event == "declare_violation"))
        .collect();
    super::check_equivalence(&steps).map_err(TestCaseError::fail)?;
    Ok(())
}

pub fn the_rewritten_program_never_violates_on_its_own(steps: Vec<Step>) -> Outcome {
    let steps: Vec<Step> = steps
        .into_iter()
        .filter(|s| !matches!(s, Step::Do(d) if d.event == "declare_violation"))
        .collect();
    let out = run(&super::rewritten(), steps);
    prop_assert!(out.state.positions.values().all(|p| !p.violated));
    prop_assert!(out.trace.steps.iter().all(|s| s.delta.violations_raised.is_empty()));
    Ok(())
}
