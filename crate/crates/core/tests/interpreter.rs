mod common;

use common::{borrowed, compounds, labeled, powers_for, productions, run_steps, text};
use dpcl::interpreter::*;
use dpcl::model::*;
use dpcl::parser;

const MONTH: Ticks = 30 * 86_400;

fn engine(src: &str) -> Engine {
    Engine::new(common::program("t.dpcl", src))
}

fn setup(engine: &Engine, steps: Vec<Step>) -> InstitutionalState {
    run_steps(engine, steps).state
}

fn act(engine: &Engine, state: &mut InstitutionalState, actor: &str, event: &str) -> Result<StateDelta, EngineError> {
    let e = parser::parse_event(event).unwrap();
    let ground = engine.ground_event(state, &e)?;
    engine.do_action(state, actor, &ground)
}

#[test]
fn initial_state() {
    let lib = common::library();
    let s = lib.init_state(0).unwrap();
    let actions: Vec<&str> = s
        .positions
        .values()
        .map(|p| p.frame.action().unwrap().name.as_str())
        .collect();
    assert_eq!(actions, ["register", "borrow"]);
    assert!(s.positions.values().all(|p| p.kind == PositionKind::Power));

    assert!(engine("").init_state(0).unwrap().positions.is_empty());
    let rainy = engine("raining -> power { holder: shop action: #sell consequence: +sold }");
    assert!(rainy.init_state(0).unwrap().positions.is_empty());
}

#[test]
fn register_adds_member() {
    let lib = common::library();
    let mut s = setup(&lib, borrowed()[..2].to_vec());
    let d = act(&lib, &mut s, "alice", "#register { instrument: c1 }").unwrap();
    assert!(s.object_named("alice").unwrap().has_descriptor("member"));
    assert_eq!(d.descriptor_changes.len(), 1);
    assert_eq!(d.descriptor_changes[0].descriptor, "member");
    assert_eq!(d.to_string(), "event #register { instrument: c1 }\nalice in member");
}

#[test]
fn register_needs_the_right_card() {
    let lib = common::library();
    let mut s = setup(&lib, borrowed()[..2].to_vec());
    let d = act(&lib, &mut s, "alice", "#register { instrument: c2 }").unwrap();
    assert!(d.disabled);
    assert!(!s.object_named("alice").unwrap().has_descriptor("member"));
}

#[test]
fn actor_without_descriptors_is_disabled() {
    let lib = common::library();
    let mut s = setup(&lib, vec![Step::assert("bob", &[], &[])]);
    let before = s.clone();
    let d = act(&lib, &mut s, "bob", "#register { instrument: x }").unwrap();
    assert!(d.disabled);
    assert!(d.descriptor_changes.is_empty() && d.positions_created.is_empty());
    assert_eq!(s.objects, before.objects);
    assert_eq!(s.positions, before.positions);
    assert!(s.event_log.last().unwrap().disabled);
}

#[test]
fn borrow_creates_the_compound() {
    let lib = common::library();
    let mut steps = borrowed()[..3].to_vec();
    steps.push(Step::advance("100s"));
    let mut s = setup(&lib, steps);
    act(&lib, &mut s, "alice", "#borrow { item: book1 }").unwrap();
    let b = compounds(&s, "borrowing");
    assert_eq!(b.len(), 1);
    let args: Vec<(&str, String)> = b[0].args.iter().map(|(k, v)| (k.as_str(), v.to_string())).collect();
    assert_eq!(
        args,
        [
            ("lender", "library".to_string()),
            ("borrower", "alice".to_string()),
            ("item", "book1".to_string()),
            ("timeout", (100 + MONTH).to_string()),
        ]
    );
    let members: Vec<&PositionInstance> = b[0].members.iter().map(|id| &s.positions[id]).collect();
    assert_eq!(members.len(), 2);
    assert_eq!(members[0].frame.action().unwrap().name.as_str(), "request_return");
    assert_eq!(members[1].label.as_deref(), Some("d1"));
    assert_eq!(common::holder(members[1]).as_deref(), Some("alice"));
    assert!(!members[1].violated);
}

#[test]
fn violation_after_timeout() {
    let lib = common::library();
    let mut s = setup(&lib, borrowed());
    let d = lib.advance_clock(&mut s, "1m".parse().unwrap()).unwrap();
    assert!(d.violations_raised.is_empty());
    assert!(powers_for(&s, "fine").is_empty());

    let d = lib.advance_clock(&mut s, "1s".parse().unwrap()).unwrap();
    assert_eq!(s.clock, MONTH + 1);
    assert_eq!(d.violations_raised.len(), 1);
    assert!(labeled(&s, "d1")[0].violated);
    let fine = powers_for(&s, "fine");
    assert_eq!(fine.len(), 1);
    assert_eq!(common::holder(fine[0]).as_deref(), Some("library"));
    assert!(d.to_string().contains("d1 violated"), "{d}");

    lib.advance_clock(&mut s, "1d".parse().unwrap()).unwrap();
    lib.advance_clock(&mut s, "1m".parse().unwrap()).unwrap();
    assert_eq!(productions(&s.event_log, "+d1.violation"), 1);
    assert_eq!(powers_for(&s, "fine").len(), 1);
}

#[test]
fn zero_advance_changes_nothing() {
    let lib = common::library();
    let mut s = setup(&lib, borrowed());
    let before = s.clone();
    let d = lib.advance_clock(&mut s, "0s".parse().unwrap()).unwrap();
    assert!(d.is_empty());
    assert_eq!(s, before);
}

#[test]
fn clock_overflow() {
    let lib = common::library();
    let mut s = lib.init_state(0).unwrap();
    let err = lib
        .advance_clock(&mut s, Duration::new(u64::MAX / 2, TimeUnit::Y))
        .unwrap_err();
    assert_eq!(err.code(), "arithmetic-overflow");
    lib.advance_ticks(&mut s, Ticks::MAX - 5).unwrap();
    assert_eq!(lib.advance_ticks(&mut s, 10).unwrap_err(), EngineError::Overflow);
    assert_eq!(s.clock, Ticks::MAX - 5);
}

#[test]
fn derived_power_follows_the_clock() {
    let rw = common::rewritten();
    let mut s = setup(&rw, borrowed());
    assert!(powers_for(&s, "declare_violation").is_empty());
    rw.advance_clock(&mut s, "1m".parse().unwrap()).unwrap();
    assert!(powers_for(&s, "declare_violation").is_empty());
    rw.advance_clock(&mut s, "1s".parse().unwrap()).unwrap();
    let declare = powers_for(&s, "declare_violation");
    assert_eq!(declare.len(), 1);
    assert_eq!(common::holder(declare[0]).as_deref(), Some("library"));

    let id = compounds(&s, "borrowing")[0].id;
    let prod = parser::parse_production(&format!("-borrowing#{}", id.0)).unwrap();
    rw.produce(&mut s, &prod).unwrap();
    assert!(powers_for(&s, "declare_violation").is_empty());
    assert!(labeled(&s, "d1").is_empty());

    let mut fresh = s.clone();
    assert!(rw.recompute_closure(&mut fresh).unwrap().is_empty());
}

#[test]
fn productions_of_plain_objects() {
    let e = engine("raining -> wet");
    let mut s = e.init_state(0).unwrap();
    let plus = parser::parse_production("+raining").unwrap();
    e.produce(&mut s, &plus).unwrap();
    assert!(s.object_named("wet").is_some());
    let d = e.produce(&mut s, &plus).unwrap();
    assert!(d.is_empty());
    assert_eq!(s.objects.values().filter(|o| o.name == "raining").count(), 1);

    e.produce(&mut s, &parser::parse_production("-raining").unwrap())
        .unwrap();
    assert!(s.object_named("wet").is_none());
    let err = e
        .produce(&mut s, &parser::parse_production("-raining").unwrap())
        .unwrap_err();
    assert_eq!(err.code(), "missing-target");
}

#[test]
fn removing_a_compound_takes_its_members() {
    let lib = common::library();
    let mut s = setup(&lib, borrowed());
    let b = compounds(&s, "borrowing")[0].clone();
    assert_eq!(b.id, InstanceId(5));
    let d = lib
        .produce(&mut s, &parser::parse_production("-borrowing#5").unwrap())
        .unwrap();
    assert!(s.compounds.is_empty());
    for m in &b.members {
        assert!(!s.positions.contains_key(m));
    }
    assert_eq!(d.positions_removed, b.members);
    assert!(powers_for(&s, "request_return").is_empty());
}

#[test]
fn returning_discharges_d1() {
    let lib = common::library();
    let mut s = setup(&lib, borrowed());
    let d = act(&lib, &mut s, "alice", "#return { item: book1 }").unwrap();
    assert!(!d.disabled);
    assert!(labeled(&s, "d1").is_empty());
    assert_eq!(d.positions_removed.len(), 1);
    lib.advance_clock(&mut s, "2m".parse().unwrap()).unwrap();
    assert!(s.positions.values().all(|p| !p.violated));
    assert!(powers_for(&s, "fine").is_empty());
}

#[test]
fn request_return_creates_a_duty() {
    let lib = common::library();
    let mut s = setup(&lib, borrowed());
    let d = act(&lib, &mut s, "library", "#request_return").unwrap();
    assert_eq!(d.positions_created.len(), 1);
    let duty = &d.positions_created[0];
    assert_eq!(duty.kind, PositionKind::Duty);
    assert_eq!(duty.label, None);
    assert_eq!(duty.frame.action().unwrap().name.as_str(), "return");
    assert_eq!(common::holder(duty).as_deref(), Some("alice"));
    assert_eq!(duty.env.get("counterparty"), Some(&Value::sym("library")));
    assert!(matches!(duty.origin, PositionOrigin::Produced { .. }));

    let err = act(&lib, &mut s, "alice", "#request_return").unwrap();
    assert!(err.disabled);
}

#[test]
fn fine_produces_the_compound() {
    let out = run_steps(&common::library(), common::scenario(common::CANONICAL).steps);
    let fines = compounds(&out.state, "fine");
    assert_eq!(fines.len(), 1);
    assert_eq!(
        fines[0].args,
        vec![
            ("borrower".to_string(), Value::sym("alice")),
            ("lender".to_string(), Value::sym("library"))
        ]
    );
    assert_eq!(fines[0].to_string(), "fine(alice, library)");
}

#[test]
fn runs() {
    let lib = common::library();
    let empty = lib.run(&Scenario::default());
    assert!(empty.trace.steps.is_empty() && empty.error.is_none());
    assert_eq!(empty.state, empty.trace.initial);

    let s = common::scenario(common::CANONICAL);
    let a = lib.run(&s);
    let b = lib.run(&s);
    assert_eq!(a.trace.to_json(), b.trace.to_json());
    assert_eq!(a.trace.replay(), a.state);
}

#[test]
fn failing_step_keeps_the_partial_trace() {
    let lib = common::library();
    let mut steps = borrowed();
    steps.insert(2, Step::act("mallory", "register", &[("instrument", text("c1"))]));
    let out = lib.run(&Scenario { steps });
    assert_eq!(out.error, Some(EngineError::UnknownActor("mallory".into())));
    assert_eq!(out.trace.steps.len(), 2);
    let err = out.trace.error.unwrap();
    assert_eq!((err.step, err.code.as_str()), (2, "unknown-actor"));
}

#[test]
fn unresolvable_refinement() {
    let lib = common::library();
    let s = setup(&lib, borrowed()[..2].to_vec());
    let e = parser::parse_event("#register { instrument: alice.passport }").unwrap();
    assert_eq!(lib.ground_event(&s, &e).unwrap_err().code(), "unresolvable-path");
    let e = parser::parse_event("#register { instrument: alice.id_card }").unwrap();
    assert_eq!(
        lib.ground_event(&s, &e).unwrap(),
        GroundEvent::new("register").with("instrument", Value::sym("c1"))
    );
}

#[test]
fn reactive_loops_hit_the_budget() {
    let e = Engine::with_limits(
        common::program(
            "loop.dpcl",
            "power { holder: a action: #ping consequence: +pinged }\n#ping => #ping",
        ),
        Limits {
            cascade_budget: 50,
            ..Limits::default()
        },
    );
    let mut s = setup(&e, vec![Step::assert("a", &[], &[])]);
    let before = s.clone();
    let err = act(&e, &mut s, "a", "#ping").unwrap_err();
    assert_eq!(err, EngineError::CascadeLimit(50));
    assert_eq!(s, before, "a failed step leaves the state alone");
}

#[test]
fn closure_pass_cap() {
    let src = "c -> d\nb -> c\na -> b";
    let tight = Engine::with_limits(
        common::program("chain.dpcl", src),
        Limits {
            closure_passes: 2,
            ..Limits::default()
        },
    );
    let mut s = tight.init_state(0).unwrap();
    let err = tight
        .produce(&mut s, &parser::parse_production("+a").unwrap())
        .unwrap_err();
    assert_eq!(err.code(), "closure-divergence");

    let e = engine(src);
    let mut s = e.init_state(0).unwrap();
    e.produce(&mut s, &parser::parse_production("+a").unwrap()).unwrap();
    assert!(s.object_named("d").is_some());
}

#[test]
fn queries() {
    let lib = common::library();
    let fresh = setup(&lib, borrowed()[..2].to_vec());
    let powers = PositionFilter {
        kind: Some(PositionKind::Power),
        ..Default::default()
    };
    assert_eq!(lib.query_positions(&fresh, &powers).len(), 2);
    let violated = PositionFilter {
        violated: Some(true),
        ..Default::default()
    };
    assert!(lib.query_positions(&fresh, &violated).is_empty());

    let s = setup(&lib, borrowed());
    let alice = PositionFilter {
        holder: Some("alice".into()),
        ..Default::default()
    };
    let held: Vec<Option<&str>> = lib
        .query_positions(&s, &alice)
        .iter()
        .map(|p| p.label.as_deref())
        .collect();
    assert!(held.contains(&Some("d1")), "{held:?}");
    let ids: Vec<InstanceId> = lib
        .query_positions(&s, &PositionFilter::default())
        .iter()
        .map(|p| p.id)
        .collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    let by_action = PositionFilter {
        action: Some("#return".into()),
        ..Default::default()
    };
    assert_eq!(lib.query_positions(&s, &by_action).len(), 1);
}

#[test]
fn enabled_actions() {
    let lib = common::library();
    let s = setup(&lib, borrowed()[..2].to_vec());
    let alice: Vec<String> = lib
        .enabled_actions(&s, "alice")
        .unwrap()
        .iter()
        .map(|a| a.to_string())
        .collect();
    assert_eq!(alice, ["#register { instrument: c1 }"]);
    assert!(lib.enabled_actions(&s, "library").unwrap().is_empty());
    assert_eq!(lib.enabled_actions(&s, "nobody").unwrap_err().code(), "unknown-actor");

    let out = run_steps(&lib, common::scenario(common::CANONICAL).steps[..6].to_vec());
    let library: Vec<String> = lib
        .enabled_actions(&out.state, "library")
        .unwrap()
        .iter()
        .map(|a| a.action.clone())
        .collect();
    assert!(library.contains(&"fine".to_string()), "{library:?}");
    assert!(library.contains(&"request_return".to_string()));
}

#[test]
fn actors_by_reference() {
    let lib = common::library();
    let s = setup(&lib, borrowed()[..2].to_vec());
    let id = s.object_named("alice").unwrap().id;
    assert_eq!(lib.resolve_actor(&s, "alice").unwrap(), id);
    assert_eq!(lib.resolve_actor(&s, &format!("#{}", id.0)).unwrap(), id);
    assert_eq!(lib.resolve_actor(&s, &format!("alice#{}", id.0)).unwrap(), id);
    assert!(lib.resolve_actor(&s, "#999").is_err());
}

#[test]
fn delta_replays_each_step() {
    let lib = common::library();
    let out = run_steps(&lib, common::scenario(common::CANONICAL).steps);
    let mut state = out.trace.initial.clone();
    for step in &out.trace.steps {
        let mut direct = state.clone();
        let again = lib.apply_step(&mut direct, &step.step).unwrap();
        assert_eq!(again, step.delta);
        step.delta.apply(&mut state);
        assert_eq!(state, direct);
    }
}

#[test]
fn scenario_json_format() {
    let s = common::scenario(common::CANONICAL);
    assert_eq!(s.steps.len(), 7);
    assert_eq!(s.steps[4], Step::advance("1m"));
    let json = serde_json::to_string(&s).unwrap();
    assert_eq!(Scenario::from_json(&json).unwrap(), s);
    assert!(Scenario::from_json(r#"{"steps":[{"jump":1}]}"#).is_err());
    assert_eq!(
        Literal::Text("borrowing#7".into()).to_value(),
        Value::Ref(InstanceId(7))
    );
    assert_eq!(Literal::Text("book1".into()).to_value(), Value::sym("book1"));
}
