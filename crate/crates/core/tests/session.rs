mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use dpcl::interpreter::Step;
use dpcl::model::*;
use dpcl::session::{Session, SessionStore, StoreError};

fn store_with_library() -> (SessionStore, String) {
    let store = SessionStore::in_memory();
    let (id, warnings) = store.add_program("library.dpcl", common::LIBRARY).unwrap();
    assert!(warnings.is_empty());
    (store, id)
}

fn play(store: &SessionStore, session: &str, steps: &[Step]) {
    for s in steps {
        store.step(session, s).unwrap();
    }
}

#[test]
fn new_sessions() {
    let (store, program) = store_with_library();
    let s = store.create_session(&program).unwrap();
    let state = store.state(&s).unwrap();
    assert_eq!(state.clock, 0);
    assert_eq!(state.positions.len(), 2);
    assert!(state.positions.values().all(|p| p.kind == PositionKind::Power));

    let empty = store.create_session_for(Program::default()).unwrap();
    assert!(store.state(&empty).unwrap().is_empty());

    let ids: BTreeSet<String> = (0..200).map(|_| store.create_session(&program).unwrap()).collect();
    assert_eq!(ids.len(), 200);
    assert!(ids
        .iter()
        .all(|id| id.len() == 8 && id.chars().all(|c| c.is_ascii_alphanumeric())));

    assert!(matches!(
        store.create_session("nope"),
        Err(StoreError::UnknownProgram(_))
    ));
    assert!(matches!(store.state("nope"), Err(StoreError::UnknownSession(_))));
}

#[test]
fn bad_programs_are_refused() {
    let store = SessionStore::in_memory();
    let err = store.add_program("bad.dpcl", "power { holder: x }").unwrap_err();
    assert_eq!(err.code(), "invalid-program");
    let StoreError::Program(d) = err else { panic!() };
    assert_eq!(d.len(), 2);
}

#[test]
fn forks_are_isolated() {
    let (store, program) = store_with_library();
    let parent = store.create_session(&program).unwrap();
    play(&store, &parent, &common::borrowed());
    let child = store.fork(&parent).unwrap();
    assert_ne!(child, parent);
    assert_eq!(store.state(&child).unwrap(), store.state(&parent).unwrap());
    assert_eq!(store.trace(&child).unwrap().initial, store.state(&parent).unwrap());

    let before = store.state(&parent).unwrap();
    store.step(&child, &Step::advance("2m")).unwrap();
    assert_eq!(store.state(&parent).unwrap(), before);
    assert_eq!(store.state(&child).unwrap().clock, 2 * 2_592_000);
    assert!(common::labeled(&store.state(&child).unwrap(), "d1")[0].violated);
    assert!(!common::labeled(&before, "d1")[0].violated);

    store
        .step(
            &parent,
            &Step::act("alice", "return", &[("item", common::text("book1"))]),
        )
        .unwrap();
    assert_eq!(common::labeled(&store.state(&child).unwrap(), "d1").len(), 1);

    let grandchild = store.fork(&child).unwrap();
    assert_eq!(store.lineage(&grandchild).unwrap(), vec![child.clone(), parent.clone()]);
    assert!(store.lineage(&parent).unwrap().is_empty());
    assert!(store.fork("missing").is_err());
}

#[test]
fn failed_steps_change_nothing() {
    let (store, program) = store_with_library();
    let s = store.create_session(&program).unwrap();
    play(&store, &s, &common::borrowed()[..2]);
    let before = (store.state(&s).unwrap(), store.trace(&s).unwrap());
    let err = store.step(&s, &Step::act("ghost", "register", &[])).unwrap_err();
    assert_eq!(err.code(), "unknown-actor");
    assert_eq!((store.state(&s).unwrap(), store.trace(&s).unwrap()), before);
}

#[test]
fn save_and_load_round_trip() {
    let (store, program) = store_with_library();
    let s = store.create_session(&program).unwrap();
    let mut fresh = Vec::new();
    store.save_session(&s, &mut fresh).unwrap();

    let mut steps = common::borrowed();
    steps.extend([Step::advance("1m"), Step::advance("1s")]);
    play(&store, &s, &steps);
    let mut saved = Vec::new();
    store.save_session(&s, &mut saved).unwrap();

    let other = SessionStore::in_memory();
    let id = other.load_session(saved.as_slice()).unwrap();
    assert_eq!(id, s);
    let (a, b) = (store.state(&s).unwrap(), other.state(&id).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    assert!(common::labeled(&b, "d1")[0].violated);
    assert_eq!(store.trace(&s).unwrap(), other.trace(&id).unwrap());

    // Loaded sessions keep running exactly like the original.
    let fine = Step::act("library", "fine", &[]);
    store.step(&s, &fine).unwrap();
    other.step(&id, &fine).unwrap();
    assert_eq!(store.state(&s).unwrap(), other.state(&id).unwrap());

    let loaded = Session::load(fresh.as_slice()).unwrap();
    assert_eq!(loaded.state.positions.len(), 2);
    assert_eq!(loaded.state.clock, 0);
}

#[test]
fn corrupt_and_foreign_payloads() {
    let (store, program) = store_with_library();
    let s = store.create_session(&program).unwrap();
    let mut saved = Vec::new();
    store.save_session(&s, &mut saved).unwrap();

    let truncated = &saved[..saved.len() / 2];
    assert_eq!(store.load_session(truncated).unwrap_err().code(), "corrupt-payload");

    let text = String::from_utf8(saved)
        .unwrap()
        .replace("\"dpcl_schema\": 1", "\"dpcl_schema\": 2");
    assert!(matches!(
        store.load_session(text.as_bytes()),
        Err(StoreError::VersionMismatch { found: 2 })
    ));
    assert_eq!(store.load_session(&b"{}"[..]).unwrap_err().code(), "corrupt-payload");
}

#[test]
fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (session, child, state) = {
        let store = SessionStore::open(dir.path()).unwrap();
        let (program, _) = store.add_program("library.dpcl", common::LIBRARY).unwrap();
        let s = store.create_session(&program).unwrap();
        play(&store, &s, &common::borrowed());
        let child = store.fork(&s).unwrap();
        store.step(&child, &Step::advance("1d")).unwrap();
        let state = store.state(&s).unwrap();
        (s, child, state)
    };
    let files: BTreeSet<String> = std::fs::read_dir(dir.path().join("sessions"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(files.contains(&format!("{session}.json")));
    assert!(files.contains(&format!("{session}.trace.json")));
    let doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("sessions").join(format!("{session}.json"))).unwrap(),
    )
    .unwrap();
    assert_eq!(doc["dpcl_schema"], 1);

    let store = SessionStore::open(dir.path()).unwrap();
    assert_eq!(store.state(&session).unwrap(), state);
    assert_eq!(store.trace(&session).unwrap().steps.len(), 4);
    assert_eq!(store.trace(&session).unwrap().replay(), state);
    assert_eq!(store.lineage(&child).unwrap(), vec![session.clone()]);
    assert_eq!(store.state(&child).unwrap().clock, 86_400);
    let ids = store.session_ids();
    assert!(ids.contains(&session) && ids.contains(&child));
    store
        .step(&session, &Step::act("library", "request_return", &[]))
        .unwrap();
}

#[test]
fn concurrent_steps_are_serialized() {
    let store = Arc::new(SessionStore::in_memory());
    let (program, _) = store.add_program("library.dpcl", common::LIBRARY).unwrap();
    let shared = store.create_session(&program).unwrap();
    let own: Vec<String> = (0..4).map(|_| store.create_session(&program).unwrap()).collect();
    std::thread::scope(|scope| {
        for mine in &own {
            let store = store.clone();
            let shared = shared.clone();
            scope.spawn(move || {
                for _ in 0..25 {
                    store.step(&shared, &Step::advance("1s")).unwrap();
                    store.step(mine, &Step::advance("1h")).unwrap();
                }
            });
        }
    });
    let trace = store.trace(&shared).unwrap();
    assert_eq!(store.state(&shared).unwrap().clock, 100);
    let clocks: Vec<Ticks> = trace.steps.iter().map(|s| s.clock).collect();
    assert_eq!(clocks, (1..=100).collect::<Vec<_>>());
    for id in &own {
        assert_eq!(store.state(id).unwrap().clock, 25 * 3_600);
    }
}
