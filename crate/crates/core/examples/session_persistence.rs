//! Sessions in a directory outlive the store that created them.

use dpcl::interpreter::{Literal, Step};
use dpcl::session::SessionStore;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let text = |s: &str| Literal::Text(s.into());

    let id = {
        let store = SessionStore::open(dir.path()).unwrap();
        let (program, _) = store
            .add_program("library.dpcl", include_str!("../corpus/library.dpcl"))
            .unwrap();
        let id = store.create_session(&program).unwrap();
        for step in [
            Step::assert("alice", &["student"], &[("id_card", text("c1"))]),
            Step::assert("library", &[], &[]),
            Step::act("alice", "register", &[("instrument", text("c1"))]),
            Step::act("alice", "borrow", &[("item", text("book1"))]),
            Step::advance("1m"),
            Step::advance("1s"),
        ] {
            store.step(&id, &step).unwrap();
        }
        id
    };
    for entry in std::fs::read_dir(dir.path().join("sessions")).unwrap() {
        println!("wrote {}", entry.unwrap().file_name().to_string_lossy());
    }

    let store = SessionStore::open(dir.path()).unwrap();
    let state = store.state(&id).unwrap();
    println!("reopened {id} at clock {}", state.clock);
    let (delta, _) = store.step(&id, &Step::act("library", "fine", &[])).unwrap();
    println!("{delta}");

    // A saved session is a single JSON document that loads anywhere.
    let mut doc = Vec::new();
    store.save_session(&id, &mut doc).unwrap();
    let elsewhere = SessionStore::in_memory();
    let loaded = elsewhere.load_session(doc.as_slice()).unwrap();
    assert_eq!(elsewhere.state(&loaded).unwrap(), store.state(&id).unwrap());
    println!("{} bytes, loads back as {loaded}", doc.len());
}
