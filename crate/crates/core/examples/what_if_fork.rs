//! Fork a session after the loan starts and play out two futures:
//! one where alice returns the book in time, one where she does not.

use dpcl::interpreter::{Literal, Step};
use dpcl::model::InstitutionalState;
use dpcl::session::SessionStore;

fn describe(name: &str, state: &InstitutionalState) {
    let violated: Vec<String> = state
        .positions
        .values()
        .filter(|p| p.violated)
        .map(|p| p.display_name())
        .collect();
    let compounds: Vec<String> = state.compounds.values().map(|c| c.to_string()).collect();
    println!(
        "{name}: clock {}, violated {violated:?}, compounds {compounds:?}",
        state.clock
    );
}

fn main() {
    let store = SessionStore::in_memory();
    let (program, _) = store
        .add_program("library.dpcl", include_str!("../corpus/library.dpcl"))
        .unwrap();
    let main = store.create_session(&program).unwrap();

    let text = |s: &str| Literal::Text(s.into());
    for step in [
        Step::assert("alice", &["student"], &[("id_card", text("c1"))]),
        Step::assert("library", &[], &[]),
        Step::act("alice", "register", &[("instrument", text("c1"))]),
        Step::act("alice", "borrow", &[("item", text("book1"))]),
    ] {
        store.step(&main, &step).unwrap();
    }

    let returns = store.fork(&main).unwrap();
    let keeps = store.fork(&main).unwrap();

    store.step(&returns, &Step::advance("1w")).unwrap();
    store
        .step(&returns, &Step::act("alice", "return", &[("item", text("book1"))]))
        .unwrap();
    store.step(&returns, &Step::advance("1m")).unwrap();

    store.step(&keeps, &Step::advance("1m")).unwrap();
    store.step(&keeps, &Step::advance("1w")).unwrap();
    store.step(&keeps, &Step::act("library", "fine", &[])).unwrap();

    describe("main   ", &store.state(&main).unwrap());
    describe("returns", &store.state(&returns).unwrap());
    describe("keeps  ", &store.state(&keeps).unwrap());
    println!("lineage of {keeps}: {:?}", store.lineage(&keeps).unwrap());
}
