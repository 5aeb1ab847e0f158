//! Turn d1's automatic violation into a power the lender must exercise,
//! then show that nothing is violated until the lender declares it.

use dpcl::interpreter::{Engine, Literal, Step};
use dpcl::model::pretty_print;
use dpcl::parser;
use dpcl::rewriter::{self, VIOLATION_TO_POWER};

fn main() {
    let (program, _) = parser::check("library.dpcl", include_str!("../corpus/library.dpcl")).unwrap();
    let (rewritten, sites) = rewriter::apply_all(&program, VIOLATION_TO_POWER).unwrap();
    for site in &sites {
        println!("rewrote {site}");
    }
    println!("\n{}", pretty_print(&rewritten));

    let engine = Engine::new(rewritten);
    let mut state = engine.init_state(0).unwrap();
    let text = |s: &str| Literal::Text(s.into());
    for step in [
        Step::assert("alice", &["student"], &[("id_card", text("c1"))]),
        Step::assert("library", &[], &[]),
        Step::act("alice", "register", &[("instrument", text("c1"))]),
        Step::act("alice", "borrow", &[("item", text("book1"))]),
        Step::advance("2m"),
    ] {
        engine.apply_step(&mut state, &step).unwrap();
    }
    let violated = state.positions.values().filter(|p| p.violated).count();
    println!("two months later, {violated} violations");
    for action in engine.enabled_actions(&state, "library").unwrap() {
        println!("library may do {action}");
    }

    let d1 = state
        .positions
        .values()
        .find(|p| p.label.as_deref() == Some("d1"))
        .unwrap()
        .id;
    let declare = Step::act("library", "declare_violation", &[("target", text("d1"))]);
    let delta = engine.apply_step(&mut state, &declare).unwrap();
    println!("\nafter declaring:\n{delta}");
    assert!(state.positions[&d1].violated);
}
