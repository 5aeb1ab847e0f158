//! Step through the lending scenario and print what each step changed.

use dpcl::interpreter::{Engine, Literal, Step};
use dpcl::parser;

fn main() {
    let (program, _) = parser::check("library.dpcl", include_str!("../corpus/library.dpcl")).unwrap();
    let engine = Engine::new(program);
    let mut state = engine.init_state(0).unwrap();

    let text = |s: &str| Literal::Text(s.into());
    let steps = [
        Step::assert("alice", &["student"], &[("id_card", text("c1"))]),
        Step::assert("library", &[], &[]),
        Step::act("alice", "register", &[("instrument", text("c1"))]),
        Step::act("alice", "borrow", &[("item", text("book1"))]),
        Step::advance("1m"),
        Step::advance("1s"),
        Step::act("library", "fine", &[]),
    ];
    for step in &steps {
        let delta = engine.apply_step(&mut state, step).unwrap();
        println!("--- {}", serde_json::to_string(step).unwrap());
        println!("{delta}");
    }
    println!("\n{}", dpcl::cli::summary(&state));
}
