//! Parse the library program, list what it declares, and print it back.
//! A broken snippet shows what diagnostics look like.

use dpcl::model::{pretty_print, Declaration, Frame};
use dpcl::parser;

const LIBRARY: &str = include_str!("../corpus/library.dpcl");

fn main() {
    let (program, warnings) = parser::check("library.dpcl", LIBRARY).expect("the corpus checks");
    assert!(warnings.is_empty());

    for decl in &program.declarations {
        match decl {
            Declaration::Frame(Frame::Power(p)) => println!("power    #{}", p.action.name),
            Declaration::Frame(f) => println!("{}", f.keyword()),
            Declaration::Compound(c) => println!("compound {}({})", c.name, c.params.len()),
            Declaration::Rule(_) => println!("rule"),
        }
    }

    let printed = pretty_print(&program);
    let again = parser::parse(&printed).unwrap();
    assert_eq!(again.declarations, program.declarations);
    println!("\n{printed}");

    let broken = "power {\n    holder: member\n    action: #borrow\n}\n";
    if let Err(diagnostics) = parser::check("broken.dpcl", broken) {
        println!("{diagnostics}");
    }
}
