//! DPCL: a language for normative specifications built from powers and
//! duties, with a parser, an interpreter, program rewrites, persistent
//! sessions and an HTTP facade.

pub mod cli;
pub mod http;
pub mod interpreter;
pub mod model;
pub mod parser;
pub mod repl;
pub mod rewriter;
pub mod session;
