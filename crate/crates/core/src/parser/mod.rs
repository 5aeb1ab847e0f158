//! Lexing, parsing and validation of DPCL source.

mod diagnostic;
mod grammar;
mod lexer;
mod validate;

pub use diagnostic::{Diagnostic, Diagnostics, Severity, SourceSpan};
pub use lexer::{tokenize, tokenize_file, Keyword, Token, TokenKind};
pub use validate::validate;

use grammar::{Fail, Parser};

use crate::model::{EventRef, Frame, ProductionEvent, Program, Term};

const ANONYMOUS: &str = "<input>";

pub fn parse(source: &str) -> Result<Program, Diagnostics> {
    parse_named(ANONYMOUS, source)
}

/// Parses a whole program; `name` is used in diagnostics and kept as the
/// program's source name.
pub fn parse_named(name: &str, source: &str) -> Result<Program, Diagnostics> {
    let (tokens, lex_errors) = lexer::lex(name, source);
    if !lex_errors.is_empty() {
        return Err(Diagnostics(lex_errors));
    }
    let mut parser = Parser::new(name, tokens);
    let (declarations, spans) = parser.program();
    if !parser.diags.is_empty() {
        return Err(Diagnostics(parser.diags));
    }
    Ok(Program {
        source_name: name.to_string(),
        declarations,
        spans,
    })
}

/// Parses and validates. Returns the program with any warnings.
pub fn check(name: &str, source: &str) -> Result<(Program, Diagnostics), Diagnostics> {
    let program = parse_named(name, source)?;
    let warnings = validate(&program)?;
    Ok((program, warnings))
}

fn single<T>(source: &str, f: impl FnOnce(&mut Parser<'_>) -> Result<T, Fail>) -> Result<T, Diagnostics> {
    let (tokens, lex_errors) = lexer::lex(ANONYMOUS, source);
    if !lex_errors.is_empty() {
        return Err(Diagnostics(lex_errors));
    }
    let mut parser = Parser::new(ANONYMOUS, tokens);
    let result = f(&mut parser).and_then(|v| parser.expect_eof().map(|_| v));
    match result {
        Ok(v) if parser.diags.is_empty() => Ok(v),
        _ => {
            if parser.diags.is_empty() {
                parser.diags.push(Diagnostic::error(
                    SourceSpan::point(ANONYMOUS, 1, 1),
                    "syntax",
                    "could not parse input",
                ));
            }
            Err(Diagnostics(parser.diags))
        }
    }
}

/// Parses one frame such as `power { ... }`.
pub fn parse_frame(source: &str) -> Result<Frame, Diagnostics> {
    single(source, |p| match p.peek_keyword() {
        Some(k) if k.is_frame() => p.frame(),
        _ => p.fail_here("expected-frame", "expected a frame such as `power { ... }`"),
    })
}

/// Parses an event such as `#borrow { item: book1 }`.
pub fn parse_event(source: &str) -> Result<EventRef, Diagnostics> {
    single(source, |p| p.event_ref())
}

/// Parses a production such as `+raining` or `-borrowing#7`.
pub fn parse_production(source: &str) -> Result<ProductionEvent, Diagnostics> {
    single(source, |p| match p.peek_sign() {
        true => p.production(),
        false => p.fail_here("expected-production", "expected `+` or `-` followed by a target"),
    })
}

pub fn parse_term(source: &str) -> Result<Term, Diagnostics> {
    single(source, |p| p.expr())
}
