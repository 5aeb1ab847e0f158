//! Tokenizer for DPCL source text.

use std::fmt;

use super::diagnostic::{Diagnostic, Diagnostics, SourceSpan};
use crate::model::{Duration, TimeUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Power,
    Duty,
    Claim,
    Liability,
    Liberty,
    Disability,
    NoClaim,
    Immunity,
    In,
    Now,
}

impl Keyword {
    fn from_word(word: &str) -> Option<Keyword> {
        Some(match word {
            "power" => Keyword::Power,
            "duty" => Keyword::Duty,
            "claim" => Keyword::Claim,
            "liability" => Keyword::Liability,
            "liberty" => Keyword::Liberty,
            "disability" => Keyword::Disability,
            "no_claim" => Keyword::NoClaim,
            "immunity" => Keyword::Immunity,
            "in" => Keyword::In,
            "now" => Keyword::Now,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Power => "power",
            Keyword::Duty => "duty",
            Keyword::Claim => "claim",
            Keyword::Liability => "liability",
            Keyword::Liberty => "liberty",
            Keyword::Disability => "disability",
            Keyword::NoClaim => "no_claim",
            Keyword::Immunity => "immunity",
            Keyword::In => "in",
            Keyword::Now => "now",
        }
    }

    pub fn is_frame(self) -> bool {
        !matches!(self, Keyword::In | Keyword::Now)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Keyword(Keyword),
    /// `#name`
    Event(String),
    /// `#7`
    InstanceRef(u64),
    Int(u64),
    Duration(Duration),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Comma,
    /// `.` immediately followed by a name: path access.
    Dot,
    /// `.` ending a rule.
    Terminator,
    Pipe,
    Plus,
    Minus,
    /// `->`
    Arrow,
    /// `=>`
    FatArrow,
    Gt,
    Ge,
    Lt,
    Le,
    EqEq,
    NotEq,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Keyword(k) => write!(f, "keyword `{}`", k.as_str()),
            TokenKind::Event(s) => write!(f, "event `#{s}`"),
            TokenKind::InstanceRef(n) => write!(f, "instance `#{n}`"),
            TokenKind::Int(n) => write!(f, "integer `{n}`"),
            TokenKind::Duration(d) => write!(f, "duration `{d}`"),
            TokenKind::LBrace => f.write_str("`{`"),
            TokenKind::RBrace => f.write_str("`}`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Colon => f.write_str("`:`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Dot => f.write_str("`.`"),
            TokenKind::Terminator => f.write_str("end of rule `.`"),
            TokenKind::Pipe => f.write_str("`|`"),
            TokenKind::Plus => f.write_str("`+`"),
            TokenKind::Minus => f.write_str("`-`"),
            TokenKind::Arrow => f.write_str("`->`"),
            TokenKind::FatArrow => f.write_str("`=>`"),
            TokenKind::Gt => f.write_str("`>`"),
            TokenKind::Ge => f.write_str("`>=`"),
            TokenKind::Lt => f.write_str("`<`"),
            TokenKind::Le => f.write_str("`<=`"),
            TokenKind::EqEq => f.write_str("`==`"),
            TokenKind::NotEq => f.write_str("`!=`"),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

struct Lexer<'a> {
    file: &'a str,
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    tokens: Vec<Token>,
    diags: Vec<Diagnostic>,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl<'a> Lexer<'a> {
    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_from(&self, line: u32, col: u32) -> SourceSpan {
        SourceSpan {
            file: self.file.to_string(),
            start_line: line,
            start_col: col,
            end_line: self.line,
            end_col: self.col.saturating_sub(1).max(col),
        }
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek_at(0) {
            if !is_word_char(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn push(&mut self, kind: TokenKind, line: u32, col: u32) {
        let span = self.span_from(line, col);
        self.tokens.push(Token { kind, span });
    }

    fn error(&mut self, line: u32, col: u32, code: &str, message: String) {
        let span = self.span_from(line, col);
        self.diags.push(Diagnostic::error(span, code, message));
    }

    fn run(&mut self) {
        while let Some(c) = self.peek_at(0) {
            let (line, col) = (self.line, self.col);
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            if c == '/' && self.peek_at(1) == Some('/') {
                while let Some(c) = self.peek_at(0) {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let w = self.word();
                if let Some(kw) = Keyword::from_word(&w) {
                    self.push(TokenKind::Keyword(kw), line, col);
                } else if crate::model::Ident::is_valid(&w) {
                    self.push(TokenKind::Ident(w), line, col);
                } else {
                    self.error(
                        line,
                        col,
                        "invalid-identifier",
                        format!("`{w}` is not a valid identifier (names start with a lowercase letter)"),
                    );
                }
                continue;
            }
            if c.is_ascii_digit() {
                self.number(line, col);
                continue;
            }
            if c == '#' {
                self.bump();
                match self.peek_at(0) {
                    Some(d) if d.is_ascii_digit() => {
                        let digits = self.word();
                        match digits.parse::<u64>() {
                            Ok(n) => self.push(TokenKind::InstanceRef(n), line, col),
                            Err(_) => self.error(
                                line,
                                col,
                                "invalid-instance",
                                format!("invalid instance reference `#{digits}`"),
                            ),
                        }
                    }
                    Some(d) if d.is_ascii_alphabetic() || d == '_' => {
                        let name = self.word();
                        if crate::model::Ident::is_valid(&name) {
                            self.push(TokenKind::Event(name), line, col);
                        } else {
                            self.error(
                                line,
                                col,
                                "invalid-identifier",
                                format!("`#{name}` is not a valid event name"),
                            );
                        }
                    }
                    _ => self.error(
                        line,
                        col,
                        "unterminated",
                        "`#` must be followed by an event name".to_string(),
                    ),
                }
                continue;
            }
            self.bump();
            let kind = match c {
                '{' => TokenKind::LBrace,
                '}' => TokenKind::RBrace,
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                ':' => TokenKind::Colon,
                ',' => TokenKind::Comma,
                '|' => TokenKind::Pipe,
                '+' => TokenKind::Plus,
                '.' => match self.peek_at(0) {
                    Some(n) if is_word_char(n) => TokenKind::Dot,
                    _ => TokenKind::Terminator,
                },
                '-' if self.peek_at(0) == Some('>') => {
                    self.bump();
                    TokenKind::Arrow
                }
                '-' => TokenKind::Minus,
                '=' if self.peek_at(0) == Some('>') => {
                    self.bump();
                    TokenKind::FatArrow
                }
                '=' if self.peek_at(0) == Some('=') => {
                    self.bump();
                    TokenKind::EqEq
                }
                '!' if self.peek_at(0) == Some('=') => {
                    self.bump();
                    TokenKind::NotEq
                }
                '>' if self.peek_at(0) == Some('=') => {
                    self.bump();
                    TokenKind::Ge
                }
                '>' => TokenKind::Gt,
                '<' if self.peek_at(0) == Some('=') => {
                    self.bump();
                    TokenKind::Le
                }
                '<' => TokenKind::Lt,
                '=' | '!' => {
                    self.error(line, col, "unterminated", format!("incomplete operator `{c}`"));
                    continue;
                }
                other => {
                    self.error(
                        line,
                        col,
                        "unknown-character",
                        format!("unexpected character `{other}`"),
                    );
                    continue;
                }
            };
            self.push(kind, line, col);
        }
    }

    fn number(&mut self, line: u32, col: u32) {
        let mut digits = String::new();
        while let Some(c) = self.peek_at(0) {
            if !c.is_ascii_digit() {
                break;
            }
            digits.push(c);
            self.bump();
        }
        let suffix = match self.peek_at(0) {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => Some(self.word()),
            _ => None,
        };
        let Ok(amount) = digits.parse::<u64>() else {
            self.error(line, col, "int-overflow", format!("integer `{digits}` is too large"));
            return;
        };
        match suffix {
            None => {
                if amount > i64::MAX as u64 {
                    self.error(line, col, "int-overflow", format!("integer `{digits}` is too large"));
                } else {
                    self.push(TokenKind::Int(amount), line, col);
                }
            }
            Some(unit) => match TimeUnit::from_suffix(&unit) {
                Some(unit) => self.push(TokenKind::Duration(Duration::new(amount, unit)), line, col),
                None => self.error(
                    line,
                    col,
                    "invalid-duration",
                    format!("`{digits}{unit}` has an unknown time unit (use s, min, h, d, w, m or y)"),
                ),
            },
        }
    }
}

/// Splits source text into tokens. `//` comments and whitespace are skipped;
/// the result carries no end-of-input marker.
pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostics> {
    tokenize_file("<input>", source)
}

pub fn tokenize_file(file: &str, source: &str) -> Result<Vec<Token>, Diagnostics> {
    let (tokens, diags) = lex(file, source);
    if diags.is_empty() {
        Ok(tokens)
    } else {
        Err(Diagnostics(diags))
    }
}

pub(crate) fn lex(file: &str, source: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut lexer = Lexer {
        file,
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        tokens: Vec::new(),
        diags: Vec::new(),
    };
    lexer.run();
    (lexer.tokens, lexer.diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenKind::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn qualification() {
        assert_eq!(
            kinds("holder in member"),
            vec![
                Ident("holder".into()),
                Keyword(super::Keyword::In),
                Ident("member".into())
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(kinds(""), vec![]);
        assert_eq!(kinds("  // only a comment\n"), vec![]);
    }

    #[test]
    fn reactive_rule() {
        assert_eq!(
            kinds("#rain => +wet"),
            vec![Event("rain".into()), FatArrow, Plus, Ident("wet".into())]
        );
    }

    #[test]
    fn operators_and_literals() {
        assert_eq!(
            kinds("now() + 1m >= 30min != 5 -> a.b. c"),
            vec![
                Keyword(super::Keyword::Now),
                LParen,
                RParen,
                Plus,
                Duration(crate::model::Duration::new(1, TimeUnit::M)),
                Ge,
                Duration(crate::model::Duration::new(30, TimeUnit::Min)),
                NotEq,
                Int(5),
                Arrow,
                Ident("a".into()),
                Dot,
                Ident("b".into()),
                Terminator,
                Ident("c".into()),
            ]
        );
        assert_eq!(
            kinds("-borrowing#7"),
            vec![Minus, Ident("borrowing".into()), InstanceRef(7)]
        );
    }

    #[test]
    fn spans_are_one_based() {
        let toks = tokenize("power {\n  holder: x\n}").unwrap();
        assert_eq!((toks[0].span.start_line, toks[0].span.start_col), (1, 1));
        assert_eq!((toks[0].span.end_line, toks[0].span.end_col), (1, 5));
        assert_eq!((toks[2].span.start_line, toks[2].span.start_col), (2, 3));
    }

    #[test]
    fn errors_carry_spans() {
        let err = tokenize("a\n  @ b").unwrap_err();
        assert_eq!(err.len(), 1);
        let d = &err.0[0];
        assert_eq!(d.code, "unknown-character");
        assert_eq!((d.span.start_line, d.span.start_col), (2, 3));

        assert_eq!(tokenize("x = y").unwrap_err().0[0].code, "unterminated");
        assert_eq!(tokenize("# ").unwrap_err().0[0].code, "unterminated");
        assert_eq!(tokenize("3q").unwrap_err().0[0].code, "invalid-duration");
        assert_eq!(tokenize("User").unwrap_err().0[0].code, "invalid-identifier");
    }
}
