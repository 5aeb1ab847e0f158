//! Recursive-descent parser over the token stream.
//!
//! Errors are collected rather than returned one at a time. A hard error
//! abandons the current declaration and resynchronizes at its closing `}`;
//! soft errors (missing, duplicate or unknown fields) are reported once the
//! construct has been fully consumed and parsing carries on.

use indexmap::IndexMap;

use super::diagnostic::{Diagnostic, SourceSpan};
use super::lexer::{Keyword, Token, TokenKind};
use crate::model::*;

pub(crate) enum Fail {
    /// Input was consumed up to the end of the construct.
    Soft,
    /// The parser is somewhere inside the construct and must resynchronize.
    Hard,
}

type PResult<T> = Result<T, Fail>;

pub(crate) struct Parser<'a> {
    _file: std::marker::PhantomData<&'a str>,
    tokens: Vec<Token>,
    pos: usize,
    pub(crate) diags: Vec<Diagnostic>,
}

enum FieldValue {
    Term(Term),
    Event(EventRef),
    Effect(Effect),
}

#[derive(Clone, Copy, PartialEq)]
enum FrameKind {
    Power,
    Duty,
    Other(OtherKind),
}

impl<'a> Parser<'a> {
    pub(crate) fn new(file: &'a str, mut tokens: Vec<Token>) -> Self {
        let end = tokens
            .last()
            .map(|t| SourceSpan {
                start_line: t.span.end_line,
                start_col: t.span.end_col + 1,
                end_line: t.span.end_line,
                end_col: t.span.end_col + 1,
                file: file.to_string(),
            })
            .unwrap_or_else(|| SourceSpan::point(file, 1, 1));
        tokens.push(Token {
            kind: TokenKind::Eof,
            span: end,
        });
        Parser {
            _file: std::marker::PhantomData,
            tokens,
            pos: 0,
            diags: Vec::new(),
        }
    }

    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_nth(&self, n: usize) -> &TokenKind {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx].kind
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span.clone()
    }

    fn prev_span(&self) -> SourceSpan {
        self.tokens[self.pos.saturating_sub(1)].span.clone()
    }

    fn bump(&mut self) -> TokenKind {
        let kind = self.tokens[self.pos].kind.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        kind
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            self.bump();
            true
        } else {
            false
        }
    }

    fn hard<T>(&mut self, code: &str, message: impl Into<String>) -> PResult<T> {
        let span = self.span();
        self.diags.push(Diagnostic::error(span, code, message));
        Err(Fail::Hard)
    }

    fn soft(&mut self, span: SourceSpan, code: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic::error(span, code, message));
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> PResult<()> {
        if self.eat(&kind) {
            Ok(())
        } else if *self.peek() == TokenKind::Eof {
            self.hard("unterminated", format!("expected {what}, found end of input"))
        } else {
            let found = self.peek().to_string();
            self.hard("unexpected-token", format!("expected {what}, found {found}"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Ident> {
        match self.peek().clone() {
            TokenKind::Ident(name) => {
                self.bump();
                Ok(Ident::new(name).expect("lexer yields valid identifiers"))
            }
            TokenKind::Eof => self.hard("unterminated", format!("expected {what}, found end of input")),
            other => self.hard("unexpected-token", format!("expected {what}, found {other}")),
        }
    }

    pub(crate) fn peek_keyword(&self) -> Option<Keyword> {
        match self.peek() {
            TokenKind::Keyword(k) => Some(*k),
            _ => None,
        }
    }

    pub(crate) fn peek_sign(&self) -> bool {
        matches!(self.peek(), TokenKind::Plus | TokenKind::Minus)
    }

    pub(crate) fn fail_here<T>(&mut self, code: &str, message: &str) -> PResult<T> {
        self.hard(code, message)
    }

    pub(crate) fn at_eof(&self) -> bool {
        *self.peek() == TokenKind::Eof
    }

    pub(crate) fn expect_eof(&mut self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            let found = self.peek().to_string();
            self.hard("unexpected-token", format!("unexpected {found} after end of input"))
        }
    }

    // ---- declarations ----

    pub(crate) fn program(&mut self) -> (Vec<Declaration>, SpanIndex) {
        let mut decls = Vec::new();
        let mut spans = SpanIndex::default();
        while !self.at_eof() {
            if *self.peek() == TokenKind::RBrace {
                let span = self.span();
                self.soft(span, "unexpected-token", "unmatched `}`");
                self.bump();
                continue;
            }
            let start = self.pos;
            let start_span = self.span();
            let errors_before = self.diags.len();
            let result = self.declaration();
            match result {
                Ok((decl, member_spans)) => {
                    if self.diags.len() == errors_before {
                        decls.push(decl);
                        spans.declarations.push(start_span.to(&self.prev_span()));
                        spans.members.push(member_spans);
                    }
                }
                Err(Fail::Soft) => {}
                Err(Fail::Hard) => self.synchronize(start),
            }
        }
        (decls, spans)
    }

    fn declaration(&mut self) -> PResult<(Declaration, Vec<SourceSpan>)> {
        if self.at_compound_header() {
            let (c, spans) = self.compound()?;
            return Ok((Declaration::Compound(c), spans));
        }
        match self.member_or_declaration(false)? {
            Member::Frame(f) => Ok((Declaration::Frame(f), Vec::new())),
            Member::Rule(r) => Ok((Declaration::Rule(r), Vec::new())),
        }
    }

    fn at_compound_header(&self) -> bool {
        if !matches!(self.peek(), TokenKind::Ident(_)) || *self.peek_nth(1) != TokenKind::LParen {
            return false;
        }
        let mut i = 2;
        if matches!(self.peek_nth(i), TokenKind::Ident(_)) {
            i += 1;
            while *self.peek_nth(i) == TokenKind::Comma && matches!(self.peek_nth(i + 1), TokenKind::Ident(_)) {
                i += 2;
            }
        }
        *self.peek_nth(i) == TokenKind::RParen && *self.peek_nth(i + 1) == TokenKind::LBrace
    }

    fn member_or_declaration(&mut self, in_compound: bool) -> PResult<Member> {
        match self.peek().clone() {
            TokenKind::Keyword(kw) if kw.is_frame() => Ok(Member::Frame(self.frame()?)),
            TokenKind::Ident(name) => {
                if in_compound && self.at_compound_header() {
                    return self.hard(
                        "nested-compound",
                        format!("compound `{name}` cannot be declared inside another compound"),
                    );
                }
                let unknown_kw = *self.peek_nth(1) == TokenKind::LBrace
                    || (matches!(self.peek_nth(1), TokenKind::Ident(_)) && *self.peek_nth(2) == TokenKind::LBrace);
                if unknown_kw {
                    return self.hard(
                        "unknown-keyword",
                        format!("unknown declaration keyword `{name}` (expected power, duty, claim, liability, liberty, disability, no_claim or immunity)"),
                    );
                }
                Ok(Member::Rule(self.rule()?))
            }
            _ => Ok(Member::Rule(self.rule()?)),
        }
    }

    fn synchronize(&mut self, start: usize) {
        let mut depth: i32 = 0;
        for t in &self.tokens[start..self.pos] {
            match t.kind {
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace => depth -= 1,
                _ => {}
            }
        }
        let mut depth = depth.max(0);
        let entry = self.pos;
        loop {
            match self.peek() {
                TokenKind::Eof => break,
                TokenKind::LBrace => {
                    depth += 1;
                    self.bump();
                }
                TokenKind::RBrace => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    self.bump();
                    if depth == 0 {
                        break;
                    }
                }
                TokenKind::Terminator if depth == 0 => {
                    self.bump();
                    break;
                }
                TokenKind::Keyword(k) if depth == 0 && k.is_frame() && self.pos > start => break,
                _ => {
                    self.bump();
                }
            }
        }
        if self.pos == start && self.pos == entry && !self.at_eof() && *self.peek() != TokenKind::RBrace {
            self.bump();
        }
    }

    fn compound(&mut self) -> PResult<(CompoundDecl, Vec<SourceSpan>)> {
        let name = self.ident("compound name")?;
        self.expect(TokenKind::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != TokenKind::RParen {
            loop {
                params.push(self.ident("parameter name")?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen, "`)`")?;
        self.expect(TokenKind::LBrace, "`{`")?;
        let mut members = Vec::new();
        let mut spans = Vec::new();
        let mut failed = false;
        loop {
            match self.peek() {
                TokenKind::RBrace => {
                    self.bump();
                    break;
                }
                TokenKind::Eof => {
                    return self.hard("unterminated", format!("body of compound `{name}` is not closed"));
                }
                _ => {}
            }
            let start = self.pos;
            let start_span = self.span();
            let before = self.diags.len();
            match self.member_or_declaration(true) {
                Ok(m) => {
                    if self.diags.len() == before {
                        members.push(m);
                        spans.push(start_span.to(&self.prev_span()));
                    } else {
                        failed = true;
                    }
                }
                Err(Fail::Soft) => failed = true,
                Err(Fail::Hard) => {
                    failed = true;
                    self.synchronize(start);
                }
            }
        }
        if failed {
            return Err(Fail::Soft);
        }
        Ok((CompoundDecl { name, params, members }, spans))
    }

    // ---- frames ----

    pub(crate) fn frame(&mut self) -> PResult<Frame> {
        let start = self.span();
        let kind = match self.bump() {
            TokenKind::Keyword(Keyword::Power) => FrameKind::Power,
            TokenKind::Keyword(Keyword::Duty) => FrameKind::Duty,
            TokenKind::Keyword(Keyword::Claim) => FrameKind::Other(OtherKind::Claim),
            TokenKind::Keyword(Keyword::Liability) => FrameKind::Other(OtherKind::Liability),
            TokenKind::Keyword(Keyword::Liberty) => FrameKind::Other(OtherKind::Liberty),
            TokenKind::Keyword(Keyword::Disability) => FrameKind::Other(OtherKind::Disability),
            TokenKind::Keyword(Keyword::NoClaim) => FrameKind::Other(OtherKind::NoClaim),
            TokenKind::Keyword(Keyword::Immunity) => FrameKind::Other(OtherKind::Immunity),
            _ => unreachable!("frame() called on a non-frame token"),
        };
        let kw_name = match kind {
            FrameKind::Power => "power",
            FrameKind::Duty => "duty",
            FrameKind::Other(o) => o.keyword(),
        };
        let label = match self.peek() {
            TokenKind::Ident(_) => Some(self.ident("label")?),
            _ => None,
        };
        self.expect(TokenKind::LBrace, "`{`")?;
        let mut fields: IndexMap<String, FieldValue> = IndexMap::new();
        let mut failed = false;
        loop {
            match self.peek() {
                TokenKind::RBrace => {
                    self.bump();
                    break;
                }
                TokenKind::Comma => {
                    self.bump();
                    continue;
                }
                TokenKind::Eof => {
                    return self.hard("unterminated", format!("{kw_name} frame is not closed"));
                }
                _ => {}
            }
            let field_span = self.span();
            let name = self.ident("field name")?;
            self.expect(TokenKind::Colon, "`:`")?;
            let known = matches!(
                (kind, name.as_str()),
                (FrameKind::Power, "holder" | "action" | "consequence")
                    | (FrameKind::Duty, "holder" | "counterparty" | "action" | "violation")
                    | (FrameKind::Other(_), _)
            );
            let value = match (kind, name.as_str()) {
                (FrameKind::Other(_), _) => FieldValue::Effect(self.effect(false)?),
                (_, "action") => FieldValue::Event(self.event_ref()?),
                (FrameKind::Power, "consequence") => FieldValue::Effect(self.effect(false)?),
                (_, _) if known => FieldValue::Term(self.expr()?),
                _ => {
                    self.soft(
                        field_span.clone(),
                        "unknown-field",
                        format!("{kw_name} frame has no field `{name}`"),
                    );
                    failed = true;
                    self.effect(false)?;
                    continue;
                }
            };
            if fields.contains_key(name.as_str()) {
                self.soft(
                    field_span,
                    "duplicate-field",
                    format!("field `{name}` is given more than once"),
                );
                failed = true;
                continue;
            }
            fields.insert(name.to_string(), value);
        }
        let span = start.to(&self.prev_span());
        let required: &[&str] = match kind {
            FrameKind::Power => &["holder", "action", "consequence"],
            FrameKind::Duty => &["holder", "counterparty", "action"],
            FrameKind::Other(_) => &[],
        };
        for req in required {
            if !fields.contains_key(*req) {
                self.soft(
                    span.clone(),
                    "missing-field",
                    format!("{kw_name} frame is missing required field `{req}`"),
                );
                failed = true;
            }
        }
        if failed {
            return Err(Fail::Soft);
        }
        let take_term = |f: &mut IndexMap<String, FieldValue>, n: &str| match f.shift_remove(n) {
            Some(FieldValue::Term(t)) => Some(t),
            _ => None,
        };
        Ok(match kind {
            FrameKind::Power => {
                let holder = take_term(&mut fields, "holder").unwrap();
                let Some(FieldValue::Event(action)) = fields.shift_remove("action") else {
                    unreachable!()
                };
                let Some(FieldValue::Effect(consequence)) = fields.shift_remove("consequence") else {
                    unreachable!()
                };
                Frame::Power(PowerFrame {
                    label,
                    holder,
                    action,
                    consequence,
                })
            }
            FrameKind::Duty => {
                let holder = take_term(&mut fields, "holder").unwrap();
                let counterparty = take_term(&mut fields, "counterparty").unwrap();
                let violation = take_term(&mut fields, "violation");
                let Some(FieldValue::Event(action)) = fields.shift_remove("action") else {
                    unreachable!()
                };
                Frame::Duty(DutyFrame {
                    label,
                    holder,
                    counterparty,
                    action,
                    violation,
                })
            }
            FrameKind::Other(kind) => Frame::Other(OtherPositionFrame {
                kind,
                label,
                body: fields
                    .into_iter()
                    .map(|(k, v)| {
                        let FieldValue::Effect(e) = v else { unreachable!() };
                        (Ident::new(k).unwrap(), e)
                    })
                    .collect(),
            }),
        })
    }

    // ---- rules and effects ----

    fn rule(&mut self) -> PResult<Rule> {
        let rule = match self.peek() {
            TokenKind::Event(_) | TokenKind::Plus | TokenKind::Minus => {
                let trigger = match self.peek() {
                    TokenKind::Event(_) => Trigger::Event(self.event_ref()?),
                    _ => Trigger::Production(self.production()?),
                };
                self.expect(TokenKind::FatArrow, "`=>` after a reactive trigger")?;
                let effect = self.effect(true)?;
                Rule::Reactive { trigger, effect }
            }
            _ => {
                let condition = self.expr()?;
                if *self.peek() == TokenKind::FatArrow {
                    return self.hard(
                        "unexpected-token",
                        "reactive rules must be triggered by an event (`#e`) or a production (`+x`)",
                    );
                }
                self.expect(TokenKind::Arrow, "`->` or `=>`")?;
                let conclusion = match self.peek() {
                    TokenKind::Keyword(k) if k.is_frame() => Conclusion::Frame(self.frame()?),
                    _ => Conclusion::Fact(self.fact()?),
                };
                Rule::Transformational { condition, conclusion }
            }
        };
        self.eat(&TokenKind::Terminator);
        Ok(rule)
    }

    /// In rule position a term effect is restricted to `primary (in name)*`
    /// so that a following `+x => ...` rule is not read as an addition.
    pub(crate) fn effect(&mut self, in_rule: bool) -> PResult<Effect> {
        match self.peek() {
            TokenKind::Plus | TokenKind::Minus => Ok(Effect::Produce(self.production()?)),
            TokenKind::Event(_) => Ok(Effect::Event(self.event_ref()?)),
            _ if in_rule => Ok(Effect::Term(self.fact()?)),
            _ => Ok(Effect::Term(self.expr()?)),
        }
    }

    pub(crate) fn production(&mut self) -> PResult<ProductionEvent> {
        let polarity = match self.bump() {
            TokenKind::Plus => Polarity::Create,
            TokenKind::Minus => Polarity::Remove,
            _ => unreachable!("production() called on a non-sign token"),
        };
        let target = match self.peek() {
            TokenKind::Keyword(k) if k.is_frame() => Target::Frame(Box::new(self.frame()?)),
            _ => {
                let span = self.span();
                let t = self.primary()?;
                match t {
                    Term::Atom(_) | Term::Path(_) | Term::Call { .. } | Term::Object { .. } | Term::Ref { .. } => {
                        Target::Term(t)
                    }
                    other => {
                        self.diags.push(Diagnostic::error(
                            span,
                            "invalid-target",
                            format!("`{other}` cannot be produced; expected an object, compound, flag or position"),
                        ));
                        return Err(Fail::Hard);
                    }
                }
            }
        };
        Ok(ProductionEvent { polarity, target })
    }

    pub(crate) fn event_ref(&mut self) -> PResult<EventRef> {
        let name = match self.peek().clone() {
            TokenKind::Event(n) => {
                self.bump();
                Ident::new(n).expect("lexer yields valid names")
            }
            other => {
                return self.hard(
                    "expected-event",
                    format!("expected an event such as `#borrow`, found {other}"),
                );
            }
        };
        let refinements = if *self.peek() == TokenKind::LBrace {
            self.term_fields()?
        } else {
            Fields::new()
        };
        Ok(EventRef { name, refinements })
    }

    fn term_fields(&mut self) -> PResult<Fields> {
        self.expect(TokenKind::LBrace, "`{`")?;
        let mut fields = Fields::new();
        loop {
            match self.peek() {
                TokenKind::RBrace => {
                    self.bump();
                    return Ok(fields);
                }
                TokenKind::Comma => {
                    self.bump();
                }
                TokenKind::Eof => return self.hard("unterminated", "`{` is not closed"),
                _ => {
                    let span = self.span();
                    let name = self.ident("field name")?;
                    self.expect(TokenKind::Colon, "`:`")?;
                    let value = self.expr()?;
                    if fields.contains_key(&name) {
                        self.soft(
                            span,
                            "duplicate-field",
                            format!("field `{name}` is given more than once"),
                        );
                    } else {
                        fields.insert(name, value);
                    }
                }
            }
        }
    }

    // ---- terms ----

    pub(crate) fn expr(&mut self) -> PResult<Term> {
        let first = self.comparison()?;
        if *self.peek() != TokenKind::Pipe {
            return Ok(first);
        }
        let mut branches = vec![first];
        while self.eat(&TokenKind::Pipe) {
            branches.push(self.comparison()?);
        }
        Ok(Term::alternation(branches))
    }

    fn comparison(&mut self) -> PResult<Term> {
        let mut lhs = self.qualification()?;
        loop {
            let op = match self.peek() {
                TokenKind::Gt => CmpOp::Gt,
                TokenKind::Ge => CmpOp::Ge,
                TokenKind::Lt => CmpOp::Lt,
                TokenKind::Le => CmpOp::Le,
                TokenKind::EqEq => CmpOp::Eq,
                TokenKind::NotEq => CmpOp::Ne,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.qualification()?;
            lhs = Term::Compare {
                lhs: Box::new(lhs),
                op,
                rhs: Box::new(rhs),
            };
        }
    }

    fn qualification(&mut self) -> PResult<Term> {
        let mut t = self.arith()?;
        while self.eat(&TokenKind::Keyword(Keyword::In)) {
            let descriptor = self.ident("descriptor name after `in`")?;
            t = Term::Qualify {
                subject: Box::new(t),
                descriptor,
            };
        }
        Ok(t)
    }

    fn arith(&mut self) -> PResult<Term> {
        let mut lhs = self.primary()?;
        loop {
            let op = match self.peek() {
                TokenKind::Plus => ArithOp::Add,
                TokenKind::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.primary()?;
            lhs = Term::Arith {
                lhs: Box::new(lhs),
                op,
                rhs: Box::new(rhs),
            };
        }
    }

    /// `primary (in name)*`
    fn fact(&mut self) -> PResult<Term> {
        let mut t = self.primary()?;
        while self.eat(&TokenKind::Keyword(Keyword::In)) {
            let descriptor = self.ident("descriptor name after `in`")?;
            t = Term::Qualify {
                subject: Box::new(t),
                descriptor,
            };
        }
        Ok(t)
    }

    fn primary(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            TokenKind::Keyword(Keyword::Now) => {
                self.bump();
                self.expect(TokenKind::LParen, "`(` after `now`")?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(Term::Now)
            }
            TokenKind::Int(n) => {
                self.bump();
                Ok(Term::Int(n as i64))
            }
            TokenKind::Duration(d) => {
                self.bump();
                Ok(Term::Duration(d))
            }
            TokenKind::InstanceRef(id) => {
                self.bump();
                Ok(Term::Ref { name: None, id })
            }
            TokenKind::LParen => {
                self.bump();
                let t = self.expr()?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(t)
            }
            TokenKind::Ident(_) => {
                let name = self.ident("name")?;
                match self.peek().clone() {
                    TokenKind::LParen => {
                        self.bump();
                        let mut args = Vec::new();
                        if *self.peek() != TokenKind::RParen {
                            loop {
                                args.push(self.expr()?);
                                if !self.eat(&TokenKind::Comma) {
                                    break;
                                }
                            }
                        }
                        self.expect(TokenKind::RParen, "`)`")?;
                        Ok(Term::Call { name, args })
                    }
                    TokenKind::LBrace => {
                        let fields = self.term_fields()?;
                        Ok(Term::Object { head: name, fields })
                    }
                    TokenKind::Dot => {
                        let mut segs = vec![name];
                        while self.eat(&TokenKind::Dot) {
                            segs.push(self.ident("field name after `.`")?);
                        }
                        Ok(Term::Path(segs))
                    }
                    TokenKind::InstanceRef(id) => {
                        self.bump();
                        Ok(Term::Ref { name: Some(name), id })
                    }
                    _ => Ok(Term::Atom(name)),
                }
            }
            TokenKind::Keyword(k) if k.is_frame() => self.hard(
                "unexpected-token",
                format!("a `{}` frame is not allowed here", k.as_str()),
            ),
            TokenKind::Eof => self.hard("unterminated", "expected a term, found end of input"),
            other => self.hard("unexpected-token", format!("expected a term, found {other}")),
        }
    }
}
