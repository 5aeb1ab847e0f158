//! Line-oriented interactive session. Every mutating command is one session
//! step, and its delta is printed.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, Write};

use crate::interpreter::{Literal, PositionFilter, Step};
use crate::model::{InstitutionalState, PositionInstance, PositionKind};
use crate::parser;
use crate::session::{SessionStore, StoreError};

const HELP: &str = "\
commands:
  :state                          objects, compounds and positions
  :positions [kind]               positions, optionally only power|duty|other
  :advance <duration>             move the clock, e.g. :advance 1m
  :assert <name> [d1,d2] [k=v]    create or update an object
  do <actor> #<event> {f: v}      perform an action
  :produce <+x|-x>                apply a production event
  :enabled <actor>                powers the actor can exercise now
  :trace                          steps taken in this session
  :fork                           branch the session and switch to the branch
  :sessions                       list sessions
  :switch <id>                    switch to another session
  :save <path>                    export the session
  :load <path>                    import a session and switch to it
  :help                           this text
  :quit                           leave";

pub struct Repl {
    store: SessionStore,
    current: String,
}

/// What a command printed, and whether the loop should stop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub text: String,
    pub quit: bool,
}

impl Reply {
    fn text(text: impl Into<String>) -> Reply {
        Reply {
            text: text.into(),
            quit: false,
        }
    }
}

impl Repl {
    /// Starts a session for `program_id`, which must already be in `store`.
    pub fn new(store: SessionStore, program_id: &str) -> Result<Repl, StoreError> {
        let current = store.create_session(program_id)?;
        Ok(Repl { store, current })
    }

    pub fn from_source(store: SessionStore, name: &str, source: &str) -> Result<Repl, StoreError> {
        let (program_id, _) = store.add_program(name, source)?;
        Repl::new(store, &program_id)
    }

    pub fn session_id(&self) -> &str {
        &self.current
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn state(&self) -> InstitutionalState {
        self.store.state(&self.current).expect("current session exists")
    }

    /// Handles one input line. Errors are reported in the reply text.
    pub fn handle(&mut self, line: &str) -> Reply {
        match self.dispatch(line.trim()) {
            Ok(reply) => reply,
            Err(message) => Reply::text(format!("error: {message}")),
        }
    }

    fn dispatch(&mut self, line: &str) -> Result<Reply, String> {
        if line.is_empty() || line.starts_with("//") {
            return Ok(Reply::text(""));
        }
        let (cmd, rest) = match line.split_once(char::is_whitespace) {
            Some((c, r)) => (c, r.trim()),
            None => (line, ""),
        };
        match cmd {
            ":quit" | ":q" | ":exit" => Ok(Reply {
                text: String::new(),
                quit: true,
            }),
            ":help" | ":h" => Ok(Reply::text(HELP)),
            ":state" => Ok(Reply::text(render_state(&self.state()))),
            ":positions" => self.positions(rest),
            ":advance" => {
                if rest.is_empty() {
                    return Err("usage: :advance <duration>".into());
                }
                self.step(Step::advance(rest))
            }
            ":assert" => self.assert(rest),
            "do" | ":do" => self.act(rest),
            ":produce" => self.step(Step::produce(rest)),
            ":enabled" => self.enabled(rest),
            ":trace" => self.trace(),
            ":fork" => {
                let child = self.store.fork(&self.current).map_err(|e| e.to_string())?;
                let parent = std::mem::replace(&mut self.current, child.clone());
                Ok(Reply::text(format!("forked {parent} -> {child} (now in {child})")))
            }
            ":sessions" => {
                let ids = self.store.session_ids();
                let lines: Vec<String> = ids
                    .iter()
                    .map(|id| {
                        if *id == self.current {
                            format!("* {id}")
                        } else {
                            format!("  {id}")
                        }
                    })
                    .collect();
                Ok(Reply::text(lines.join("\n")))
            }
            ":switch" => {
                self.store.with_session(rest, |_| ()).map_err(|e| e.to_string())?;
                self.current = rest.to_string();
                Ok(Reply::text(format!("now in {rest}")))
            }
            ":save" => {
                if rest.is_empty() {
                    return Err("usage: :save <path>".into());
                }
                let file = File::create(rest).map_err(|e| format!("{rest}: {e}"))?;
                self.store
                    .save_session(&self.current, file)
                    .map_err(|e| e.to_string())?;
                Ok(Reply::text(format!("saved {} to {rest}", self.current)))
            }
            ":load" => {
                if rest.is_empty() {
                    return Err("usage: :load <path>".into());
                }
                let file = File::open(rest).map_err(|e| format!("{rest}: {e}"))?;
                let id = self.store.load_session(file).map_err(|e| e.to_string())?;
                self.current = id.clone();
                Ok(Reply::text(format!("loaded {id} (now in {id})")))
            }
            other => Err(format!("unknown command `{other}` (try :help)")),
        }
    }

    fn step(&mut self, step: Step) -> Result<Reply, String> {
        let (delta, _) = self.store.step(&self.current, &step).map_err(|e| e.to_string())?;
        let mut text = delta.to_string();
        if delta.disabled {
            text.push_str("\nno power or duty matched; nothing changed");
        }
        Ok(Reply::text(text))
    }

    fn assert(&mut self, rest: &str) -> Result<Reply, String> {
        let mut words = rest.split_whitespace();
        let name = words.next().ok_or("usage: :assert <name> [desc,...] [key=value ...]")?;
        let mut descriptors = Vec::new();
        let mut properties = Vec::new();
        for w in words {
            match w.split_once('=') {
                Some((k, v)) => properties.push((k, literal(v))),
                None => descriptors.extend(w.split(',').filter(|d| !d.is_empty())),
            }
        }
        self.step(Step::assert(name, &descriptors, &properties))
    }

    /// `do alice #register { instrument: c1 }`. Refinement values may be
    /// paths such as `alice.id_card`.
    fn act(&mut self, rest: &str) -> Result<Reply, String> {
        let (actor, event_text) = rest
            .split_once(char::is_whitespace)
            .ok_or("usage: do <actor> #<event> {field: value, ...}")?;
        let event = parser::parse_event(event_text.trim()).map_err(|d| d.to_string())?;
        let ground = self
            .store
            .with_session(&self.current, |s| s.engine.ground_event(&s.state, &event))
            .map_err(|e| e.to_string())?
            .map_err(|e| e.to_string())?;
        let refinements: Vec<(&str, Literal)> = ground
            .refinements
            .iter()
            .map(|(k, v)| (k.as_str(), Literal::from(v)))
            .collect();
        self.step(Step::act(actor, &ground.name, &refinements))
    }

    fn positions(&self, rest: &str) -> Result<Reply, String> {
        let kind = match rest {
            "" => None,
            k => Some(k.parse::<PositionKind>()?),
        };
        let filter = PositionFilter {
            kind,
            ..Default::default()
        };
        let text = self
            .store
            .with_session(&self.current, |s| {
                let found = s.engine.query_positions(&s.state, &filter);
                if found.is_empty() {
                    "no positions".to_string()
                } else {
                    found.iter().map(|p| render_position(p)).collect::<Vec<_>>().join("\n")
                }
            })
            .map_err(|e| e.to_string())?;
        Ok(Reply::text(text))
    }

    fn enabled(&self, actor: &str) -> Result<Reply, String> {
        if actor.is_empty() {
            return Err("usage: :enabled <actor>".into());
        }
        let actions = self
            .store
            .with_session(&self.current, |s| s.engine.enabled_actions(&s.state, actor))
            .map_err(|e| e.to_string())?
            .map_err(|e| e.to_string())?;
        if actions.is_empty() {
            return Ok(Reply::text(format!("{actor} has no enabled actions")));
        }
        let lines: Vec<String> = actions.iter().map(|a| format!("{a}   (power {})", a.power)).collect();
        Ok(Reply::text(lines.join("\n")))
    }

    fn trace(&self) -> Result<Reply, String> {
        let trace = self.store.trace(&self.current).map_err(|e| e.to_string())?;
        if trace.steps.is_empty() {
            return Ok(Reply::text("no steps yet"));
        }
        let mut out = String::new();
        for (i, s) in trace.steps.iter().enumerate() {
            let step = serde_json::to_string(&s.step).unwrap();
            let _ = writeln!(out, "{i}: {step}  (clock {})", s.clock);
        }
        Ok(Reply::text(out.trim_end()))
    }

    /// Reads commands until `:quit` or end of input.
    pub fn run<R: BufRead, W: Write>(&mut self, input: R, mut output: W, prompt: bool) -> std::io::Result<()> {
        writeln!(output, "session {} (:help for commands)", self.current)?;
        if prompt {
            write!(output, "dpcl> ")?;
            output.flush()?;
        }
        for line in input.lines() {
            let reply = self.handle(&line?);
            if !reply.text.is_empty() {
                writeln!(output, "{}", reply.text)?;
            }
            if reply.quit {
                break;
            }
            if prompt {
                write!(output, "dpcl> ")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}

fn literal(text: &str) -> Literal {
    match text {
        "true" => Literal::Bool(true),
        "false" => Literal::Bool(false),
        _ => match text.parse::<i64>() {
            Ok(n) => Literal::Int(n),
            Err(_) => Literal::Text(text.to_string()),
        },
    }
}

pub fn render_position(p: &PositionInstance) -> String {
    let mut line = format!("{} {}", p.id, p.kind.as_str());
    if let Some(label) = &p.label {
        let _ = write!(line, " {label}");
    }
    if let Some(action) = p.frame.action() {
        let _ = write!(line, " #{}", action.name);
    }
    match (p.env.get("holder"), p.frame.holder()) {
        (Some(v), _) => {
            let _ = write!(line, ", holder {v}");
        }
        (None, Some(t)) => {
            let _ = write!(line, ", holder {t}");
        }
        _ => {}
    }
    if let Some(c) = p.env.get("counterparty") {
        let _ = write!(line, ", counterparty {c}");
    }
    if p.violated {
        line.push_str(", VIOLATED");
    }
    line
}

/// Human-readable snapshot.
pub fn render_state(state: &InstitutionalState) -> String {
    if state.is_empty() {
        return "no objects, no positions".into();
    }
    let mut out = format!("clock {}\n", state.clock);
    if !state.objects.is_empty() {
        out.push_str("objects:\n");
        for o in state.objects.values() {
            let _ = write!(out, "  {} {}", o.id, o.name);
            if !o.descriptors.is_empty() {
                let d: Vec<&str> = o.descriptors.keys().map(String::as_str).collect();
                let _ = write!(out, " in {}", d.join(", "));
            }
            if !o.properties.is_empty() {
                let p: Vec<String> = o.properties.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                let _ = write!(out, " {{ {} }}", p.join(", "));
            }
            out.push('\n');
        }
    }
    if !state.compounds.is_empty() {
        out.push_str("compounds:\n");
        for c in state.compounds.values() {
            let _ = writeln!(out, "  {} {c}", c.id);
        }
    }
    if !state.positions.is_empty() {
        out.push_str("positions:\n");
        for p in state.positions.values() {
            let _ = writeln!(out, "  {}", render_position(p));
        }
    }
    out.trim_end().to_string()
}
