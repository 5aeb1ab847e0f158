//! Proptest strategies: arbitrary program ASTs, valid duty programs for the
//! rewriter, and scenario steps for the corpus programs.

use dpcl::interpreter::{Literal, Step};
use dpcl::model::*;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::sample::select;

pub fn ident() -> impl Strategy<Value = Ident> {
    "[a-z][a-z0-9_]{0,5}".prop_filter_map("keyword", |s| Ident::new(s).ok())
}

fn fields<S: Strategy<Value = Term> + Clone>(term: S, max: usize) -> impl Strategy<Value = Fields> {
    vec((ident(), term), 0..max).prop_map(|kv| kv.into_iter().collect())
}

fn duration() -> impl Strategy<Value = Duration> {
    (0u64..500, select(TimeUnit::ALL.to_vec())).prop_map(|(n, u)| Duration::new(n, u))
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    select(vec![CmpOp::Gt, CmpOp::Ge, CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne])
}

/// Any program term. `objects` allows refined objects (`x { ... }`), which
/// cannot start a rule at declaration level.
pub fn term(objects: bool) -> BoxedStrategy<Term> {
    let leaf = prop_oneof![
        3 => ident().prop_map(Term::Atom),
        1 => vec(ident(), 2..4).prop_map(Term::Path),
        1 => Just(Term::Now),
        1 => duration().prop_map(Term::Duration),
        1 => (0i64..1_000_000).prop_map(Term::Int),
    ];
    leaf.prop_recursive(3, 24, 4, move |inner| {
        let mut options: Vec<(u32, BoxedStrategy<Term>)> = vec![
            (
                1,
                (ident(), vec(inner.clone(), 0..3))
                    .prop_map(|(name, args)| Term::Call { name, args })
                    .boxed(),
            ),
            (1, vec(inner.clone(), 2..4).prop_map(Term::alternation).boxed()),
            (
                2,
                (inner.clone(), cmp_op(), inner.clone())
                    .prop_map(|(l, op, r)| Term::Compare {
                        lhs: Box::new(l),
                        op,
                        rhs: Box::new(r),
                    })
                    .boxed(),
            ),
            (
                2,
                (inner.clone(), any::<bool>(), inner.clone())
                    .prop_map(|(l, add, r)| Term::Arith {
                        lhs: Box::new(l),
                        op: if add { ArithOp::Add } else { ArithOp::Sub },
                        rhs: Box::new(r),
                    })
                    .boxed(),
            ),
            (
                1,
                (inner.clone(), ident())
                    .prop_map(|(s, d)| Term::Qualify {
                        subject: Box::new(s),
                        descriptor: d,
                    })
                    .boxed(),
            ),
        ];
        if objects {
            options.push((
                1,
                (ident(), fields(inner.clone(), 3))
                    .prop_map(|(head, fields)| Term::Object { head, fields })
                    .boxed(),
            ));
        }
        proptest::strategy::Union::new_weighted(options)
    })
    .boxed()
}

/// Rule conditions. A leading `(` would be read as call arguments of a
/// preceding bare conclusion, so those are excluded.
fn condition() -> impl Strategy<Value = Term> {
    term(false).prop_filter("leading parenthesis", |t| !t.to_string().starts_with('('))
}

fn event() -> impl Strategy<Value = EventRef> {
    (ident(), fields(term(true), 3)).prop_map(|(name, refinements)| EventRef { name, refinements })
}

fn target_term() -> impl Strategy<Value = Term> {
    prop_oneof![
        ident().prop_map(Term::Atom),
        vec(ident(), 2..4).prop_map(Term::Path),
        (ident(), vec(term(true), 0..3)).prop_map(|(name, args)| Term::Call { name, args }),
        (ident(), fields(term(true), 3)).prop_map(|(head, fields)| Term::Object { head, fields }),
    ]
}

fn polarity() -> impl Strategy<Value = Polarity> {
    any::<bool>().prop_map(|b| if b { Polarity::Create } else { Polarity::Remove })
}

fn term_production() -> impl Strategy<Value = ProductionEvent> {
    (polarity(), target_term()).prop_map(|(polarity, t)| ProductionEvent {
        polarity,
        target: Target::Term(t),
    })
}

fn effect(frame: BoxedStrategy<Frame>) -> impl Strategy<Value = Effect> {
    prop_oneof![
        2 => term_production().prop_map(Effect::Produce),
        1 => (polarity(), frame).prop_map(|(polarity, f)| Effect::Produce(ProductionEvent {
            polarity,
            target: Target::Frame(Box::new(f)),
        })),
        1 => event().prop_map(Effect::Event),
        2 => term(true).prop_map(Effect::Term),
    ]
}

fn label() -> impl Strategy<Value = Option<Ident>> {
    proptest::option::of(ident())
}

fn leaf_frame() -> BoxedStrategy<Frame> {
    let duty = (
        label(),
        term(true),
        term(true),
        event(),
        proptest::option::of(term(true)),
    )
        .prop_map(|(label, holder, counterparty, action, violation)| {
            Frame::Duty(DutyFrame {
                label,
                holder,
                counterparty,
                action,
                violation,
            })
        });
    let power = (label(), term(true), event(), term_production()).prop_map(|(label, holder, action, p)| {
        Frame::Power(PowerFrame {
            label,
            holder,
            action,
            consequence: Effect::Produce(p),
        })
    });
    prop_oneof![duty, power].boxed()
}

pub fn frame() -> BoxedStrategy<Frame> {
    let nested = leaf_frame();
    let power =
        (label(), term(true), event(), effect(nested.clone())).prop_map(|(label, holder, action, consequence)| {
            Frame::Power(PowerFrame {
                label,
                holder,
                action,
                consequence,
            })
        });
    let other = (
        select(OtherKind::ALL.to_vec()),
        label(),
        vec((ident(), effect(nested.clone())), 0..3),
    )
        .prop_map(|(kind, label, body)| {
            Frame::Other(OtherPositionFrame {
                kind,
                label,
                body: body.into_iter().collect(),
            })
        });
    prop_oneof![3 => power, 3 => leaf_frame(), 1 => other].boxed()
}

pub fn rule() -> impl Strategy<Value = Rule> {
    let transformational = (
        condition(),
        prop_oneof![
            frame().prop_map(Conclusion::Frame),
            term(true).prop_map(Conclusion::Fact)
        ],
    )
        .prop_map(|(condition, conclusion)| Rule::Transformational { condition, conclusion });
    let trigger = prop_oneof![
        event().prop_map(Trigger::Event),
        term_production().prop_map(Trigger::Production)
    ];
    let reactive = (trigger, effect(leaf_frame())).prop_map(|(trigger, effect)| Rule::Reactive { trigger, effect });
    prop_oneof![transformational, reactive]
}

fn member() -> impl Strategy<Value = Member> {
    prop_oneof![frame().prop_map(Member::Frame), rule().prop_map(Member::Rule)]
}

fn compound() -> impl Strategy<Value = CompoundDecl> {
    (ident(), vec(ident(), 0..4), vec(member(), 0..4)).prop_map(|(name, mut params, members)| {
        params.dedup();
        CompoundDecl { name, params, members }
    })
}

pub fn declaration() -> impl Strategy<Value = Declaration> {
    prop_oneof![
        2 => frame().prop_map(Declaration::Frame),
        2 => rule().prop_map(Declaration::Rule),
        1 => compound().prop_map(Declaration::Compound),
    ]
}

pub fn program() -> impl Strategy<Value = Program> {
    vec(declaration(), 0..5).prop_map(|d| Program::new("generated.dpcl", d))
}

/// Source of a program that validates cleanly: top-level duties and
/// compounds holding duties, some with violation conditions, and reactive
/// rules on those violations.
pub fn duty_program() -> impl Strategy<Value = String> {
    let top = vec((any::<bool>(), 1u64..100, any::<bool>()), 0..4);
    let compounds = vec(vec((any::<bool>(), 1u64..100), 1..4), 0..3);
    (top, compounds).prop_map(|(top, compounds)| {
        let mut src = String::new();
        for (i, (violates, limit, react)) in top.iter().enumerate() {
            src.push_str(&format!("duty t{i} {{\n    holder: alice\n    counterparty: bob\n    action: #pay\n"));
            if *violates {
                src.push_str(&format!("    violation: now() > {limit}\n"));
            }
            src.push_str("}\n");
            if *react {
                src.push_str(&format!("+t{i}.violation => +power {{ holder: bob action: #sue consequence: +sued }}\n"));
            }
        }
        for (c, duties) in compounds.iter().enumerate() {
            src.push_str(&format!("loan{c}(lender, borrower, due) {{\n"));
            for (j, (violates, limit)) in duties.iter().enumerate() {
                src.push_str(&format!(
                    "    duty d{j} {{ holder: borrower counterparty: lender action: #repay {{ part: p{j} }}"
                ));
                if *violates {
                    src.push_str(&format!(" violation: now() > due + {limit}s"));
                }
                src.push_str(" }\n");
                src.push_str(&format!(
                    "    +d{j}.violation => +power {{ holder: lender action: #collect consequence: +collected{c}(borrower) }}\n"
                ));
            }
            src.push_str("}\n");
            src.push_str(&format!("collected{c}(debtor) {{}}\n"));
        }
        src
    })
}

fn lit(s: &str) -> Literal {
    Literal::Text(s.to_string())
}

const PEOPLE: [&str; 3] = ["alice", "bob", "library"];

fn advance() -> impl Strategy<Value = Step> {
    select(vec!["0s", "1s", "1h", "1d", "1w", "1m", "1m", "2m"]).prop_map(Step::advance)
}

/// Steps over the library program and its rewritten form.
pub fn library_step() -> impl Strategy<Value = Step> {
    let who = select(PEOPLE.to_vec());
    let item = select(vec!["book1", "book2"]);
    prop_oneof![
        1 => (select(vec!["alice", "bob"]), select(vec![vec![], vec!["student"], vec!["staff"]]), select(vec!["c1", "c2"]))
            .prop_map(|(n, d, card)| Step::assert(n, &d, &[("id_card", lit(card))])),
        2 => (who.clone(), select(vec!["c1", "c2"])).prop_map(|(a, c)| Step::act(a, "register", &[("instrument", lit(c))])),
        3 => (who.clone(), item.clone()).prop_map(|(a, i)| Step::act(a, "borrow", &[("item", lit(i))])),
        2 => (who.clone(), item).prop_map(|(a, i)| Step::act(a, "return", &[("item", lit(i))])),
        1 => who.clone().prop_map(|a| Step::act(a, "request_return", &[])),
        2 => who.clone().prop_map(|a| Step::act(a, "fine", &[])),
        2 => who.prop_map(|a| Step::act(a, "declare_violation", &[("target", lit("d1"))])),
        4 => advance(),
    ]
}

/// A library scenario: everyone exists, usually alice has already borrowed
/// a book, then random steps.
pub fn library_scenario() -> impl Strategy<Value = Vec<Step>> {
    (0usize..4, vec(library_step(), 0..14)).prop_map(|(head, rest)| {
        let mut steps = vec![
            Step::assert("alice", &["student"], &[("id_card", lit("c1"))]),
            Step::assert("bob", &["staff"], &[("id_card", lit("c2"))]),
            Step::assert("library", &[], &[]),
        ];
        if head > 0 {
            steps.push(Step::act("alice", "register", &[("instrument", lit("c1"))]));
            steps.push(Step::act("alice", "borrow", &[("item", lit("book1"))]));
        }
        steps.extend(rest);
        steps
    })
}

pub fn weather_step() -> impl Strategy<Value = Step> {
    prop_oneof![
        2 => select(vec!["+raining", "-raining"]).prop_map(Step::produce),
        1 => select(vec![vec![], vec!["member"]]).prop_map(|d| Step::assert("alice", &d, &[])),
        1 => Just(Step::act("shop", "sell_umbrella", &[])),
        1 => Just(Step::act("alice", "pay", &[])),
        2 => select(vec!["0s", "1s", "5s", "11s"]).prop_map(Step::advance),
    ]
}

pub fn weather_scenario() -> impl Strategy<Value = Vec<Step>> {
    vec(weather_step(), 0..16).prop_map(|rest| {
        let mut steps = vec![Step::assert("shop", &[], &[]), Step::assert("alice", &[], &[])];
        steps.extend(rest);
        steps
    })
}
