mod common;

use common::oracle::{self, Lit, Outcome};
use pricing_gate_core::expr::{evaluate, parse_expression, CmpOp, EvalError, EvaluationContext, Expr, Namespace};
use pricing_gate_core::{Decimal, Value};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn engine_context() -> EvaluationContext {
    let mut ctx = EvaluationContext::default();
    for (k, v) in oracle::env() {
        let value = match v {
            Lit::B(b) => Value::Bool(b),
            Lit::N(n) => Value::from(n),
            Lit::S(s) => Value::from(s),
        };
        ctx.user_context.insert(k.to_string(), value);
    }
    ctx
}

fn engine_outcome(src: &str, ctx: &EvaluationContext) -> Outcome {
    let ast = parse_expression(src).unwrap_or_else(|e| panic!("{src}: {e}"));
    match evaluate(&ast, ctx) {
        Ok(b) => Outcome::Value(b),
        Err(EvalError::MissingContextKey { .. }) => Outcome::Missing,
        Err(EvalError::DynamicTypeMismatch { .. }) => Outcome::Mismatch,
    }
}

#[test]
fn engine_agrees_with_naive_interpreter() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let env = oracle::env();
    let ctx = engine_context();
    let (mut trues, mut falses, mut errors) = (0, 0, 0);
    for i in 0..1000 {
        let tree = oracle::gen_bool(&mut rng, 4);
        assert!(oracle::depth(&tree) <= 4);
        let src = oracle::render(&tree);
        let expected = oracle::outcome(&tree, &env);
        assert_eq!(engine_outcome(&src, &ctx), expected, "#{i}: {src}");
        match expected {
            Outcome::Value(true) => trues += 1,
            Outcome::Value(false) => falses += 1,
            _ => errors += 1,
        }
    }
    // the corpus exercises every outcome
    assert!(trues > 100 && falses > 100 && errors > 10, "{trues}/{falses}/{errors}");
}

fn arb_path() -> impl Strategy<Value = Expr> {
    prop_oneof![
        "[a-z][a-zA-Z0-9_]{0,6}".prop_map(|k| Expr::path(Namespace::UserContext, &[&k])),
        "[a-z][a-zA-Z0-9_]{0,6}".prop_map(|k| Expr::path(Namespace::PlanContext, &["features", &k])),
        Just(Expr::path(Namespace::Subscription, &["addOns"])),
    ]
}

fn arb_leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        any::<bool>().prop_map(Expr::Bool),
        (-1_000_000_000i64..1_000_000_000).prop_map(|m| Expr::Num(Decimal::from_micros(m as i128))),
        "[a-z' ]{0,5}".prop_map(Expr::Text),
        arb_path(),
    ]
}

fn arb_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Lt),
        Just(CmpOp::Le),
        Just(CmpOp::Gt),
        Just(CmpOp::Ge),
        Just(CmpOp::Eq),
        Just(CmpOp::Ne)
    ]
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    arb_leaf().prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::or(l, r)),
            (arb_op(), inner.clone(), inner).prop_map(|(op, l, r)| Expr::cmp(op, l, r)),
        ]
    })
}

proptest! {
    #[test]
    fn printed_form_parses_back(ast in arb_expr()) {
        let printed = ast.to_string();
        prop_assert_eq!(parse_expression(&printed).unwrap(), ast);
    }

    #[test]
    fn evaluation_is_deterministic(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let tree = oracle::gen_bool(&mut rng, 4);
        let src = oracle::render(&tree);
        let ctx = engine_context();
        prop_assert_eq!(engine_outcome(&src, &ctx), engine_outcome(&src, &ctx));
    }
}
