//! The evaluation-expression DSL: boolean connectives, comparisons,
//! literals and dotted paths into the evaluation context. There is no
//! arithmetic.

mod ast;
mod check;
mod eval;
mod parser;

pub use ast::{CmpOp, Expr, Namespace, Path};
pub use check::{type_check, PlanSchema, StaticType, TypeViolation};
pub use eval::{
    evaluate, evaluate_value, ContextLookup, EvalError, EvaluationContext, PlanContext, Resolved,
    SubscriptionContext,
};
pub use parser::{parse_expression, SyntaxError};
