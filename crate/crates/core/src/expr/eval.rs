use std::cmp::Ordering;
use std::collections::BTreeMap;

use indexmap::IndexMap;

use super::ast::{CmpOp, Expr, Namespace, Path};
use crate::value::{Decimal, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("context has no value at `{path}`")]
    MissingContextKey { path: String },
    #[error("`{node}` evaluated to {found}, expected {expected}")]
    DynamicTypeMismatch {
        node: String,
        expected: &'static str,
        found: String,
    },
}

/// Result of resolving a path.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Value(Value),
    /// The subscribed add-on names.
    Set(Vec<String>),
}

/// Source of path values during evaluation.
pub trait ContextLookup {
    fn lookup(&self, path: &Path) -> Result<Resolved, EvalError>;
}

/// Plan-derived half of the evaluation context.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanContext {
    pub features: IndexMap<String, Value>,
    pub usage_limits: IndexMap<String, Decimal>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubscriptionContext {
    pub plan: String,
    pub add_ons: Vec<String>,
}

/// Everything an expression can reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationContext {
    pub user_context: BTreeMap<String, Value>,
    pub plan_context: PlanContext,
    pub subscription: SubscriptionContext,
}

impl ContextLookup for EvaluationContext {
    fn lookup(&self, path: &Path) -> Result<Resolved, EvalError> {
        let missing = || EvalError::MissingContextKey { path: path.to_string() };
        let segs: Vec<&str> = path.segments.iter().map(String::as_str).collect();
        let found = match (path.namespace, segs.as_slice()) {
            (Namespace::UserContext, [key]) => self.user_context.get(*key).cloned().map(Resolved::Value),
            (Namespace::PlanContext, ["features", name]) => {
                self.plan_context.features.get(*name).cloned().map(Resolved::Value)
            }
            (Namespace::PlanContext, ["usageLimits", name]) => self
                .plan_context
                .usage_limits
                .get(*name)
                .map(|n| Resolved::Value(Value::Number(*n))),
            (Namespace::Subscription, ["plan"]) => Some(Resolved::Value(Value::Text(self.subscription.plan.clone()))),
            (Namespace::Subscription, ["addOns"]) => Some(Resolved::Set(self.subscription.add_ons.clone())),
            _ => None,
        };
        found.ok_or_else(missing)
    }
}

fn describe(r: &Resolved) -> String {
    match r {
        Resolved::Value(v) => format!("{} {v:?}", v.value_type()),
        Resolved::Set(_) => "ADDON_SET".to_string(),
    }
}

fn mismatch(node: &Expr, expected: &'static str, found: &Resolved) -> EvalError {
    EvalError::DynamicTypeMismatch {
        node: node.to_string(),
        expected,
        found: describe(found),
    }
}

fn eval_node<C: ContextLookup + ?Sized>(node: &Expr, ctx: &C) -> Result<Resolved, EvalError> {
    Ok(match node {
        Expr::Bool(b) => Resolved::Value(Value::Bool(*b)),
        Expr::Num(n) => Resolved::Value(Value::Number(*n)),
        Expr::Text(t) => Resolved::Value(Value::Text(t.clone())),
        Expr::Path(p) => ctx.lookup(p)?,
        Expr::Not(e) => Resolved::Value(Value::Bool(!eval_bool(e, ctx)?)),
        Expr::And(l, r) => Resolved::Value(Value::Bool(eval_bool(l, ctx)? && eval_bool(r, ctx)?)),
        Expr::Or(l, r) => Resolved::Value(Value::Bool(eval_bool(l, ctx)? || eval_bool(r, ctx)?)),
        Expr::Compare(op, l, r) => {
            let lv = eval_node(l, ctx)?;
            let rv = eval_node(r, ctx)?;
            Resolved::Value(Value::Bool(compare(*op, (l, &lv), (r, &rv))?))
        }
    })
}

fn eval_bool<C: ContextLookup + ?Sized>(node: &Expr, ctx: &C) -> Result<bool, EvalError> {
    match eval_node(node, ctx)? {
        Resolved::Value(Value::Bool(b)) => Ok(b),
        other => Err(mismatch(node, "BOOLEAN", &other)),
    }
}

fn compare(op: CmpOp, (l, lv): (&Expr, &Resolved), (r, rv): (&Expr, &Resolved)) -> Result<bool, EvalError> {
    if op.is_ordering() {
        let ln = match lv {
            Resolved::Value(Value::Number(n)) => n,
            other => return Err(mismatch(l, "NUMERIC", other)),
        };
        let rn = match rv {
            Resolved::Value(Value::Number(n)) => n,
            other => return Err(mismatch(r, "NUMERIC", other)),
        };
        let ord = ln.cmp(rn);
        return Ok(match op {
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            _ => ord != Ordering::Less,
        });
    }
    let equal = match (lv, rv) {
        (Resolved::Set(names), Resolved::Value(Value::Text(t))) | (Resolved::Value(Value::Text(t)), Resolved::Set(names)) => {
            if op == CmpOp::Ne {
                let set_node = if matches!(lv, Resolved::Set(_)) { l } else { r };
                return Err(mismatch(set_node, "`==` membership test", &Resolved::Set(names.clone())));
            }
            names.iter().any(|n| n == t)
        }
        (Resolved::Value(a), Resolved::Value(b)) => {
            if a.value_type() != b.value_type() {
                return Err(EvalError::DynamicTypeMismatch {
                    node: r.to_string(),
                    expected: "same type as left operand",
                    found: describe(rv),
                });
            }
            a == b
        }
        (Resolved::Set(_), other) => return Err(mismatch(r, "TEXT", other)),
        (other, Resolved::Set(_)) => return Err(mismatch(l, "TEXT", other)),
    };
    Ok(if op == CmpOp::Eq { equal } else { !equal })
}

/// Evaluates a boolean expression. `&&` and `||` short-circuit left to right.
pub fn evaluate<C: ContextLookup + ?Sized>(ast: &Expr, ctx: &C) -> Result<bool, EvalError> {
    eval_bool(ast, ctx)
}

/// Evaluates any expression to a value; add-on sets are rejected.
pub fn evaluate_value<C: ContextLookup + ?Sized>(ast: &Expr, ctx: &C) -> Result<Value, EvalError> {
    match eval_node(ast, ctx)? {
        Resolved::Value(v) => Ok(v),
        other => Err(mismatch(ast, "a value", &other)),
    }
}
