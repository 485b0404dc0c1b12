//! Static type checking of expressions against the declared features and
//! usage limits of a pricing document.

use std::fmt;

use super::ast::{CmpOp, Expr, Namespace, Path};
use crate::value::ValueType;

/// What the checker needs to know about a pricing document.
pub trait PlanSchema {
    fn feature_type(&self, name: &str) -> Option<ValueType>;
    fn has_limit(&self, name: &str) -> bool;
}

/// Static type of an expression node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticType {
    Boolean,
    Numeric,
    Text,
    /// `userContext` paths; checked when evaluated.
    Dynamic,
    /// `subscription.addOns`; only usable as `subscription.addOns == 'name'`.
    AddOnSet,
}

impl From<ValueType> for StaticType {
    fn from(t: ValueType) -> Self {
        match t {
            ValueType::Boolean => StaticType::Boolean,
            ValueType::Numeric => StaticType::Numeric,
            ValueType::Text => StaticType::Text,
        }
    }
}

impl fmt::Display for StaticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StaticType::Boolean => "BOOLEAN",
            StaticType::Numeric => "NUMERIC",
            StaticType::Text => "TEXT",
            StaticType::Dynamic => "DYNAMIC",
            StaticType::AddOnSet => "ADDON_SET",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeViolation {
    /// `planContext` path naming no declared feature or limit.
    UnknownPlanPath { path: String },
    /// Path shape that no namespace provides, e.g. `subscription.owner`.
    UnknownPath { path: String },
    TypeMismatch {
        node: String,
        expected: String,
        found: StaticType,
    },
    NonBooleanRoot { found: StaticType },
}

impl TypeViolation {
    pub fn code(&self) -> &'static str {
        match self {
            TypeViolation::UnknownPlanPath { .. } => "UNKNOWN_PLAN_PATH",
            TypeViolation::UnknownPath { .. } => "UNKNOWN_PATH",
            TypeViolation::TypeMismatch { .. } => "TYPE_MISMATCH",
            TypeViolation::NonBooleanRoot { .. } => "NON_BOOLEAN_ROOT",
        }
    }
}

impl fmt::Display for TypeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeViolation::UnknownPlanPath { path } => {
                write!(f, "`{path}` names no declared feature or usage limit")
            }
            TypeViolation::UnknownPath { path } => write!(f, "`{path}` is not a valid context path"),
            TypeViolation::TypeMismatch { node, expected, found } => {
                write!(f, "`{node}` is {found}, expected {expected}")
            }
            TypeViolation::NonBooleanRoot { found } => {
                write!(f, "expression must be BOOLEAN, found {found}")
            }
        }
    }
}

struct Checker<'a, S: ?Sized> {
    schema: &'a S,
    violations: Vec<TypeViolation>,
}

impl<S: PlanSchema + ?Sized> Checker<'_, S> {
    fn path_type(&mut self, path: &Path) -> Option<StaticType> {
        let segs: Vec<&str> = path.segments.iter().map(String::as_str).collect();
        match (path.namespace, segs.as_slice()) {
            (Namespace::UserContext, [_]) => Some(StaticType::Dynamic),
            (Namespace::PlanContext, ["features", name]) => match self.schema.feature_type(name) {
                Some(t) => Some(t.into()),
                None => {
                    self.unknown_plan(path);
                    None
                }
            },
            (Namespace::PlanContext, ["usageLimits", name]) => {
                if self.schema.has_limit(name) {
                    Some(StaticType::Numeric)
                } else {
                    self.unknown_plan(path);
                    None
                }
            }
            (Namespace::PlanContext, _) => {
                self.unknown_plan(path);
                None
            }
            (Namespace::Subscription, ["plan"]) => Some(StaticType::Text),
            (Namespace::Subscription, ["addOns"]) => Some(StaticType::AddOnSet),
            _ => {
                self.violations.push(TypeViolation::UnknownPath { path: path.to_string() });
                None
            }
        }
    }

    fn unknown_plan(&mut self, path: &Path) {
        self.violations.push(TypeViolation::UnknownPlanPath { path: path.to_string() });
    }

    fn mismatch(&mut self, node: &Expr, expected: &str, found: StaticType) {
        self.violations.push(TypeViolation::TypeMismatch {
            node: node.to_string(),
            expected: expected.to_string(),
            found,
        });
    }

    /// Requires `node` to be boolean (or dynamic).
    fn expect_bool(&mut self, node: &Expr) {
        if let Some(t) = self.infer(node) {
            if !matches!(t, StaticType::Boolean | StaticType::Dynamic) {
                self.mismatch(node, "BOOLEAN", t);
            }
        }
    }

    /// `None` when the node already produced a violation.
    fn infer(&mut self, node: &Expr) -> Option<StaticType> {
        match node {
            Expr::Bool(_) => Some(StaticType::Boolean),
            Expr::Num(_) => Some(StaticType::Numeric),
            Expr::Text(_) => Some(StaticType::Text),
            Expr::Path(p) => self.path_type(p),
            Expr::Not(e) => {
                self.expect_bool(e);
                Some(StaticType::Boolean)
            }
            Expr::And(l, r) | Expr::Or(l, r) => {
                self.expect_bool(l);
                self.expect_bool(r);
                Some(StaticType::Boolean)
            }
            Expr::Compare(op, l, r) => {
                let lt = self.infer(l);
                let rt = self.infer(r);
                let (Some(lt), Some(rt)) = (lt, rt) else {
                    return Some(StaticType::Boolean);
                };
                if op.is_ordering() {
                    for (side, t) in [(l, lt), (r, rt)] {
                        if !matches!(t, StaticType::Numeric | StaticType::Dynamic) {
                            self.mismatch(side, "NUMERIC", t);
                        }
                    }
                } else {
                    self.check_equality(*op, (l, lt), (r, rt));
                }
                Some(StaticType::Boolean)
            }
        }
    }

    fn check_equality(&mut self, op: CmpOp, (l, lt): (&Expr, StaticType), (r, rt): (&Expr, StaticType)) {
        use StaticType::*;
        match (lt, rt) {
            (AddOnSet, other) | (other, AddOnSet) => {
                let (set_side, other_side) = if lt == AddOnSet { (l, r) } else { (r, l) };
                if op != CmpOp::Eq {
                    self.mismatch(set_side, "`subscription.addOns` only supports `==`", AddOnSet);
                } else if !matches!(other_side, Expr::Text(_)) {
                    self.mismatch(other_side, "text literal compared with `subscription.addOns`", other);
                }
            }
            (Dynamic, _) | (_, Dynamic) => {}
            (a, b) if a == b => {}
            (a, b) => self.mismatch(r, &format!("{a} (same type as left operand)"), b),
        }
    }
}

/// Checks `ast` against `schema`; returns the root type or every violation found.
pub fn type_check<S: PlanSchema + ?Sized>(ast: &Expr, schema: &S) -> Result<StaticType, Vec<TypeViolation>> {
    let mut checker = Checker {
        schema,
        violations: Vec::new(),
    };
    let root = checker.infer(ast);
    if let Some(t) = root {
        if checker.violations.is_empty() && t != StaticType::Boolean {
            checker.violations.push(TypeViolation::NonBooleanRoot { found: t });
        }
    }
    if checker.violations.is_empty() {
        Ok(StaticType::Boolean)
    } else {
        Err(checker.violations)
    }
}
