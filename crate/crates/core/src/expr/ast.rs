use std::fmt;

use crate::value::Decimal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Namespace {
    UserContext,
    PlanContext,
    Subscription,
}

impl Namespace {
    pub fn from_ident(ident: &str) -> Option<Self> {
        match ident {
            "userContext" => Some(Namespace::UserContext),
            "planContext" => Some(Namespace::PlanContext),
            "subscription" => Some(Namespace::Subscription),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::UserContext => "userContext",
            Namespace::PlanContext => "planContext",
            Namespace::Subscription => "subscription",
        }
    }
}

/// A dotted reference into the evaluation context, e.g.
/// `planContext.usageLimits.maxPets`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub namespace: Namespace,
    pub segments: Vec<String>,
}

impl Path {
    pub fn new(namespace: Namespace, segments: &[&str]) -> Self {
        Path {
            namespace,
            segments: segments.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.namespace.as_str())?;
        for seg in &self.segments {
            write!(f, ".{seg}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

/// Syntax tree of one evaluation expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Bool(bool),
    Num(Decimal),
    Text(String),
    Path(Path),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn and(l: Expr, r: Expr) -> Expr {
        Expr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Expr, r: Expr) -> Expr {
        Expr::Or(Box::new(l), Box::new(r))
    }

    pub fn cmp(op: CmpOp, l: Expr, r: Expr) -> Expr {
        Expr::Compare(op, Box::new(l), Box::new(r))
    }

    pub fn path(namespace: Namespace, segments: &[&str]) -> Expr {
        Expr::Path(Path::new(namespace, segments))
    }

    /// Depth of the tree; a leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Bool(_) | Expr::Num(_) | Expr::Text(_) | Expr::Path(_) => 0,
            Expr::Not(e) => 1 + e.depth(),
            Expr::And(l, r) | Expr::Or(l, r) | Expr::Compare(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }
}

fn write_text_literal(f: &mut fmt::Formatter<'_>, text: &str) -> fmt::Result {
    f.write_str("'")?;
    f.write_str(&text.replace('\'', "''"))?;
    f.write_str("'")
}

/// Fully parenthesized form; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Text(t) => write_text_literal(f, t),
            Expr::Path(p) => write!(f, "{p}"),
            Expr::Not(e) => write!(f, "(!{e})"),
            Expr::And(l, r) => write!(f, "({l} && {r})"),
            Expr::Or(l, r) => write!(f, "({l} || {r})"),
            Expr::Compare(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}
