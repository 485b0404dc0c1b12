//! Naive reference interpreter for the expression DSL plus a random
//! generator of well-typed expressions. Shares no code with the engine:
//! it builds its own trees, renders them to source text for the engine,
//! and evaluates its own trees directly.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Lit {
    B(bool),
    N(i64),
    S(&'static str),
}

#[derive(Debug, Clone)]
pub enum Node {
    Lit(Lit),
    Var(&'static str),
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Cmp(&'static str, Box<Node>, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Value(bool),
    Missing,
    Mismatch,
}

pub fn env() -> HashMap<&'static str, Lit> {
    HashMap::from([
        ("x", Lit::N(1)),
        ("y", Lit::N(3)),
        ("f", Lit::B(true)),
        ("g", Lit::B(false)),
        ("s", Lit::S("a")),
    ])
}

pub fn render(n: &Node) -> String {
    match n {
        Node::Lit(Lit::B(b)) => b.to_string(),
        Node::Lit(Lit::N(v)) => v.to_string(),
        Node::Lit(Lit::S(s)) => format!("'{s}'"),
        Node::Var(v) => format!("userContext.{v}"),
        Node::Not(e) => format!("!({})", render(e)),
        Node::And(l, r) => format!("({}) && ({})", render(l), render(r)),
        Node::Or(l, r) => format!("({}) || ({})", render(l), render(r)),
        Node::Cmp(op, l, r) => format!("({}) {op} ({})", render(l), render(r)),
    }
}

fn value(n: &Node, env: &HashMap<&'static str, Lit>) -> Result<Lit, Outcome> {
    match n {
        Node::Lit(l) => Ok(l.clone()),
        Node::Var(v) => env.get(v).cloned().ok_or(Outcome::Missing),
        other => run(other, env).map(Lit::B),
    }
}

pub fn run(n: &Node, env: &HashMap<&'static str, Lit>) -> Result<bool, Outcome> {
    let as_bool = |n: &Node| match value(n, env)? {
        Lit::B(b) => Ok(b),
        _ => Err(Outcome::Mismatch),
    };
    match n {
        Node::Lit(_) | Node::Var(_) => as_bool(n),
        Node::Not(e) => Ok(!as_bool(e)?),
        Node::And(l, r) => Ok(if as_bool(l)? { as_bool(r)? } else { false }),
        Node::Or(l, r) => Ok(if as_bool(l)? { true } else { as_bool(r)? }),
        Node::Cmp(op, l, r) => {
            let a = value(l, env)?;
            let b = value(r, env)?;
            match (op, a, b) {
                (&"==", a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => Ok(a == b),
                (&"!=", a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => Ok(a != b),
                (&"<", Lit::N(a), Lit::N(b)) => Ok(a < b),
                (&"<=", Lit::N(a), Lit::N(b)) => Ok(a <= b),
                (&">", Lit::N(a), Lit::N(b)) => Ok(a > b),
                (&">=", Lit::N(a), Lit::N(b)) => Ok(a >= b),
                _ => Err(Outcome::Mismatch),
            }
        }
    }
}

pub fn outcome(n: &Node, env: &HashMap<&'static str, Lit>) -> Outcome {
    match run(n, env) {
        Ok(b) => Outcome::Value(b),
        Err(e) => e,
    }
}

#[derive(Clone, Copy)]
enum Ty {
    B,
    N,
    S,
}

fn leaf(rng: &mut StdRng, ty: Ty) -> Node {
    // one in eight leaves reads a context variable, sometimes an absent one
    if rng.gen_ratio(1, 8) {
        let v = match ty {
            Ty::B => ["f", "g", "missing"][rng.gen_range(0..3)],
            Ty::N => ["x", "y", "missing"][rng.gen_range(0..3)],
            Ty::S => ["s", "missing"][rng.gen_range(0..2)],
        };
        return Node::Var(v);
    }
    Node::Lit(match ty {
        Ty::B => Lit::B(rng.gen()),
        Ty::N => Lit::N(rng.gen_range(0..=3)),
        Ty::S => Lit::S(["a", "b"][rng.gen_range(0..2)]),
    })
}

/// A boolean expression of depth at most `depth`.
pub fn gen_bool(rng: &mut StdRng, depth: u32) -> Node {
    if depth == 0 || rng.gen_ratio(1, 5) {
        return leaf(rng, Ty::B);
    }
    let d = depth - 1;
    match rng.gen_range(0..5) {
        0 => Node::Not(Box::new(gen_bool(rng, d))),
        1 => Node::And(Box::new(gen_bool(rng, d)), Box::new(gen_bool(rng, d))),
        2 => Node::Or(Box::new(gen_bool(rng, d)), Box::new(gen_bool(rng, d))),
        3 => {
            let op = ["<", "<=", ">", ">=", "==", "!="][rng.gen_range(0..6)];
            Node::Cmp(op, Box::new(leaf(rng, Ty::N)), Box::new(leaf(rng, Ty::N)))
        }
        _ => {
            let op = ["==", "!="][rng.gen_range(0..2)];
            if rng.gen() {
                Node::Cmp(op, Box::new(leaf(rng, Ty::S)), Box::new(leaf(rng, Ty::S)))
            } else {
                Node::Cmp(op, Box::new(gen_bool(rng, d)), Box::new(gen_bool(rng, d)))
            }
        }
    }
}

pub fn depth(n: &Node) -> u32 {
    match n {
        Node::Lit(_) | Node::Var(_) => 0,
        Node::Not(e) => 1 + depth(e),
        Node::And(l, r) | Node::Or(l, r) | Node::Cmp(_, l, r) => 1 + depth(l).max(depth(r)),
    }
}
