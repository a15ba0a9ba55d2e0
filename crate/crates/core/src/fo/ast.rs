use std::collections::BTreeSet;
use std::fmt;

use crate::universe::Value;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(name.to_string())
    }

    pub fn constant(v: impl Into<Value>) -> Self {
        Term::Const(v.into())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// A first-order formula over relation atoms and equality.
///
/// Implication and universal quantification are kept as nodes of their own
/// so that quantifier rank is read off the formula as written.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom { relation: String, args: Vec<Term> },
    Eq(Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
    Forall(String, Box<Formula>),
}

/// Quantifier rank, constants, and free variables of a formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Analysis {
    pub rank: usize,
    pub constants: BTreeSet<Value>,
    /// In order of first occurrence.
    pub free_vars: Vec<String>,
}

impl Formula {
    pub fn atom(relation: &str, args: Vec<Term>) -> Self {
        Formula::Atom {
            relation: relation.to_string(),
            args,
        }
    }

    pub fn eq(a: Term, b: Term) -> Self {
        Formula::Eq(a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn exists(var: &str, body: Formula) -> Self {
        Formula::Exists(var.to_string(), Box::new(body))
    }

    pub fn forall(var: &str, body: Formula) -> Self {
        Formula::Forall(var.to_string(), Box::new(body))
    }

    pub fn analyze(&self) -> Analysis {
        Analysis {
            rank: self.rank(),
            constants: self.constants(),
            free_vars: self.free_vars(),
        }
    }

    /// Maximum nesting depth of quantifiers.
    pub fn rank(&self) -> usize {
        match self {
            Formula::Atom { .. } | Formula::Eq(..) => 0,
            Formula::Not(a) => a.rank(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.rank().max(b.rank())
            }
            Formula::Exists(_, a) | Formula::Forall(_, a) => 1 + a.rank(),
        }
    }

    /// `adom(φ)`: the constants mentioned.
    pub fn constants(&self) -> BTreeSet<Value> {
        let mut out = BTreeSet::new();
        self.visit_terms(&mut |t| {
            if let Term::Const(c) = t {
                out.insert(c.clone());
            }
        });
        out
    }

    fn visit_terms(&self, visit: &mut impl FnMut(&Term)) {
        match self {
            Formula::Atom { args, .. } => args.iter().for_each(&mut *visit),
            Formula::Eq(a, b) => {
                visit(a);
                visit(b);
            }
            Formula::Not(a) | Formula::Exists(_, a) | Formula::Forall(_, a) => a.visit_terms(visit),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.visit_terms(visit);
                b.visit_terms(visit);
            }
        }
    }

    pub fn free_vars(&self) -> Vec<String> {
        fn walk(f: &Formula, bound: &mut Vec<String>, out: &mut Vec<String>) {
            let term = |t: &Term, bound: &Vec<String>, out: &mut Vec<String>| {
                if let Term::Var(v) = t {
                    if !bound.contains(v) && !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            };
            match f {
                Formula::Atom { args, .. } => args.iter().for_each(|t| term(t, bound, out)),
                Formula::Eq(a, b) => {
                    term(a, bound, out);
                    term(b, bound, out);
                }
                Formula::Not(a) => walk(a, bound, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, bound, out);
                    walk(b, bound, out);
                }
                Formula::Exists(v, a) | Formula::Forall(v, a) => {
                    bound.push(v.clone());
                    walk(a, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Relation symbols used.
    pub fn relations(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(f: &Formula, out: &mut BTreeSet<String>) {
            match f {
                Formula::Atom { relation, .. } => {
                    out.insert(relation.clone());
                }
                Formula::Eq(..) => {}
                Formula::Not(a) | Formula::Exists(_, a) | Formula::Forall(_, a) => walk(a, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Replaces free occurrences of `var` by the constant `value`.
    pub fn substitute(&self, var: &str, value: &Value) -> Formula {
        let sub = |t: &Term| match t {
            Term::Var(v) if v == var => Term::Const(value.clone()),
            other => other.clone(),
        };
        match self {
            Formula::Atom { relation, args } => Formula::Atom {
                relation: relation.clone(),
                args: args.iter().map(sub).collect(),
            },
            Formula::Eq(a, b) => Formula::Eq(sub(a), sub(b)),
            Formula::Not(a) => Formula::not(a.substitute(var, value)),
            Formula::And(a, b) => Formula::and(a.substitute(var, value), b.substitute(var, value)),
            Formula::Or(a, b) => Formula::or(a.substitute(var, value), b.substitute(var, value)),
            Formula::Implies(a, b) => {
                Formula::implies(a.substitute(var, value), b.substitute(var, value))
            }
            Formula::Exists(v, _) | Formula::Forall(v, _) if v == var => self.clone(),
            Formula::Exists(v, a) => Formula::exists(v, a.substitute(var, value)),
            Formula::Forall(v, a) => Formula::forall(v, a.substitute(var, value)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Exists(..) | Formula::Forall(..) => 0,
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(..) => 4,
            Formula::Atom { .. } | Formula::Eq(..) => 5,
        }
    }
}

struct Operand<'a> {
    formula: &'a Formula,
    min_prec: u8,
}

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Quantifiers swallow everything to their right, so they are always
        // parenthesized as operands.
        let p = self.formula.precedence();
        if p == 0 || p < self.min_prec {
            write!(f, "({})", self.formula)
        } else {
            write!(f, "{}", self.formula)
        }
    }
}

fn operand(formula: &Formula, min_prec: u8) -> Operand<'_> {
    Operand { formula, min_prec }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom { relation, args } => {
                write!(f, "{relation}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Formula::Eq(a, b) => write!(f, "{a} = {b}"),
            Formula::Not(a) => write!(f, "!{}", operand(a, 4)),
            Formula::And(a, b) => write!(f, "{} & {}", operand(a, 3), operand(b, 4)),
            Formula::Or(a, b) => write!(f, "{} | {}", operand(a, 2), operand(b, 3)),
            Formula::Implies(a, b) => write!(f, "{} -> {}", operand(a, 2), operand(b, 1)),
            Formula::Exists(v, a) => write!(f, "exists {v}. {a}"),
            Formula::Forall(v, a) => write!(f, "forall {v}. {a}"),
        }
    }
}
