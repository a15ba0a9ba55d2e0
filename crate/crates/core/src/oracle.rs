//! Brute-force and Monte Carlo ground truth.
//!
//! Nothing here goes through the engine's probability code: world weights are
//! plain products in the linear domain, multiplied last fact first, and query
//! probabilities come either from per-world evaluation or from a lineage BDD.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::database::{Fact, Instance};
use crate::error::{Error, Result};
use crate::fo::{eval_boolean, Formula, Term};
use crate::independence::TiPdb;
use crate::numerics::ProbabilityInterval;
use crate::universe::{Universe, Value};

/// Largest fact list [`enumerate_worlds`] accepts.
pub const MAX_ORACLE_FACTS: usize = 20;

/// All `2^n` worlds over independent facts with their probabilities.
pub fn enumerate_worlds(facts: &[(Fact, f64)]) -> Result<BTreeMap<Instance, f64>> {
    if facts.len() > MAX_ORACLE_FACTS {
        return Err(Error::TooManyFacts {
            len: facts.len(),
            max: MAX_ORACLE_FACTS,
        });
    }
    let mut out = BTreeMap::new();
    for mask in 0u32..1 << facts.len() {
        let mut w = 1.0;
        let mut d = Instance::new();
        for (i, (f, p)) in facts.iter().enumerate().rev() {
            if mask >> i & 1 == 1 {
                w *= p;
                d.insert(f.clone());
            } else {
                w *= 1.0 - p;
            }
        }
        *out.entry(d).or_insert(0.0) += w;
    }
    Ok(out)
}

/// `Σ P(D)` over worlds satisfying `pred`.
pub fn exact_event_prob(
    worlds: &BTreeMap<Instance, f64>,
    mut pred: impl FnMut(&Instance) -> bool,
) -> f64 {
    worlds.iter().filter(|(d, _)| pred(d)).map(|(_, p)| p).sum()
}

/// Probability that independent `facts` satisfy the sentence `f`, by
/// evaluating it on every world.
pub fn query_prob(facts: &[(Fact, f64)], f: &Formula, u: &Universe) -> Result<f64> {
    let worlds = enumerate_worlds(facts)?;
    let mut total = 0.0;
    for (d, p) in &worlds {
        if eval_boolean(d, f, u)? {
            total += p;
        }
    }
    Ok(total)
}

/// Frequency of `pred` over `n` draws of `sampler` and its 3σ half-width
/// `3·sqrt(p̂(1 - p̂)/n)`. Deterministic given `seed`.
pub fn monte_carlo(
    mut sampler: impl FnMut(&mut ChaCha8Rng) -> Instance,
    mut pred: impl FnMut(&Instance) -> bool,
    n: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(n >= 1, "monte_carlo needs at least one draw");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..n).filter(|_| pred(&sampler(&mut rng))).count();
    let p = hits as f64 / n as f64;
    (p, 3.0 * (p * (1.0 - p) / n as f64).sqrt())
}

/// Probability that independent `facts` satisfy the sentence `f`, by weighted
/// model counting on the BDD of its lineage.
///
/// The lineage is the ground formula over `adom(facts) ∪ adom(φ)` plus as many
/// fresh elements as the quantifier rank; every world's own domain embeds in
/// it with enough spare elements, so the answer is exact.
pub fn lineage_prob(facts: &[(Fact, f64)], f: &Formula, u: &Universe) -> Result<f64> {
    let free = f.free_vars();
    if !free.is_empty() {
        return Err(Error::FreeVariables(free));
    }
    let mut known: BTreeSet<Value> = f.constants();
    for (fact, _) in facts {
        known.extend(fact.args().iter().cloned());
    }
    let mut domain: Vec<Value> = known.iter().cloned().collect();
    domain.extend(u.fresh_elements(|v| known.contains(v), f.rank()));
    let vars: HashMap<&Fact, u32> = facts
        .iter()
        .enumerate()
        .map(|(i, (f, _))| (f, i as u32))
        .collect();
    let mut bdd = Bdd::default();
    let mut env = Vec::new();
    let root = ground(f, &mut env, &domain, &vars, &mut bdd);
    let probs: Vec<f64> = facts.iter().map(|(_, p)| *p).collect();
    Ok(bdd.weight(root, &probs))
}

/// Enclosure of `P(Q)` from the first `n` facts of `t`:
/// `P(Q) ∈ [p·L, 1 - L·(1 - p)]` with `p = P(Q | Ω_n)` from the lineage and
/// `L = exp(-1.5 · Σ_{i > n} p_i) ≤ P(Ω_n)`.
pub fn truncation_reference(t: &TiPdb, f: &Formula, n: usize) -> Result<ProbabilityInterval> {
    let prefix = t.fact_prefix(n);
    let head = t.head();
    let mut rest: f64 = head.iter().skip(n).map(|(_, p)| p).sum();
    let mut max_rest = head.iter().skip(n).map(|(_, p)| *p).fold(0.0, f64::max);
    let tail_facts = prefix.len().saturating_sub(head.len());
    let cut = t.tail_cut(tail_facts);
    rest += cut.mass_after;
    max_rest = max_rest.max(cut.max_prob_after);
    if max_rest > 0.5 {
        return Err(Error::UncertifiableTail(format!(
            "a fact beyond the first {n} has probability {max_rest} > 1/2"
        )));
    }
    let p = lineage_prob(&prefix, f, t.universe())?;
    let l = (-1.5 * rest).exp();
    Ok(ProbabilityInterval::new(
        (p * l).min(1.0),
        (1.0 - l * (1.0 - p)).clamp(p * l, 1.0),
    )?)
}

fn ground(
    f: &Formula,
    env: &mut Vec<(String, Value)>,
    domain: &[Value],
    vars: &HashMap<&Fact, u32>,
    bdd: &mut Bdd,
) -> u32 {
    let value = |t: &Term, env: &Vec<(String, Value)>| match t {
        Term::Const(c) => c.clone(),
        Term::Var(v) => env
            .iter()
            .rev()
            .find(|(n, _)| n == v)
            .expect("sentence")
            .1
            .clone(),
    };
    match f {
        Formula::Atom { relation, args } => {
            let fact = Fact::new(
                relation.clone(),
                args.iter().map(|t| value(t, env)).collect(),
            );
            match vars.get(&fact) {
                Some(v) => bdd.var(*v),
                None => FALSE,
            }
        }
        Formula::Eq(a, b) => {
            if value(a, env) == value(b, env) {
                TRUE
            } else {
                FALSE
            }
        }
        Formula::Not(a) => {
            let a = ground(a, env, domain, vars, bdd);
            bdd.not(a)
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let mut x = ground(a, env, domain, vars, bdd);
            let y = ground(b, env, domain, vars, bdd);
            match f {
                Formula::And(..) => bdd.apply(Op::And, x, y),
                Formula::Or(..) => bdd.apply(Op::Or, x, y),
                _ => {
                    x = bdd.not(x);
                    bdd.apply(Op::Or, x, y)
                }
            }
        }
        Formula::Exists(v, a) | Formula::Forall(v, a) => {
            let (op, mut acc) = if matches!(f, Formula::Exists(..)) {
                (Op::Or, FALSE)
            } else {
                (Op::And, TRUE)
            };
            for e in domain {
                env.push((v.clone(), e.clone()));
                let g = ground(a, env, domain, vars, bdd);
                env.pop();
                acc = bdd.apply(op, acc, g);
            }
            acc
        }
    }
}

const FALSE: u32 = 0;
const TRUE: u32 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    And,
    Or,
}

/// Reduced ordered BDD; variable order is fact order.
struct Bdd {
    nodes: Vec<(u32, u32, u32)>,
    unique: HashMap<(u32, u32, u32), u32>,
    memo: HashMap<(Op, u32, u32), u32>,
    negated: HashMap<u32, u32>,
}

impl Default for Bdd {
    fn default() -> Self {
        Bdd {
            nodes: vec![(u32::MAX, 0, 0), (u32::MAX, 1, 1)],
            unique: HashMap::new(),
            memo: HashMap::new(),
            negated: HashMap::new(),
        }
    }
}

impl Bdd {
    fn mk(&mut self, var: u32, lo: u32, hi: u32) -> u32 {
        if lo == hi {
            return lo;
        }
        if let Some(n) = self.unique.get(&(var, lo, hi)) {
            return *n;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push((var, lo, hi));
        self.unique.insert((var, lo, hi), id);
        id
    }

    fn var(&mut self, v: u32) -> u32 {
        self.mk(v, FALSE, TRUE)
    }

    fn not(&mut self, a: u32) -> u32 {
        match a {
            FALSE => TRUE,
            TRUE => FALSE,
            _ => {
                if let Some(n) = self.negated.get(&a) {
                    return *n;
                }
                let (v, lo, hi) = self.nodes[a as usize];
                let (lo, hi) = (self.not(lo), self.not(hi));
                let n = self.mk(v, lo, hi);
                self.negated.insert(a, n);
                n
            }
        }
    }

    fn apply(&mut self, op: Op, a: u32, b: u32) -> u32 {
        match (op, a, b) {
            (Op::And, FALSE, _) | (Op::And, _, FALSE) => return FALSE,
            (Op::And, TRUE, x) | (Op::And, x, TRUE) => return x,
            (Op::Or, TRUE, _) | (Op::Or, _, TRUE) => return TRUE,
            (Op::Or, FALSE, x) | (Op::Or, x, FALSE) => return x,
            _ => {}
        }
        if a == b {
            return a;
        }
        let key = (op, a.min(b), a.max(b));
        if let Some(n) = self.memo.get(&key) {
            return *n;
        }
        let (va, la, ha) = self.nodes[a as usize];
        let (vb, lb, hb) = self.nodes[b as usize];
        let v = va.min(vb);
        let (la, ha) = if va == v { (la, ha) } else { (a, a) };
        let (lb, hb) = if vb == v { (lb, hb) } else { (b, b) };
        let lo = self.apply(op, la, lb);
        let hi = self.apply(op, ha, hb);
        let n = self.mk(v, lo, hi);
        self.memo.insert(key, n);
        n
    }

    fn weight(&self, root: u32, probs: &[f64]) -> f64 {
        let mut memo: HashMap<u32, f64> = HashMap::new();
        fn go(bdd: &Bdd, n: u32, probs: &[f64], memo: &mut HashMap<u32, f64>) -> f64 {
            match n {
                FALSE => 0.0,
                TRUE => 1.0,
                _ => {
                    if let Some(w) = memo.get(&n) {
                        return *w;
                    }
                    let (v, lo, hi) = bdd.nodes[n as usize];
                    let p = probs[v as usize];
                    let w = p * go(bdd, hi, probs, memo) + (1.0 - p) * go(bdd, lo, probs, memo);
                    memo.insert(n, w);
                    w
                }
            }
        }
        go(self, root, probs, &mut memo)
    }
}
