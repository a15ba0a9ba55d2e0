//! Evaluation over an infinite universe.
//!
//! An instance is finite but the universe is not, so quantifiers cannot range
//! over all elements. Elements outside `adom(D) ∪ adom(φ)` are
//! indistinguishable to `φ`, and a formula of quantifier rank `r` can tell
//! apart at most `r` of them at once. Quantifiers therefore range over
//! `adom(D) ∪ adom(φ)` plus `r` fresh "generic" elements, which satisfy no
//! atom and equal only themselves.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::{Formula, Term};
use crate::database::{Fact, Instance};
use crate::error::{Error, Result};
use crate::universe::{Universe, Value};

#[derive(Clone, Debug, Default)]
pub(crate) struct Interner {
    values: Vec<Value>,
    ids: HashMap<Value, u32>,
}

impl Interner {
    pub fn intern(&mut self, v: &Value) -> u32 {
        if let Some(id) = self.ids.get(v) {
            return *id;
        }
        let id = self.values.len() as u32;
        self.values.push(v.clone());
        self.ids.insert(v.clone(), id);
        id
    }

    pub fn value(&self, id: u32) -> &Value {
        &self.values[id as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Copy, Debug)]
enum Arg {
    Slot(usize),
    Elem(u32),
}

#[derive(Clone, Debug)]
enum Node {
    Atom { rel: usize, args: Vec<Arg> },
    Eq(Arg, Arg),
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Implies(Box<Node>, Box<Node>),
    Exists(usize, Box<Node>),
    Forall(usize, Box<Node>),
}

/// Relation lookups used by the evaluator. `rel` indexes
/// [`Compiled::relations`].
pub(crate) trait Model {
    fn holds(&self, rel: usize, args: &[u32]) -> bool;
}

/// A formula with variables resolved to environment slots and constants to
/// interned element ids. Free variables occupy the first slots.
#[derive(Clone, Debug)]
pub(crate) struct Compiled {
    root: Node,
    pub relations: Vec<String>,
    pub slots: usize,
}

impl Compiled {
    pub fn new(f: &Formula, free: &[String], interner: &mut Interner) -> Self {
        let mut relations = Vec::new();
        let mut slots = free.len();
        let mut scope: Vec<(String, usize)> = free
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        let root = compile(f, &mut scope, &mut slots, &mut relations, interner);
        Compiled {
            root,
            relations,
            slots,
        }
    }

    pub fn eval(&self, env: &mut [u32], domain: &[u32], model: &impl Model) -> bool {
        eval(&self.root, env, domain, model)
    }
}

fn compile(
    f: &Formula,
    scope: &mut Vec<(String, usize)>,
    slots: &mut usize,
    relations: &mut Vec<String>,
    interner: &mut Interner,
) -> Node {
    let arg = |t: &Term, scope: &Vec<(String, usize)>, interner: &mut Interner| match t {
        Term::Const(c) => Arg::Elem(interner.intern(c)),
        Term::Var(v) => {
            let slot = scope
                .iter()
                .rev()
                .find(|(n, _)| n == v)
                .map(|(_, s)| *s)
                .unwrap_or_else(|| panic!("variable {v} is neither bound nor declared free"));
            Arg::Slot(slot)
        }
    };
    let mut sub = |f: &Formula, scope: &mut Vec<(String, usize)>, interner: &mut Interner| {
        Box::new(compile(f, scope, slots, relations, interner))
    };
    match f {
        Formula::Atom { relation, args } => {
            let args = args.iter().map(|t| arg(t, scope, interner)).collect();
            let rel = match relations.iter().position(|r| r == relation) {
                Some(i) => i,
                None => {
                    relations.push(relation.clone());
                    relations.len() - 1
                }
            };
            Node::Atom { rel, args }
        }
        Formula::Eq(a, b) => Node::Eq(arg(a, scope, interner), arg(b, scope, interner)),
        Formula::Not(a) => Node::Not(sub(a, scope, interner)),
        Formula::And(a, b) => Node::And(sub(a, scope, interner), sub(b, scope, interner)),
        Formula::Or(a, b) => Node::Or(sub(a, scope, interner), sub(b, scope, interner)),
        Formula::Implies(a, b) => Node::Implies(sub(a, scope, interner), sub(b, scope, interner)),
        Formula::Exists(v, a) | Formula::Forall(v, a) => {
            let slot = *slots;
            *slots += 1;
            scope.push((v.clone(), slot));
            let body = Box::new(compile(a, scope, slots, relations, interner));
            scope.pop();
            if matches!(f, Formula::Exists(..)) {
                Node::Exists(slot, body)
            } else {
                Node::Forall(slot, body)
            }
        }
    }
}

fn resolve(a: Arg, env: &[u32]) -> u32 {
    match a {
        Arg::Slot(s) => env[s],
        Arg::Elem(e) => e,
    }
}

fn eval(node: &Node, env: &mut [u32], domain: &[u32], model: &impl Model) -> bool {
    match node {
        Node::Atom { rel, args } => {
            if args.len() <= 8 {
                let mut buf = [0u32; 8];
                for (b, a) in buf.iter_mut().zip(args) {
                    *b = resolve(*a, env);
                }
                model.holds(*rel, &buf[..args.len()])
            } else {
                let buf: Vec<u32> = args.iter().map(|a| resolve(*a, env)).collect();
                model.holds(*rel, &buf)
            }
        }
        Node::Eq(a, b) => resolve(*a, env) == resolve(*b, env),
        Node::Not(a) => !eval(a, env, domain, model),
        Node::And(a, b) => eval(a, env, domain, model) && eval(b, env, domain, model),
        Node::Or(a, b) => eval(a, env, domain, model) || eval(b, env, domain, model),
        Node::Implies(a, b) => !eval(a, env, domain, model) || eval(b, env, domain, model),
        Node::Exists(slot, body) => domain.iter().any(|e| {
            env[*slot] = *e;
            eval(body, env, domain, model)
        }),
        Node::Forall(slot, body) => domain.iter().all(|e| {
            env[*slot] = *e;
            eval(body, env, domain, model)
        }),
    }
}

/// Facts of an instance as interned tuples, per compiled relation.
struct FactSet {
    per_relation: Vec<HashSet<Vec<u32>>>,
}

impl FactSet {
    fn new(d: &Instance, relations: &[String], interner: &mut Interner) -> Self {
        let mut per_relation = vec![HashSet::new(); relations.len()];
        for f in d {
            if let Some(r) = relations.iter().position(|n| n == f.relation()) {
                per_relation[r].insert(f.args().iter().map(|v| interner.intern(v)).collect());
            }
        }
        FactSet { per_relation }
    }
}

impl Model for FactSet {
    fn holds(&self, rel: usize, args: &[u32]) -> bool {
        self.per_relation[rel].contains(args)
    }
}

/// The first `count` universe elements outside `avoid`, in enumeration order.
pub fn generic_elements(u: &Universe, avoid: &BTreeSet<Value>, count: usize) -> Vec<Value> {
    u.fresh_elements(|v| avoid.contains(v), count)
}

/// `D ⊨ φ` for a sentence `φ`.
pub fn eval_boolean(d: &Instance, f: &Formula, u: &Universe) -> Result<bool> {
    eval_boolean_with_pool(d, f, u, f.rank())
}

/// Like [`eval_boolean`] with an explicit number of generic elements. Any
/// pool of at least the quantifier rank gives the same answer.
pub fn eval_boolean_with_pool(
    d: &Instance,
    f: &Formula,
    u: &Universe,
    pool: usize,
) -> Result<bool> {
    let free = f.free_vars();
    if !free.is_empty() {
        return Err(Error::FreeVariables(free));
    }
    let mut known = d.active_domain();
    known.extend(f.constants());
    let generics = generic_elements(u, &known, pool);
    let mut interner = Interner::default();
    for v in known.iter().chain(&generics) {
        interner.intern(v);
    }
    let compiled = Compiled::new(f, &[], &mut interner);
    let model = FactSet::new(d, &compiled.relations, &mut interner);
    let domain: Vec<u32> = (0..interner.len() as u32).collect();
    let mut env = vec![0u32; compiled.slots];
    Ok(compiled.eval(&mut env, &domain, &model))
}

/// The answer `φ(D)` with tuples ordered by first occurrence of the free
/// variables, or [`Error::InfiniteAnswer`].
pub fn eval_query(d: &Instance, f: &Formula, u: &Universe) -> Result<BTreeSet<Vec<Value>>> {
    let free = f.free_vars();
    eval_query_ordered(d, f, &free, u)
}

/// Like [`eval_query`] with an explicit variable order. Every variable in
/// `vars` is an answer column, free in `f` or not.
///
/// Answers lie in `(adom(D) ∪ adom(φ))^k` unless the answer is infinite. The
/// second case is detected exactly: every way of putting generic elements
/// into some columns (up to which columns share one) is probed, and a single
/// satisfying probe means infinitely many answers.
pub fn eval_query_ordered(
    d: &Instance,
    f: &Formula,
    vars: &[String],
    u: &Universe,
) -> Result<BTreeSet<Vec<Value>>> {
    if vars.is_empty() {
        return Err(Error::NoFreeVariables);
    }
    if let Some(v) = f.free_vars().into_iter().find(|v| !vars.contains(v)) {
        return Err(Error::FreeVariables(vec![v]));
    }
    let k = vars.len();
    let mut known = d.active_domain();
    known.extend(f.constants());
    let generics = generic_elements(u, &known, f.rank() + k);
    let mut interner = Interner::default();
    for v in known.iter().chain(&generics) {
        interner.intern(v);
    }
    let compiled = Compiled::new(f, vars, &mut interner);
    let model = FactSet::new(d, &compiled.relations, &mut interner);
    let domain: Vec<u32> = (0..interner.len() as u32).collect();
    let candidates = known.len() as u32;
    let mut env = vec![0u32; compiled.slots];
    let mut answers = BTreeSet::new();

    // Each column is a candidate element or a generic; generic columns are
    // numbered as a restricted growth string so that each equality pattern
    // among them is probed once.
    let mut choice = vec![0u32; k];
    loop {
        let mut next_generic = 0u32;
        let mut canonical = true;
        for (slot, c) in choice.iter().enumerate() {
            if *c < candidates {
                env[slot] = *c;
            } else {
                let g = c - candidates;
                if g > next_generic {
                    canonical = false;
                    break;
                }
                next_generic = next_generic.max(g + 1);
                env[slot] = candidates + g;
            }
        }
        if canonical && compiled.eval(&mut env, &domain, &model) {
            if next_generic > 0 {
                return Err(Error::InfiniteAnswer);
            }
            answers.insert(
                env[..k]
                    .iter()
                    .map(|id| interner.value(*id).clone())
                    .collect(),
            );
        }
        // Advance the odometer over candidates + k generic labels.
        let radix = candidates + k as u32;
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(answers);
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < radix {
                break;
            }
            choice[i] = 0;
        }
    }
}

/// Evaluates one sentence over many worlds drawn from a fixed list of
/// candidate facts. Worlds are bitmasks over the facts the sentence can see,
/// i.e. those of relations it mentions.
pub(crate) struct WorldEvaluator {
    compiled: Compiled,
    /// Indices (into the candidate list) of visible facts; bit `i` of a mask
    /// refers to `visible[i]`.
    visible: Vec<usize>,
    /// Per relation: tuple ↦ bit.
    index: Vec<BitIndex>,
    fact_elements: Vec<Vec<u32>>,
    always: Vec<u32>,
    num_elements: usize,
    slots: usize,
}

/// Mask bit of each visible fact of one relation.
#[derive(Clone, Debug)]
enum BitIndex {
    /// Indexed by the tuple read as a base-`n` number.
    Dense {
        n: usize,
        bits: Vec<u8>,
    },
    Sparse(HashMap<Vec<u32>, u8>),
}

const DENSE_LIMIT: usize = 1 << 20;
const ABSENT: u8 = u8::MAX;

impl BitIndex {
    fn new(arity: usize, num_elements: usize) -> Self {
        match num_elements.checked_pow(arity as u32) {
            Some(size) if size <= DENSE_LIMIT => BitIndex::Dense {
                n: num_elements,
                bits: vec![ABSENT; size],
            },
            _ => BitIndex::Sparse(HashMap::new()),
        }
    }

    fn position(n: usize, args: &[u32]) -> usize {
        args.iter().fold(0, |acc, a| acc * n + *a as usize)
    }

    fn insert(&mut self, args: &[u32], bit: u8) {
        match self {
            BitIndex::Dense { n, bits } => bits[Self::position(*n, args)] = bit,
            BitIndex::Sparse(map) => {
                map.insert(args.to_vec(), bit);
            }
        }
    }

    fn get(&self, args: &[u32]) -> Option<u8> {
        let bit = match self {
            BitIndex::Dense { n, bits } => *bits.get(Self::position(*n, args))?,
            BitIndex::Sparse(map) => *map.get(args)?,
        };
        (bit != ABSENT).then_some(bit)
    }
}

struct MaskModel<'a> {
    index: &'a [BitIndex],
    mask: u64,
}

impl Model for MaskModel<'_> {
    fn holds(&self, rel: usize, args: &[u32]) -> bool {
        self.index[rel]
            .get(args)
            .is_some_and(|bit| self.mask >> bit & 1 == 1)
    }
}

impl WorldEvaluator {
    pub fn new(facts: &[Fact], f: &Formula, u: &Universe) -> Result<Self> {
        let free = f.free_vars();
        if !free.is_empty() {
            return Err(Error::FreeVariables(free));
        }
        let relations = f.relations();
        let visible: Vec<usize> = (0..facts.len())
            .filter(|i| relations.contains(facts[*i].relation()))
            .collect();
        if visible.len() > 63 {
            return Err(Error::TooManyFacts {
                len: visible.len(),
                max: 63,
            });
        }
        let consts = f.constants();
        let mut avoid: BTreeSet<Value> = consts.clone();
        for i in &visible {
            avoid.extend(facts[*i].args().iter().cloned());
        }
        let generics = generic_elements(u, &avoid, f.rank());
        let mut interner = Interner::default();
        let always: Vec<u32> = consts
            .iter()
            .chain(&generics)
            .map(|v| interner.intern(v))
            .collect();
        let compiled = Compiled::new(f, &[], &mut interner);
        let mut located = Vec::with_capacity(visible.len());
        let mut arities = vec![0; compiled.relations.len()];
        for i in &visible {
            let ids: Vec<u32> = facts[*i]
                .args()
                .iter()
                .map(|v| interner.intern(v))
                .collect();
            let rel = compiled
                .relations
                .iter()
                .position(|r| r == facts[*i].relation())
                .expect("visible facts use formula relations");
            arities[rel] = ids.len();
            located.push((rel, ids));
        }
        let mut index: Vec<BitIndex> = arities
            .iter()
            .map(|a| BitIndex::new(*a, interner.len()))
            .collect();
        let mut fact_elements = Vec::with_capacity(visible.len());
        for (bit, (rel, ids)) in located.into_iter().enumerate() {
            index[rel].insert(&ids, bit as u8);
            fact_elements.push(ids);
        }
        Ok(WorldEvaluator {
            slots: compiled.slots,
            compiled,
            visible,
            index,
            fact_elements,
            always,
            num_elements: interner.len(),
        })
    }

    pub fn visible(&self) -> &[usize] {
        &self.visible
    }

    /// Scratch buffers for [`WorldEvaluator::eval_mask`].
    pub fn scratch(&self) -> Scratch {
        Scratch {
            env: vec![0; self.slots],
            marks: vec![false; self.num_elements],
            domain: Vec::with_capacity(self.num_elements),
        }
    }

    pub fn eval_mask(&self, mask: u64, scratch: &mut Scratch) -> bool {
        scratch.domain.clear();
        scratch.marks.iter_mut().for_each(|m| *m = false);
        let push = |e: u32, s: &mut Scratch| {
            if !s.marks[e as usize] {
                s.marks[e as usize] = true;
                s.domain.push(e);
            }
        };
        for e in &self.always {
            push(*e, scratch);
        }
        for (bit, elems) in self.fact_elements.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                for e in elems {
                    push(*e, scratch);
                }
            }
        }
        let model = MaskModel {
            index: &self.index,
            mask,
        };
        self.compiled
            .eval(&mut scratch.env, &scratch.domain, &model)
    }
}

pub(crate) struct Scratch {
    env: Vec<u32>,
    marks: Vec<bool>,
    domain: Vec<u32>,
}
