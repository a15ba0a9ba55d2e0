use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;

use super::{
    check_assignment, check_delta, enclose, split_instance, tail_terms, Column,
    FactProbabilityAssignment, TailGenerator, TailSource,
};
use crate::database::{Fact, Instance, Schema};
use crate::error::{Error, Result};
use crate::numerics::{CompensatedSum, ProbabilityInterval};
use crate::universe::{Universe, Value};

/// Masses may exceed 1 by this much before a block is rejected.
const BLOCK_MASS_SLACK: f64 = 1e-12;

/// How facts are grouped into blocks of mutually exclusive alternatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockPartition {
    /// Every fact is its own block; the BID PDB is tuple-independent.
    Singletons,
    /// Facts of `relation` sharing their first `key_len` arguments form a
    /// block (a key constraint). Other facts are singletons.
    KeyProjection { relation: String, key_len: usize },
    /// Explicitly listed blocks; unlisted facts are singletons.
    Listed { blocks: Vec<Vec<Fact>> },
}

/// Identifies the block a fact belongs to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockKey {
    Key { relation: String, key: Vec<Value> },
    Listed(usize),
    Singleton(Fact),
}

impl BlockPartition {
    pub fn block_key(&self, f: &Fact) -> BlockKey {
        match self {
            BlockPartition::KeyProjection { relation, key_len } if f.relation() == relation => {
                BlockKey::Key {
                    relation: relation.clone(),
                    key: f.args()[..(*key_len).min(f.arity())].to_vec(),
                }
            }
            BlockPartition::Listed { blocks } => match blocks.iter().position(|b| b.contains(f)) {
                Some(i) => BlockKey::Listed(i),
                None => BlockKey::Singleton(f.clone()),
            },
            _ => BlockKey::Singleton(f.clone()),
        }
    }

    fn validate(&self, schema: &Schema) -> Result<()> {
        match self {
            BlockPartition::Singletons => Ok(()),
            BlockPartition::KeyProjection { relation, key_len } => {
                let arity = schema.arity(relation).ok_or_else(|| {
                    crate::error::UniverseError::UnknownRelation(relation.clone())
                })?;
                if *key_len > arity {
                    return Err(Error::InvalidSpec(format!(
                        "key length {key_len} exceeds the arity {arity} of {relation}"
                    )));
                }
                Ok(())
            }
            BlockPartition::Listed { blocks } => {
                let mut seen = HashSet::new();
                for f in blocks.iter().flatten() {
                    if !seen.insert(f) {
                        return Err(Error::InvalidSpec(format!("{f} is listed in two blocks")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Checks that every tail fact forms a block of its own.
    fn check_tail(&self, tail: &TailGenerator, head: &[(Fact, f64)]) -> Result<()> {
        let unsupported = |why: String| Err(Error::UnsupportedTailBlock(why));
        match self {
            BlockPartition::Singletons => Ok(()),
            BlockPartition::Listed { blocks } => {
                match blocks.iter().flatten().find(|f| tail.covers(f)) {
                    Some(f) => unsupported(format!("tail fact {f} belongs to a listed block")),
                    None => Ok(()),
                }
            }
            BlockPartition::KeyProjection { relation, key_len } => {
                let produces_relation = match &tail.tail().source {
                    TailSource::Enumeration { relations } => {
                        relations.as_ref().is_none_or(|rs| rs.contains(relation))
                    }
                    TailSource::Family { relation: r, .. } => r == relation,
                };
                if !produces_relation {
                    return Ok(());
                }
                // A key shorter than the arity must still pin the fact down,
                // otherwise infinitely many tail facts share a block.
                let injective = match &tail.tail().source {
                    TailSource::Enumeration { .. } => tail.fact_at(1)?.arity() <= *key_len,
                    TailSource::Family { columns, .. } => {
                        columns.iter().enumerate().all(|(i, c)| {
                            i < *key_len || matches!(c, Column::Fixed(vals) if vals.len() == 1)
                        }) && columns
                            .iter()
                            .position(|c| *c == Column::Ranging)
                            .is_some_and(|i| i < *key_len)
                    }
                };
                if !injective {
                    return unsupported(format!(
                        "tail facts of {relation} would share blocks under a key of length {key_len}"
                    ));
                }
                for (f, _) in head.iter().filter(|(f, _)| f.relation() == relation) {
                    if let Some(g) = key_completion(tail, f, *key_len) {
                        if tail.covers(&g) {
                            return unsupported(format!("tail fact {g} shares the block of {f}"));
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

/// The only tail fact that can share `f`'s key, if the source pins it down.
fn key_completion(tail: &TailGenerator, f: &Fact, key_len: usize) -> Option<Fact> {
    match &tail.tail().source {
        TailSource::Enumeration { .. } => Some(f.clone()),
        TailSource::Family { columns, .. } => {
            let mut args = f.args()[..key_len].to_vec();
            for c in &columns[key_len..] {
                match c {
                    Column::Fixed(vals) => args.push(vals[0].clone()),
                    Column::Ranging => return None,
                }
            }
            Some(Fact::new(f.relation(), args))
        }
    }
}

/// True iff no two facts of `d` share a block.
pub fn is_good(partition: &BlockPartition, d: &Instance) -> bool {
    let mut keys = HashSet::new();
    d.facts().all(|f| keys.insert(partition.block_key(f)))
}

#[derive(Clone, Debug)]
struct Block {
    facts: Vec<(Fact, f64)>,
    mass: f64,
}

/// A block-independent-disjoint PDB: facts within a block exclude each other,
/// blocks are independent. A good instance has probability
/// `∏_B p^B_{β(B, D)}`, where `β(B, D)` is the fact `D` takes from `B` or the
/// remainder `p_⊥^B = 1 - Σ_{f ∈ B} p_f` when it takes none.
///
/// Head facts may share blocks. Tail facts must each form a block of their
/// own, which [`BidPdb::new`] verifies structurally.
#[derive(Clone, Debug)]
pub struct BidPdb {
    schema: Schema,
    universe: Universe,
    partition: BlockPartition,
    assignment: FactProbabilityAssignment,
    blocks: BTreeMap<BlockKey, Block>,
    /// Fact ↦ (block key, probability).
    head_index: HashMap<Fact, (BlockKey, f64)>,
    tail: Option<TailGenerator>,
    total_mass: f64,
}

impl BidPdb {
    pub fn new(
        schema: Schema,
        universe: Universe,
        partition: BlockPartition,
        assignment: FactProbabilityAssignment,
    ) -> Result<Self> {
        partition.validate(&schema)?;
        let checked = check_assignment(&schema, &universe, &assignment)?;
        let mut blocks: BTreeMap<BlockKey, Block> = BTreeMap::new();
        let mut head_index = HashMap::new();
        for (f, p) in &checked.head {
            let key = partition.block_key(f);
            head_index.insert(f.clone(), (key.clone(), *p));
            blocks
                .entry(key)
                .or_insert_with(|| Block {
                    facts: Vec::new(),
                    mass: 0.0,
                })
                .facts
                .push((f.clone(), *p));
        }
        let mut total = CompensatedSum::new();
        for block in blocks.values_mut() {
            block.mass = block
                .facts
                .iter()
                .map(|(_, p)| *p)
                .collect::<CompensatedSum>()
                .value();
            if block.mass > 1.0 + BLOCK_MASS_SLACK {
                return Err(Error::BlockMassExceedsOne {
                    block: block.facts[0].0.clone(),
                    mass: block.mass,
                });
            }
            block.mass = block.mass.min(1.0);
            total.add(block.mass);
        }
        if let Some(t) = &checked.tail {
            partition.check_tail(t, &checked.head)?;
            total.add(t.total_mass());
        }
        Ok(BidPdb {
            schema,
            universe,
            partition,
            assignment,
            blocks,
            head_index,
            tail: checked.tail,
            total_mass: total.value(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn assignment(&self) -> &FactProbabilityAssignment {
        &self.assignment
    }

    pub fn tail(&self) -> Option<&TailGenerator> {
        self.tail.as_ref()
    }

    /// `Σ_B m_B`, also the expected instance size.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn num_head_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `p_⊥^B` of the block containing `f`; 1 for facts outside `F_ω`.
    pub fn remainder_of(&self, f: &Fact) -> f64 {
        match self.head_index.get(f) {
            Some((key, _)) => 1.0 - self.blocks[key].mass,
            None => 1.0 - self.tail.as_ref().and_then(|t| t.prob_of(f)).unwrap_or(0.0),
        }
    }

    pub fn prob_of(&self, f: &Fact) -> f64 {
        match self.head_index.get(f) {
            Some((_, p)) => *p,
            None => self.tail.as_ref().and_then(|t| t.prob_of(f)).unwrap_or(0.0),
        }
    }

    /// `P({d})`; zero for bad instances.
    pub fn instance_prob(&self, d: &Instance) -> ProbabilityInterval {
        if !is_good(&self.partition, d) {
            return ProbabilityInterval::ZERO;
        }
        let (head_in, tail_in, impossible) =
            split_instance(d, |f| self.head_index.contains_key(f), self.tail.as_ref());
        if impossible {
            return ProbabilityInterval::ZERO;
        }
        let touched: HashMap<&BlockKey, f64> = head_in
            .iter()
            .map(|f| {
                let (key, p) = &self.head_index[*f];
                (key, *p)
            })
            .collect();
        let mut terms: Vec<f64> = self
            .blocks
            .iter()
            .map(|(key, block)| match touched.get(key) {
                Some(p) => p.ln(),
                None => (-block.mass).ln_1p(),
            })
            .collect();
        let rest = match &self.tail {
            Some(t) => {
                let (tail_terms, rest) = tail_terms(t, &tail_in);
                terms.extend(tail_terms);
                rest
            }
            None => 0.0,
        };
        enclose(terms, rest)
    }

    /// Draws an instance: one categorical draw per head block, coin flips for
    /// the tail up to where its remaining mass drops to `delta`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, delta: f64) -> Result<Instance> {
        check_delta(delta)?;
        let mut d = Instance::new();
        for block in self.blocks.values() {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (f, p) in &block.facts {
                acc += p;
                if u < acc {
                    d.insert(f.clone());
                    break;
                }
            }
        }
        if let Some(t) = &self.tail {
            if t.mass_after(0) > delta {
                for (pos, f, p) in t.iter_after(0) {
                    if rng.gen_bool(p) {
                        d.insert(f);
                    }
                    if t.mass_after(pos) <= delta {
                        break;
                    }
                }
            }
        }
        Ok(d)
    }
}
