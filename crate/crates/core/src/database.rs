//! Schemas, facts, instances, and finite discrete PDBs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, UniverseError};
use crate::numerics::{check_probability, CompensatedSum};
use crate::universe::{Universe, Value};

/// Relation symbols with their arities, in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Schema {
    relations: Vec<(String, usize)>,
}

impl Schema {
    pub fn new(
        relations: impl IntoIterator<Item = (String, usize)>,
    ) -> Result<Self, UniverseError> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for (name, arity) in relations {
            if out.iter().any(|(n, _)| *n == name) {
                return Err(UniverseError::DuplicateRelation(name));
            }
            out.push((name, arity));
        }
        Ok(Schema { relations: out })
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, usize)> {
        self.relations.iter().map(|(n, a)| (n.as_str(), *a))
    }

    pub fn relation_at(&self, i: usize) -> Option<(&str, usize)> {
        self.relations.get(i).map(|(n, a)| (n.as_str(), *a))
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|(n, _)| n == name)
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.position(name).map(|i| self.relations[i].1)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Checks relation and arity; returns the relation's position.
    pub fn check_fact(&self, f: &Fact) -> Result<usize, UniverseError> {
        let pos = self
            .position(f.relation())
            .ok_or_else(|| UniverseError::UnknownRelation(f.relation().to_string()))?;
        let expected = self.relations[pos].1;
        if f.arity() != expected {
            return Err(UniverseError::ArityMismatch {
                relation: f.relation().to_string(),
                expected,
                found: f.arity(),
            });
        }
        Ok(pos)
    }

    /// Restriction to the named relations, keeping declaration order.
    pub fn restrict(&self, names: &[String]) -> Result<Schema, UniverseError> {
        for n in names {
            if self.position(n).is_none() {
                return Err(UniverseError::UnknownRelation(n.clone()));
            }
        }
        Ok(Schema {
            relations: self
                .relations
                .iter()
                .filter(|(n, _)| names.contains(n))
                .cloned()
                .collect(),
        })
    }
}

/// A ground atom `R(a_1, ..., a_k)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    relation: String,
    args: Vec<Value>,
}

impl Fact {
    pub fn new(relation: impl Into<String>, args: Vec<Value>) -> Self {
        Fact {
            relation: relation.into(),
            args,
        }
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn args(&self) -> &[Value] {
        &self.args
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Checks the fact against a schema and universe.
    pub fn check(&self, schema: &Schema, universe: &Universe) -> Result<(), UniverseError> {
        schema.check_fact(self)?;
        match self.args.iter().find(|v| !universe.contains(v)) {
            Some(v) => Err(UniverseError::NotInUniverse(v.clone())),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Shorthand for building facts in tests and examples:
/// `fact!("R", "A", 1)` is `R('A', 1)`.
#[macro_export]
macro_rules! fact {
    ($rel:expr $(, $arg:expr)* $(,)?) => {
        $crate::database::Fact::new($rel, vec![$($crate::universe::Value::from($arg)),*])
    };
}

/// A finite set of facts. Ordering is structural, so equal sets compare and
/// hash equal.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance(BTreeSet<Fact>);

impl Instance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, f: Fact) -> bool {
        self.0.insert(f)
    }

    pub fn contains(&self, f: &Fact) -> bool {
        self.0.contains(f)
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> + '_ {
        self.0.iter()
    }

    /// `‖D‖`, the number of facts.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &Instance) -> bool {
        self.0.is_subset(&other.0)
    }

    /// Every universe element occurring in some fact.
    pub fn active_domain(&self) -> BTreeSet<Value> {
        self.0.iter().flat_map(|f| f.args.iter().cloned()).collect()
    }

    /// Splits into the facts satisfying `pred` and the rest.
    pub fn partition(&self, mut pred: impl FnMut(&Fact) -> bool) -> (Instance, Instance) {
        let (a, b): (BTreeSet<Fact>, BTreeSet<Fact>) =
            self.0.iter().cloned().partition(|f| pred(f));
        (Instance(a), Instance(b))
    }

    pub fn union(&self, other: &Instance) -> Instance {
        Instance(self.0.union(&other.0).cloned().collect())
    }
}

impl FromIterator<Fact> for Instance {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        Instance(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Instance {
    type Item = &'a Fact;
    type IntoIter = std::collections::btree_set::Iter<'a, Fact>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, fact) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{fact}")?;
        }
        f.write_str("}")
    }
}

/// Tolerated deviation of the total probability from 1 before renormalizing.
pub const SUM_TOLERANCE: f64 = 1e-12;
/// Deviations beyond this are logged when renormalizing.
pub const SUM_WARN_THRESHOLD: f64 = 1e-9;
/// Deviations beyond this are rejected.
pub const SUM_REJECT_THRESHOLD: f64 = 1e-6;

/// A PDB with finitely many instances, each with an explicit probability.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDiscretePdb {
    schema: Schema,
    universe: Universe,
    worlds: BTreeMap<Instance, f64>,
}

impl FiniteDiscretePdb {
    pub fn new(
        schema: Schema,
        universe: Universe,
        worlds: impl IntoIterator<Item = (Instance, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (inst, p) in worlds {
            check_probability(p)?;
            for f in &inst {
                f.check(&schema, &universe)?;
            }
            if map.contains_key(&inst) {
                return Err(Error::DuplicateWorld(inst));
            }
            map.insert(inst, p);
        }
        let total = map.values().copied().collect::<CompensatedSum>().value();
        let deviation = (total - 1.0).abs();
        if deviation > SUM_REJECT_THRESHOLD {
            return Err(Error::ProbabilitySum(total));
        }
        if deviation > SUM_TOLERANCE {
            if deviation > SUM_WARN_THRESHOLD {
                log::warn!("world probabilities sum to {total}; renormalizing");
            }
            for p in map.values_mut() {
                *p /= total;
            }
        }
        Ok(FiniteDiscretePdb {
            schema,
            universe,
            worlds: map,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn worlds(&self) -> impl Iterator<Item = (&Instance, f64)> + '_ {
        self.worlds.iter().map(|(d, p)| (d, *p))
    }

    pub fn num_worlds(&self) -> usize {
        self.worlds.len()
    }

    /// `P({D})`; zero for instances outside the sample space.
    pub fn prob(&self, d: &Instance) -> f64 {
        self.worlds.get(d).copied().unwrap_or(0.0)
    }

    pub fn in_sample_space(&self, d: &Instance) -> bool {
        self.worlds.contains_key(d)
    }

    /// Draws an instance by inverting the cumulative distribution over the
    /// worlds in their canonical order.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Instance {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = None;
        for (d, p) in self.worlds() {
            if p > 0.0 {
                chosen = Some(d);
                acc += p;
                if u < acc {
                    break;
                }
            }
        }
        chosen.cloned().unwrap_or_default()
    }

    /// `F(D)`: every fact appearing in some instance of the sample space.
    pub fn facts(&self) -> BTreeSet<Fact> {
        self.worlds
            .keys()
            .flat_map(|d| d.facts().cloned())
            .collect()
    }

    /// `E(S_D) = Σ_D P(D)·‖D‖`.
    pub fn expected_size(&self) -> f64 {
        self.worlds
            .iter()
            .map(|(d, p)| p * d.len() as f64)
            .collect::<CompensatedSum>()
            .value()
    }

    /// `P(E_f)`.
    pub fn marginal(&self, f: &Fact) -> f64 {
        self.worlds
            .iter()
            .filter(|(d, _)| d.contains(f))
            .map(|(_, p)| *p)
            .collect::<CompensatedSum>()
            .value()
    }

    /// Facts with positive marginal probability.
    pub fn positive_facts(&self) -> BTreeSet<Fact> {
        self.worlds
            .iter()
            .filter(|(_, p)| **p > 0.0)
            .flat_map(|(d, _)| d.facts().cloned())
            .collect()
    }

    /// `Pr(S_D ≥ n)`.
    pub fn size_tail(&self, n: usize) -> f64 {
        self.worlds
            .iter()
            .filter(|(d, _)| d.len() >= n)
            .map(|(_, p)| *p)
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn max_size(&self) -> usize {
        self.worlds.keys().map(Instance::len).max().unwrap_or(0)
    }
}
