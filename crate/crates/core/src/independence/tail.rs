use std::collections::BTreeSet;
use std::fmt;

use crate::database::{Fact, Schema};
use crate::error::{Error, Result};
use crate::universe::{FactEnumeration, Universe, Value};

/// Probability of the tail facts at a given level `L ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailRule {
    /// `c · q^L`.
    Geometric { c: f64, q: f64 },
    /// `c` at every level; diverges unless `c = 0`.
    Constant { c: f64 },
}

impl TailRule {
    pub fn prob(&self, level: u64) -> f64 {
        match *self {
            TailRule::Geometric { c, q } => c * powu(q, level),
            TailRule::Constant { c } => c,
        }
    }

    /// `Σ_{L ≥ level} prob(L)`, possibly infinite.
    pub fn sum_from(&self, level: u64) -> f64 {
        match *self {
            TailRule::Geometric { c, .. } | TailRule::Constant { c } if c == 0.0 => 0.0,
            TailRule::Geometric { c, q } if q < 1.0 => c * powu(q, level) / (1.0 - q),
            _ => f64::INFINITY,
        }
    }

    pub fn is_summable(&self) -> bool {
        self.sum_from(1).is_finite()
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TailRule::Geometric { c, q } => {
                c >= 0.0 && q > 0.0 && q.is_finite() && (q >= 1.0 || c * q <= 1.0)
            }
            TailRule::Constant { c } => (0.0..=1.0).contains(&c),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTailRule(format!(
                "{self} yields values outside [0, 1]"
            )))
        }
    }
}

impl fmt::Display for TailRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailRule::Geometric { c, q } => write!(f, "{c}·{q}^i"),
            TailRule::Constant { c } => write!(f, "constant {c}"),
        }
    }
}

fn powu(q: f64, n: u64) -> f64 {
    if n <= i32::MAX as u64 {
        q.powi(n as i32)
    } else {
        q.powf(n as f64)
    }
}

fn ranging_value(universe: &Universe, level: u64) -> Result<Value> {
    match universe {
        Universe::Strings { .. } => Ok(universe.element_at(level)?),
        _ => Ok(Value::Nat(level)),
    }
}

fn ranging_level(universe: &Universe, v: &Value) -> Option<u64> {
    match (universe, v) {
        (Universe::Strings { .. }, _) => universe.index_of(v).ok(),
        (_, Value::Nat(n)) if *n >= 1 => Some(*n),
        _ => None,
    }
}

/// One argument position of a [`TailSource::Family`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Column {
    /// Ranges over a finite list of values.
    Fixed(Vec<Value>),
    /// Ranges over an infinite part of the universe: the natural `L` sits at
    /// level `L` when the universe has naturals, else the `L`-th string.
    Ranging,
}

/// Which facts the tail covers, and in which order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TailSource {
    /// The canonical fact enumeration, optionally restricted to some
    /// relations. The fact at position `i` has level `i`.
    Enumeration { relations: Option<Vec<String>> },
    /// Facts of one relation where exactly one column ranges over the
    /// universe and the others over finite lists. Each level holds one fact
    /// per combination of the fixed columns.
    Family {
        relation: String,
        columns: Vec<Column>,
    },
}

/// An infinite tail: a fact source, a probability rule per level, and a
/// finite set of excluded facts.
#[derive(Clone, Debug, PartialEq)]
pub struct Tail {
    pub source: TailSource,
    pub rule: TailRule,
    pub exclude: BTreeSet<Fact>,
}

impl Tail {
    pub fn new(source: TailSource, rule: TailRule) -> Self {
        Tail {
            source,
            rule,
            exclude: BTreeSet::new(),
        }
    }

    pub fn excluding(mut self, facts: impl IntoIterator<Item = Fact>) -> Self {
        self.exclude.extend(facts);
        self
    }
}

#[derive(Clone, Debug)]
enum Positions {
    Enumeration(FactEnumeration),
    Family {
        relation: String,
        arity: usize,
        ranging: usize,
        /// Fixed columns as (column index, values).
        fixed: Vec<(usize, Vec<Value>)>,
        universe: Universe,
    },
}

/// A [`Tail`] resolved against a schema and universe.
///
/// Positions count facts of the source from 1, excluded facts included;
/// levels group positions (one position per level for enumeration sources).
#[derive(Clone, Debug)]
pub struct TailGenerator {
    tail: Tail,
    positions: Positions,
    per_level: u64,
    /// Positions and probabilities of excluded facts, ascending.
    excluded: Vec<(u64, f64)>,
}

impl TailGenerator {
    pub fn new(schema: &Schema, universe: &Universe, tail: &Tail) -> Result<Self> {
        tail.rule.validate()?;
        let (positions, per_level) = match &tail.source {
            TailSource::Enumeration { relations } => {
                let schema = match relations {
                    Some(names) => schema.restrict(names)?,
                    None => schema.clone(),
                };
                if schema.is_empty() {
                    return Err(Error::InvalidTailRule(
                        "enumeration over no relations".into(),
                    ));
                }
                (
                    Positions::Enumeration(FactEnumeration::new(schema, universe.clone())?),
                    1,
                )
            }
            TailSource::Family { relation, columns } => {
                let arity = schema.arity(relation).ok_or_else(|| {
                    crate::error::UniverseError::UnknownRelation(relation.clone())
                })?;
                if columns.len() != arity {
                    return Err(crate::error::UniverseError::ArityMismatch {
                        relation: relation.clone(),
                        expected: arity,
                        found: columns.len(),
                    }
                    .into());
                }
                let ranging: Vec<usize> = (0..arity)
                    .filter(|i| columns[*i] == Column::Ranging)
                    .collect();
                let [ranging] = ranging[..] else {
                    return Err(Error::InvalidTailRule(format!(
                        "family over {relation} needs exactly one ranging column"
                    )));
                };
                let mut fixed = Vec::new();
                let mut per_level = 1u64;
                for (i, col) in columns.iter().enumerate() {
                    if let Column::Fixed(vals) = col {
                        let set: BTreeSet<&Value> = vals.iter().collect();
                        if vals.is_empty() || set.len() != vals.len() {
                            return Err(Error::InvalidTailRule(format!(
                                "column {i} of {relation} must list distinct values"
                            )));
                        }
                        if let Some(v) = vals.iter().find(|v| !universe.contains(v)) {
                            return Err(
                                crate::error::UniverseError::NotInUniverse(v.clone()).into()
                            );
                        }
                        per_level = per_level
                            .checked_mul(vals.len() as u64)
                            .ok_or(crate::error::UniverseError::Overflow)?;
                        fixed.push((i, vals.clone()));
                    }
                }
                (
                    Positions::Family {
                        relation: relation.clone(),
                        arity,
                        ranging,
                        fixed,
                        universe: universe.clone(),
                    },
                    per_level,
                )
            }
        };
        let mut gen = TailGenerator {
            tail: tail.clone(),
            positions,
            per_level,
            excluded: Vec::new(),
        };
        let mut excluded = Vec::new();
        for f in &tail.exclude {
            let pos = gen.position_of(f).ok_or_else(|| {
                Error::InvalidTailRule(format!("excluded fact {f} is not produced by the tail"))
            })?;
            excluded.push((pos, gen.prob_at(pos)));
        }
        excluded.sort_by_key(|(p, _)| *p);
        gen.excluded = excluded;
        Ok(gen)
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn rule(&self) -> TailRule {
        self.tail.rule
    }

    /// Number of facts per level.
    pub fn per_level(&self) -> u64 {
        self.per_level
    }

    pub fn level_of(&self, pos: u64) -> u64 {
        (pos - 1) / self.per_level + 1
    }

    /// Probability of the fact at `pos`, ignoring exclusion.
    pub fn prob_at(&self, pos: u64) -> f64 {
        self.tail.rule.prob(self.level_of(pos))
    }

    pub fn is_summable(&self) -> bool {
        self.tail.rule.is_summable()
    }

    pub fn is_excluded_position(&self, pos: u64) -> bool {
        self.excluded
            .binary_search_by_key(&pos, |(p, _)| *p)
            .is_ok()
    }

    /// The fact at `pos`, ignoring exclusion.
    pub fn fact_at(&self, pos: u64) -> Result<Fact> {
        match &self.positions {
            Positions::Enumeration(e) => Ok(e.fact_at(pos)?),
            Positions::Family {
                relation,
                arity,
                ranging,
                fixed,
                universe,
            } => {
                let level = self.level_of(pos);
                let mut offset = (pos - 1) % self.per_level;
                let mut args = vec![Value::Nat(0); *arity];
                args[*ranging] = ranging_value(universe, level)?;
                for (col, vals) in fixed.iter().rev() {
                    let n = vals.len() as u64;
                    args[*col] = vals[(offset % n) as usize].clone();
                    offset /= n;
                }
                Ok(Fact::new(relation.clone(), args))
            }
        }
    }

    /// Position of `f` in the source, ignoring exclusion.
    pub fn position_of(&self, f: &Fact) -> Option<u64> {
        match &self.positions {
            Positions::Enumeration(e) => e.fact_index(f).ok(),
            Positions::Family {
                relation,
                arity,
                ranging,
                fixed,
                universe,
            } => {
                if f.relation() != relation || f.arity() != *arity {
                    return None;
                }
                let level = ranging_level(universe, &f.args()[*ranging])?;
                let mut offset = 0u64;
                for (col, vals) in fixed {
                    let i = vals.iter().position(|v| *v == f.args()[*col])?;
                    offset = offset * vals.len() as u64 + i as u64;
                }
                (level - 1)
                    .checked_mul(self.per_level)?
                    .checked_add(offset + 1)
            }
        }
    }

    /// Whether the tail assigns `f` a probability (excluded facts do not
    /// count).
    pub fn covers(&self, f: &Fact) -> bool {
        self.position_of(f)
            .is_some_and(|p| !self.is_excluded_position(p))
    }

    /// `p_f` for covered facts.
    pub fn prob_of(&self, f: &Fact) -> Option<f64> {
        let pos = self.position_of(f)?;
        (!self.is_excluded_position(pos)).then(|| self.prob_at(pos))
    }

    /// Covered with positive probability, i.e. in `F_ω`.
    pub fn contains(&self, f: &Fact) -> bool {
        self.prob_of(f).is_some_and(|p| p > 0.0)
    }

    /// `Σ_{pos > after} p`, excluded facts removed. Closed form.
    pub fn mass_after(&self, after: u64) -> f64 {
        let rule = &self.tail.rule;
        let m = self.per_level;
        let gross = if after == 0 {
            m as f64 * rule.sum_from(1)
        } else {
            let level = self.level_of(after);
            let left_in_level = (level * m - after) as f64;
            left_in_level * rule.prob(level) + m as f64 * rule.sum_from(level + 1)
        };
        if !gross.is_finite() {
            return gross;
        }
        let excluded: f64 = self
            .excluded
            .iter()
            .filter(|(p, _)| *p > after)
            .map(|(_, p)| p)
            .sum();
        (gross - excluded).max(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_after(0)
    }

    /// Largest probability strictly after `after`.
    pub fn max_prob_after(&self, after: u64) -> f64 {
        match self.tail.rule {
            TailRule::Geometric { q, .. } if q < 1.0 => self.prob_at(after + 1),
            TailRule::Geometric { c: 0.0, .. } => 0.0,
            TailRule::Geometric { .. } => f64::INFINITY,
            TailRule::Constant { c } => c,
        }
    }

    /// Covered facts after `after`, in order, with positions and
    /// probabilities.
    pub fn iter_after(&self, after: u64) -> impl Iterator<Item = (u64, Fact, f64)> + '_ {
        (after + 1..)
            .filter(|p| !self.is_excluded_position(*p))
            .map_while(|p| self.fact_at(p).ok().map(|f| (p, f, self.prob_at(p))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact;

    fn r1() -> Schema {
        Schema::new([("R".to_string(), 1)]).unwrap()
    }

    fn half() -> TailRule {
        TailRule::Geometric { c: 1.0, q: 0.5 }
    }

    #[test]
    fn enumeration_positions() {
        let t = Tail::new(TailSource::Enumeration { relations: None }, half());
        let g = TailGenerator::new(&r1(), &Universe::Naturals, &t).unwrap();
        assert_eq!(g.fact_at(3).unwrap(), fact!("R", 3u64));
        assert_eq!(g.position_of(&fact!("R", 3u64)), Some(3));
        assert_eq!(g.prob_at(3), 0.125);
        assert!((g.total_mass() - 1.0).abs() < 1e-15);
        assert!((g.mass_after(4) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn family_of_four_per_level() {
        let schema = Schema::new([("R".to_string(), 2)]).unwrap();
        let t = Tail::new(
            TailSource::Family {
                relation: "R".into(),
                columns: vec![
                    Column::Fixed(["A", "B", "C", "D"].map(Value::from).to_vec()),
                    Column::Ranging,
                ],
            },
            half(),
        )
        .excluding([
            fact!("R", "A", 1u64),
            fact!("R", "B", 1u64),
            fact!("R", "B", 2u64),
            fact!("R", "C", 3u64),
        ]);
        let g = TailGenerator::new(&schema, &Universe::mixed("ABCD").unwrap(), &t).unwrap();
        assert_eq!(g.per_level(), 4);
        assert_eq!(g.fact_at(1).unwrap(), fact!("R", "A", 1u64));
        assert_eq!(g.fact_at(6).unwrap(), fact!("R", "B", 2u64));
        assert_eq!(g.position_of(&fact!("R", "D", 3u64)), Some(12));
        assert!((g.total_mass() - 2.625).abs() < 1e-12);
        assert!(!g.covers(&fact!("R", "A", 1u64)));
        assert!(g.covers(&fact!("R", "D", 1u64)));
        assert_eq!(g.prob_of(&fact!("R", "D", 2u64)), Some(0.25));
        let first: Vec<Fact> = g.iter_after(0).take(3).map(|(_, f, _)| f).collect();
        assert_eq!(
            first,
            vec![
                fact!("R", "C", 1u64),
                fact!("R", "D", 1u64),
                fact!("R", "A", 2u64)
            ]
        );
        // Closed-form remaining mass agrees with direct summation.
        for after in 0..20 {
            let direct: f64 = g
                .iter_after(after)
                .take_while(|(p, _, _)| *p < 400)
                .map(|(_, _, p)| p)
                .sum();
            assert!(
                (g.mass_after(after) - direct).abs() < 1e-12,
                "after {after}"
            );
        }
    }

    #[test]
    fn rule_validation() {
        let bad = Tail::new(
            TailSource::Enumeration { relations: None },
            TailRule::Geometric { c: 4.0, q: 0.5 },
        );
        assert!(TailGenerator::new(&r1(), &Universe::Naturals, &bad).is_err());
        let bad = Tail::new(
            TailSource::Enumeration { relations: None },
            TailRule::Constant { c: 1.5 },
        );
        assert!(TailGenerator::new(&r1(), &Universe::Naturals, &bad).is_err());
        let stray = Tail::new(TailSource::Enumeration { relations: None }, half())
            .excluding([fact!("R", "x")]);
        assert!(TailGenerator::new(&r1(), &Universe::Naturals, &stray).is_err());
        assert!(!TailRule::Constant { c: 0.1 }.is_summable());
        assert!(TailRule::Constant { c: 0.0 }.is_summable());
        assert!(!TailRule::Geometric { c: 0.1, q: 1.0 }.is_summable());
    }
}
