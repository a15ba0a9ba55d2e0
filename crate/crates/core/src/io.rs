//! The JSON spec format shared by every PDB kind.
//!
//! ```json
//! {
//!   "kind": "ti",
//!   "schema": [{"name": "R", "arity": 2}],
//!   "universe": {"kind": "mixed", "alphabet": "ABCD"},
//!   "head_facts": [{"fact": {"relation": "R", "args": ["A", 1]}, "p": "0.8"}],
//!   "tail": {
//!     "source": {"kind": "family", "relation": "R", "columns": [["A", "B"], "ranging"]},
//!     "rule": {"kind": "geometric", "c": "1", "q": "0.5"},
//!     "exclude": [{"relation": "R", "args": ["A", 1]}]
//!   }
//! }
//! ```
//!
//! Probabilities are written as decimal strings and read from strings or
//! numbers. `bid` specs add `blocks`; `finite` specs list `worlds`;
//! `completion` specs list the original `worlds` plus the fresh-fact
//! `head_facts` and `tail`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::completion::{complete, Completion};
use crate::database::{Fact, FiniteDiscretePdb, Instance, Schema};
use crate::error::{Error, Result};
use crate::independence::{
    BidPdb, BlockPartition, Column, FactProbabilityAssignment, Tail, TailRule, TailSource, TiPdb,
};
use crate::universe::{Universe, Value};

/// A probability stored as a decimal string.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prob(pub f64);

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(Prob(x)),
            Raw::Text(s) => s
                .trim()
                .parse()
                .map(Prob)
                .map_err(|_| serde::de::Error::custom(format!("'{s}' is not a decimal number"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Ti,
    Bid,
    Finite,
    Completion,
}

impl fmt::Display for SpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpecKind::Ti => "TI",
            SpecKind::Bid => "BID",
            SpecKind::Finite => "finite",
            SpecKind::Completion => "completion",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    pub arity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UniverseSpec {
    Naturals,
    Strings { alphabet: String },
    Mixed { alphabet: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadFact {
    pub fact: Fact,
    pub p: Prob,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSpec {
    Fixed(Vec<Value>),
    /// Must be `"ranging"`.
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSpec {
    Enumeration {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        relations: Option<Vec<String>>,
    },
    Family {
        relation: String,
        columns: Vec<ColumnSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RuleSpec {
    Geometric { c: Prob, q: Prob },
    Constant { c: Prob },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub source: SourceSpec,
    pub rule: RuleSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<Fact>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BlocksSpec {
    Singletons,
    Key { relation: String, key_len: usize },
    Listed { blocks: Vec<Vec<Fact>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub facts: Vec<Fact>,
    pub p: Prob,
}

/// A spec file as written on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub kind: SpecKind,
    pub schema: Vec<RelationSpec>,
    pub universe: UniverseSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub head_facts: Vec<HeadFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<BlocksSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub worlds: Vec<WorldSpec>,
}

/// A PDB of any supported kind.
#[derive(Clone, Debug)]
pub enum Pdb {
    Ti(TiPdb),
    Bid(BidPdb),
    Finite(FiniteDiscretePdb),
    Completion(Completion),
}

impl Pdb {
    pub fn kind(&self) -> SpecKind {
        match self {
            Pdb::Ti(_) => SpecKind::Ti,
            Pdb::Bid(_) => SpecKind::Bid,
            Pdb::Finite(_) => SpecKind::Finite,
            Pdb::Completion(_) => SpecKind::Completion,
        }
    }

    pub fn schema(&self) -> &Schema {
        match self {
            Pdb::Ti(t) => t.schema(),
            Pdb::Bid(b) => b.schema(),
            Pdb::Finite(p) => p.schema(),
            Pdb::Completion(c) => c.original().schema(),
        }
    }

    pub fn universe(&self) -> &Universe {
        match self {
            Pdb::Ti(t) => t.universe(),
            Pdb::Bid(b) => b.universe(),
            Pdb::Finite(p) => p.universe(),
            Pdb::Completion(c) => c.original().universe(),
        }
    }
}

impl SpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    fn schema_value(&self) -> Result<Schema> {
        Ok(Schema::new(
            self.schema.iter().map(|r| (r.name.clone(), r.arity)),
        )?)
    }

    fn universe_value(&self) -> Result<Universe> {
        Ok(match &self.universe {
            UniverseSpec::Naturals => Universe::Naturals,
            UniverseSpec::Strings { alphabet } => Universe::strings(alphabet)?,
            UniverseSpec::Mixed { alphabet } => Universe::mixed(alphabet)?,
        })
    }

    fn assignment(&self) -> Result<FactProbabilityAssignment> {
        let head = self
            .head_facts
            .iter()
            .map(|h| (h.fact.clone(), h.p.0))
            .collect();
        let tail = self.tail.as_ref().map(tail_value).transpose()?;
        Ok(FactProbabilityAssignment { head, tail })
    }

    fn finite(&self, schema: Schema, universe: Universe) -> Result<FiniteDiscretePdb> {
        if self.worlds.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "{} spec lists no worlds",
                self.kind
            )));
        }
        let worlds = self
            .worlds
            .iter()
            .map(|w| (w.facts.iter().cloned().collect::<Instance>(), w.p.0));
        FiniteDiscretePdb::new(schema, universe, worlds)
    }

    fn reject(&self, field: &str, present: bool) -> Result<()> {
        if present {
            Err(Error::InvalidSpec(format!(
                "field '{field}' is not allowed in a {} spec",
                self.kind
            )))
        } else {
            Ok(())
        }
    }

    /// Validates the spec and constructs its PDB.
    pub fn build(&self) -> Result<Pdb> {
        let schema = self.schema_value()?;
        let universe = self.universe_value()?;
        match self.kind {
            SpecKind::Ti => {
                self.reject("blocks", self.blocks.is_some())?;
                self.reject("worlds", !self.worlds.is_empty())?;
                Ok(Pdb::Ti(TiPdb::new(schema, universe, self.assignment()?)?))
            }
            SpecKind::Bid => {
                self.reject("worlds", !self.worlds.is_empty())?;
                let partition = match &self.blocks {
                    None | Some(BlocksSpec::Singletons) => BlockPartition::Singletons,
                    Some(BlocksSpec::Key { relation, key_len }) => BlockPartition::KeyProjection {
                        relation: relation.clone(),
                        key_len: *key_len,
                    },
                    Some(BlocksSpec::Listed { blocks }) => BlockPartition::Listed {
                        blocks: blocks.clone(),
                    },
                };
                Ok(Pdb::Bid(BidPdb::new(
                    schema,
                    universe,
                    partition,
                    self.assignment()?,
                )?))
            }
            SpecKind::Finite => {
                self.reject("head_facts", !self.head_facts.is_empty())?;
                self.reject("tail", self.tail.is_some())?;
                self.reject("blocks", self.blocks.is_some())?;
                Ok(Pdb::Finite(self.finite(schema, universe)?))
            }
            SpecKind::Completion => {
                self.reject("blocks", self.blocks.is_some())?;
                let original = self.finite(schema, universe)?;
                Ok(Pdb::Completion(complete(&original, self.assignment()?)?))
            }
        }
    }

    /// The spec describing `pdb`.
    pub fn describe(pdb: &Pdb) -> SpecFile {
        let mut spec = SpecFile {
            kind: pdb.kind(),
            schema: pdb
                .schema()
                .relations()
                .map(|(name, arity)| RelationSpec {
                    name: name.to_string(),
                    arity,
                })
                .collect(),
            universe: match pdb.universe() {
                Universe::Naturals => UniverseSpec::Naturals,
                Universe::Strings { alphabet } => UniverseSpec::Strings {
                    alphabet: alphabet.iter().collect(),
                },
                Universe::Mixed { alphabet } => UniverseSpec::Mixed {
                    alphabet: alphabet.iter().collect(),
                },
            },
            head_facts: Vec::new(),
            tail: None,
            blocks: None,
            worlds: Vec::new(),
        };
        let set_assignment = |a: &FactProbabilityAssignment, spec: &mut SpecFile| {
            spec.head_facts = a
                .head
                .iter()
                .map(|(f, p)| HeadFact {
                    fact: f.clone(),
                    p: Prob(*p),
                })
                .collect();
            spec.tail = a.tail.as_ref().map(tail_spec);
        };
        let worlds = |p: &FiniteDiscretePdb| {
            p.worlds()
                .map(|(d, x)| WorldSpec {
                    facts: d.facts().cloned().collect(),
                    p: Prob(x),
                })
                .collect()
        };
        match pdb {
            Pdb::Ti(t) => set_assignment(t.assignment(), &mut spec),
            Pdb::Bid(b) => {
                set_assignment(b.assignment(), &mut spec);
                spec.blocks = Some(match b.partition() {
                    BlockPartition::Singletons => BlocksSpec::Singletons,
                    BlockPartition::KeyProjection { relation, key_len } => BlocksSpec::Key {
                        relation: relation.clone(),
                        key_len: *key_len,
                    },
                    BlockPartition::Listed { blocks } => BlocksSpec::Listed {
                        blocks: blocks.clone(),
                    },
                });
            }
            Pdb::Finite(p) => spec.worlds = worlds(p),
            Pdb::Completion(c) => {
                set_assignment(c.tail().assignment(), &mut spec);
                spec.worlds = worlds(c.original());
            }
        }
        spec
    }
}

fn tail_value(t: &TailSpec) -> Result<Tail> {
    let source = match &t.source {
        SourceSpec::Enumeration { relations } => TailSource::Enumeration {
            relations: relations.clone(),
        },
        SourceSpec::Family { relation, columns } => TailSource::Family {
            relation: relation.clone(),
            columns: columns
                .iter()
                .map(|c| match c {
                    ColumnSpec::Fixed(v) => Ok(Column::Fixed(v.clone())),
                    ColumnSpec::Keyword(k) if k == "ranging" => Ok(Column::Ranging),
                    ColumnSpec::Keyword(k) => Err(Error::InvalidSpec(format!(
                        "tail column must be a value list or \"ranging\", found \"{k}\""
                    ))),
                })
                .collect::<Result<_>>()?,
        },
    };
    let rule = match t.rule {
        RuleSpec::Geometric { c, q } => TailRule::Geometric { c: c.0, q: q.0 },
        RuleSpec::Constant { c } => TailRule::Constant { c: c.0 },
    };
    Ok(Tail::new(source, rule).excluding(t.exclude.iter().cloned()))
}

fn tail_spec(t: &Tail) -> TailSpec {
    TailSpec {
        source: match &t.source {
            TailSource::Enumeration { relations } => SourceSpec::Enumeration {
                relations: relations.clone(),
            },
            TailSource::Family { relation, columns } => SourceSpec::Family {
                relation: relation.clone(),
                columns: columns
                    .iter()
                    .map(|c| match c {
                        Column::Fixed(v) => ColumnSpec::Fixed(v.clone()),
                        Column::Ranging => ColumnSpec::Keyword("ranging".to_string()),
                    })
                    .collect(),
            },
        },
        rule: match t.rule {
            TailRule::Geometric { c, q } => RuleSpec::Geometric {
                c: Prob(c),
                q: Prob(q),
            },
            TailRule::Constant { c } => RuleSpec::Constant { c: Prob(c) },
        },
        exclude: t.exclude.iter().cloned().collect(),
    }
}

/// Reads an instance file: a JSON array of facts.
pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact;
    use proptest::prelude::*;

    const EXAMPLE: &str = r#"{
        "kind": "ti",
        "schema": [{"name": "R", "arity": 2}],
        "universe": {"kind": "mixed", "alphabet": "ABCD"},
        "head_facts": [
            {"fact": {"relation": "R", "args": ["A", 1]}, "p": "0.8"},
            {"fact": {"relation": "R", "args": ["B", 1]}, "p": 0.4},
            {"fact": {"relation": "R", "args": ["B", 2]}, "p": "0.5"},
            {"fact": {"relation": "R", "args": ["C", 3]}, "p": "0.9"}
        ]
    }"#;

    #[test]
    fn parses_example() {
        let spec = SpecFile::from_json(EXAMPLE).unwrap();
        let Pdb::Ti(t) = spec.build().unwrap() else {
            panic!()
        };
        assert!((t.total_mass() - 2.6).abs() < 1e-12);
        assert_eq!(t.prob_of(&fact!("R", "B", 1u64)), 0.4);
    }

    #[test]
    fn round_trip_is_identity() {
        let spec = SpecFile::from_json(EXAMPLE).unwrap();
        let again = SpecFile::from_json(&spec.to_json()).unwrap();
        assert_eq!(again, spec);
        assert_eq!(SpecFile::describe(&again.build().unwrap()), spec);
        assert!(spec.to_json().contains("\"0.4\""));
    }

    #[test]
    fn tail_and_blocks_round_trip() {
        let text = r#"{
            "kind": "bid",
            "schema": [{"name": "R", "arity": 2}, {"name": "S", "arity": 1}],
            "universe": {"kind": "mixed", "alphabet": "ABCD"},
            "head_facts": [
                {"fact": {"relation": "R", "args": ["A", 1]}, "p": "0.3"},
                {"fact": {"relation": "R", "args": ["A", 2]}, "p": "0.5"}
            ],
            "blocks": {"kind": "key", "relation": "R", "key_len": 1},
            "tail": {
                "source": {"kind": "family", "relation": "S", "columns": ["ranging"]},
                "rule": {"kind": "geometric", "c": "1", "q": "0.25"}
            }
        }"#;
        let spec = SpecFile::from_json(text).unwrap();
        let pdb = spec.build().unwrap();
        assert_eq!(SpecFile::describe(&pdb), spec);
        let Pdb::Bid(b) = pdb else { panic!() };
        assert!((b.total_mass() - (0.8 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            SpecFile::from_json("{\"kind\": \"ti\"}"),
            Err(Error::Json(_))
        ));
        let mut spec = SpecFile::from_json(EXAMPLE).unwrap();
        spec.worlds.push(WorldSpec {
            facts: vec![],
            p: Prob(1.0),
        });
        assert!(matches!(spec.build(), Err(Error::InvalidSpec(_))));
        let bad_column = EXAMPLE.replace(
            "\"head_facts\"",
            r#""tail": {"source": {"kind": "family", "relation": "R", "columns": [["A"], "everything"]},
                        "rule": {"kind": "constant", "c": "0"}},
               "head_facts""#,
        );
        assert!(matches!(
            SpecFile::from_json(&bad_column).unwrap().build(),
            Err(Error::InvalidSpec(_))
        ));
        let bad_prob = EXAMPLE.replace("\"0.8\"", "\"eight tenths\"");
        assert!(SpecFile::from_json(&bad_prob).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_round_trip(p in 0.0f64..=1.0) {
            let text = serde_json::to_string(&Prob(p)).unwrap();
            let back: Prob = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.0.to_bits(), p.to_bits());
        }
    }
}
