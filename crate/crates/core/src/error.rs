use thiserror::Error;

use crate::database::{Fact, Instance};
use crate::fo::ParseError;
use crate::universe::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("log-probability {0} is not in [-inf, 0]")]
    InvalidLogProbability(f64),
    #[error("[{lo}, {hi}] is not a probability interval")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("tail sum {0} is negative")]
    NegativeTailSum(f64),
    #[error("tail probabilities up to {0} exceed 1/2")]
    TailProbabilityTooLarge(f64),
    #[error("sequence of length {len} exceeds the limit of {max}")]
    TooLong { len: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UniverseError {
    #[error("enumeration indices start at 1")]
    IndexZero,
    #[error("enumeration index overflows 64 bits")]
    Overflow,
    #[error("{0} is not an element of the universe")]
    NotInUniverse(Value),
    #[error("string universes need a nonempty alphabet")]
    EmptyAlphabet,
    #[error("alphabet symbol {0:?} is listed twice")]
    DuplicateSymbol(char),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("relation {relation} has arity {expected}, got {found} arguments")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("relation {0} is declared twice")]
    DuplicateRelation(String),
    #[error("relation {0} has arity 0 and cannot be enumerated")]
    NullaryRelation(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("DuplicateFact: {0} is assigned more than one probability")]
    DuplicateFact(Fact),
    #[error("DivergentAssignment: {0}")]
    DivergentAssignment(String),
    #[error("BlockMassExceedsOne: block of {block} has mass {mass}")]
    BlockMassExceedsOne { block: Fact, mass: f64 },
    #[error("UnsupportedTailBlock: {0}")]
    UnsupportedTailBlock(String),
    #[error("invalid tail rule: {0}")]
    InvalidTailRule(String),

    #[error("probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),
    #[error("instance {0} is listed twice")]
    DuplicateWorld(Instance),

    #[error("OverlappingFacts: {0} belongs to both the original PDB and the tail")]
    OverlappingFacts(Fact),
    #[error("UnitTailProbability: tail fact {0} has probability 1")]
    UnitTailProbability(Fact),
    #[error("NotClosed: missing sub-instance {missing}")]
    NotClosed { missing: Instance },
    #[error("closure constant {0} is outside (0, 1]")]
    InvalidClosureConstant(f64),
    #[error("no missing instances to receive mass {0}")]
    NoMissingInstances(f64),
    #[error("original PDB has {0} facts; closure handling is limited to {max}", max = crate::completion::MAX_CLOSURE_FACTS)]
    TooManyOriginalFacts(usize),
    #[error("redistribution covers {0}, which is not a missing instance")]
    InvalidRedistribution(Instance),

    #[error("tolerance {0} is outside (0, 1)")]
    InvalidDelta(f64),
    #[error("epsilon {0} is outside (0, 1/2)")]
    InvalidEpsilon(f64),
    #[error("formula has free variables {0:?}")]
    FreeVariables(Vec<String>),
    #[error("formula has no free variables")]
    NoFreeVariables,
    #[error("InfiniteAnswer: query has infinitely many answers on this instance")]
    InfiniteAnswer,
    #[error("view target {relation} has arity {arity} but its formula has {free} free variables")]
    ViewArity {
        relation: String,
        arity: usize,
        free: usize,
    },
    #[error("CapExceeded: {required} facts needed, enumeration cap is {cap}")]
    CapExceeded { required: usize, cap: usize },
    #[error("tail cannot be certified: {0}")]
    UncertifiableTail(String),
    #[error("{len} facts exceed the brute-force limit of {max}")]
    TooManyFacts { len: usize, max: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
