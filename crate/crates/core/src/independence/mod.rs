//! Tuple-independent and block-independent-disjoint PDBs over infinitely many
//! facts.
//!
//! A [`FactProbabilityAssignment`] lists finitely many facts explicitly (the
//! head) and may add an infinite [`Tail`] whose probabilities follow a rule
//! with a closed-form remaining mass. The closed form is what certifies that
//! `Σ p_f` converges, which is exactly when a tuple-independent PDB with those
//! marginals exists.

mod bid;
mod tail;
mod ti;

use std::collections::HashSet;

pub use bid::{is_good, BidPdb, BlockKey, BlockPartition};
pub use tail::{Column, Tail, TailGenerator, TailRule, TailSource};
pub use ti::{TailCut, TiPdb};

use crate::database::{Fact, Instance, Schema};
use crate::error::{Error, Result};
use crate::numerics::{
    check_probability, euler_tail_lower_bound, sum_log_terms, ProbabilityInterval,
};
use crate::universe::Universe;

/// Remaining tail mass below which [`TiPdb::instance_prob`] stops expanding
/// the tail product explicitly.
pub(crate) const TAIL_PRODUCT_RESIDUAL: f64 = 1e-18;
/// Upper limit on explicitly expanded tail positions.
pub(crate) const TAIL_PRODUCT_MAX_TERMS: u64 = 1 << 20;

/// Explicit head facts plus an optional infinite tail.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactProbabilityAssignment {
    pub head: Vec<(Fact, f64)>,
    pub tail: Option<Tail>,
}

impl FactProbabilityAssignment {
    pub fn head_only(head: Vec<(Fact, f64)>) -> Self {
        FactProbabilityAssignment { head, tail: None }
    }

    pub fn with_tail(head: Vec<(Fact, f64)>, tail: Tail) -> Self {
        FactProbabilityAssignment {
            head,
            tail: Some(tail),
        }
    }
}

/// Validated head facts with positive probability, in listing order, plus the
/// compiled tail.
#[derive(Clone, Debug)]
pub(crate) struct CheckedAssignment {
    pub head: Vec<(Fact, f64)>,
    pub tail: Option<TailGenerator>,
}

pub(crate) fn check_assignment(
    schema: &Schema,
    universe: &Universe,
    a: &FactProbabilityAssignment,
) -> Result<CheckedAssignment> {
    let mut seen = HashSet::new();
    for (f, p) in &a.head {
        f.check(schema, universe)?;
        check_probability(*p)?;
        if !seen.insert(f) {
            return Err(Error::DuplicateFact(f.clone()));
        }
    }
    let tail = match &a.tail {
        Some(t) => Some(TailGenerator::new(schema, universe, t)?),
        None => None,
    };
    if let Some(t) = &tail {
        if let Some((f, _)) = a.head.iter().find(|(f, _)| t.covers(f)) {
            return Err(Error::DuplicateFact(f.clone()));
        }
        if !t.is_summable() {
            return Err(Error::DivergentAssignment(format!(
                "tail rule {} has a divergent sum",
                t.rule()
            )));
        }
    }
    // Facts of probability zero are outside F_ω.
    let head = a.head.iter().filter(|(_, p)| *p > 0.0).cloned().collect();
    Ok(CheckedAssignment { head, tail })
}

/// Log-terms of `∏_{f ∈ d} p_f · ∏_{f ∉ d} (1 - p_f)` over an explicit prefix
/// of the tail, and the mass left beyond it (every remaining `p ≤ 1/2`). `d` lists tail facts only.
pub(crate) fn tail_terms(tail: &TailGenerator, d: &[&Fact]) -> (Vec<f64>, f64) {
    let chosen: Vec<u64> = d
        .iter()
        .map(|f| tail.position_of(f).expect("caller passes tail facts"))
        .collect();
    let needed = chosen.iter().copied().max().unwrap_or(0);
    let mut terms = Vec::new();
    let mut pos = 0u64;
    loop {
        let rest = tail.mass_after(pos);
        let max_p = tail.max_prob_after(pos);
        let done = pos >= needed
            && max_p <= 0.5
            && (rest <= TAIL_PRODUCT_RESIDUAL || pos >= needed.max(TAIL_PRODUCT_MAX_TERMS));
        if done {
            return (terms, rest);
        }
        pos += 1;
        if tail.is_excluded_position(pos) {
            continue;
        }
        let p = tail.prob_at(pos);
        if chosen.contains(&pos) {
            terms.push(p.ln());
        } else {
            terms.push((-p).ln_1p());
        }
    }
}

/// `exp(Σ terms)` times the tail enclosure `[exp(-3/2 · rest), 1]`.
pub(crate) fn enclose(terms: Vec<f64>, rest: f64) -> ProbabilityInterval {
    let hi = sum_log_terms(terms).prob();
    let lo = hi * euler_tail_lower_bound(rest).unwrap_or(0.0);
    ProbabilityInterval::clamped(lo, hi)
}

/// Splits an instance into head facts, tail facts, and facts of probability 0.
pub(crate) fn split_instance<'a>(
    d: &'a Instance,
    in_head: impl Fn(&Fact) -> bool,
    tail: Option<&TailGenerator>,
) -> (Vec<&'a Fact>, Vec<&'a Fact>, bool) {
    let mut head = Vec::new();
    let mut tail_facts = Vec::new();
    let mut impossible = false;
    for f in d {
        if in_head(f) {
            head.push(f);
        } else if tail.is_some_and(|t| t.contains(f)) {
            tail_facts.push(f);
        } else {
            impossible = true;
        }
    }
    (head, tail_facts, impossible)
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}
