//! Additive approximation of query probabilities on tuple-independent PDBs
//! with infinitely many facts.
//!
//! Let `Ω_n` be the event that a world uses only the first `n` facts and
//! `α_n = 1.5 · Σ_{i > n} p_i`. If every `p_i` beyond `n` is at most 1/2 then
//! `P(Ω_n) ≥ e^{-α_n}`, and `P(Q | Ω_n)` is within `ε` of `P(Q)` as soon as
//! `e^{α_n} ≤ 1 + ε` and `e^{-α_n} ≥ 1 - ε`. `P(Q | Ω_n)` is the probability
//! of `Q` on the finite tuple-independent PDB of the first `n` facts, which
//! is computed by enumerating its worlds.
//!
//! The guarantee is additive only; no relative error bound is possible in
//! general.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::database::Fact;
use crate::error::{Error, Result};
use crate::fo::{Formula, WorldEvaluator};
use crate::independence::TiPdb;
use crate::numerics::CompensatedSum;
use crate::universe::Value;

/// Default limit on the number of facts whose worlds are enumerated.
pub const DEFAULT_WORLD_CAP: usize = 25;

/// Upper limit on tail facts examined when choosing `n`.
const MAX_TRUNCATION_SEARCH: usize = 1 << 24;

const CHUNK_BITS: u32 = 14;

/// Evidence that truncating after `n` facts meets the error target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationCertificate {
    pub n: usize,
    pub alpha_n: f64,
    /// `Σ p_i` over facts beyond `n`.
    pub tail_sum: f64,
    pub epsilon: f64,
}

impl TruncationCertificate {
    /// Whether the certificate's conditions hold for the given largest
    /// probability beyond `n`.
    pub fn holds(&self, max_prob_after: f64) -> bool {
        certifies(self.tail_sum, max_prob_after, self.epsilon)
    }
}

fn certifies(tail_sum: f64, max_prob_after: f64, epsilon: f64) -> bool {
    let alpha = 1.5 * tail_sum;
    max_prob_after <= 0.5 && alpha <= epsilon.ln_1p() && (-alpha).exp() >= 1.0 - epsilon
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// Probability of a sentence and the truncation it was computed at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BooleanApprox {
    pub probability: f64,
    pub certificate: TruncationCertificate,
}

/// Per-tuple probabilities of an open formula.
#[derive(Clone, Debug, PartialEq)]
pub struct NonBooleanApprox {
    /// Answer columns, in order of first occurrence.
    pub vars: Vec<String>,
    /// Candidate tuples with positive approximate probability.
    pub tuples: BTreeMap<Vec<Value>, f64>,
    /// Probability bound for every tuple outside the candidate domain.
    pub residual: f64,
    pub certificate: TruncationCertificate,
}

/// Query approximation with a configurable world-enumeration cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Approximator {
    pub world_cap: usize,
}

impl Default for Approximator {
    fn default() -> Self {
        Approximator {
            world_cap: DEFAULT_WORLD_CAP,
        }
    }
}

/// Smallest `n ≥ |head|` meeting the truncation conditions for `epsilon`.
pub fn choose_truncation(t: &TiPdb, epsilon: f64) -> Result<TruncationCertificate> {
    check_epsilon(epsilon)?;
    let head = t.head().len();
    let certificate = |k: usize, tail_sum: f64| TruncationCertificate {
        n: head + k,
        alpha_n: 1.5 * tail_sum,
        tail_sum,
        epsilon,
    };
    let Some(g) = t.tail() else {
        return Ok(certificate(0, 0.0));
    };
    if certifies(g.mass_after(0), g.max_prob_after(0), epsilon) {
        return Ok(certificate(0, g.mass_after(0)));
    }
    for (k, (pos, _, _)) in g.iter_after(0).take(MAX_TRUNCATION_SEARCH).enumerate() {
        let rest = g.mass_after(pos);
        if certifies(rest, g.max_prob_after(pos), epsilon) {
            return Ok(certificate(k + 1, rest));
        }
    }
    Err(Error::UncertifiableTail(format!(
        "no truncation within {MAX_TRUNCATION_SEARCH} tail facts reaches epsilon {epsilon}"
    )))
}

impl Approximator {
    pub fn new(world_cap: usize) -> Self {
        Approximator { world_cap }
    }

    /// `P(Q | Ω_n)` for a sentence `Q`.
    pub fn conditional_query_prob(&self, t: &TiPdb, f: &Formula, n: usize) -> Result<f64> {
        self.finite_query_prob(&t.fact_prefix(n), f, t.universe())
    }

    /// Probability of a sentence on the finite tuple-independent PDB given
    /// by `facts`.
    pub fn finite_query_prob(
        &self,
        facts: &[(Fact, f64)],
        f: &Formula,
        u: &crate::universe::Universe,
    ) -> Result<f64> {
        let plain: Vec<Fact> = facts.iter().map(|(f, _)| f.clone()).collect();
        let ev = WorldEvaluator::new(&plain, f, u)?;
        let visible = ev.visible();
        if visible.len() > self.world_cap {
            return Err(Error::CapExceeded {
                required: visible.len(),
                cap: self.world_cap,
            });
        }
        let probs: Vec<f64> = visible.iter().map(|i| facts[*i].1).collect();
        Ok(enumerate(&ev, &probs))
    }

    pub fn approx_boolean(&self, t: &TiPdb, f: &Formula, epsilon: f64) -> Result<BooleanApprox> {
        let certificate = choose_truncation(t, epsilon)?;
        let probability = self.conditional_query_prob(t, f, certificate.n)?;
        Ok(BooleanApprox {
            probability,
            certificate,
        })
    }

    /// Grounds the free variables over `adom(F_n) ∪ adom(φ)` and approximates
    /// each grounding. A tuple outside that domain can only be an answer in
    /// worlds outside `Ω_n`, so its probability is at most `ε`.
    pub fn approx_nonboolean(
        &self,
        t: &TiPdb,
        f: &Formula,
        epsilon: f64,
    ) -> Result<NonBooleanApprox> {
        let vars = f.free_vars();
        if vars.is_empty() {
            return Err(Error::NoFreeVariables);
        }
        let certificate = choose_truncation(t, epsilon)?;
        let prefix = t.fact_prefix(certificate.n);
        let mut domain: BTreeSet<Value> = f.constants();
        for (fact, _) in &prefix {
            domain.extend(fact.args().iter().cloned());
        }
        let domain: Vec<Value> = domain.into_iter().collect();
        let mut tuples = BTreeMap::new();
        let mut choice = vec![0usize; vars.len()];
        if !domain.is_empty() {
            loop {
                let tuple: Vec<Value> = choice.iter().map(|i| domain[*i].clone()).collect();
                let ground = vars
                    .iter()
                    .zip(&tuple)
                    .fold(f.clone(), |g, (v, a)| g.substitute(v, a));
                let p = self.finite_query_prob(&prefix, &ground, t.universe())?;
                if p > 0.0 {
                    tuples.insert(tuple, p);
                }
                let mut i = vars.len();
                while i > 0 {
                    i -= 1;
                    choice[i] += 1;
                    if choice[i] < domain.len() {
                        break;
                    }
                    choice[i] = 0;
                }
                if choice.iter().all(|c| *c == 0) {
                    break;
                }
            }
        }
        Ok(NonBooleanApprox {
            vars,
            tuples,
            residual: epsilon,
            certificate,
        })
    }
}

/// [`Approximator::conditional_query_prob`] with the default cap.
pub fn conditional_query_prob(t: &TiPdb, f: &Formula, n: usize) -> Result<f64> {
    Approximator::default().conditional_query_prob(t, f, n)
}

/// [`Approximator::approx_boolean`] with the default cap.
pub fn approx_boolean(t: &TiPdb, f: &Formula, epsilon: f64) -> Result<BooleanApprox> {
    Approximator::default().approx_boolean(t, f, epsilon)
}

/// [`Approximator::approx_nonboolean`] with the default cap.
pub fn approx_nonboolean(t: &TiPdb, f: &Formula, epsilon: f64) -> Result<NonBooleanApprox> {
    Approximator::default().approx_nonboolean(t, f, epsilon)
}

/// World probabilities of the facts in `bits`, indexed by mask.
fn half_table(probs: &[f64]) -> Vec<f64> {
    let mut table = vec![1.0];
    for p in probs {
        let mut next = Vec::with_capacity(table.len() * 2);
        next.extend(table.iter().map(|w| w * (1.0 - p)));
        next.extend(table.iter().map(|w| w * p));
        table = next;
    }
    table
}

/// `Σ_{mask ⊨ Q} P(mask)` over all `2^k` worlds, split into fixed chunks
/// summed in parallel and merged in chunk order.
fn enumerate(ev: &WorldEvaluator, probs: &[f64]) -> f64 {
    let k = probs.len();
    let low_bits = k / 2;
    let low = half_table(&probs[..low_bits]);
    let high = half_table(&probs[low_bits..]);
    let low_mask = (1u64 << low_bits) - 1;
    let total = 1u64 << k;
    let chunk = 1u64 << CHUNK_BITS.min(k as u32);
    let sums: Vec<CompensatedSum> = (0..total / chunk)
        .into_par_iter()
        .map(|c| {
            let mut scratch = ev.scratch();
            let mut sum = CompensatedSum::new();
            for mask in c * chunk..(c + 1) * chunk {
                let w = low[(mask & low_mask) as usize] * high[(mask >> low_bits) as usize];
                if w > 0.0 && ev.eval_mask(mask, &mut scratch) {
                    sum.add(w);
                }
            }
            sum
        })
        .collect();
    let mut total = CompensatedSum::new();
    for s in &sums {
        total.merge(s);
    }
    total.value().clamp(0.0, 1.0)
}
