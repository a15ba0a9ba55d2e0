use std::collections::HashMap;

use rand::Rng;

use super::{
    check_assignment, check_delta, enclose, split_instance, tail_terms, FactProbabilityAssignment,
    TailGenerator,
};
use crate::database::{Fact, Instance, Schema};
use crate::error::Result;
use crate::numerics::{log_product, log_product_one_minus, CompensatedSum, ProbabilityInterval};
use crate::universe::Universe;

/// A tuple-independent PDB: every fact `f` occurs independently with
/// probability `p_f`, and `P({D}) = ∏_{f ∈ D} p_f · ∏_{f ∉ D} (1 - p_f)`.
///
/// Construction succeeds exactly when `Σ p_f` is certified finite; that sum
/// is then the expected instance size.
#[derive(Clone, Debug)]
pub struct TiPdb {
    schema: Schema,
    universe: Universe,
    assignment: FactProbabilityAssignment,
    head: Vec<(Fact, f64)>,
    head_index: HashMap<Fact, usize>,
    tail: Option<TailGenerator>,
    total_mass: f64,
}

/// Where a prefix of the tail ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailCut {
    /// Number of tail facts in the prefix.
    pub facts: usize,
    /// Source position of the last fact in the prefix (0 for none).
    pub position: u64,
    /// `Σ p` over tail facts after the prefix.
    pub mass_after: f64,
    /// Largest `p` after the prefix.
    pub max_prob_after: f64,
}

impl TiPdb {
    pub fn new(
        schema: Schema,
        universe: Universe,
        assignment: FactProbabilityAssignment,
    ) -> Result<Self> {
        let checked = check_assignment(&schema, &universe, &assignment)?;
        let mut mass: CompensatedSum = checked.head.iter().map(|(_, p)| *p).collect();
        if let Some(t) = &checked.tail {
            mass.add(t.total_mass());
        }
        let head_index = checked
            .head
            .iter()
            .enumerate()
            .map(|(i, (f, _))| (f.clone(), i))
            .collect();
        Ok(TiPdb {
            schema,
            universe,
            assignment,
            head: checked.head,
            head_index,
            tail: checked.tail,
            total_mass: mass.value(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    /// The assignment as given, zero-probability facts included.
    pub fn assignment(&self) -> &FactProbabilityAssignment {
        &self.assignment
    }

    /// Head facts with positive probability.
    pub fn head(&self) -> &[(Fact, f64)] {
        &self.head
    }

    pub fn tail(&self) -> Option<&TailGenerator> {
        self.tail.as_ref()
    }

    pub fn has_tail(&self) -> bool {
        self.tail.as_ref().is_some_and(|t| t.total_mass() > 0.0)
    }

    /// `Σ_f p_f`.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `E(S_D)`, which for tuple-independent PDBs equals the total mass.
    pub fn expected_size(&self) -> f64 {
        self.total_mass
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail.as_ref().map_or(0.0, TailGenerator::total_mass)
    }

    /// `p_f = P(E_f)`.
    pub fn prob_of(&self, f: &Fact) -> f64 {
        if let Some(i) = self.head_index.get(f) {
            return self.head[*i].1;
        }
        self.tail.as_ref().and_then(|t| t.prob_of(f)).unwrap_or(0.0)
    }

    /// `P({d})`, exact for head-only PDBs and enclosed otherwise.
    pub fn instance_prob(&self, d: &Instance) -> ProbabilityInterval {
        let (head_in, tail_in, impossible) =
            split_instance(d, |f| self.head_index.contains_key(f), self.tail.as_ref());
        if impossible {
            return ProbabilityInterval::ZERO;
        }
        let present: Vec<f64> = head_in
            .iter()
            .map(|f| self.head[self.head_index[*f]].1)
            .collect();
        let absent: Vec<f64> = self
            .head
            .iter()
            .filter(|(f, _)| !d.contains(f))
            .map(|(_, p)| *p)
            .collect();
        let mut terms = vec![
            log_product(&present).expect("validated").value(),
            log_product_one_minus(&absent).expect("validated").value(),
        ];
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

    /// `(P(⋂ E_f), P(⋃ E_f))` for distinct facts.
    pub fn event_probs(&self, facts: &[Fact]) -> (f64, f64) {
        let ps: Vec<f64> = facts.iter().map(|f| self.prob_of(f)).collect();
        let conj = log_product(&ps).expect("validated").prob();
        let none = log_product_one_minus(&ps).expect("validated").value();
        (conj, -none.exp_m1())
    }

    /// The prefix made of the first `facts` tail facts.
    pub fn tail_cut(&self, facts: usize) -> TailCut {
        let Some(t) = &self.tail else {
            return TailCut {
                facts: 0,
                position: 0,
                mass_after: 0.0,
                max_prob_after: 0.0,
            };
        };
        let position = match facts {
            0 => 0,
            n => t.iter_after(0).nth(n - 1).map_or(0, |(p, _, _)| p),
        };
        TailCut {
            facts,
            position,
            mass_after: t.mass_after(position),
            max_prob_after: t.max_prob_after(position),
        }
    }

    /// The first `n` facts of `F_ω`: the head in listing order, then the tail.
    pub fn fact_prefix(&self, n: usize) -> Vec<(Fact, f64)> {
        let mut out: Vec<(Fact, f64)> = self.head.iter().take(n).cloned().collect();
        if let Some(t) = &self.tail {
            let more = n.saturating_sub(out.len());
            out.extend(
                t.iter_after(0)
                    .filter(|(_, _, p)| *p > 0.0)
                    .take(more)
                    .map(|(_, f, p)| (f, p)),
            );
        }
        out
    }

    /// Smallest number of tail facts after which the remaining mass is at
    /// most `delta`.
    pub fn sampling_cutoff(&self, delta: f64) -> Result<usize> {
        check_delta(delta)?;
        let Some(t) = &self.tail else { return Ok(0) };
        if t.mass_after(0) <= delta {
            return Ok(0);
        }
        for (i, (pos, _, _)) in t.iter_after(0).enumerate() {
            if t.mass_after(pos) <= delta {
                return Ok(i + 1);
            }
        }
        unreachable!("tail iteration is unbounded")
    }

    /// Draws an instance. Head facts are exact coin flips; the tail is cut
    /// where its remaining mass drops to `delta`, so the output law is within
    /// total-variation distance `delta` of the PDB.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, delta: f64) -> Result<Instance> {
        let cutoff = self.sampling_cutoff(delta)?;
        let mut d = Instance::new();
        for (f, p) in &self.head {
            if rng.gen_bool(*p) {
                d.insert(f.clone());
            }
        }
        if let Some(t) = &self.tail {
            for (_, f, p) in t.iter_after(0).take(cutoff) {
                if rng.gen_bool(p) {
                    d.insert(f);
                }
            }
        }
        Ok(d)
    }
}
