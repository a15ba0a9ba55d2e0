//! Open-world completion of a finite PDB by independent fresh facts.
//!
//! Given a finite PDB `(Ω, P)` whose sample space is every subset of its
//! facts `F`, and a tuple-independent PDB `P_1` over facts outside `F`, the
//! completion is `P'({D ⊎ C}) = P({D}) · P_1({C})`. Conditioning on "no fresh
//! facts" recovers `P`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::database::{Fact, FiniteDiscretePdb, Instance};
use crate::error::{Error, Result};
use crate::independence::{FactProbabilityAssignment, TailRule, TiPdb};
use crate::numerics::{CompensatedSum, ProbabilityInterval};

/// Largest fact count for which [`closure_extend`] materializes all subsets.
pub const MAX_CLOSURE_FACTS: usize = 20;

/// How [`closure_extend`] spreads the mass `1 - c` over missing instances.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Redistribution {
    #[default]
    Uniform,
    /// Explicit probabilities for missing instances, summing to `1 - c`.
    /// Unlisted missing instances get 0.
    Explicit(BTreeMap<Instance, f64>),
}

fn subsets(facts: &[Fact]) -> impl Iterator<Item = Instance> + '_ {
    (0u64..1 << facts.len()).map(move |mask| {
        facts
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, f)| f.clone())
            .collect()
    })
}

/// Extends `p0` to the sample space of all subsets of its facts with uniform
/// redistribution.
pub fn closure_extend(p0: &FiniteDiscretePdb, c: f64) -> Result<FiniteDiscretePdb> {
    closure_extend_with(p0, c, &Redistribution::Uniform)
}

/// Extends `p0` to all subsets of `F(p0)`: original instances get `c · P_0`
/// and the missing ones share `1 - c`.
pub fn closure_extend_with(
    p0: &FiniteDiscretePdb,
    c: f64,
    how: &Redistribution,
) -> Result<FiniteDiscretePdb> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidClosureConstant(c));
    }
    let facts: Vec<Fact> = p0.facts().into_iter().collect();
    if facts.len() > MAX_CLOSURE_FACTS {
        return Err(Error::TooManyOriginalFacts(facts.len()));
    }
    let missing: Vec<Instance> = subsets(&facts).filter(|d| !p0.in_sample_space(d)).collect();
    if missing.is_empty() && c < 1.0 {
        return Err(Error::NoMissingInstances(c));
    }
    let mut worlds: Vec<(Instance, f64)> = p0.worlds().map(|(d, p)| (d.clone(), c * p)).collect();
    match how {
        Redistribution::Uniform => {
            let share = if missing.is_empty() {
                0.0
            } else {
                (1.0 - c) / missing.len() as f64
            };
            worlds.extend(missing.into_iter().map(|d| (d, share)));
        }
        Redistribution::Explicit(map) => {
            let missing: BTreeSet<Instance> = missing.into_iter().collect();
            if let Some(d) = map.keys().find(|d| !missing.contains(*d)) {
                return Err(Error::InvalidRedistribution(d.clone()));
            }
            let listed: f64 = map.values().copied().collect::<CompensatedSum>().value();
            if (listed - (1.0 - c)).abs() > crate::database::SUM_TOLERANCE {
                return Err(Error::ProbabilitySum(listed + c));
            }
            worlds.extend(missing.into_iter().map(|d| {
                let p = map.get(&d).copied().unwrap_or(0.0);
                (d, p)
            }));
        }
    }
    FiniteDiscretePdb::new(p0.schema().clone(), p0.universe().clone(), worlds)
}

/// A sub-instance or union of instances of `p` that is missing from its
/// sample space, if any.
pub fn missing_instance(p: &FiniteDiscretePdb) -> Option<Instance> {
    let worlds: Vec<&Instance> = p.worlds().map(|(d, _)| d).collect();
    for d in &worlds {
        for f in d.facts() {
            let smaller: Instance = d.facts().filter(|g| *g != f).cloned().collect();
            if !p.in_sample_space(&smaller) {
                return Some(smaller);
            }
        }
    }
    for (i, a) in worlds.iter().enumerate() {
        for b in &worlds[i + 1..] {
            let u = a.union(b);
            if !p.in_sample_space(&u) {
                return Some(u);
            }
        }
    }
    None
}

/// Whether the sample space of `p` is closed under subsets and unions, i.e.
/// is every subset of `F(p)`.
pub fn is_closed(p: &FiniteDiscretePdb) -> bool {
    missing_instance(p).is_none()
}

/// A finite PDB completed by an independent tuple-independent PDB over fresh
/// facts.
#[derive(Clone, Debug)]
pub struct Completion {
    original: FiniteDiscretePdb,
    original_facts: BTreeSet<Fact>,
    tail: TiPdb,
    p_empty: ProbabilityInterval,
}

/// Completes `p` by independent facts drawn from `tail`.
pub fn complete(p: &FiniteDiscretePdb, tail: FactProbabilityAssignment) -> Result<Completion> {
    if let Some(missing) = missing_instance(p) {
        return Err(Error::NotClosed { missing });
    }
    let original_facts = p.facts();
    for (f, q) in &tail.head {
        if original_facts.contains(f) {
            return Err(Error::OverlappingFacts(f.clone()));
        }
        if *q == 1.0 {
            return Err(Error::UnitTailProbability(f.clone()));
        }
    }
    let tail = TiPdb::new(p.schema().clone(), p.universe().clone(), tail)?;
    if let Some(g) = tail.tail() {
        if let Some(f) = original_facts.iter().find(|f| g.contains(f)) {
            return Err(Error::OverlappingFacts(f.clone()));
        }
        if g.max_prob_after(0) >= 1.0 {
            let (_, f, _) = g
                .iter_after(0)
                .find(|(_, _, q)| *q >= 1.0)
                .expect("maximum is attained");
            return Err(Error::UnitTailProbability(f));
        }
    }
    let p_empty = tail.instance_prob(&Instance::new());
    Ok(Completion {
        original: p.clone(),
        original_facts,
        tail,
        p_empty,
    })
}

impl Completion {
    pub fn original(&self) -> &FiniteDiscretePdb {
        &self.original
    }

    pub fn tail(&self) -> &TiPdb {
        &self.tail
    }

    /// `P_1({∅})`, the probability of no fresh fact.
    pub fn p_empty(&self) -> ProbabilityInterval {
        self.p_empty
    }

    /// Expected number of fresh facts.
    pub fn tail_mass(&self) -> f64 {
        self.tail.total_mass()
    }

    pub fn expected_size(&self) -> f64 {
        self.original.expected_size() + self.tail.total_mass()
    }

    /// `P'({d}) = P({d ∩ F}) · P_1({d ∖ F})`.
    pub fn instance_prob(&self, d: &Instance) -> ProbabilityInterval {
        let (core, fresh) = d.partition(|f| self.original_facts.contains(f));
        let p = self.original.prob(&core);
        if p == 0.0 {
            return ProbabilityInterval::ZERO;
        }
        self.tail.instance_prob(&fresh).scale(p)
    }

    /// `(P'(A | Ω), P(A))` for a set `A` of original instances. The two agree
    /// for every completion.
    pub fn condition_check(&self, a: &BTreeSet<Instance>) -> (f64, f64) {
        let empty = self.p_empty.mid();
        let joint: CompensatedSum = a.iter().map(|d| self.original.prob(d) * empty).collect();
        let omega: CompensatedSum = self.original.worlds().map(|(_, p)| p * empty).collect();
        let original: CompensatedSum = a.iter().map(|d| self.original.prob(d)).collect();
        (joint.value() / omega.value(), original.value())
    }

    /// Draws the original part by inverse CDF and the fresh part from the
    /// tail with cutoff `delta`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, delta: f64) -> Result<Instance> {
        crate::independence::check_delta(delta)?;
        let core = self.original.sample(rng);
        Ok(core.union(&self.tail.sample(rng, delta)?))
    }
}

/// Whether every tail probability is at most the matching summand of the
/// summable series `bound`. Head fact `i` (from 1) is compared with
/// `bound.prob(i)`; a rule-driven tail is compared level by level against
/// `bound` over all levels, ignoring exclusions.
pub fn bounded_tail_validate(tail: &FactProbabilityAssignment, bound: &TailRule) -> bool {
    if !bound.is_summable() {
        return false;
    }
    if tail
        .head
        .iter()
        .zip(1u64..)
        .any(|((_, p), i)| *p > bound.prob(i))
    {
        return false;
    }
    let Some(t) = &tail.tail else { return true };
    match (t.rule, *bound) {
        (TailRule::Constant { c }, _) | (TailRule::Geometric { c, .. }, _) if c == 0.0 => true,
        (TailRule::Constant { .. }, _) => false,
        (TailRule::Geometric { c, q }, TailRule::Geometric { c: c2, q: q2 }) => {
            // The ratio (q/q2)^L is non-increasing exactly when q <= q2, so
            // level 1 decides.
            q <= q2 && c * q <= c2 * q2
        }
        (TailRule::Geometric { .. }, TailRule::Constant { .. }) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::database::Schema;
    use crate::fact;
    use crate::independence::{Column, Tail, TailSource};
    use crate::universe::{Universe, Value};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inst(facts: &[Fact]) -> Instance {
        facts.iter().cloned().collect()
    }

    fn schema() -> Schema {
        Schema::new([("R".to_string(), 1)]).unwrap()
    }

    fn pdb(worlds: Vec<(Instance, f64)>) -> FiniteDiscretePdb {
        FiniteDiscretePdb::new(schema(), Universe::strings("fgh").unwrap(), worlds).unwrap()
    }

    fn f() -> Fact {
        fact!("R", "f")
    }

    fn g() -> Fact {
        fact!("R", "g")
    }

    fn small() -> Completion {
        let p = pdb(vec![(Instance::new(), 0.5), (inst(&[f()]), 0.5)]);
        complete(&p, FactProbabilityAssignment::head_only(vec![(g(), 0.25)])).unwrap()
    }

    #[test]
    fn closure_extend_uniform() {
        let p0 = pdb(vec![(Instance::new(), 0.5), (inst(&[f(), g()]), 0.5)]);
        assert!(!is_closed(&p0));
        let p = closure_extend(&p0, 0.5).unwrap();
        assert!(is_closed(&p));
        for d in [
            Instance::new(),
            inst(&[f()]),
            inst(&[g()]),
            inst(&[f(), g()]),
        ] {
            assert!((p.prob(&d) - 0.25).abs() < 1e-15, "{d}");
        }
    }

    #[test]
    fn closure_extend_edge_cases() {
        let closed = pdb(vec![(Instance::new(), 0.3), (inst(&[f()]), 0.7)]);
        assert_eq!(closure_extend(&closed, 1.0).unwrap(), closed);
        assert!(matches!(
            closure_extend(&closed, 0.5),
            Err(Error::NoMissingInstances(_))
        ));
        assert!(matches!(
            closure_extend(&closed, 0.0),
            Err(Error::InvalidClosureConstant(_))
        ));
        assert!(matches!(
            closure_extend(&closed, 1.5),
            Err(Error::InvalidClosureConstant(_))
        ));
    }

    #[test]
    fn closure_extend_explicit() {
        let p0 = pdb(vec![(Instance::new(), 0.5), (inst(&[f(), g()]), 0.5)]);
        let how = Redistribution::Explicit([(inst(&[f()]), 0.2)].into());
        let p = closure_extend_with(&p0, 0.8, &how).unwrap();
        assert_eq!(p.prob(&inst(&[f()])), 0.2);
        assert_eq!(p.prob(&inst(&[g()])), 0.0);
        assert!(is_closed(&p));
        let bad = Redistribution::Explicit([(Instance::new(), 0.2)].into());
        assert!(matches!(
            closure_extend_with(&p0, 0.8, &bad),
            Err(Error::InvalidRedistribution(_))
        ));
    }

    #[test]
    fn not_closed_names_missing_instance() {
        let p0 = pdb(vec![(Instance::new(), 0.5), (inst(&[f(), g()]), 0.5)]);
        match complete(&p0, FactProbabilityAssignment::default()) {
            Err(Error::NotClosed { missing }) => assert!(!p0.in_sample_space(&missing)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn complete_rejections() {
        let p = pdb(vec![(Instance::new(), 0.5), (inst(&[f()]), 0.5)]);
        let overlap = FactProbabilityAssignment::head_only(vec![(f(), 0.1)]);
        assert!(matches!(
            complete(&p, overlap),
            Err(Error::OverlappingFacts(_))
        ));
        let unit = FactProbabilityAssignment::head_only(vec![(g(), 1.0)]);
        assert!(matches!(
            complete(&p, unit),
            Err(Error::UnitTailProbability(_))
        ));
        let divergent = FactProbabilityAssignment::with_tail(
            vec![],
            Tail::new(
                TailSource::Enumeration { relations: None },
                TailRule::Constant { c: 0.1 },
            )
            .excluding([f()]),
        );
        assert!(matches!(
            complete(&p, divergent),
            Err(Error::DivergentAssignment(_))
        ));
        let overlapping_tail = FactProbabilityAssignment::with_tail(
            vec![],
            Tail::new(
                TailSource::Enumeration { relations: None },
                TailRule::Geometric { c: 1.0, q: 0.5 },
            ),
        );
        assert!(matches!(
            complete(&p, overlapping_tail),
            Err(Error::OverlappingFacts(_))
        ));
    }

    #[test]
    fn empty_tail_is_closed_world() {
        let p = pdb(vec![(Instance::new(), 0.5), (inst(&[f()]), 0.5)]);
        let c = complete(&p, FactProbabilityAssignment::default()).unwrap();
        assert_eq!(c.p_empty(), ProbabilityInterval::point(1.0));
        assert_eq!(c.instance_prob(&inst(&[f()])).mid(), 0.5);
        assert_eq!(c.instance_prob(&inst(&[g()])).mid(), 0.0);
    }

    #[test]
    fn small_completion_probabilities() {
        let c = small();
        assert_eq!(c.p_empty().mid(), 0.75);
        assert!((c.instance_prob(&inst(&[f(), g()])).mid() - 0.125).abs() < 1e-15);
        assert!((c.instance_prob(&inst(&[f()])).mid() - 0.375).abs() < 1e-15);
        assert_eq!(c.instance_prob(&inst(&[fact!("R", "h")])).mid(), 0.0);
        assert_eq!(c.condition_check(&[Instance::new()].into()), (0.5, 0.5));
        assert_eq!(c.condition_check(&BTreeSet::new()), (0.0, 0.0));
        let all: BTreeSet<Instance> = c.original().worlds().map(|(d, _)| d.clone()).collect();
        assert_eq!(c.condition_check(&all), (1.0, 1.0));
    }

    #[test]
    fn sampling_fresh_fact_frequency() {
        let c = small();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut with_g = 0;
        let mut no_fresh = 0;
        let mut no_fresh_with_f = 0;
        for _ in 0..n {
            let d = c.sample(&mut rng, 0.01).unwrap();
            if d.contains(&g()) {
                with_g += 1;
            } else {
                no_fresh += 1;
                no_fresh_with_f += d.contains(&f()) as usize;
            }
        }
        let freq = with_g as f64 / n as f64;
        assert!((0.2459..=0.2541).contains(&freq), "{freq}");
        let cond = no_fresh_with_f as f64 / no_fresh as f64;
        let sigma = (0.25 / no_fresh as f64).sqrt();
        assert!((cond - 0.5).abs() <= 3.0 * sigma, "{cond}");
    }

    fn example_tail() -> FactProbabilityAssignment {
        let letters = ["A", "B", "C", "D"].map(Value::str).to_vec();
        let tail = Tail::new(
            TailSource::Family {
                relation: "R".to_string(),
                columns: vec![Column::Fixed(letters), Column::Ranging],
            },
            TailRule::Geometric { c: 1.0, q: 0.5 },
        )
        .excluding([
            fact!("R", "A", 1u64),
            fact!("R", "B", 1u64),
            fact!("R", "B", 2u64),
            fact!("R", "C", 3u64),
        ]);
        FactProbabilityAssignment::with_tail(vec![], tail)
    }

    #[test]
    fn example_completion_tail_mass() {
        let schema = Schema::new([("R".to_string(), 2)]).unwrap();
        let worlds = crate::database::tests::table_worlds()
            .into_iter()
            .map(|(fs, p)| (inst(&fs), p));
        let p = FiniteDiscretePdb::new(schema, Universe::mixed("ABCD").unwrap(), worlds).unwrap();
        let c = complete(&p, example_tail()).unwrap();
        assert!((c.tail_mass() - 2.625).abs() < 1e-12);
        assert!(c.p_empty().lo() > 0.0);
        let d = inst(&[fact!("R", "A", 1u64)]);
        let expected = p.prob(&d) * c.p_empty().mid();
        assert!(c.instance_prob(&d).contains_within(expected, 1e-12));
        assert!(bounded_tail_validate(
            &example_tail(),
            &TailRule::Geometric { c: 1.0, q: 0.5 }
        ));
    }

    #[test]
    fn bounded_tail_examples() {
        let geometric = |q| {
            FactProbabilityAssignment::with_tail(
                vec![],
                Tail::new(
                    TailSource::Enumeration { relations: None },
                    TailRule::Geometric { c: 1.0, q },
                ),
            )
        };
        let half = TailRule::Geometric { c: 1.0, q: 0.5 };
        let quarter = TailRule::Geometric { c: 1.0, q: 0.25 };
        assert!(bounded_tail_validate(&geometric(0.5), &half));
        assert!(!bounded_tail_validate(&geometric(0.5), &quarter));
        assert!(bounded_tail_validate(&geometric(0.25), &half));
        assert!(bounded_tail_validate(
            &FactProbabilityAssignment::default(),
            &quarter
        ));
        let head = FactProbabilityAssignment::head_only(vec![(f(), 0.5), (g(), 0.3)]);
        assert!(!bounded_tail_validate(&head, &half));
        assert!(!bounded_tail_validate(
            &geometric(0.5),
            &TailRule::Constant { c: 0.1 }
        ));
    }

    /// Fresh facts in a strictly positive tail: every Boolean combination of
    /// three of them has positive probability.
    #[test]
    fn fresh_combinations_positive() {
        let p = pdb(vec![(Instance::new(), 1.0)]);
        let fresh = [f(), g(), fact!("R", "h")];
        let tail =
            FactProbabilityAssignment::head_only(fresh.iter().map(|x| (x.clone(), 0.3)).collect());
        let c = complete(&p, tail).unwrap();
        for mask in 0..8 {
            let d: Instance = (0..3)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| fresh[i].clone())
                .collect();
            assert!(c.instance_prob(&d).lo() > 0.0);
        }
    }

    fn arb_closed() -> impl Strategy<Value = FiniteDiscretePdb> {
        (1usize..=3, prop::collection::vec(0.01f64..1.0, 8)).prop_map(|(k, weights)| {
            let facts: Vec<Fact> = ["f", "g", "h"][..k]
                .iter()
                .map(|s| fact!("R", *s))
                .collect();
            let worlds: Vec<Instance> = subsets(&facts).collect();
            let total: f64 = weights[..worlds.len()].iter().sum();
            pdb(worlds
                .into_iter()
                .zip(&weights)
                .map(|(d, w)| (d, w / total))
                .collect())
        })
    }

    proptest! {
        #[test]
        fn completion_condition_holds(p in arb_closed(), q in 0.0f64..0.99, pick in any::<u8>()) {
            let fresh = Fact::new("S", vec![Value::Nat(1)]);
            let schema = Schema::new([("R".to_string(), 1), ("S".to_string(), 1)]).unwrap();
            let p = FiniteDiscretePdb::new(schema, Universe::mixed("fgh").unwrap(), p.worlds().map(|(d, x)| (d.clone(), x))).unwrap();
            let c = complete(&p, FactProbabilityAssignment::head_only(vec![(fresh, q)])).unwrap();
            let a: BTreeSet<Instance> = p.worlds().enumerate().filter(|(i, _)| pick >> (i % 8) & 1 == 1).map(|(_, (d, _))| d.clone()).collect();
            let (conditioned, original) = c.condition_check(&a);
            prop_assert!((conditioned - original).abs() <= 1e-10);
            let omega: CompensatedSum = p.worlds().map(|(d, _)| c.instance_prob(d).mid()).collect();
            prop_assert!((omega.value() - c.p_empty().mid()).abs() <= 1e-12);
        }

        #[test]
        fn closure_extend_scales_original(p in arb_closed(), c in 0.05f64..=1.0) {
            let sub: Vec<(Instance, f64)> = p.worlds().filter(|(d, _)| d.len() != 1).map(|(d, x)| (d.clone(), x)).collect();
            let total: f64 = sub.iter().map(|(_, x)| x).sum();
            let p0 = pdb(sub.into_iter().map(|(d, x)| (d, x / total)).collect());
            prop_assume!(!is_closed(&p0));
            let p = closure_extend(&p0, c).unwrap();
            let sum: f64 = p.worlds().map(|(_, x)| x).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for (d, x) in p0.worlds() {
                prop_assert!((p.prob(d) - c * x).abs() <= 1e-12);
            }
            // Completing the extension and conditioning on Ω_0 with no fresh
            // facts gives back P_0.
            let comp = complete(&p, FactProbabilityAssignment::default()).unwrap();
            let omega0: BTreeSet<Instance> = p0.worlds().map(|(d, _)| d.clone()).collect();
            let (mass0, _) = comp.condition_check(&omega0);
            for (d, x) in p0.worlds() {
                let (cond, _) = comp.condition_check(&[d.clone()].into());
                prop_assert!((cond / mass0 - x).abs() <= 1e-10);
            }
        }
    }
}
