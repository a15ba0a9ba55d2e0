//! Log-domain products and rigorous enclosures for infinite products.
//!
//! Every probability of a tuple-independent world is a product of the form
//! `∏ p_f · ∏ (1 - p_f)`, where the second factor runs over infinitely many
//! facts. The helpers here evaluate the finite part accurately and bound the
//! infinite remainder from both sides.

use std::fmt;

use crate::error::NumericsError;

/// Maximum length accepted by [`subset_expansion_check`].
pub const SUBSET_EXPANSION_MAX_LEN: usize = 20;

/// Natural logarithm of a probability, in `[-inf, 0]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogProbability(f64);

impl LogProbability {
    pub const ZERO: LogProbability = LogProbability(f64::NEG_INFINITY);
    pub const ONE: LogProbability = LogProbability(0.0);

    pub fn new(value: f64) -> Result<Self, NumericsError> {
        if value.is_nan() || value > 0.0 {
            return Err(NumericsError::InvalidLogProbability(value));
        }
        Ok(LogProbability(value))
    }

    pub fn from_prob(p: f64) -> Result<Self, NumericsError> {
        check_probability(p)?;
        Ok(LogProbability(p.ln()))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl std::ops::Mul for LogProbability {
    type Output = LogProbability;

    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Self) -> Self::Output {
        LogProbability(self.0 + rhs.0)
    }
}

/// A closed interval `[lo, hi]` inside `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityInterval {
    lo: f64,
    hi: f64,
}

impl ProbabilityInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, NumericsError> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(NumericsError::InvalidInterval { lo, hi });
        }
        Ok(ProbabilityInterval { lo, hi })
    }

    /// Clamps both ends into `[0, 1]`; rounding can push products a hair out.
    pub(crate) fn clamped(lo: f64, hi: f64) -> Self {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0).max(lo);
        ProbabilityInterval { lo, hi }
    }

    pub fn point(p: f64) -> Self {
        Self::clamped(p, p)
    }

    pub const ZERO: ProbabilityInterval = ProbabilityInterval { lo: 0.0, hi: 0.0 };

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    /// Widens by `slack` on each side; used when comparing against values
    /// computed along a different floating-point path.
    pub fn contains_within(&self, p: f64, slack: f64) -> bool {
        self.lo - slack <= p && p <= self.hi + slack
    }

    pub fn scale(self, factor: f64) -> Self {
        Self::clamped(self.lo * factor, self.hi * factor)
    }
}

impl std::ops::Mul for ProbabilityInterval {
    type Output = ProbabilityInterval;

    fn mul(self, other: Self) -> Self {
        Self::clamped(self.lo * other.lo, self.hi * other.hi)
    }
}

impl fmt::Display for ProbabilityInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub(crate) fn check_probability(p: f64) -> Result<(), NumericsError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(NumericsError::ProbabilityOutOfRange(p))
    }
}

/// Sums already-computed log terms. Terms are sorted first so the result does
/// not depend on input order.
pub(crate) fn sum_log_terms(mut terms: Vec<f64>) -> LogProbability {
    if terms.contains(&f64::NEG_INFINITY) {
        return LogProbability::ZERO;
    }
    terms.sort_by(f64::total_cmp);
    let total = terms.into_iter().collect::<CompensatedSum>().value();
    LogProbability(total.min(0.0))
}

/// `Σ ln(1 - p)` over `ps`, evaluated with `ln_1p`.
pub fn log_product_one_minus(ps: &[f64]) -> Result<LogProbability, NumericsError> {
    let mut terms = Vec::with_capacity(ps.len());
    for &p in ps {
        check_probability(p)?;
        terms.push((-p).ln_1p());
    }
    Ok(sum_log_terms(terms))
}

/// `Σ ln p` over `ps`.
pub fn log_product(ps: &[f64]) -> Result<LogProbability, NumericsError> {
    let mut terms = Vec::with_capacity(ps.len());
    for &p in ps {
        check_probability(p)?;
        terms.push(p.ln());
    }
    Ok(sum_log_terms(terms))
}

/// Lower bound `exp(-(3/2) s)` on `∏ (1 - p_i)` for any sequence with
/// `Σ p_i = s` and every `p_i ≤ 1/2`.
///
/// The bound follows from `ln(1 - p) ≥ -p - p²` on `[0, 1/2]`, together with
/// `p² ≤ p/2` there. The sign is negative: the printed statement of the
/// inequality sometimes drops it, but only the negative form is true.
pub fn euler_tail_lower_bound(tail_sum: f64) -> Result<f64, NumericsError> {
    if tail_sum.is_nan() || tail_sum < 0.0 {
        return Err(NumericsError::NegativeTailSum(tail_sum));
    }
    Ok((-1.5 * tail_sum).exp())
}

/// Encloses `∏_head (1 - p) · ∏_tail (1 - p)` for every tail whose total mass
/// is at most `tail_sum_bound` and whose entries are at most `tail_max_p`.
pub fn product_one_minus_enclosure(
    head: &[f64],
    tail_sum_bound: f64,
    tail_max_p: f64,
) -> Result<ProbabilityInterval, NumericsError> {
    if tail_sum_bound.is_nan() || tail_sum_bound < 0.0 {
        return Err(NumericsError::NegativeTailSum(tail_sum_bound));
    }
    if tail_sum_bound > 0.0 && !(0.0..=0.5).contains(&tail_max_p) {
        return Err(NumericsError::TailProbabilityTooLarge(tail_max_p));
    }
    let head_product = log_product_one_minus(head)?.prob();
    let lo = head_product * euler_tail_lower_bound(tail_sum_bound)?;
    Ok(ProbabilityInterval::clamped(lo, head_product))
}

/// Evaluates both sides of `∏ (1 + a_i) = Σ_J ∏_{i ∈ J} a_i` by brute force
/// over all subsets `J`.
pub fn subset_expansion_check(a: &[f64]) -> Result<(f64, f64), NumericsError> {
    if a.len() > SUBSET_EXPANSION_MAX_LEN {
        return Err(NumericsError::TooLong {
            len: a.len(),
            max: SUBSET_EXPANSION_MAX_LEN,
        });
    }
    let lhs = a.iter().map(|x| 1.0 + x).product::<f64>();
    let mut rhs = CompensatedSum::new();
    for mask in 0u32..(1u32 << a.len()) {
        let term = a
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, x)| *x)
            .product::<f64>();
        rhs.add(term);
    }
    Ok((lhs, rhs.value()))
}
