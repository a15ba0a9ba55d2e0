//! Countable universes and the canonical enumeration of facts.
//!
//! A [`Universe`] is a computable bijection between the positive integers and
//! its elements. A [`FactEnumeration`] lifts that to all facts of a schema:
//! relations take turns in declaration order, and the tuples of each relation
//! follow nested Cantor pairing of the element indices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::database::{Fact, Schema};
use crate::error::UniverseError;

/// An element of a universe.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Nat(u64),
    Str(String),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }
}

impl From<u64> for Value {
    fn from(n: u64) -> Self {
        Value::Nat(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "{n}"),
            Value::Str(s) => {
                f.write_str("'")?;
                for c in s.chars() {
                    if c == '\'' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("'")
            }
        }
    }
}

/// A countable, computable universe.
///
/// `Naturals` is `{1, 2, 3, ...}`. `Strings` is every finite string over the
/// alphabet, in shortlex order starting from the empty string. `Mixed` is
/// the disjoint union of the two, interleaved.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Universe {
    Naturals,
    Strings { alphabet: Vec<char> },
    Mixed { alphabet: Vec<char> },
}

impl Universe {
    pub fn strings(alphabet: &str) -> Result<Self, UniverseError> {
        Ok(Universe::Strings {
            alphabet: checked_alphabet(alphabet)?,
        })
    }

    pub fn mixed(alphabet: &str) -> Result<Self, UniverseError> {
        Ok(Universe::Mixed {
            alphabet: checked_alphabet(alphabet)?,
        })
    }

    pub fn alphabet(&self) -> Option<&[char]> {
        match self {
            Universe::Naturals => None,
            Universe::Strings { alphabet } | Universe::Mixed { alphabet } => Some(alphabet),
        }
    }

    /// The `k`-th element, `k ≥ 1`.
    pub fn element_at(&self, k: u64) -> Result<Value, UniverseError> {
        if k == 0 {
            return Err(UniverseError::IndexZero);
        }
        Ok(match self {
            Universe::Naturals => Value::Nat(k),
            Universe::Strings { alphabet } => Value::Str(shortlex_at(alphabet, k - 1)?),
            Universe::Mixed { alphabet } => {
                if k % 2 == 1 {
                    Value::Nat(k.div_ceil(2))
                } else {
                    Value::Str(shortlex_at(alphabet, k / 2 - 1)?)
                }
            }
        })
    }

    /// Inverse of [`Universe::element_at`].
    pub fn index_of(&self, v: &Value) -> Result<u64, UniverseError> {
        let outside = || UniverseError::NotInUniverse(v.clone());
        match (self, v) {
            (Universe::Naturals, Value::Nat(n)) if *n >= 1 => Ok(*n),
            (Universe::Strings { alphabet }, Value::Str(s)) => shortlex_rank(alphabet, s)?
                .ok_or_else(outside)?
                .checked_add(1)
                .ok_or(UniverseError::Overflow),
            (Universe::Mixed { .. }, Value::Nat(n)) if *n >= 1 => n
                .checked_mul(2)
                .map(|m| m - 1)
                .ok_or(UniverseError::Overflow),
            (Universe::Mixed { alphabet }, Value::Str(s)) => {
                let r = shortlex_rank(alphabet, s)?.ok_or_else(outside)?;
                r.checked_add(1)
                    .and_then(|r| r.checked_mul(2))
                    .ok_or(UniverseError::Overflow)
            }
            _ => Err(outside()),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Universe::Naturals, Value::Nat(n)) => *n >= 1,
            (Universe::Strings { alphabet }, Value::Str(s)) => {
                s.chars().all(|c| alphabet.contains(&c))
            }
            (Universe::Mixed { .. }, Value::Nat(n)) => *n >= 1,
            (Universe::Mixed { alphabet }, Value::Str(s)) => {
                s.chars().all(|c| alphabet.contains(&c))
            }
            _ => false,
        }
    }

    /// The first `count` elements (in enumeration order) that are not in
    /// `avoid`.
    pub fn fresh_elements<'a>(
        &self,
        avoid: impl Fn(&Value) -> bool + 'a,
        count: usize,
    ) -> Vec<Value> {
        let mut out = Vec::with_capacity(count);
        let mut k = 1u64;
        while out.len() < count {
            // Every avoided set is finite, so this terminates.
            if let Ok(v) = self.element_at(k) {
                if !avoid(&v) {
                    out.push(v);
                }
            }
            k += 1;
        }
        out
    }
}

fn checked_alphabet(alphabet: &str) -> Result<Vec<char>, UniverseError> {
    let symbols: Vec<char> = alphabet.chars().collect();
    if symbols.is_empty() {
        return Err(UniverseError::EmptyAlphabet);
    }
    for (i, c) in symbols.iter().enumerate() {
        if symbols[..i].contains(c) {
            return Err(UniverseError::DuplicateSymbol(*c));
        }
    }
    Ok(symbols)
}

/// String with 0-based shortlex rank `r`.
fn shortlex_at(alphabet: &[char], mut r: u64) -> Result<String, UniverseError> {
    let s = alphabet.len() as u64;
    let mut len = 0u32;
    let mut block = 1u64; // number of strings of length `len`
    while r >= block {
        r -= block;
        len += 1;
        block = match block.checked_mul(s) {
            Some(b) => b,
            // `r` fits in u64, so it is smaller than any block that overflows.
            None => break,
        };
    }
    let mut digits = vec![0usize; len as usize];
    for d in digits.iter_mut().rev() {
        *d = (r % s) as usize;
        r /= s;
    }
    Ok(digits.into_iter().map(|d| alphabet[d]).collect())
}

/// 0-based shortlex rank of `word`, or `None` if it uses foreign symbols.
fn shortlex_rank(alphabet: &[char], word: &str) -> Result<Option<u64>, UniverseError> {
    let s = alphabet.len() as u64;
    let mut shorter = 0u64;
    let mut block = 1u64;
    let mut offset = 0u64;
    for c in word.chars() {
        let Some(d) = alphabet.iter().position(|a| *a == c) else {
            return Ok(None);
        };
        shorter = shorter.checked_add(block).ok_or(UniverseError::Overflow)?;
        block = block.checked_mul(s).ok_or(UniverseError::Overflow)?;
        offset = offset
            .checked_mul(s)
            .and_then(|o| o.checked_add(d as u64))
            .ok_or(UniverseError::Overflow)?;
    }
    shorter
        .checked_add(offset)
        .map(Some)
        .ok_or(UniverseError::Overflow)
}

fn cantor_pair(a: u64, b: u64) -> Result<u64, UniverseError> {
    let w = a.checked_add(b).ok_or(UniverseError::Overflow)?;
    let tri = if w % 2 == 0 {
        (w / 2).checked_mul(w + 1)
    } else {
        w.checked_mul(w.div_ceil(2))
    };
    tri.and_then(|t| t.checked_add(a))
        .ok_or(UniverseError::Overflow)
}

fn cantor_unpair(z: u64) -> (u64, u64) {
    // Largest w with w(w+1)/2 ≤ z.
    let mut w = ((8 * z as u128 + 1).isqrt() as u64 - 1) / 2;
    while (w as u128) * (w as u128 + 1) / 2 > z as u128 {
        w -= 1;
    }
    let t = ((w as u128) * (w as u128 + 1) / 2) as u64;
    let a = z - t;
    (a, w - a)
}

/// Positive element indices ↦ positive tuple index.
fn tuple_code(indices: &[u64]) -> Result<u64, UniverseError> {
    match indices {
        [] => Ok(1),
        [e] => Ok(*e),
        [e, rest @ ..] => Ok(cantor_pair(e - 1, tuple_code(rest)? - 1)?
            .checked_add(1)
            .ok_or(UniverseError::Overflow)?),
    }
}

fn tuple_decode(code: u64, arity: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(arity);
    let mut z = code;
    for _ in 1..arity {
        let (a, b) = cantor_unpair(z - 1);
        out.push(a + 1);
        z = b + 1;
    }
    out.push(z);
    out
}

/// The canonical bijection between positive integers and the facts of a
/// schema over a universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactEnumeration {
    schema: Schema,
    universe: Universe,
}

impl FactEnumeration {
    pub fn new(schema: Schema, universe: Universe) -> Result<Self, UniverseError> {
        if let Some((name, _)) = schema.relations().find(|(_, a)| *a == 0) {
            return Err(UniverseError::NullaryRelation(name.to_string()));
        }
        Ok(FactEnumeration { schema, universe })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn fact_at(&self, k: u64) -> Result<Fact, UniverseError> {
        if k == 0 {
            return Err(UniverseError::IndexZero);
        }
        let m = self.schema.len() as u64;
        let (name, arity) = self
            .schema
            .relation_at(((k - 1) % m) as usize)
            .expect("schema is nonempty");
        let code = (k - 1) / m + 1;
        let args = tuple_decode(code, arity)
            .into_iter()
            .map(|i| self.universe.element_at(i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Fact::new(name, args))
    }

    pub fn fact_index(&self, f: &Fact) -> Result<u64, UniverseError> {
        let pos = self.schema.check_fact(f)?;
        let indices = f
            .args()
            .iter()
            .map(|v| self.universe.index_of(v))
            .collect::<Result<Vec<_>, _>>()?;
        let code = tuple_code(&indices)?;
        let m = self.schema.len() as u64;
        (code - 1)
            .checked_mul(m)
            .and_then(|x| x.checked_add(pos as u64 + 1))
            .ok_or(UniverseError::Overflow)
    }

    /// Facts in enumeration order, starting from index 1.
    pub fn iter(&self) -> impl Iterator<Item = Fact> + '_ {
        (1u64..).map_while(move |k| self.fact_at(k).ok())
    }
}
