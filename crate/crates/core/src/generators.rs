//! The seven sextic generators of the elimination ideal in the entries of
//! `Q2` and `Q3`.
//!
//! Variables are ordered `q21..q26, q31..q36` where `qj1..qj6` are the
//! upper-triangular entries `(00, 01, 02, 11, 12, 22)` of the symmetric
//! matrix `Qj`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;
use serde::Deserialize;

use crate::error::{Error, Result};

/// JSON table shipped with the crate.
pub const EMBEDDED_TABLE: &str = include_str!("../data/generators.json");

pub const NUM_GENERATORS: usize = 7;
pub const NUM_VARIABLES: usize = 12;

const VARIABLES: [&str; NUM_VARIABLES] =
    ["q21", "q22", "q23", "q24", "q25", "q26", "q31", "q32", "q33", "q34", "q35", "q36"];

/// Weight of each symmetric entry under the congruence `diag(1, 1, t)`:
/// how many times index 2 appears in it.
pub(crate) const THIRD_INDEX_COUNT: [u8; 6] = [0, 0, 1, 0, 1, 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    /// Exponents of `q21..q26` followed by `q31..q36`.
    pub exps: [u8; NUM_VARIABLES],
    pub coef: f64,
}

impl Term {
    /// Exponent block of view `j` (0 for `Q2`, 1 for `Q3`).
    pub fn block(&self, j: usize) -> &[u8] {
        &self.exps[6 * j..6 * j + 6]
    }

    /// Number of index-2 occurrences over both views.
    pub(crate) fn third_index_weight(&self) -> u32 {
        self.exps
            .iter()
            .enumerate()
            .map(|(i, &e)| e as u32 * THIRD_INDEX_COUNT[i % 6] as u32)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub terms: Vec<Term>,
    /// Homogeneity degrees in the entries of `Q2` and `Q3`.
    pub scale_degrees: (u32, u32),
}

impl Generator {
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exps.iter().map(|&e| e as u32).sum::<u32>()).max().unwrap_or(0)
    }

    /// `(value, sum of absolute term magnitudes)` at the given entries.
    pub fn evaluate(&self, q2: &[f64; 6], q3: &[f64; 6]) -> (f64, f64) {
        let mut value = 0.0;
        let mut magnitude = 0.0;
        for t in &self.terms {
            let mut m = t.coef;
            for (i, &e) in t.exps.iter().enumerate() {
                let q = if i < 6 { q2[i] } else { q3[i - 6] };
                for _ in 0..e {
                    m *= q;
                }
            }
            value += m;
            magnitude += m.abs();
        }
        (value, magnitude)
    }
}

/// Immutable table of the seven generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTable {
    pub generators: Vec<Generator>,
    pub derivation: String,
}

#[derive(Deserialize)]
struct RawTerm {
    exps: Vec<u32>,
    coef: String,
}

#[derive(Deserialize)]
struct RawTable {
    variables: Vec<String>,
    polynomials: Vec<Vec<RawTerm>>,
    scale_degrees: Vec<[u32; 2]>,
    derivation: String,
}

fn parse_rational(s: &str) -> Result<f64> {
    let bad = || Error::InvalidTable(format!("bad coefficient {s:?}"));
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s.trim(), "1"),
    };
    let p: f64 = p.parse::<i128>().map_err(|_| bad())? as f64;
    let q: f64 = q.parse::<i128>().map_err(|_| bad())? as f64;
    if q == 0.0 {
        return Err(bad());
    }
    Ok(p / q)
}

impl GeneratorTable {
    /// The table compiled into the crate.
    pub fn embedded() -> Self {
        Self::from_json(EMBEDDED_TABLE).expect("embedded generator table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawTable =
            serde_json::from_str(text).map_err(|e| Error::InvalidTable(e.to_string()))?;
        if raw.variables.len() != NUM_VARIABLES
            || raw.variables.iter().zip(VARIABLES).any(|(a, b)| a != b)
        {
            return Err(Error::InvalidTable("unexpected variable list".into()));
        }
        if raw.polynomials.len() != NUM_GENERATORS || raw.scale_degrees.len() != NUM_GENERATORS {
            return Err(Error::InvalidTable(format!(
                "expected {NUM_GENERATORS} polynomials, found {}",
                raw.polynomials.len()
            )));
        }
        let mut generators = Vec::with_capacity(NUM_GENERATORS);
        for (poly, deg) in raw.polynomials.iter().zip(&raw.scale_degrees) {
            let mut terms = Vec::with_capacity(poly.len());
            for rt in poly {
                if rt.exps.len() != NUM_VARIABLES {
                    return Err(Error::InvalidTable("exponent vector must have 12 entries".into()));
                }
                let mut exps = [0u8; NUM_VARIABLES];
                for (e, &v) in exps.iter_mut().zip(&rt.exps) {
                    *e = u8::try_from(v).map_err(|_| Error::InvalidTable("exponent too large".into()))?;
                }
                let coef = parse_rational(&rt.coef)?;
                if !coef.is_finite() {
                    return Err(Error::InvalidTable("non-finite coefficient".into()));
                }
                let a: u32 = exps[..6].iter().map(|&e| e as u32).sum();
                let b: u32 = exps[6..].iter().map(|&e| e as u32).sum();
                if (a, b) != (deg[0], deg[1]) {
                    return Err(Error::InvalidTable("term does not match declared scale degrees".into()));
                }
                terms.push(Term { exps, coef });
            }
            if terms.is_empty() {
                return Err(Error::InvalidTable("empty polynomial".into()));
            }
            // Every generator must be even or odd under Q -> D Q D with
            // D = diag(1, 1, -1); the case assemblies rely on it.
            let parity = terms[0].third_index_weight() % 2;
            if terms.iter().any(|t| t.third_index_weight() % 2 != parity) {
                return Err(Error::InvalidTable("generator mixes parities in the third index".into()));
            }
            generators.push(Generator { terms, scale_degrees: (deg[0], deg[1]) });
        }
        Ok(Self { generators, derivation: raw.derivation })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}
