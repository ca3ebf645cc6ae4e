//! Pairwise divergence between candidate outputs.
//!
//! Edit mode compares texts over unicode scalar values with no normalization
//! of whitespace or case. Cosine mode compares embeddings. Both produce a
//! [`DivergenceMatrix`] with entries in `[0, 1]`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CeError, Result};

/// One model's output for a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub model_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Candidate {
    pub fn new(model_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            text: text.into(),
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// All candidate outputs for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    pub candidates: Vec<Candidate>,
}

impl Sample {
    pub fn new(sample_id: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        Self {
            sample_id: sample_id.into(),
            image_ref: None,
            truth: None,
            candidates,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.text.as_str())
    }

    /// Checks the structural invariants: at least two candidates, non-empty
    /// unique model ids, and a single embedding dimension among candidates
    /// that carry one.
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(CeError::TooFewCandidates(self.candidates.len()));
        }
        let mut seen = HashSet::new();
        let mut dim = None;
        for (index, c) in self.candidates.iter().enumerate() {
            if c.model_id.is_empty() {
                return Err(CeError::EmptyModelId { index });
            }
            if !seen.insert(c.model_id.as_str()) {
                return Err(CeError::DuplicateModelId(c.model_id.clone()));
            }
            if let Some(e) = &c.embedding {
                match dim {
                    None => dim = Some(e.len()),
                    Some(d) if d != e.len() => {
                        return Err(CeError::DimensionMismatch {
                            expected: d,
                            found: e.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// Divergence used to fill a [`DivergenceMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Character-level Levenshtein normalized by the longer length.
    #[default]
    EditDistance,
    /// `(1 - cos) / 2` between embeddings.
    CosineDistance,
    /// Euclidean distance between embeddings, clamped to 1. Callers are
    /// expected to scale coordinates so that the largest distance of interest
    /// is at most 1.
    Euclidean,
}

impl Metric {
    pub fn needs_embeddings(self) -> bool {
        !matches!(self, Metric::EditDistance)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::EditDistance => "edit",
            Metric::CosineDistance => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = CeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edit" | "edit-distance" => Ok(Metric::EditDistance),
            "cosine" | "cosine-distance" => Ok(Metric::CosineDistance),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(CeError::UnknownVariant {
                kind: "metric",
                value: s.to_string(),
            }),
        }
    }
}

/// Symmetric `n x n` matrix of pairwise divergences with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMatrix {
    n: usize,
    entries: Vec<f64>,
    metric: Metric,
}

impl DivergenceMatrix {
    /// Builds a matrix from an upper-triangle entry function. `f(i, j)` is
    /// only called with `i < j`.
    pub fn from_fn(
        n: usize,
        metric: Metric,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(CeError::TooFewCandidates(n));
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                check_entry(i, j, v)?;
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Ok(Self { n, entries, metric })
    }

    /// Builds a matrix from full rows, checking every invariant.
    pub fn from_rows(rows: &[Vec<f64>], metric: Metric) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(CeError::TooFewCandidates(n));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(CeError::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(CeError::InvalidMatrix(format!(
                    "diagonal entry {i} is not zero"
                )));
            }
            for j in (i + 1)..n {
                let v = entries[i * n + j];
                check_entry(i, j, v)?;
                if v != entries[j * n + i] {
                    return Err(CeError::InvalidMatrix(format!(
                        "entry ({i},{j}) is not symmetric"
                    )));
                }
            }
        }
        Ok(Self { n, entries, metric })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Upper-triangle entries in row-major order.
    pub fn upper_triangle(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).map(move |j| self.get(i, j)))
    }

    /// Reorders rows and columns so that new index `k` holds old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(CeError::LengthMismatch {
                what: "permutation",
                expected: self.n,
                found: perm.len(),
            });
        }
        Self::from_fn(self.n, self.metric, |i, j| self.get(perm[i], perm[j]))
    }
}

fn check_entry(i: usize, j: usize, v: f64) -> Result<()> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(CeError::InvalidMatrix(format!(
            "entry ({i},{j}) = {v} is outside [0, 1]"
        )));
    }
    Ok(())
}

/// Minimum number of single-character insertions, deletions and
/// substitutions turning `a` into `b`, counted over unicode scalar values.
///
/// Uses Myers' bit-parallel algorithm with Hyyrö's block extension, so the
/// cost is `O(ceil(m / 64) * n)` word operations for the shorter length `m`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

pub(crate) fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);

    let (pattern, text) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if pattern.is_empty() {
        return text.len();
    }
    myers_blocks(pattern, text)
}

fn myers_blocks(pattern: &[char], text: &[char]) -> usize {
    let m = pattern.len();
    let blocks = m.div_ceil(64);

    // Match masks per distinct pattern character, `blocks` words each.
    let mut slot: HashMap<char, usize> = HashMap::new();
    let mut peq: Vec<u64> = Vec::new();
    for (i, &c) in pattern.iter().enumerate() {
        let s = *slot.entry(c).or_insert_with(|| {
            peq.extend(std::iter::repeat_n(0, blocks));
            peq.len() / blocks - 1
        });
        peq[s * blocks + i / 64] |= 1u64 << (i % 64);
    }
    let zeros = vec![0u64; blocks];

    let mut pv = vec![u64::MAX; blocks];
    let mut mv = vec![0u64; blocks];
    let last_bit = 1u64 << ((m - 1) % 64);
    let mut score = m;

    for c in text {
        let eq_row = match slot.get(c) {
            Some(&s) => &peq[s * blocks..(s + 1) * blocks],
            None => &zeros[..],
        };
        // The top boundary row D[0][j] = j always increases by one.
        let mut carry: i8 = 1;
        for b in 0..blocks {
            let mut eq = eq_row[b];
            let p = pv[b];
            let mn = mv[b];
            let xv = eq | mn;
            if carry < 0 {
                eq |= 1;
            }
            let xh = (((eq & p).wrapping_add(p)) ^ p) | eq;
            let mut ph = mn | !(xh | p);
            let mut mh = p & xh;

            let high = if b + 1 == blocks {
                last_bit
            } else {
                1u64 << 63
            };
            let out: i8 = if ph & high != 0 {
                1
            } else if mh & high != 0 {
                -1
            } else {
                0
            };

            ph <<= 1;
            mh <<= 1;
            match carry {
                c if c < 0 => mh |= 1,
                c if c > 0 => ph |= 1,
                _ => {}
            }
            pv[b] = mh | !(xv | ph);
            mv[b] = ph & xv;
            carry = out;
        }
        score = (score as isize + carry as isize) as usize;
    }
    score
}

/// Textbook two-row dynamic program. Same result as [`levenshtein`]; kept as
/// a readable reference and for cross-checking.
pub fn levenshtein_dp(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `levenshtein(a, b) / max(|a|, |b|)`, or 0 when both are empty.
pub fn normalized_edit_divergence(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    normalized_chars(&a, &b)
}

fn normalized_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein_chars(a, b) as f64 / longest as f64
}

/// Maps cosine similarity in `[-1, 1]` to a divergence in `[0, 1]`.
pub fn cosine_divergence(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(CeError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (x, y) in u.iter().zip(v) {
        dot += x * y;
        nu += x * x;
        nv += y * y;
    }
    if !(dot.is_finite() && nu.is_finite() && nv.is_finite()) {
        return Err(CeError::NonFinite("embedding"));
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(CeError::ZeroNorm);
    }
    // Rounding can leave cos(u, u) a hair below 1.
    if u == v {
        return Ok(0.0);
    }
    let cos = (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0);
    Ok(((1.0 - cos) / 2.0).clamp(0.0, 1.0))
}

/// Euclidean distance clamped to `[0, 1]`.
pub fn euclidean_divergence(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(CeError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let d = u
        .iter()
        .zip(v)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    if !d.is_finite() {
        return Err(CeError::NonFinite("embedding"));
    }
    Ok(d.min(1.0))
}

/// Full pairwise divergence matrix for a sample.
///
/// Pairs are evaluated in parallel; each entry is computed independently so
/// the result is identical to a sequential evaluation.
pub fn divergence_matrix(sample: &Sample, metric: Metric) -> Result<DivergenceMatrix> {
    sample.validate()?;
    let n = sample.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();

    let values: Vec<f64> = match metric {
        Metric::EditDistance => {
            let chars: Vec<Vec<char>> = sample.texts().map(|t| t.chars().collect()).collect();
            pairs
                .par_iter()
                .map(|&(i, j)| normalized_chars(&chars[i], &chars[j]))
                .collect()
        }
        Metric::CosineDistance | Metric::Euclidean => {
            let embeddings = sample
                .candidates
                .iter()
                .map(|c| {
                    c.embedding
                        .as_deref()
                        .ok_or_else(|| CeError::MissingEmbedding(c.model_id.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            let f = if metric == Metric::CosineDistance {
                cosine_divergence
            } else {
                euclidean_divergence
            };
            pairs
                .par_iter()
                .map(|&(i, j)| f(embeddings[i], embeddings[j]))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut it = values.into_iter();
    DivergenceMatrix::from_fn(n, metric, |_, _| it.next().unwrap_or(f64::NAN))
}
