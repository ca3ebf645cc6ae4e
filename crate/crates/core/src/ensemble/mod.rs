//! Token-level ensembling of candidate texts.
//!
//! Candidates are tokenized, star-aligned against the most consensual
//! candidate, then voted column by column with inverse-`e_bar` weights
//! (or unweighted plurality for the ROVER baseline).

mod align;
mod vote;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use align::{pairwise_align, progressive_alignment, AlignmentColumns};
pub use vote::{rover_vote, weighted_vote};

use crate::entropy::EPSILON;
use crate::error::{CeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizeMode {
    /// Whitespace-separated words; punctuation stays attached.
    Word,
    /// One token per unicode scalar value, whitespace included.
    #[default]
    Char,
}

impl TokenizeMode {
    pub(crate) fn join<'a>(self, tokens: impl IntoIterator<Item = &'a str>) -> String {
        let mut out = String::new();
        for (k, t) in tokens.into_iter().enumerate() {
            if self == TokenizeMode::Word && k > 0 {
                out.push(' ');
            }
            out.push_str(t);
        }
        out
    }
}

impl fmt::Display for TokenizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizeMode::Word => "word",
            TokenizeMode::Char => "char",
        })
    }
}

impl FromStr for TokenizeMode {
    type Err = CeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(TokenizeMode::Word),
            "char" => Ok(TokenizeMode::Char),
            _ => Err(CeError::UnknownVariant {
                kind: "tokenize mode",
                value: s.to_string(),
            }),
        }
    }
}

pub fn tokenize(text: &str, mode: TokenizeMode) -> Vec<&str> {
    match mode {
        TokenizeMode::Word => text.split_whitespace().collect(),
        TokenizeMode::Char => text
            .char_indices()
            .map(|(i, c)| &text[i..i + c.len_utf8()])
            .collect(),
    }
}

/// Normalized per-candidate vote weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Normalizes arbitrary positive weights.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(CeError::NonFinite("weights"));
        }
        let total: f64 = raw.iter().sum();
        Ok(Self(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn inverse_weights(e_bar: &[f64]) -> Result<Vec<f64>> {
    if e_bar.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(CeError::NonFinite("e_bar"));
    }
    // Reciprocals scaled by the smallest floored value: the heaviest
    // candidates get exactly 1.0, so equal inputs give exactly uniform output.
    let floor = e_bar
        .iter()
        .map(|e| e.max(EPSILON))
        .fold(f64::INFINITY, f64::min);
    let inv: Vec<f64> = e_bar.iter().map(|e| floor / e.max(EPSILON)).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / total).collect())
}

/// `w_i = (1 / e_i) / sum_j (1 / e_j)` with each `e` floored at [`EPSILON`].
pub fn ensemble_weights(e_bar: &[f64]) -> Result<EnsembleWeights> {
    if e_bar.len() < 2 {
        return Err(CeError::TooFewCandidates(e_bar.len()));
    }
    inverse_weights(e_bar).map(EnsembleWeights)
}

/// Lowest `e_bar`, lowest index on ties.
pub fn pivot_index(e_bar: &[f64]) -> usize {
    let mut best = 0;
    for (i, e) in e_bar.iter().enumerate() {
        if *e < e_bar[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutput {
    pub text: String,
    pub rover_text: String,
    pub pivot: usize,
    pub columns: usize,
}

/// Aligns `texts` around the lowest-`e_bar` candidate and votes.
///
/// When the voted token sequence is exactly some candidate's token sequence,
/// that candidate's original text is returned so its whitespace survives
/// word-mode joining. Among several such candidates the heaviest wins, then
/// the pivot, then the lowest index.
pub fn ensemble_text(texts: &[&str], e_bar: &[f64], mode: TokenizeMode) -> Result<EnsembleOutput> {
    if texts.len() != e_bar.len() {
        return Err(CeError::LengthMismatch {
            what: "e_bar",
            expected: texts.len(),
            found: e_bar.len(),
        });
    }
    let weights = ensemble_weights(e_bar)?;
    let pivot = pivot_index(e_bar);
    let tokens: Vec<Vec<&str>> = texts.iter().map(|t| tokenize(t, mode)).collect();
    let columns = progressive_alignment(&tokens, pivot, mode)?;

    let voted = weighted_vote(&columns, &weights)?;
    let rover = rover_vote(&columns)?;
    let w = weights.as_slice();
    let restore = |joined: String, rank: &dyn Fn(usize) -> (f64, bool)| -> String {
        let voted_tokens = tokenize(&joined, mode);
        let mut best: Option<usize> = None;
        for (i, toks) in tokens.iter().enumerate() {
            if *toks != voted_tokens {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (wi, pi) = rank(i);
                    let (wb, pb) = rank(b);
                    if wi > wb || (wi == wb && pi && !pb) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.map_or(joined, |i| texts[i].to_string())
    };

    Ok(EnsembleOutput {
        text: restore(voted, &|i| (w[i], i == pivot)),
        rover_text: restore(rover, &|i| (0.0, i == pivot)),
        pivot,
        columns: columns.len(),
    })
}
