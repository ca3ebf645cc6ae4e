use std::collections::HashMap;

use super::TokenizeMode;
use crate::error::{CeError, Result};

/// Minimum-edit alignment of two token sequences (unit costs).
///
/// Traceback prefers match, then substitution, then `(a, gap)`, then
/// `(gap, b)`, so equal-cost alignments are resolved deterministically.
pub fn pairwise_align<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Vec<(Option<T>, Option<T>)> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut d = vec![0u32; (n + 1) * w];
    for (j, x) in d.iter_mut().take(w).enumerate() {
        *x = j as u32;
    }
    for i in 1..=n {
        d[i * w] = i as u32;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + u32::from(a[i - 1] != b[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }

    let mut out = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * w + j - 1];
            let same = a[i - 1] == b[j - 1];
            if (same && diag == here) || (!same && diag + 1 == here) {
                out.push((Some(a[i - 1].clone()), Some(b[j - 1].clone())));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            out.push((Some(a[i - 1].clone()), None));
            i -= 1;
        } else {
            out.push((None, Some(b[j - 1].clone())));
            j -= 1;
        }
    }
    out.reverse();
    out
}

/// Column-aligned tokens of every candidate.
///
/// Tokens are interned; each column holds, per candidate, a token id or a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentColumns {
    vocab: Vec<String>,
    columns: Vec<Vec<Option<u32>>>,
    n: usize,
    pivot: usize,
    mode: TokenizeMode,
}

impl AlignmentColumns {
    /// Builds columns directly, e.g. from an external aligner.
    pub fn from_columns(
        columns: Vec<Vec<Option<String>>>,
        n: usize,
        pivot: usize,
        mode: TokenizeMode,
    ) -> Result<Self> {
        if n < 2 {
            return Err(CeError::TooFewCandidates(n));
        }
        if pivot >= n {
            return Err(CeError::InvalidPivot { pivot, n });
        }
        let mut interner = Interner::default();
        let mut out = Vec::with_capacity(columns.len());
        for col in columns {
            if col.len() != n {
                return Err(CeError::LengthMismatch {
                    what: "column",
                    expected: n,
                    found: col.len(),
                });
            }
            if col.iter().all(Option::is_none) {
                return Err(CeError::InvalidMatrix(
                    "alignment column is all gaps".into(),
                ));
            }
            out.push(
                col.iter()
                    .map(|t| t.as_deref().map(|t| interner.id(t)))
                    .collect(),
            );
        }
        Ok(Self {
            vocab: interner.vocab,
            columns: out,
            n,
            pivot,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Number of candidates.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pivot(&self) -> usize {
        self.pivot
    }

    pub fn mode(&self) -> TokenizeMode {
        self.mode
    }

    /// Per-candidate entries of column `k`.
    pub fn column(&self, k: usize) -> impl Iterator<Item = Option<&str>> + '_ {
        self.columns[k]
            .iter()
            .map(|t| t.map(|id| self.vocab[id as usize].as_str()))
    }

    /// Candidate `i`'s tokens in column order with gaps removed.
    pub fn track(&self, i: usize) -> Vec<&str> {
        self.columns
            .iter()
            .filter_map(|c| c[i].map(|id| self.vocab[id as usize].as_str()))
            .collect()
    }

    pub(crate) fn raw_columns(&self) -> &[Vec<Option<u32>>] {
        &self.columns
    }

    pub(crate) fn token(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    vocab: Vec<String>,
}

impl Interner {
    fn id(&mut self, t: &str) -> u32 {
        if let Some(&id) = self.ids.get(t) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.ids.insert(t.to_string(), id);
        self.vocab.push(t.to_string());
        id
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Step {
    /// Token joins an existing column.
    Diagonal,
    /// Candidate has a gap in an existing column.
    Skip,
    /// Token opens a new column; the other candidates get gaps there.
    Open,
}

/// Cost of a token facing a gap, relative to a token facing a different token.
/// Above 1 so that equal-length candidates stay on the diagonal.
const GAP_COST: u64 = 2;

/// Refinement rounds after the progressive pass; stops early once stable.
const MAX_REFINE_ROUNDS: usize = 4;

/// Aligns `seq` as row `row` against the tokens already placed in `columns`
/// by `placed` other candidates.
///
/// Costs are sum-of-pairs against the placed rows: a token facing a different
/// token costs 1, a token facing a gap costs [`GAP_COST`], two gaps are free.
/// Ties prefer joining a column that already holds the token, then skip, then
/// open, then a mismatched join.
fn align_row(
    columns: Vec<Vec<Option<u32>>>,
    n: usize,
    row: usize,
    seq: &[u32],
    placed: u64,
) -> Vec<Vec<Option<u32>>> {
    let counts: Vec<Vec<(u32, u64)>> = columns
        .iter()
        .map(|col| {
            let mut c: Vec<(u32, u64)> = Vec::new();
            for t in col.iter().flatten() {
                match c.iter_mut().find(|(x, _)| x == t) {
                    Some(e) => e.1 += 1,
                    None => c.push((*t, 1)),
                }
            }
            c
        })
        .collect();
    let filled: Vec<u64> = counts.iter().map(|c| c.iter().map(|e| e.1).sum()).collect();
    let count = |k: usize, t: u32| counts[k].iter().find(|e| e.0 == t).map_or(0, |e| e.1);
    let join = |k: usize, t: u32| filled[k] - count(k, t) + GAP_COST * (placed - filled[k]);
    let skip_cost = |k: usize| GAP_COST * filled[k];
    let open_cost = GAP_COST * placed;

    let (cols, m) = (columns.len(), seq.len());
    let w = m + 1;
    let mut d = vec![0u64; (cols + 1) * w];
    for j in 1..=m {
        d[j] = d[j - 1] + open_cost;
    }
    for k in 1..=cols {
        d[k * w] = d[(k - 1) * w] + skip_cost(k - 1);
        for j in 1..=m {
            let diag = d[(k - 1) * w + j - 1] + join(k - 1, seq[j - 1]);
            let skip = d[(k - 1) * w + j] + skip_cost(k - 1);
            let open = d[k * w + j - 1] + open_cost;
            d[k * w + j] = diag.min(skip).min(open);
        }
    }

    let mut steps = Vec::with_capacity(cols.max(m));
    let (mut k, mut j) = (cols, m);
    while k > 0 || j > 0 {
        let here = d[k * w + j];
        let diag_ok = k > 0 && j > 0 && d[(k - 1) * w + j - 1] + join(k - 1, seq[j - 1]) == here;
        let hit = diag_ok && count(k - 1, seq[j - 1]) > 0;
        let step = if hit {
            Step::Diagonal
        } else if k > 0 && d[(k - 1) * w + j] + skip_cost(k - 1) == here {
            Step::Skip
        } else if j > 0 && d[k * w + j - 1] + open_cost == here {
            Step::Open
        } else {
            debug_assert!(diag_ok);
            Step::Diagonal
        };
        match step {
            Step::Diagonal => {
                k -= 1;
                j -= 1;
            }
            Step::Skip => k -= 1,
            Step::Open => j -= 1,
        }
        steps.push(step);
    }
    steps.reverse();

    let mut old = columns.into_iter();
    let mut tokens = seq.iter();
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let mut col = match step {
            Step::Open => vec![None; n],
            _ => old.next().unwrap(),
        };
        if step != Step::Skip {
            col[row] = Some(*tokens.next().unwrap());
        }
        out.push(col);
    }
    out
}

/// Progressive alignment anchored at the pivot: the pivot seeds one column
/// per token, every other candidate (in index order) is aligned against the
/// profile of the rows placed so far, and then each row in turn is taken out
/// and re-aligned against all the others until a round changes nothing.
pub fn progressive_alignment<S: AsRef<str>>(
    candidates: &[Vec<S>],
    pivot: usize,
    mode: TokenizeMode,
) -> Result<AlignmentColumns> {
    let n = candidates.len();
    if n < 2 {
        return Err(CeError::TooFewCandidates(n));
    }
    if pivot >= n {
        return Err(CeError::InvalidPivot { pivot, n });
    }
    let mut interner = Interner::default();
    let ids: Vec<Vec<u32>> = candidates
        .iter()
        .map(|c| c.iter().map(|t| interner.id(t.as_ref())).collect())
        .collect();

    let mut columns: Vec<Vec<Option<u32>>> = ids[pivot]
        .iter()
        .map(|&t| {
            let mut col = vec![None; n];
            col[pivot] = Some(t);
            col
        })
        .collect();
    let mut placed = 1;
    for (cand, seq) in ids.iter().enumerate() {
        if cand != pivot {
            columns = align_row(columns, n, cand, seq, placed);
            placed += 1;
        }
    }

    for _ in 0..MAX_REFINE_ROUNDS {
        let before = columns.clone();
        let order = std::iter::once(pivot).chain((0..n).filter(|&i| i != pivot));
        for row in order {
            let mut rest = columns;
            for col in &mut rest {
                col[row] = None;
            }
            rest.retain(|col| col.iter().any(Option::is_some));
            columns = align_row(rest, n, row, &ids[row], n as u64 - 1);
        }
        if columns == before {
            break;
        }
    }

    Ok(AlignmentColumns {
        vocab: interner.vocab,
        columns,
        n,
        pivot,
        mode,
    })
}
