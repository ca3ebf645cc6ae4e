use std::cmp::Ordering;

use super::{AlignmentColumns, EnsembleWeights};
use crate::error::{CeError, Result};

// Weight sums closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

struct Tally {
    token: Option<u32>,
    total: f64,
    heaviest: f64,
}

/// Per column, the gap-or-token whose supporters carry the most weight.
/// Ties go to the token backed by the single heaviest candidate, then the
/// pivot's entry, then the lexicographically smallest (gap first).
pub fn weighted_vote(columns: &AlignmentColumns, weights: &EnsembleWeights) -> Result<String> {
    if weights.len() != columns.n() {
        return Err(CeError::LengthMismatch {
            what: "weights",
            expected: columns.n(),
            found: weights.len(),
        });
    }
    Ok(vote(columns, weights.as_slice(), true))
}

/// Unweighted plurality per column with the same tie-breaks minus the
/// heaviest-supporter rule.
pub fn rover_vote(columns: &AlignmentColumns) -> Result<String> {
    let ones = vec![1.0; columns.n()];
    Ok(vote(columns, &ones, false))
}

fn vote(columns: &AlignmentColumns, weights: &[f64], use_heaviest: bool) -> String {
    let pivot = columns.pivot();
    let mut chosen: Vec<&str> = Vec::with_capacity(columns.len());
    let mut tallies: Vec<Tally> = Vec::new();

    for col in columns.raw_columns() {
        tallies.clear();
        for (entry, &w) in col.iter().zip(weights) {
            match tallies.iter_mut().find(|t| t.token == *entry) {
                Some(t) => {
                    t.total += w;
                    t.heaviest = t.heaviest.max(w);
                }
                None => tallies.push(Tally {
                    token: *entry,
                    total: w,
                    heaviest: w,
                }),
            }
        }

        let best_total = tallies.iter().map(|t| t.total).fold(f64::MIN, f64::max);
        let winner = tallies
            .iter()
            .filter(|t| best_total - t.total <= TIE_TOLERANCE)
            .max_by(|a, b| {
                let heavy = if use_heaviest {
                    a.heaviest.total_cmp(&b.heaviest)
                } else {
                    Ordering::Equal
                };
                heavy
                    .then_with(|| (a.token == col[pivot]).cmp(&(b.token == col[pivot])))
                    // Reverse lexicographic so max_by picks the smallest; gap sorts first.
                    .then_with(|| {
                        let ka = a.token.map(|id| columns.token(id));
                        let kb = b.token.map(|id| columns.token(id));
                        kb.cmp(&ka)
                    })
            })
            .and_then(|t| t.token);

        if let Some(id) = winner {
            chosen.push(columns.token(id));
        }
    }
    columns.mode().join(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{progressive_alignment, tokenize, TokenizeMode};
    use proptest::prelude::*;

    fn single(col: &[Option<&str>], pivot: usize) -> AlignmentColumns {
        let col = col.iter().map(|t| t.map(str::to_string)).collect();
        AlignmentColumns::from_columns(vec![col], 3, pivot, TokenizeMode::Word).unwrap()
    }

    #[test]
    fn unanimous_columns_return_input() {
        let text = "the quick brown fox";
        let toks = vec![tokenize(text, TokenizeMode::Word); 3];
        let cols = progressive_alignment(&toks, 0, TokenizeMode::Word).unwrap();
        assert_eq!(
            weighted_vote(&cols, &EnsembleWeights::uniform(3)).unwrap(),
            text
        );
        assert_eq!(rover_vote(&cols).unwrap(), text);
    }

    #[test]
    fn weighted_majority() {
        let cols = single(&[Some("hat"), Some("hat"), Some("bat")], 2);
        let w = EnsembleWeights::from_raw(vec![0.34, 0.33, 0.33]).unwrap();
        assert_eq!(weighted_vote(&cols, &w).unwrap(), "hat");
        assert_eq!(rover_vote(&cols).unwrap(), "hat");
    }

    #[test]
    fn gap_can_win() {
        let cols = single(&[None, None, Some("junk")], 2);
        assert_eq!(
            weighted_vote(&cols, &EnsembleWeights::uniform(3)).unwrap(),
            ""
        );
    }

    #[test]
    fn tie_breaks() {
        // Equal totals (0.4 vs 0.4): "b" has the single heaviest supporter.
        let col = vec![vec![
            Some("a".to_string()),
            Some("a".to_string()),
            Some("b".to_string()),
            None,
        ]];
        let cols = AlignmentColumns::from_columns(col, 4, 0, TokenizeMode::Word).unwrap();
        let w = EnsembleWeights::from_raw(vec![0.2, 0.2, 0.4, 0.2]).unwrap();
        assert_eq!(weighted_vote(&cols, &w).unwrap(), "b");
        // Rover: a has 2 votes.
        assert_eq!(rover_vote(&cols).unwrap(), "a");

        // Full tie: pivot's token wins.
        let cols = single(&[Some("y"), Some("x"), None], 0);
        let w = EnsembleWeights::uniform(3);
        assert_eq!(weighted_vote(&cols, &w).unwrap(), "y");
        assert_eq!(rover_vote(&cols).unwrap(), "y");

        // Full tie not involving the pivot's entry: lexicographically smallest.
        let col = vec![vec![
            Some("p".to_string()),
            Some("z".to_string()),
            Some("m".to_string()),
            Some("p".to_string()),
        ]];
        let cols = AlignmentColumns::from_columns(col, 4, 0, TokenizeMode::Word).unwrap();
        let w = EnsembleWeights::from_raw(vec![0.1, 0.45, 0.45, 0.0001]).unwrap();
        assert_eq!(weighted_vote(&cols, &w).unwrap(), "m");
    }

    #[test]
    fn rejects_weight_length_mismatch() {
        let cols = single(&[Some("a"), Some("a"), Some("a")], 0);
        assert!(weighted_vote(&cols, &EnsembleWeights::uniform(2)).is_err());
    }

    #[test]
    fn five_way_majority_recovery_exhaustive() {
        // Every pair of corrupted candidates, both substitution and gap
        // corruption, on a 4-token truth.
        let truth = ["w0", "w1", "w2", "w3"];
        for a in 0..5 {
            for b in a..5 {
                for gap in [false, true] {
                    let columns: Vec<Vec<Option<String>>> = truth
                        .iter()
                        .enumerate()
                        .map(|(k, t)| {
                            (0..5)
                                .map(|c| {
                                    if (c == a || c == b) && (k + c) % 2 == 0 {
                                        if gap {
                                            None
                                        } else {
                                            Some(format!("bad{c}"))
                                        }
                                    } else {
                                        Some(t.to_string())
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    let cols =
                        AlignmentColumns::from_columns(columns, 5, a, TokenizeMode::Word).unwrap();
                    assert_eq!(
                        weighted_vote(&cols, &EnsembleWeights::uniform(5)).unwrap(),
                        truth.join(" ")
                    );
                }
            }
        }
    }

    fn column_strategy() -> impl Strategy<Value = (Vec<Vec<Option<String>>>, usize)> {
        (2usize..7).prop_flat_map(|n| {
            let entry = proptest::option::of(
                prop_oneof![Just("a"), Just("b"), Just("c")].prop_map(str::to_string),
            );
            let col = proptest::collection::vec(entry, n)
                .prop_filter("no all-gap column", |c| c.iter().any(Option::is_some));
            (proptest::collection::vec(col, 0..12), 0..n)
        })
    }

    proptest! {
        #[test]
        fn uniform_weights_match_rover((columns, pivot) in column_strategy()) {
            let n = columns.first().map_or(2, Vec::len);
            prop_assume!(columns.iter().all(|c| c.len() == n));
            let cols = AlignmentColumns::from_columns(columns, n, pivot.min(n - 1), TokenizeMode::Word).unwrap();
            prop_assert_eq!(
                weighted_vote(&cols, &EnsembleWeights::uniform(n)).unwrap(),
                rover_vote(&cols).unwrap()
            );
        }

        #[test]
        fn dominant_candidate_dictates(
            texts in proptest::collection::vec("[ab ]{0,10}", 2..6),
            dom in 0usize..6,
        ) {
            let n = texts.len();
            let dom = dom % n;
            let toks: Vec<Vec<&str>> = texts.iter().map(|t| tokenize(t, TokenizeMode::Char)).collect();
            let cols = progressive_alignment(&toks, 0, TokenizeMode::Char).unwrap();
            let raw: Vec<f64> = (0..n).map(|i| if i == dom { n as f64 } else { 1.0 }).collect();
            let w = EnsembleWeights::from_raw(raw).unwrap();
            prop_assert!(w.as_slice()[dom] > 0.5);
            prop_assert_eq!(weighted_vote(&cols, &w).unwrap(), texts[dom].clone());
        }
    }
}
