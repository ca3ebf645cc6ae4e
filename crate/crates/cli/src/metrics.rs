use ce_core::{gate, normalized_edit_divergence};
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{EvalError, Result};

/// `1 - normalized edit divergence`, so 1 is an exact match.
pub fn text_score(candidate: &str, truth: &str) -> f64 {
    1.0 - normalized_edit_divergence(candidate, truth)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

/// Scores the "good" class, predicted when `delta <= theta`. Ratios with an
/// empty denominator are 0, and F1 is 0 without a true positive.
pub fn verification_f1(deltas: &[f64], labels: &[Label], theta: f64) -> Result<Verification> {
    if deltas.len() != labels.len() {
        return Err(EvalError::Data(format!(
            "{} deltas but {} labels",
            deltas.len(),
            labels.len()
        )));
    }
    let mut v = Verification::default();
    for (&d, &label) in deltas.iter().zip(labels) {
        let predicted_good = !gate(d, theta)?.is_expert();
        match (predicted_good, label) {
            (true, Label::Good) => v.true_pos += 1,
            (true, Label::Bad) => v.false_pos += 1,
            (false, Label::Good) => v.false_neg += 1,
            (false, Label::Bad) => v.true_neg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    v.precision = ratio(v.true_pos, v.true_pos + v.false_pos);
    v.recall = ratio(v.true_pos, v.true_pos + v.false_neg);
    if v.true_pos > 0 {
        v.f1 = 2.0 * v.precision * v.recall / (v.precision + v.recall);
    }
    Ok(v)
}

/// Cached per-sample values a sweep needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepInput {
    pub delta: f64,
    pub label: Option<Label>,
    pub ensemble_score: Option<f64>,
    /// Score of the expert's answer, if one was recorded.
    pub expert_score: Option<f64>,
}

impl SweepInput {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            label: None,
            ensemble_score: None,
            expert_score: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub routed_fraction: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Mean score of the output each sample would end with at this `theta`:
    /// the expert's answer when routed and recorded, the ensemble otherwise.
    pub mean_score: Option<f64>,
}

/// `steps + 1` evenly spaced thresholds from 0 to 1.
pub fn theta_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

/// One point per threshold. Precision, recall and F1 use the labeled samples
/// and are absent when none are labeled.
pub fn threshold_sweep(inputs: &[SweepInput], thetas: &[f64]) -> Result<Vec<SweepPoint>> {
    if let Some(w) = thetas.windows(2).find(|w| w[0] > w[1]) {
        return Err(EvalError::Usage(format!(
            "thresholds must be ascending, found {} before {}",
            w[0], w[1]
        )));
    }
    let (deltas, labels): (Vec<f64>, Vec<Label>) = inputs
        .iter()
        .filter_map(|s| s.label.map(|l| (s.delta, l)))
        .unzip();

    thetas
        .iter()
        .map(|&theta| {
            let mut routed = 0usize;
            let mut score_sum = 0.0;
            let mut scored = 0usize;
            for s in inputs {
                let expert = gate(s.delta, theta)?.is_expert();
                routed += usize::from(expert);
                let score = match (expert, s.expert_score) {
                    (true, Some(x)) => Some(x),
                    _ => s.ensemble_score,
                };
                if let Some(x) = score {
                    score_sum += x;
                    scored += 1;
                }
            }
            let prf = if labels.is_empty() {
                None
            } else {
                Some(verification_f1(&deltas, &labels, theta)?)
            };
            Ok(SweepPoint {
                theta,
                routed_fraction: if inputs.is_empty() {
                    0.0
                } else {
                    routed as f64 / inputs.len() as f64
                },
                precision: prf.map(|v| v.precision),
                recall: prf.map(|v| v.recall),
                f1: prf.map(|v| v.f1),
                mean_score: (scored > 0).then(|| score_sum / scored as f64),
            })
        })
        .collect()
}

/// Highest F1, lowest `theta` among ties.
pub fn best_f1(points: &[SweepPoint]) -> Option<&SweepPoint> {
    points
        .iter()
        .filter(|p| p.f1.is_some())
        .fold(None, |best: Option<&SweepPoint>, p| match best {
            Some(b) if b.f1 >= p.f1 => Some(b),
            _ => Some(p),
        })
}

pub fn write_sweep_csv(points: &[SweepPoint], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| EvalError::Usage(format!("writing sweep table: {e}"));
    for p in points {
        w.serialize(p).map_err(csv_err)?;
    }
    if points.is_empty() {
        w.write_record([
            "theta",
            "routed_fraction",
            "precision",
            "recall",
            "f1",
            "mean_score",
        ])
        .map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| EvalError::Usage(format!("writing sweep table: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Bad, Good};

    #[test]
    fn f1_examples() {
        let d = [0.1, 0.2, 0.7, 0.9];
        let l = [Good, Good, Bad, Bad];
        assert_eq!(verification_f1(&d, &l, 0.5).unwrap().f1, 1.0);
        let none = verification_f1(&d, &l, 0.0).unwrap();
        assert_eq!((none.f1, none.precision, none.true_pos), (0.0, 0.0, 0));
        assert!(verification_f1(&d, &l[..3], 0.5).is_err());
        let half = verification_f1(&d, &l, 0.8).unwrap();
        assert_eq!((half.true_pos, half.false_pos), (2, 1));
        assert!((half.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sweep_examples() {
        let inputs: Vec<SweepInput> = [0.2, 0.7].iter().map(|&d| SweepInput::new(d)).collect();
        let pts = threshold_sweep(&inputs, &[0.0, 1.0]).unwrap();
        assert_eq!(pts[0].routed_fraction, 1.0);
        assert_eq!(pts[1].routed_fraction, 0.0);
        assert!(pts[0].f1.is_none() && pts[0].mean_score.is_none());

        let one = [SweepInput::new(0.5)];
        let fr: Vec<f64> = threshold_sweep(&one, &[0.4, 0.5, 0.6])
            .unwrap()
            .iter()
            .map(|p| p.routed_fraction)
            .collect();
        assert_eq!(fr, [1.0, 0.0, 0.0]);
        assert!(threshold_sweep(&one, &[0.6, 0.4]).is_err());
    }

    #[test]
    fn mean_score_prefers_recorded_expert_answers() {
        let s = SweepInput {
            delta: 0.6,
            label: None,
            ensemble_score: Some(0.5),
            expert_score: Some(0.9),
        };
        let t = SweepInput {
            ensemble_score: Some(1.0),
            expert_score: None,
            ..s
        };
        let pts = threshold_sweep(&[s, t], &[0.5, 0.7]).unwrap();
        assert!((pts[0].mean_score.unwrap() - 0.95).abs() < 1e-12);
        assert!((pts[1].mean_score.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        let pts = threshold_sweep(&[SweepInput::new(0.5)], &[0.25, 0.5]).unwrap();
        write_sweep_csv(&pts, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "theta,routed_fraction,precision,recall,f1,mean_score\n0.25,1.0,,,,\n0.5,0.0,,,,\n"
        );
        let mut buf = Vec::new();
        write_sweep_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "theta,routed_fraction,precision,recall,f1,mean_score\n"
        );
    }

    fn confusion_oracle(d: &[f64], l: &[bool], theta: f64) -> f64 {
        let mut m = [[0u32; 2]; 2];
        for (x, good) in d.iter().zip(l) {
            m[usize::from(*x <= theta)][usize::from(*good)] += 1;
        }
        let (tp, fp, fn_) = (m[1][1] as f64, m[1][0] as f64, m[0][1] as f64);
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    }

    proptest! {
        #[test]
        fn f1_matches_confusion_oracle(
            pairs in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 0..60),
            theta in 0.0f64..=1.0,
        ) {
            let d: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let good: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let labels: Vec<Label> = good.iter().map(|&g| if g { Good } else { Bad }).collect();
            let got = verification_f1(&d, &labels, theta).unwrap().f1;
            prop_assert!((got - confusion_oracle(&d, &good, theta)).abs() < 1e-12);
        }

        #[test]
        fn routed_fraction_non_increasing(
            deltas in proptest::collection::vec(0.0f64..=1.0, 1..40),
            mut thetas in proptest::collection::vec(0.0f64..=1.0, 1..20),
        ) {
            thetas.sort_by(f64::total_cmp);
            let inputs: Vec<SweepInput> = deltas.iter().map(|&d| SweepInput::new(d)).collect();
            let pts = threshold_sweep(&inputs, &thetas).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[1].routed_fraction <= w[0].routed_fraction);
            }
        }
    }
}
