//! Consensus entropy from a divergence matrix.
//!
//! Each candidate gets an average divergence `e_bar[i]` to all the others.
//! The sample-level consensus entropy `delta` is then either an aggregate of
//! the pairwise divergences or the normalized Shannon entropy of a weighted
//! Gaussian KDE evaluated on a 2-D grid (embedding mode only).

mod kde;
mod projection;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use kde::{grid_kde_delta, silverman_bandwidth, GridConfig, GridDensity};
pub use projection::project_to_plane;

use crate::ensemble::{ensemble_weights, EnsembleWeights};
use crate::error::{CeError, Result};
use crate::router::{gate, RoutingDecision};
use crate::similarity::{divergence_matrix, DivergenceMatrix, Metric, Sample};

/// Floor applied to `e_bar` before taking reciprocals.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    /// Mean of the per-candidate average divergences.
    #[default]
    MeanDistance,
    /// Sum of the upper-triangle divergences divided by the pair count.
    Sum,
    /// Largest off-diagonal divergence.
    Max,
    /// Mean over all off-diagonal entries.
    Mean,
}

impl Aggregator {
    pub const ALL: [Aggregator; 4] = [
        Aggregator::MeanDistance,
        Aggregator::Sum,
        Aggregator::Max,
        Aggregator::Mean,
    ];
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::MeanDistance => "mean-distance",
            Aggregator::Sum => "sum",
            Aggregator::Max => "max",
            Aggregator::Mean => "mean",
        })
    }
}

impl FromStr for Aggregator {
    type Err = CeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-distance" => Ok(Aggregator::MeanDistance),
            "sum" => Ok(Aggregator::Sum),
            "max" => Ok(Aggregator::Max),
            "mean" => Ok(Aggregator::Mean),
            _ => Err(CeError::UnknownVariant {
                kind: "aggregator",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    Pairwise,
    Grid,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Pairwise => "pairwise",
            Estimator::Grid => "grid",
        })
    }
}

impl FromStr for Estimator {
    type Err = CeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(Estimator::Pairwise),
            "grid" => Ok(Estimator::Grid),
            _ => Err(CeError::UnknownVariant {
                kind: "estimator",
                value: s.to_string(),
            }),
        }
    }
}

/// Average divergence of each candidate to every other candidate.
pub fn average_entropy_distances(matrix: &DivergenceMatrix) -> Result<Vec<f64>> {
    let n = matrix.n();
    if n < 2 {
        return Err(CeError::TooFewCandidates(n));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let row = matrix.row(i);
            let sum: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum();
            (sum / denom).clamp(0.0, 1.0)
        })
        .collect())
}

/// Collapses the divergences of one sample into `delta` in `[0, 1]`.
pub fn aggregate_delta(
    e_bar: &[f64],
    matrix: &DivergenceMatrix,
    method: Aggregator,
) -> Result<f64> {
    let n = matrix.n();
    if e_bar.len() != n {
        return Err(CeError::LengthMismatch {
            what: "e_bar",
            expected: n,
            found: e_bar.len(),
        });
    }
    let delta = match method {
        Aggregator::MeanDistance => e_bar.iter().sum::<f64>() / n as f64,
        Aggregator::Max => matrix.upper_triangle().fold(0.0, f64::max),
        Aggregator::Mean => {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        total += matrix.get(i, j);
                    }
                }
            }
            total / (n * (n - 1)) as f64
        }
        Aggregator::Sum => {
            let pairs = (n * (n - 1) / 2) as f64;
            matrix.upper_triangle().sum::<f64>() / pairs
        }
    };
    Ok(delta.clamp(0.0, 1.0))
}

/// Everything that selects how a sample is scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    pub metric: Metric,
    pub aggregator: Aggregator,
    pub estimator: Estimator,
    pub theta: f64,
    pub grid: GridConfig,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            metric: Metric::EditDistance,
            aggregator: Aggregator::MeanDistance,
            estimator: Estimator::Pairwise,
            theta: 0.5,
            grid: GridConfig::default(),
        }
    }
}

/// Per-candidate and sample-level entropy values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub e_bar: Vec<f64>,
    pub delta: f64,
    pub aggregator: Aggregator,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub sample_id: String,
    pub metric: Metric,
    /// SHA-256 over the matrix entries (little-endian f64 bits, row-major).
    pub matrix_digest: String,
    pub matrix: DivergenceMatrix,
    pub profile: EntropyProfile,
    pub weights: EnsembleWeights,
    pub decision: RoutingDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<GridDensity>,
}

impl ConsensusReport {
    pub fn delta(&self) -> f64 {
        self.profile.delta
    }

    /// Index of the most consensual candidate (lowest `e_bar`, lowest index on ties).
    pub fn pivot(&self) -> usize {
        crate::ensemble::pivot_index(&self.profile.e_bar)
    }
}

fn digest(matrix: &DivergenceMatrix) -> String {
    let mut h = Sha256::new();
    for i in 0..matrix.n() {
        for v in matrix.row(i) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Scores one sample end to end: matrix, `e_bar`, `delta`, weights and the
/// gate decision at `config.theta`.
pub fn consensus_report(sample: &Sample, config: &ConsensusConfig) -> Result<ConsensusReport> {
    sample.validate()?;
    let matrix = divergence_matrix(sample, config.metric)?;
    let e_bar = average_entropy_distances(&matrix)?;

    let (delta, density) = match config.estimator {
        Estimator::Pairwise => (aggregate_delta(&e_bar, &matrix, config.aggregator)?, None),
        Estimator::Grid => {
            let embeddings = sample
                .candidates
                .iter()
                .map(|c| c.embedding.clone())
                .collect::<Option<Vec<_>>>()
                .ok_or(CeError::EstimatorNeedsEmbeddings("grid"))?;
            let points = project_to_plane(&embeddings)?;
            let (delta, density) = grid_kde_delta(&points, &e_bar, &config.grid)?;
            (delta, Some(density))
        }
    };

    Ok(ConsensusReport {
        sample_id: sample.sample_id.clone(),
        metric: config.metric,
        matrix_digest: digest(&matrix),
        weights: ensemble_weights(&e_bar)?,
        decision: gate(delta, config.theta)?,
        profile: EntropyProfile {
            e_bar,
            delta,
            aggregator: config.aggregator,
            estimator: config.estimator,
        },
        matrix,
        density,
    })
}
