//! Weighted Gaussian KDE on an `N x N` grid.
//!
//! Cell probabilities are the exact Gaussian mass inside each cell (product of
//! per-axis normal CDF differences), normalized over the grid. The grid covers
//! the union of a fixed reference window and the points' bounding box padded
//! by three bandwidths, so `delta` keeps an absolute scale across samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::ensemble::inverse_weights;
use crate::error::{CeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub grid_n: usize,
    /// Isotropic kernel bandwidth. `None` selects Silverman's rule.
    pub bandwidth: Option<f64>,
    /// Scale each kernel by its k-nearest-neighbour distance
    /// (`k = max(2, n / 4)`) relative to the geometric mean.
    pub adaptive: bool,
    /// Reference window `[x_min, x_max, y_min, y_max]` always covered by the grid.
    pub window: [f64; 4],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            grid_n: 64,
            bandwidth: None,
            adaptive: false,
            window: [-1.0, 1.0, -1.0, 1.0],
        }
    }
}

/// The discretized density behind a grid `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub grid_n: usize,
    /// Row-major; row index follows y, column index follows x.
    pub cells: Vec<f64>,
    pub bandwidth: f64,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// `[x_min, x_max, y_min, y_max]` of the grid.
    pub extent: [f64; 4],
}

impl GridDensity {
    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.grid_n + col]
    }
}

/// Silverman's rule of thumb for a 2-D isotropic Gaussian kernel:
/// `sigma * n^(-1/6)` with `sigma` the root mean of the per-axis sample variances.
pub fn silverman_bandwidth(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = |k: usize| points.iter().map(|p| p[k]).sum::<f64>() / nf;
    let (mx, my) = (mean(0), mean(1));
    let var =
        |k: usize, m: f64| points.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / (nf - 1.0);
    let sigma = (0.5 * (var(0, mx) + var(1, my))).sqrt();
    sigma * nf.powf(-1.0 / 6.0)
}

fn knn_scales(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    let k = (n / 4).max(2).min(n - 1);
    let kth: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    let positive: Vec<f64> = kth.iter().copied().filter(|&d| d > 0.0).collect();
    if positive.is_empty() {
        return vec![1.0; n];
    }
    let geo = (positive.iter().map(|d| d.ln()).sum::<f64>() / positive.len() as f64).exp();
    let floor = positive.iter().copied().fold(f64::INFINITY, f64::min);
    kth.into_iter().map(|d| d.max(floor) / geo).collect()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Per-point mass in each of the `edges.len() - 1` intervals along one axis.
/// A zero bandwidth degenerates to a point mass in the half-open interval
/// holding the coordinate (last interval closed).
fn axis_mass(coord: f64, h: f64, edges: &[f64]) -> Vec<f64> {
    let cells = edges.len() - 1;
    if h == 0.0 {
        let mut out = vec![0.0; cells];
        let idx = edges[1..]
            .iter()
            .position(|&e| coord < e)
            .unwrap_or(cells - 1);
        out[idx] = 1.0;
        return out;
    }
    let cdf: Vec<f64> = edges.iter().map(|&e| normal_cdf((e - coord) / h)).collect();
    cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
}

fn edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / n as f64;
    let mut e: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    e[n] = hi;
    e
}

/// Weighted grid KDE entropy, normalized by `ln(N^2)` so it lies in `[0, 1]`.
///
/// Weights are proportional to `1 / max(e_bar[i], EPSILON)`. Coincident points
/// carry no spread and yield a single occupied cell (`delta = 0`) regardless of
/// the configured bandwidth.
pub fn grid_kde_delta(
    points: &[[f64; 2]],
    e_bar: &[f64],
    config: &GridConfig,
) -> Result<(f64, GridDensity)> {
    let n_grid = config.grid_n;
    if n_grid < 2 {
        return Err(CeError::GridTooSmall(n_grid));
    }
    if points.len() < 2 {
        return Err(CeError::TooFewCandidates(points.len()));
    }
    if e_bar.len() != points.len() {
        return Err(CeError::LengthMismatch {
            what: "e_bar",
            expected: points.len(),
            found: e_bar.len(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CeError::NonFinite("points"));
    }
    if config.window.iter().any(|v| !v.is_finite())
        || config.window[0] > config.window[1]
        || config.window[2] > config.window[3]
    {
        return Err(CeError::NonFinite("grid window"));
    }
    if let Some(h) = config.bandwidth {
        if !(h.is_finite() && h > 0.0) {
            return Err(CeError::OutOfRange {
                name: "bandwidth",
                value: h,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
    }
    let weights = inverse_weights(e_bar)?;

    let coincident = points.iter().all(|p| *p == points[0]);
    let base_h = if coincident {
        0.0
    } else {
        config
            .bandwidth
            .unwrap_or_else(|| silverman_bandwidth(points))
    };
    let per_point: Vec<f64> = if config.adaptive && !coincident {
        knn_scales(points).into_iter().map(|s| base_h * s).collect()
    } else {
        vec![base_h; points.len()]
    };
    let pad = 3.0 * per_point.iter().copied().fold(0.0, f64::max);

    let mut extent = config.window;
    for p in points {
        extent[0] = extent[0].min(p[0] - pad);
        extent[1] = extent[1].max(p[0] + pad);
        extent[2] = extent[2].min(p[1] - pad);
        extent[3] = extent[3].max(p[1] + pad);
    }
    if extent[1] - extent[0] <= 0.0 || extent[3] - extent[2] <= 0.0 {
        // Zero-area window around coincident points: widen to a unit cell box.
        extent = [
            extent[0] - 0.5,
            extent[1] + 0.5,
            extent[2] - 0.5,
            extent[3] + 0.5,
        ];
    }
    let xe = edges(extent[0], extent[1], n_grid);
    let ye = edges(extent[2], extent[3], n_grid);

    let px: Vec<Vec<f64>> = points
        .iter()
        .zip(&per_point)
        .map(|(p, &h)| axis_mass(p[0], h, &xe))
        .collect();
    let py: Vec<Vec<f64>> = points
        .iter()
        .zip(&per_point)
        .map(|(p, &h)| axis_mass(p[1], h, &ye))
        .collect();

    let mut cells: Vec<f64> = (0..n_grid)
        .into_par_iter()
        .flat_map_iter(|row| {
            let (px, py, weights) = (&px, &py, &weights);
            (0..n_grid).map(move |col| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * py[i][row] * px[i][col])
                    .sum::<f64>()
            })
        })
        .collect();

    let total: f64 = cells.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(CeError::NonFinite("grid mass"));
    }
    for c in &mut cells {
        *c /= total;
    }

    let entropy: f64 = cells
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let max_entropy = ((n_grid * n_grid) as f64).ln();
    let delta = (entropy / max_entropy).clamp(0.0, 1.0);

    Ok((
        delta,
        GridDensity {
            grid_n: n_grid,
            cells,
            bandwidth: base_h,
            points: points.to_vec(),
            weights,
            extent,
        },
    ))
}
