use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{CeError, Result};

/// Projects embeddings onto their two leading principal components.
///
/// Works on the `n x n` Gram matrix of the centered data, which stays small
/// for a handful of candidates even when embeddings have thousands of
/// dimensions. Each component's loading vector is oriented so that its
/// largest-magnitude coordinate is positive. Components with (numerically)
/// zero variance project to 0, so identical inputs all land on the origin.
pub fn project_to_plane(embeddings: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = embeddings.len();
    if n < 2 {
        return Err(CeError::TooFewCandidates(n));
    }
    let d = embeddings[0].len();
    for e in embeddings {
        if e.len() != d {
            return Err(CeError::DimensionMismatch {
                expected: d,
                found: e.len(),
            });
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(CeError::NonFinite("embedding"));
        }
    }

    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, k| embeddings[i][k] - mean[k]);

    let gram = &centered * centered.transpose();
    let trace = gram.trace();
    // Variance below this is centering round-off, not spread.
    let raw_energy: f64 = embeddings.iter().flatten().map(|v| v * v).sum();
    let tol = 1e-24 * raw_energy.max(f64::MIN_POSITIVE) + 1e-12 * trace;
    let mut out = vec![[0.0; 2]; n];
    if trace <= tol {
        return Ok(out);
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda <= tol {
            continue;
        }
        let u = eig.eigenvectors.column(k);
        let loading = centered.transpose() * u;
        let mut pivot = 0;
        for (idx, v) in loading.iter().enumerate() {
            if v.abs() > loading[pivot].abs() {
                pivot = idx;
            }
        }
        let sign = if loading[pivot] < 0.0 { -1.0 } else { 1.0 };
        // Scores are u * sqrt(lambda) since X^T u = sqrt(lambda) * loading_unit.
        let scale = sign * lambda.sqrt();
        for i in 0..n {
            out[i][axis] = u[i] * scale;
        }
    }
    Ok(out)
}
