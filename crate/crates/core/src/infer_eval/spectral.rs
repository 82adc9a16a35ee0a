//! Spectral clustering of a weighted graph into communities.

use nalgebra::{DMatrix, SymmetricEigen};

use super::kmeans::kmeans;
use crate::error::{Error, Result};

/// Eigenvalues considered when choosing the community count automatically.
pub const EIGENGAP_WINDOW: usize = 8;

/// Normalized Laplacian `I − D^{-1/2} W D^{-1/2}` of the symmetrised
/// adjacency with self-loops removed. Isolated nodes get a zero row.
pub fn normalized_laplacian(adjacency: &[Vec<f64>]) -> DMatrix<f64> {
    let n = adjacency.len();
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (adjacency[i][j] + adjacency[j][i]) / 2.0
        }
    });
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j && inv_sqrt[i] > 0.0 { 1.0 } else { 0.0 };
        diag - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    })
}

/// Ascending eigenvalues with matching eigenvectors (as columns).
fn sorted_eigen(l: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = l.nrows();
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Community count from the largest gap among the first
/// `min(EIGENGAP_WINDOW, n)` ascending eigenvalues.
pub fn eigengap_count(eigenvalues: &[f64]) -> usize {
    let m = eigenvalues.len().min(EIGENGAP_WINDOW);
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..m {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best.1 + 1e-9 {
            best = (k, gap);
        }
    }
    best.0
}

/// Community id per node. `n_groups == 0` chooses the count by eigengap.
pub fn spectral_clustering(adjacency: &[Vec<f64>], n_groups: usize, seed: u64) -> Result<Vec<usize>> {
    let n = adjacency.len();
    if adjacency.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("spectral clustering needs a square adjacency"));
    }
    if adjacency.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adjacency".into()));
    }
    if n <= 1 {
        return Ok(vec![0; n]);
    }
    let (values, vectors) = sorted_eigen(normalized_laplacian(adjacency));
    let k = if n_groups == 0 { eigengap_count(&values) } else { n_groups.min(n) };
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let row: Vec<f64> = (0..k).map(|c| vectors[(r, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.into_iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    Ok(kmeans(&rows, k, seed)?.assignments)
}
