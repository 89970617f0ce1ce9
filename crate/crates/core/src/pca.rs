//! Principal component projection of activations restricted to a node subset.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::ActivationMatrix;

#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// Row coordinates, `rows x components`.
    pub coordinates: DMatrix<f64>,
    /// Principal axes as columns, `|node_subset| x components`.
    pub components: DMatrix<f64>,
    /// Every covariance eigenvalue, non-increasing and non-negative.
    pub eigenvalues: Vec<f64>,
    /// Column means removed before projection.
    pub means: Vec<f64>,
}

impl PcaProjection {
    /// Share of total variance carried by the retained components.
    pub fn explained_variance_ratio(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let kept: f64 = self.eigenvalues[..self.components.ncols()].iter().sum();
        kept / total
    }
}

/// Projects the rows of `activations`, restricted to `node_subset`, onto the
/// top `components` eigenvectors of the sample covariance (divisor `n - 1`).
/// Columns are centered but not scaled.
pub fn pca_project(
    activations: &ActivationMatrix,
    node_subset: &[usize],
    components: usize,
) -> Result<PcaProjection> {
    if node_subset.is_empty() {
        return Err(Error::Pca("node subset is empty".into()));
    }
    if let Some(&j) = node_subset.iter().find(|&&j| j >= activations.cols()) {
        return Err(Error::Pca(format!("node index {j} out of bounds")));
    }
    if components == 0 || components > node_subset.len() {
        return Err(Error::Pca(format!(
            "{components} components requested from {} nodes",
            node_subset.len()
        )));
    }
    let rows = activations.rows();
    if rows < 2 {
        return Err(Error::Pca("at least two rows are required".into()));
    }

    let width = node_subset.len();
    let mut data = DMatrix::from_fn(rows, width, |i, t| activations.get(i, node_subset[t]));
    let means: Vec<f64> = data.column_iter().map(|c| c.mean()).collect();
    for (mut col, &mean) in data.column_iter_mut().zip(&means) {
        col.add_scalar_mut(-mean);
    }
    let covariance = data.transpose() * &data / (rows as f64 - 1.0);
    let eigen = SymmetricEigen::new(covariance);

    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0))
        .collect();

    let mut axes = DMatrix::zeros(width, components);
    for (out, &i) in order.iter().take(components).enumerate() {
        let mut v = eigen.eigenvectors.column(i).into_owned();
        // Sign convention: largest-magnitude loading is positive.
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        axes.set_column(out, &v);
    }
    let coordinates = &data * &axes;
    Ok(PcaProjection {
        coordinates,
        components: axes,
        eigenvalues,
        means,
    })
}
