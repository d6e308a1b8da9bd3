//! Principal component projection for the separated-feature baseline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PcaDoc", into = "PcaDoc")]
pub struct Pca {
    mean: DVector<f64>,
    /// `d × k`, orthonormal columns ordered by decreasing variance.
    components: DMatrix<f64>,
    /// Variance along each retained component.
    variances: Vec<f64>,
    total_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct PcaDoc {
    mean: Vec<f64>,
    /// One entry per component.
    components: Vec<Vec<f64>>,
    variances: Vec<f64>,
    total_variance: f64,
}

impl TryFrom<PcaDoc> for Pca {
    type Error = Error;

    fn try_from(doc: PcaDoc) -> Result<Self> {
        let d = doc.mean.len();
        check_dim("pca variances", doc.components.len(), doc.variances.len())?;
        for c in &doc.components {
            check_dim("pca component", d, c.len())?;
        }
        let flat: Vec<f64> = doc.components.concat();
        Ok(Pca {
            mean: DVector::from_vec(doc.mean),
            components: DMatrix::from_column_slice(d, doc.components.len(), &flat),
            variances: doc.variances,
            total_variance: doc.total_variance,
        })
    }
}

impl From<Pca> for PcaDoc {
    fn from(p: Pca) -> Self {
        PcaDoc {
            mean: p.mean.as_slice().to_vec(),
            components: p
                .components
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            variances: p.variances,
            total_variance: p.total_variance,
        }
    }
}

impl Pca {
    /// Pass-through projection onto all `dim` coordinates, uncentered.
    pub fn identity(dim: usize) -> Self {
        Pca {
            mean: DVector::zeros(dim),
            components: DMatrix::identity(dim, dim),
            variances: vec![1.0; dim],
            total_variance: dim as f64,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Fraction of the total variance captured by the retained components.
    pub fn retained_fraction(&self) -> f64 {
        self.variances.iter().sum::<f64>() / self.total_variance
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("pca input", self.input_dim(), x.len())?;
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok(self.components.tr_mul(&centered).as_slice().to_vec())
    }

    /// Projects a batch stored column-wise (`d × B`).
    pub fn transform_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        self.components.tr_mul(&centered)
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("pca code", self.n_components(), z.len())?;
        let x = &self.components * DVector::from_column_slice(z) + &self.mean;
        Ok(x.as_slice().to_vec())
    }
}

/// Fits on `n × d` data (one sample per row), keeping the fewest leading
/// components whose variance reaches `retained` of the total.
pub fn pca_fit(data: &DMatrix<f64>, retained: f64) -> Result<Pca> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if !(retained > 0.0 && retained <= 1.0) {
        return Err(Error::invalid(
            "retained variance fraction must lie in (0, 1]",
        ));
    }
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut k = 0;
    let mut acc = 0.0;
    while k < d {
        acc += values[k];
        k += 1;
        if acc >= retained * total * (1.0 - 1e-12) {
            break;
        }
    }
    let mut components = DMatrix::zeros(d, k);
    for (j, &i) in order.iter().take(k).enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = col
            .iter()
            .cloned()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col = -col;
        }
        components.set_column(j, &col);
    }
    Ok(Pca {
        mean,
        components,
        variances: values[..k].to_vec(),
        total_variance: total,
    })
}
