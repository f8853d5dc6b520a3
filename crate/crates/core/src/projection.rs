//! Feature standardization and PCA.
//!
//! Everything downstream optimizes in standardized coordinates, where the
//! latent map is `z = Wᵀ x_std` with orthonormal loadings `W`. That makes the
//! Jacobian of any latent partition a plain row-slice of `Wᵀ`, and makes the
//! partitions' gradients mutually orthogonal.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::sample_mean_covariance;

/// Whether the standardizer rescales columns or only centers them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Divide each column by its sample standard deviation.
    #[default]
    UnitVariance,
    /// Subtract the mean only (scale fixed at 1).
    CenterOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Column means and sample standard deviations (divisor n-1).
    /// Constant columns get scale 1.
    pub fn fit(features: &DMatrix<f64>, scaling: Scaling) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::TooFewRows { need: 2, got: n });
        }
        let mut mean = Vec::with_capacity(features.ncols());
        let mut scale = Vec::with_capacity(features.ncols());
        for col in features.column_iter() {
            let m = col.mean();
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(match scaling {
                Scaling::CenterOnly => 1.0,
                Scaling::UnitVariance if sd > 1e-12 * m.abs().max(1.0) => sd,
                Scaling::UnitVariance => 1.0,
            });
        }
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn inverse_transform(&self, x_std: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x_std.len())?;
        Ok(x_std
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }

    pub fn transform_matrix(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), features.ncols())?;
        Ok(DMatrix::from_fn(
            features.nrows(),
            features.ncols(),
            |r, c| (features[(r, c)] - self.mean[c]) / self.scale[c],
        ))
    }
}

/// Notes from fitting PCA, kept with the model for provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PcaDiagnostics {
    pub requested_k: usize,
    pub numerical_rank: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    standardizer: Standardizer,
    /// d × k, orthonormal columns.
    loadings: DMatrix<f64>,
    explained_variance: Vec<f64>,
    diagnostics: PcaDiagnostics,
}

/// Relative eigenvalue floor below which a component counts as numerically zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Fits PCA on already-standardized rows via the eigendecomposition of the
/// sample covariance.
///
/// Requires `1 <= k <= min(n-1, d)`. When `k` exceeds the numerical rank it
/// is shrunk and a warning is recorded in the diagnostics. Each loading
/// column is sign-fixed so its largest-magnitude entry is positive.
pub fn fit_pca(
    standardizer: Standardizer,
    train_std: &DMatrix<f64>,
    k: usize,
) -> Result<ProjectionModel> {
    let (n, d) = train_std.shape();
    check_dim(standardizer.dim(), d)?;
    if n < 2 {
        return Err(Error::TooFewRows { need: 2, got: n });
    }
    let k_max = (n - 1).min(d);
    if k == 0 || k > k_max {
        return Err(Error::InvalidLatentDim(format!(
            "k = {k} must lie in [1, min(n-1, d)] = [1, {k_max}]"
        )));
    }
    let (_, cov) = sample_mean_covariance(train_std);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // Descending eigenvalue, index as the tie-break.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > RANK_TOLERANCE * top.max(f64::MIN_POSITIVE))
        .count();
    let mut diagnostics = PcaDiagnostics {
        requested_k: k,
        numerical_rank: rank,
        warnings: Vec::new(),
    };
    let k_used = if k > rank {
        diagnostics.warnings.push(format!(
            "requested k = {k} exceeds numerical rank {rank}; using k = {}",
            rank.max(1)
        ));
        rank.max(1)
    } else {
        k
    };

    let mut loadings = DMatrix::zeros(d, k_used);
    let mut explained_variance = Vec::with_capacity(k_used);
    for (j, &src) in order.iter().take(k_used).enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(src).into_owned();
        let pivot = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(j, &v);
        explained_variance.push(eig.eigenvalues[src].max(0.0));
    }
    Ok(ProjectionModel {
        standardizer,
        loadings,
        explained_variance,
        diagnostics,
    })
}

impl ProjectionModel {
    /// Fits the standardizer and PCA on raw training rows.
    pub fn fit(train_raw: &DMatrix<f64>, k: usize, scaling: Scaling) -> Result<Self> {
        let standardizer = Standardizer::fit(train_raw, scaling)?;
        let train_std = standardizer.transform_matrix(train_raw)?;
        fit_pca(standardizer, &train_std, k)
    }

    pub fn input_dim(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn diagnostics(&self) -> &PcaDiagnostics {
        &self.diagnostics
    }

    /// z = Wᵀ·standardize(x) for a raw-unit input.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x_std = self.standardizer.transform(x)?;
        self.project_std(&x_std)
    }

    /// z = Wᵀ·x_std for an already standardized input.
    pub fn project_std(&self, x_std: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x_std.len())?;
        Ok((0..self.latent_dim())
            .map(|j| {
                self.loadings
                    .column(j)
                    .iter()
                    .zip(x_std)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect())
    }

    /// Projects each raw row; returns an n × k matrix.
    pub fn project_matrix(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let std = self.standardizer.transform_matrix(raw)?;
        Ok(std * &self.loadings)
    }

    /// Maps a latent vector back to raw units: destandardize(W z).
    pub fn inverse_project(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.latent_dim(), z.len())?;
        let x_std = &self.loadings * DVector::from_column_slice(z);
        self.standardizer.inverse_transform(x_std.as_slice())
    }

    /// ∂z[dims]/∂x_std: the rows of Wᵀ selected by `dims` (|dims| × d).
    pub fn jacobian(&self, dims: &[usize]) -> Result<DMatrix<f64>> {
        let k = self.latent_dim();
        if let Some(&bad) = dims.iter().find(|&&i| i >= k) {
            return Err(Error::IndexOutOfRange { index: bad, len: k });
        }
        Ok(DMatrix::from_fn(dims.len(), self.input_dim(), |r, c| {
            self.loadings[(c, dims[r])]
        }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProjectionFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProjectionFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk layout: loadings stored row-major as d rows of k entries.
#[derive(Serialize, Deserialize)]
struct ProjectionFile {
    format: String,
    mean: Vec<f64>,
    scale: Vec<f64>,
    loadings: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
    diagnostics: PcaDiagnostics,
}

const FORMAT_TAG: &str = "oodcf-projection-v1";

impl From<&ProjectionModel> for ProjectionFile {
    fn from(m: &ProjectionModel) -> Self {
        ProjectionFile {
            format: FORMAT_TAG.into(),
            mean: m.standardizer.mean.clone(),
            scale: m.standardizer.scale.clone(),
            loadings: m
                .loadings
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            explained_variance: m.explained_variance.clone(),
            diagnostics: m.diagnostics.clone(),
        }
    }
}

impl TryFrom<ProjectionFile> for ProjectionModel {
    type Error = Error;

    fn try_from(f: ProjectionFile) -> Result<Self> {
        let bad = |reason: &str| Error::Config(format!("projection file: {reason}"));
        if f.format != FORMAT_TAG {
            return Err(bad("unknown format tag"));
        }
        let d = f.mean.len();
        let k = f.explained_variance.len();
        if f.scale.len() != d || f.loadings.len() != d || f.loadings.iter().any(|r| r.len() != k) {
            return Err(bad("inconsistent dimensions"));
        }
        if f.scale.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(bad("scale entries must be positive"));
        }
        let flat: Vec<f64> = f.loadings.into_iter().flatten().collect();
        Ok(ProjectionModel {
            standardizer: Standardizer {
                mean: f.mean,
                scale: f.scale,
            },
            loadings: DMatrix::from_row_slice(d, k, &flat),
            explained_variance: f.explained_variance,
            diagnostics: f.diagnostics,
        })
    }
}
