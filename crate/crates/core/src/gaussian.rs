//! Full-covariance Gaussian components with a cached Cholesky factor.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Relative ridge added to every fitted covariance, as a fraction of trace/m.
pub const RIDGE_RELATIVE: f64 = 1e-6;
/// Number of ×10 ridge escalations attempted before giving up.
pub const RIDGE_ESCALATIONS: usize = 10;

#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
    log_det: f64,
    ridge: f64,
}

impl GaussianComponent {
    /// Builds a component from an explicit mean and covariance, without
    /// regularization. Fails if the covariance is not positive definite.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), covariance.nrows())?;
        check_dim(mean.len(), covariance.ncols())?;
        let cholesky = Cholesky::new(covariance.clone()).ok_or_else(|| {
            Error::SingularCovariance("covariance is not positive definite".into())
        })?;
        let log_det = log_det_from_cholesky(&cholesky);
        Ok(Self {
            mean,
            covariance,
            cholesky,
            log_det,
            ridge: 0.0,
        })
    }

    /// Fits mean and sample covariance (divisor n-1) to the rows of `rows`,
    /// then regularizes: Σ + λI with λ = 1e-6·trace(Σ)/m, escalating ×10
    /// until the Cholesky factorization succeeds.
    pub fn fit(rows: &DMatrix<f64>) -> Result<Self> {
        let n = rows.nrows();
        let m = rows.ncols();
        if m == 0 {
            return Err(Error::InvalidArgument(
                "cannot fit a Gaussian over zero dimensions".into(),
            ));
        }
        if n < 2 {
            return Err(Error::SingularCovariance(format!(
                "covariance needs at least 2 rows, got {n}"
            )));
        }
        let (mean, cov) = sample_mean_covariance(rows);
        let trace = cov.trace();
        if !(trace.is_finite() && trace > 0.0) {
            return Err(Error::SingularCovariance(format!(
                "covariance trace is {trace}; rows carry no variance"
            )));
        }
        let mut ridge = RIDGE_RELATIVE * trace / m as f64;
        for _ in 0..=RIDGE_ESCALATIONS {
            let mut regularized = cov.clone();
            for i in 0..m {
                regularized[(i, i)] += ridge;
            }
            if let Some(cholesky) = Cholesky::new(regularized.clone()) {
                let log_det = log_det_from_cholesky(&cholesky);
                return Ok(Self {
                    mean,
                    covariance: regularized,
                    cholesky,
                    log_det,
                    ridge,
                });
            }
            ridge *= 10.0;
        }
        Err(Error::SingularCovariance(format!(
            "no positive definite covariance after {RIDGE_ESCALATIONS} ridge escalations"
        )))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The (regularized) covariance actually used for scoring.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Ridge λ that was added to the diagonal during fitting (0 for `new`).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Σ⁻¹(z − μ).
    pub fn precision_times_residual(&self, z: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), z.len())?;
        let residual = DVector::from_column_slice(z) - &self.mean;
        Ok(self.cholesky.solve(&residual))
    }

    /// Squared Mahalanobis distance (z − μ)ᵀΣ⁻¹(z − μ).
    pub fn mahalanobis_sq(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        let residual = DVector::from_column_slice(z) - &self.mean;
        // L y = r  =>  rᵀΣ⁻¹r = |y|²
        let mut y = residual;
        self.cholesky.l_dirty().solve_lower_triangular_mut(&mut y);
        Ok(y.norm_squared())
    }

    /// Natural-log negative log-density.
    pub fn nll(&self, z: &[f64]) -> Result<f64> {
        let d2 = self.mahalanobis_sq(z)?;
        Ok(0.5 * (self.dim() as f64 * LN_2PI + self.log_det + d2))
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.nll(z).map(|v| -v)
    }
}

fn log_det_from_cholesky(cholesky: &Cholesky<f64, Dyn>) -> f64 {
    let l = cholesky.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Column means and sample covariance (divisor n-1) of the rows.
pub fn sample_mean_covariance(rows: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.nrows();
    let mean = rows.row_mean().transpose();
    let mut centered = rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = (centered.transpose() * &centered) / denom;
    (mean, cov)
}

/// Copies the given columns of `m` into a new matrix, in the order given.
pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

/// Copies the given rows of `m` into a new matrix, in the order given.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}
