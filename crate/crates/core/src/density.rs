//! Per-partition Gaussian densities over the latent space, the NLL-based OOD
//! score, and Mahalanobis baselines.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{select_columns, select_rows, GaussianComponent};
use crate::partition::Partition;
use crate::projection::ProjectionModel;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OodScore {
    /// Non-discriminative NLL.
    pub l_n: f64,
    /// Discriminative NLL (most favorable class).
    pub l_d: f64,
    pub l_total: f64,
}

impl OodScore {
    pub fn new(l_n: f64, l_d: f64) -> Self {
        Self {
            l_n,
            l_d,
            l_total: l_n + l_d,
        }
    }
}

/// Gaussian models fit on ID training latents: one pooled Gaussian over z_n,
/// one Gaussian per class over z_d, and (for the single-Gaussian ablation)
/// one Gaussian per class over all latent dims.
///
/// The sorted training NLLs of each model are kept so generation can stop at
/// a quantile of what typical ID data scores.
#[derive(Debug, Clone)]
pub struct PartitionDensityModel {
    partition: Partition,
    non_dis: GaussianComponent,
    dis_per_class: Vec<GaussianComponent>,
    joint_per_class: Vec<GaussianComponent>,
    non_dis_train_nll: Vec<f64>,
    dis_train_nll: Vec<Vec<f64>>,
    joint_train_nll: Vec<Vec<f64>>,
}

fn class_rows(labels: &[usize], class: usize) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i] == class).collect()
}

fn row_nlls(g: &GaussianComponent, rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut out = (0..rows.nrows())
        .map(|r| {
            let z: Vec<f64> = rows.row(r).iter().copied().collect();
            g.nll(&z)
        })
        .collect::<Result<Vec<f64>>>()?;
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Fits the pooled z_n Gaussian and the class-conditional z_d Gaussians.
pub fn fit_partition_density(
    z_train: &DMatrix<f64>,
    y_train: &[usize],
    partition: &Partition,
) -> Result<PartitionDensityModel> {
    check_dim(partition.k(), z_train.ncols())?;
    check_dim(z_train.nrows(), y_train.len())?;
    let n_classes = y_train.iter().max().map_or(0, |m| m + 1);
    if n_classes == 0 {
        return Err(Error::EmptyInput);
    }

    let z_n_rows = select_columns(z_train, partition.z_n());
    let non_dis = GaussianComponent::fit(&z_n_rows)?;
    let non_dis_train_nll = row_nlls(&non_dis, &z_n_rows)?;

    let all_dims: Vec<usize> = (0..partition.k()).collect();
    let mut dis_per_class = Vec::with_capacity(n_classes);
    let mut joint_per_class = Vec::with_capacity(n_classes);
    let mut dis_train_nll = Vec::with_capacity(n_classes);
    let mut joint_train_nll = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let rows = select_rows(z_train, &class_rows(y_train, class));
        let dis_rows = select_columns(&rows, partition.z_d());
        let dis = GaussianComponent::fit(&dis_rows).map_err(|e| class_context(e, class))?;
        dis_train_nll.push(row_nlls(&dis, &dis_rows)?);
        dis_per_class.push(dis);
        let joint_rows = select_columns(&rows, &all_dims);
        let joint = GaussianComponent::fit(&joint_rows).map_err(|e| class_context(e, class))?;
        joint_train_nll.push(row_nlls(&joint, &joint_rows)?);
        joint_per_class.push(joint);
    }
    Ok(PartitionDensityModel {
        partition: partition.clone(),
        non_dis,
        dis_per_class,
        joint_per_class,
        non_dis_train_nll,
        dis_train_nll,
        joint_train_nll,
    })
}

fn class_context(e: Error, class: usize) -> Error {
    match e {
        Error::SingularCovariance(msg) => {
            Error::SingularCovariance(format!("class {class}: {msg}"))
        }
        other => other,
    }
}

impl PartitionDensityModel {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn n_classes(&self) -> usize {
        self.dis_per_class.len()
    }

    pub fn non_dis(&self) -> &GaussianComponent {
        &self.non_dis
    }

    pub fn dis_component(&self, class: usize) -> Result<&GaussianComponent> {
        self.dis_per_class.get(class).ok_or(Error::UnknownClass {
            class,
            n_classes: self.n_classes(),
        })
    }

    pub fn joint_component(&self, class: usize) -> Result<&GaussianComponent> {
        self.joint_per_class.get(class).ok_or(Error::UnknownClass {
            class,
            n_classes: self.n_classes(),
        })
    }

    /// −log p_n(z_n) under the pooled Gaussian.
    pub fn nll_non_dis(&self, z_n: &[f64]) -> Result<f64> {
        self.non_dis.nll(z_n)
    }

    /// −log p_d(z_d) under the class-`target` Gaussian, or the minimum over
    /// classes when `target` is `None`.
    pub fn nll_dis(&self, z_d: &[f64], target: Option<usize>) -> Result<f64> {
        match target {
            Some(class) => self.dis_component(class)?.nll(z_d),
            None => self
                .dis_per_class
                .iter()
                .map(|g| g.nll(z_d))
                .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v))),
        }
    }

    /// Class whose discriminative Gaussian gives the lowest NLL; ties go to
    /// the lower class id.
    pub fn closest_class(&self, z_d: &[f64]) -> Result<usize> {
        let mut best = (0, f64::INFINITY);
        for (c, g) in self.dis_per_class.iter().enumerate() {
            let v = g.nll(z_d)?;
            if v < best.1 {
                best = (c, v);
            }
        }
        Ok(best.0)
    }

    /// Score of a full latent vector.
    pub fn score_latent(&self, z: &[f64]) -> Result<OodScore> {
        let (z_n, z_d) = self.partition.split_latent(z)?;
        Ok(OodScore::new(
            self.nll_non_dis(&z_n)?,
            self.nll_dis(&z_d, None)?,
        ))
    }

    /// NLL quantile of the ID training rows under the pooled z_n Gaussian.
    pub fn non_dis_threshold(&self, q: f64) -> f64 {
        quantile_sorted(&self.non_dis_train_nll, q)
    }

    /// NLL quantile of class-`class` training rows under their z_d Gaussian.
    pub fn dis_threshold(&self, class: usize, q: f64) -> Result<f64> {
        self.dis_component(class)?;
        Ok(quantile_sorted(&self.dis_train_nll[class], q))
    }

    /// NLL quantile of class-`class` training rows under their joint Gaussian.
    pub fn joint_threshold(&self, class: usize, q: f64) -> Result<f64> {
        self.joint_component(class)?;
        Ok(quantile_sorted(&self.joint_train_nll[class], q))
    }
}

/// l_n, l_d (scoring mode) and l_total of a raw-unit input.
pub fn ood_score(
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
    x: &[f64],
) -> Result<OodScore> {
    model.score_latent(&projection.project(x)?)
}

/// Class-conditional and marginal (pooled) Mahalanobis scorers over the
/// latent space.
#[derive(Debug, Clone)]
pub struct MahalanobisModel {
    per_class: Vec<GaussianComponent>,
    pooled: GaussianComponent,
}

impl MahalanobisModel {
    pub fn fit(z_train: &DMatrix<f64>, y_train: &[usize]) -> Result<Self> {
        check_dim(z_train.nrows(), y_train.len())?;
        let n_classes = y_train.iter().max().map_or(0, |m| m + 1);
        if n_classes == 0 {
            return Err(Error::EmptyInput);
        }
        let per_class = (0..n_classes)
            .map(|c| {
                GaussianComponent::fit(&select_rows(z_train, &class_rows(y_train, c)))
                    .map_err(|e| class_context(e, c))
            })
            .collect::<Result<Vec<_>>>()?;
        let pooled = GaussianComponent::fit(z_train)?;
        Ok(Self { per_class, pooled })
    }

    /// min over classes of (z − μ_c)ᵀ Σ_c⁻¹ (z − μ_c).
    pub fn class_conditional(&self, z: &[f64]) -> Result<f64> {
        self.per_class
            .iter()
            .map(|g| g.mahalanobis_sq(z))
            .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
    }

    /// (z − μ)ᵀ Σ⁻¹ (z − μ) under one Gaussian fit to all ID training rows.
    pub fn marginal(&self, z: &[f64]) -> Result<f64> {
        self.pooled.mahalanobis_sq(z)
    }
}

/// One-shot class-conditional Mahalanobis score.
pub fn mahalanobis_score(z_train: &DMatrix<f64>, y_train: &[usize], z: &[f64]) -> Result<f64> {
    MahalanobisModel::fit(z_train, y_train)?.class_conditional(z)
}

/// One-shot marginal Mahalanobis score.
pub fn marginal_mahalanobis_score(z_train: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
    GaussianComponent::fit(z_train)?.mahalanobis_sq(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_data() -> (DMatrix<f64>, Vec<usize>) {
        // Two classes separated along dim 0; dim 1 shared.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let class = i % 2;
            let a = if class == 0 { 2.0 } else { -2.0 } + ((i * 3) % 7) as f64 * 0.2 - 0.6;
            let b = ((i * 5) % 9) as f64 * 0.25 - 1.0;
            rows.extend_from_slice(&[a, b]);
            labels.push(class);
        }
        (DMatrix::from_row_slice(30, 2, &rows), labels)
    }

    fn fitted() -> PartitionDensityModel {
        let (z, y) = grid_data();
        let p = Partition::from_discriminative(&[0], 2).unwrap();
        fit_partition_density(&z, &y, &p).unwrap()
    }

    #[test]
    fn decomposition_is_exact() {
        let m = fitted();
        let z = [0.3, -0.7];
        let s = m.score_latent(&z).unwrap();
        assert_eq!(s.l_total, s.l_n + s.l_d);
        assert_eq!(s.l_n, m.nll_non_dis(&[-0.7]).unwrap());
        assert_eq!(s.l_d, m.nll_dis(&[0.3], None).unwrap());
    }

    #[test]
    fn scoring_mode_is_class_minimum() {
        let m = fitted();
        for x in [-3.0, -0.1, 0.0, 0.4, 2.5] {
            let per: Vec<f64> = (0..2).map(|c| m.nll_dis(&[x], Some(c)).unwrap()).collect();
            assert_eq!(m.nll_dis(&[x], None).unwrap(), per[0].min(per[1]));
            let closest = m.closest_class(&[x]).unwrap();
            assert_eq!(per[closest], per[0].min(per[1]));
        }
    }

    #[test]
    fn unknown_class() {
        let m = fitted();
        assert!(matches!(
            m.nll_dis(&[0.0], Some(2)),
            Err(Error::UnknownClass {
                class: 2,
                n_classes: 2
            })
        ));
    }

    #[test]
    fn nll_at_class_mean_is_mode_value() {
        let m = fitted();
        let g = m.dis_component(1).unwrap();
        let mu = g.mean()[0];
        let expected = 0.5 * ((2.0 * std::f64::consts::PI).ln() + g.log_det());
        assert_relative_eq!(
            m.nll_dis(&[mu], Some(1)).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn thresholds_are_training_quantiles() {
        let m = fitted();
        let median = m.non_dis_threshold(0.5);
        let lo = m.non_dis_threshold(0.0);
        let hi = m.non_dis_threshold(1.0);
        assert!(lo <= median && median <= hi);
        assert!(m.dis_threshold(0, 0.5).unwrap().is_finite());
        assert!(m.dis_threshold(3, 0.5).is_err());
    }

    #[test]
    fn mahalanobis_at_class_mean_is_zero() {
        let (z, y) = grid_data();
        let mm = MahalanobisModel::fit(&z, &y).unwrap();
        let mu: Vec<f64> = mm.per_class[0].mean().iter().copied().collect();
        assert!(mm.class_conditional(&mu).unwrap().abs() < 1e-20);
        let pooled: Vec<f64> = z.row_mean().iter().copied().collect();
        assert!(mm.marginal(&pooled).unwrap().abs() < 1e-20);
    }

    #[test]
    fn single_row_class_is_singular() {
        let z = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 0.0, 2.0, 2.0, 5.0, 5.0]);
        let y = vec![0, 0, 0, 1];
        let p = Partition::from_discriminative(&[0], 2).unwrap();
        assert!(matches!(
            fit_partition_density(&z, &y, &p),
            Err(Error::SingularCovariance(_))
        ));
    }
}
