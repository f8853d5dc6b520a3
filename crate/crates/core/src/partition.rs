//! Discriminative / non-discriminative split of the latent dimensions.
//!
//! Every non-empty proper subset of latent dims is scored by how much label
//! uncertainty a QDA classifier leaves on it, minus the uncertainty left on
//! its complement. The search keeps the best subset per cardinality,
//! z-scores those minima, and picks the smallest cardinality whose
//! normalized loss is within `slack` of the best.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{select_columns, GaussianComponent};
use crate::stats::{mean, std_population};

/// Default exhaustive-search cap on the latent dimensionality.
pub const DEFAULT_CAP: usize = 20;
/// Default relative slack on the normalized loss threshold.
pub const DEFAULT_SLACK: f64 = 0.10;

/// Class-conditional full-covariance Gaussian classifier.
#[derive(Debug, Clone)]
pub struct QdaModel {
    components: Vec<GaussianComponent>,
    log_priors: Vec<f64>,
}

/// Fits one regularized Gaussian per class; priors are class frequencies.
/// Labels must be contiguous ids `0..C` with `C >= 2`.
pub fn fit_qda(z: &DMatrix<f64>, labels: &[usize]) -> Result<QdaModel> {
    check_dim(z.nrows(), labels.len())?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::TooFewClasses(n_classes));
    }
    let mut components = Vec::with_capacity(n_classes);
    let mut log_priors = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.is_empty() {
            return Err(Error::TooFewRows { need: 1, got: 0 });
        }
        let class_rows = DMatrix::from_fn(rows.len(), z.ncols(), |r, c| z[(rows[r], c)]);
        components.push(GaussianComponent::fit(&class_rows)?);
        log_priors.push((rows.len() as f64 / labels.len() as f64).ln());
    }
    Ok(QdaModel {
        components,
        log_priors,
    })
}

impl QdaModel {
    pub fn n_classes(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn priors(&self) -> Vec<f64> {
        self.log_priors.iter().map(|l| l.exp()).collect()
    }

    /// Class posteriors P(y = c | z), computed in log space.
    pub fn posterior(&self, z: &[f64]) -> Result<Vec<f64>> {
        let logits = self
            .components
            .iter()
            .zip(&self.log_priors)
            .map(|(g, lp)| g.log_density(z).map(|ld| ld + lp))
            .collect::<Result<Vec<f64>>>()?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        Ok(exp.into_iter().map(|e| e / total).collect())
    }
}

/// h(p) = −p log₂ p − (1−p) log₂(1−p), with 0·log 0 = 0.
pub fn bernoulli_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange(p));
    }
    Ok(plogp(p) + plogp(1.0 - p))
}

/// Entropy in bits of a categorical distribution.
pub fn categorical_entropy(probs: &[f64]) -> f64 {
    probs.iter().map(|&p| plogp(p)).sum()
}

fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Mean posterior entropy (bits) of the classifier over the evaluation rows.
///
/// Binary models use the Bernoulli entropy of P(y = 1 | z); with more
/// classes the full categorical entropy is used.
pub fn conditional_entropy(model: &QdaModel, z_eval: &DMatrix<f64>) -> Result<f64> {
    check_dim(model.dim(), z_eval.ncols())?;
    if z_eval.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    let mut row = vec![0.0; z_eval.ncols()];
    for r in 0..z_eval.nrows() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = z_eval[(r, c)];
        }
        let post = model.posterior(&row)?;
        total += if post.len() == 2 {
            bernoulli_entropy(post[1].clamp(0.0, 1.0))?
        } else {
            categorical_entropy(&post)
        };
    }
    Ok(total / z_eval.nrows() as f64)
}

fn subset_entropy(
    dims: &[usize],
    z_train: &DMatrix<f64>,
    y_train: &[usize],
    z_eval: &DMatrix<f64>,
) -> Result<f64> {
    let model = fit_qda(&select_columns(z_train, dims), y_train)?;
    conditional_entropy(&model, &select_columns(z_eval, dims))
}

fn complement(subset: &[usize], k: usize) -> Vec<usize> {
    (0..k).filter(|i| !subset.contains(i)).collect()
}

/// H[Ŷ | Z_subset] − H[Ŷ | Z_complement], with each classifier trained on
/// `z_train` and evaluated on `z_eval`.
pub fn partition_loss(
    subset: &[usize],
    z_train: &DMatrix<f64>,
    y_train: &[usize],
    z_eval: &DMatrix<f64>,
) -> Result<f64> {
    let k = z_train.ncols();
    check_dim(k, z_eval.ncols())?;
    if let Some(&bad) = subset.iter().find(|&&i| i >= k) {
        return Err(Error::IndexOutOfRange { index: bad, len: k });
    }
    let mut subset = subset.to_vec();
    subset.sort_unstable();
    subset.dedup();
    let rest = complement(&subset, k);
    if subset.is_empty() || rest.is_empty() {
        return Err(Error::InvalidArgument(
            "subset and its complement must both be non-empty".into(),
        ));
    }
    let inside = subset_entropy(&subset, z_train, y_train, z_eval)?;
    let outside = subset_entropy(&rest, z_train, y_train, z_eval)?;
    Ok(inside - outside)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub slack: f64,
    pub cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            slack: DEFAULT_SLACK,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CardinalityBest {
    pub cardinality: usize,
    pub subset: Vec<usize>,
    pub loss: f64,
    pub normalized: f64,
}

/// What the subset search saw, kept for the partition report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub per_cardinality: Vec<CardinalityBest>,
    pub chosen_cardinality: usize,
    /// The cardinality the "largest normalized value below threshold" reading
    /// would have picked, for comparison.
    pub alternative_cardinality: Option<usize>,
    pub slack: f64,
    pub warnings: Vec<String>,
}

/// Disjoint cover of `0..k` by a discriminative and a non-discriminative set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    z_d: Vec<usize>,
    z_n: Vec<usize>,
    search: Option<SearchReport>,
}

impl Partition {
    /// Builds a partition of `0..k` with the given discriminative dims.
    pub fn from_discriminative(z_d: &[usize], k: usize) -> Result<Self> {
        if let Some(&bad) = z_d.iter().find(|&&i| i >= k) {
            return Err(Error::IndexOutOfRange { index: bad, len: k });
        }
        let mut z_d = z_d.to_vec();
        z_d.sort_unstable();
        z_d.dedup();
        let z_n = complement(&z_d, k);
        if z_d.is_empty() || z_n.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "both partitions must be non-empty (|z_d| = {}, k = {k})",
                z_d.len()
            )));
        }
        Ok(Self {
            z_d,
            z_n,
            search: None,
        })
    }

    pub fn z_d(&self) -> &[usize] {
        &self.z_d
    }

    pub fn z_n(&self) -> &[usize] {
        &self.z_n
    }

    pub fn k(&self) -> usize {
        self.z_d.len() + self.z_n.len()
    }

    pub fn search(&self) -> Option<&SearchReport> {
        self.search.as_ref()
    }

    /// Splits a latent vector into (z_n, z_d) coordinates.
    pub fn split_latent(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.k(), z.len())?;
        Ok((
            self.z_n.iter().map(|&i| z[i]).collect(),
            self.z_d.iter().map(|&i| z[i]).collect(),
        ))
    }
}

/// Exhaustive subset search for the discriminative partition.
///
/// Subset entropies are evaluated in parallel but reduced in a fixed order,
/// so the result does not depend on the thread count.
pub fn search_partition(
    z_train: &DMatrix<f64>,
    y_train: &[usize],
    z_eval: &DMatrix<f64>,
    options: SearchOptions,
) -> Result<Partition> {
    let k = z_train.ncols();
    if k > options.cap {
        return Err(Error::CapExceeded {
            k,
            cap: options.cap,
        });
    }
    if k > 62 {
        return Err(Error::InvalidArgument(format!(
            "k = {k} is beyond any exhaustive search"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidLatentDim(format!(
            "partition search needs k >= 2, got {k}"
        )));
    }
    check_dim(k, z_eval.ncols())?;
    check_dim(z_train.nrows(), y_train.len())?;
    if !(options.slack >= 0.0 && options.slack.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "slack must be a non-negative number, got {}",
            options.slack
        )));
    }

    let full: u64 = (1u64 << k) - 1;
    let dims_of = |mask: u64| -> Vec<usize> { (0..k).filter(|i| mask >> i & 1 == 1).collect() };

    // Entropy of every non-empty proper subset, indexed by mask - 1.
    let entropies: Vec<Result<f64>> = (1..full)
        .into_par_iter()
        .map(|mask| subset_entropy(&dims_of(mask), z_train, y_train, z_eval))
        .collect();
    let entropies = entropies.into_iter().collect::<Result<Vec<f64>>>()?;
    let entropy = |mask: u64| entropies[(mask - 1) as usize];

    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; k];
    for mask in 1..full {
        let card = mask.count_ones() as usize;
        let loss = entropy(mask) - entropy(full ^ mask);
        let subset = dims_of(mask);
        let better = match &best[card] {
            None => true,
            Some((l, s)) => loss < *l || (loss == *l && subset < *s),
        };
        if better {
            best[card] = Some((loss, subset));
        }
    }
    let minima: Vec<(usize, f64, Vec<usize>)> = best
        .into_iter()
        .enumerate()
        .filter_map(|(c, b)| b.map(|(l, s)| (c, l, s)))
        .collect();

    let losses: Vec<f64> = minima.iter().map(|m| m.1).collect();
    let mut warnings = Vec::new();
    let sd = std_population(&losses);
    let normalized: Vec<f64> = if sd > 0.0 {
        let mu = mean(&losses);
        losses.iter().map(|l| (l - mu) / sd).collect()
    } else {
        if losses.len() > 1 {
            warnings.push(
                "all per-cardinality minima are equal; falling back to the smallest cardinality"
                    .to_string(),
            );
        }
        vec![0.0; losses.len()]
    };

    let min_norm = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = min_norm + min_norm.abs() * options.slack;
    let within = |v: f64| v < threshold || v == min_norm;
    let chosen = normalized
        .iter()
        .position(|&v| within(v))
        .expect("the minimum is always within its own threshold");
    let alternative = normalized
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < threshold)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| minima[i].0);

    let z_d = minima[chosen].2.clone();
    let per_cardinality = minima
        .into_iter()
        .zip(&normalized)
        .map(
            |((cardinality, loss, subset), &normalized)| CardinalityBest {
                cardinality,
                subset,
                loss,
                normalized,
            },
        )
        .collect::<Vec<_>>();
    let mut partition = Partition::from_discriminative(&z_d, k)?;
    partition.search = Some(SearchReport {
        chosen_cardinality: z_d.len(),
        per_cardinality,
        alternative_cardinality: alternative,
        slack: options.slack,
        warnings,
    });
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bernoulli_values() {
        assert_eq!(bernoulli_entropy(0.5).unwrap(), 1.0);
        assert_eq!(bernoulli_entropy(0.0).unwrap(), 0.0);
        assert_eq!(bernoulli_entropy(1.0).unwrap(), 0.0);
        // −0.25·log₂0.25 − 0.75·log₂0.75 = 0.5 + 0.311278...
        assert_relative_eq!(
            bernoulli_entropy(0.25).unwrap(),
            0.811_278_124_459_132_9,
            epsilon = 1e-12
        );
        assert!(matches!(bernoulli_entropy(1.5), Err(Error::OutOfRange(_))));
        assert!(matches!(bernoulli_entropy(-0.1), Err(Error::OutOfRange(_))));
    }

    fn two_class_1d() -> (DMatrix<f64>, Vec<usize>) {
        // Symmetric clusters around −3 and +3 with unit spread.
        let offsets = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (class, centre) in [(0usize, -3.0), (1, 3.0)] {
            for o in offsets {
                data.push(centre + o);
                labels.push(class);
            }
        }
        (DMatrix::from_column_slice(10, 1, &data), labels)
    }

    #[test]
    fn qda_separated_posterior_matches_closed_form() {
        let (z, y) = two_class_1d();
        let model = fit_qda(&z, &y).unwrap();
        let post = model.posterior(&[3.0]).unwrap();
        assert!(post[1] > 0.99);
        // Closed form with the fitted (equal) variances and equal priors:
        // log-odds = ((x+3)² − (x−3)²) / (2σ²) = 12x / (2σ²).
        let var = model.components()[0].covariance()[(0, 0)];
        let odds = (12.0 * 3.0 / (2.0 * var)).exp();
        assert_relative_eq!(post[1], odds / (1.0 + odds), epsilon = 1e-12);
        assert_relative_eq!(post.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_classes_give_prior_posteriors() {
        let data = [0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0];
        let z = DMatrix::from_column_slice(8, 1, &data);
        let y = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let model = fit_qda(&z, &y).unwrap();
        for x in [-2.0, 0.5, 7.0] {
            let post = model.posterior(&[x]).unwrap();
            assert_relative_eq!(post[0], 0.5, epsilon = 1e-12);
        }
        let ent = conditional_entropy(&model, &z).unwrap();
        assert_relative_eq!(ent, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let z = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(matches!(
            fit_qda(&z, &[0, 0, 0]),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn conditional_entropy_dimension_mismatch() {
        let (z, y) = two_class_1d();
        let model = fit_qda(&z, &y).unwrap();
        let wide = DMatrix::zeros(2, 2);
        assert!(matches!(
            conditional_entropy(&model, &wide),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// Dim 0 carries the label; dim 1 is label-independent.
    fn informative_and_noise() -> (DMatrix<f64>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = i % 2;
            let signal = if class == 0 { -4.0 } else { 4.0 } + ((i * 7) % 5) as f64 * 0.3;
            let noise = ((i * 13) % 11) as f64 * 0.4 - 2.0;
            rows.extend_from_slice(&[signal, noise]);
            labels.push(class);
        }
        (DMatrix::from_row_slice(40, 2, &rows), labels)
    }

    #[test]
    fn loss_is_antisymmetric() {
        let (z, y) = informative_and_noise();
        let a = partition_loss(&[0], &z, &y, &z).unwrap();
        let b = partition_loss(&[1], &z, &y, &z).unwrap();
        assert_eq!(a, -b);
        assert!(a < -0.5);
    }

    #[test]
    fn loss_rejects_full_or_empty_subset() {
        let (z, y) = informative_and_noise();
        assert!(partition_loss(&[], &z, &y, &z).is_err());
        assert!(partition_loss(&[0, 1], &z, &y, &z).is_err());
    }

    #[test]
    fn two_dims_pick_the_informative_one() {
        let (z, y) = informative_and_noise();
        let p = search_partition(&z, &y, &z, SearchOptions::default()).unwrap();
        assert_eq!(p.z_d(), &[0]);
        assert_eq!(p.z_n(), &[1]);
        let report = p.search().unwrap();
        assert_eq!(report.per_cardinality.len(), 1);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn cap_is_enforced() {
        let z = DMatrix::zeros(10, 3);
        let y = vec![0; 10];
        let err = search_partition(&z, &y, &z, SearchOptions { slack: 0.1, cap: 2 });
        assert!(matches!(err, Err(Error::CapExceeded { k: 3, cap: 2 })));
    }

    #[test]
    fn partition_constructor_validates() {
        assert!(Partition::from_discriminative(&[], 3).is_err());
        assert!(Partition::from_discriminative(&[0, 1, 2], 3).is_err());
        assert!(Partition::from_discriminative(&[5], 3).is_err());
        let p = Partition::from_discriminative(&[2, 0], 4).unwrap();
        assert_eq!(p.z_d(), &[0, 2]);
        assert_eq!(p.z_n(), &[1, 3]);
        let (n, d) = p.split_latent(&[10.0, 11.0, 12.0, 13.0]).unwrap();
        assert_eq!(n, vec![11.0, 13.0]);
        assert_eq!(d, vec![10.0, 12.0]);
    }
}
