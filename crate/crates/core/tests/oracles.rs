mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use oodcf::dataset::make_toy;
use oodcf::density::fit_partition_density;
use oodcf::gaussian::GaussianComponent;
use oodcf::partition::{
    conditional_entropy, fit_qda, partition_loss, search_partition, Partition, SearchOptions,
};
use oodcf::projection::{ProjectionModel, Scaling};
use oodcf::report::auroc;

use common::*;

fn random_matrix(rng: &mut Lcg, n: usize, d: usize) -> DMatrix<f64> {
    // Correlated columns so the covariance has distinct eigenvalues.
    let base = DMatrix::from_fn(n, d, |_, _| rng.normal());
    let mix = DMatrix::from_fn(d, d, |i, j| {
        if i <= j {
            1.0 / (1 + j - i) as f64
        } else {
            0.0
        }
    });
    base * mix
}

#[test]
fn pca_matches_jacobi_eigendecomposition() {
    let mut rng = Lcg(11);
    let x = random_matrix(&mut rng, 300, 6);
    let model = ProjectionModel::fit(&x, 6, Scaling::UnitVariance).unwrap();
    let xs = model.standardizer().transform_matrix(&x).unwrap();
    let n = xs.nrows() as f64;
    let mean = DVector::from_fn(6, |j, _| xs.column(j).mean());
    let centered = DMatrix::from_fn(xs.nrows(), 6, |i, j| xs[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1.0);
    let (values, vectors) = jacobi_eigen(&cov);
    for (j, value) in values.iter().enumerate() {
        assert_relative_eq!(model.explained_variance()[j], *value, epsilon = 1e-9);
        let a = model.loadings().column(j);
        let b = vectors.column(j);
        // Eigenvectors are defined up to sign.
        assert_relative_eq!(a.dot(&b).abs(), 1.0, epsilon = 1e-8);
    }
    let w = model.loadings();
    assert_relative_eq!(w.transpose() * w, DMatrix::identity(6, 6), epsilon = 1e-10);
}

#[test]
fn projection_round_trips_at_full_rank() {
    let mut rng = Lcg(5);
    let x = random_matrix(&mut rng, 80, 4);
    let model = ProjectionModel::fit(&x, 4, Scaling::UnitVariance).unwrap();
    let row: Vec<f64> = x.row(7).iter().copied().collect();
    let back = model
        .inverse_project(&model.project(&row).unwrap())
        .unwrap();
    for (a, b) in row.iter().zip(&back) {
        assert_relative_eq!(a, b, epsilon = 1e-10);
    }
}

#[test]
fn nll_matches_density_formula() {
    let mut rng = Lcg(3);
    for d in 1..=4 {
        let a = DMatrix::from_fn(d, d, |_, _| rng.normal());
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
        let mean: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let g = GaussianComponent::new(DVector::from_vec(mean.clone()), cov.clone()).unwrap();
        for _ in 0..10 {
            let z: Vec<f64> = (0..d).map(|_| 2.0 * rng.normal()).collect();
            assert_relative_eq!(
                g.nll(&z).unwrap(),
                gaussian_nll(&z, &mean, &cov),
                max_relative = 1e-10
            );
        }
    }
}

/// One-dimensional QDA posterior entropy written out by hand: per-class
/// sample mean and variance (n-1) plus the relative ridge, priors from
/// class counts, Bernoulli entropy in bits.
fn entropy_1d(train: &[f64], labels: &[usize], eval: &[f64]) -> f64 {
    let stats: Vec<(f64, f64, f64)> = (0..2)
        .map(|c| {
            let v: Vec<f64> = train
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(x, _)| *x)
                .collect();
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, var * (1.0 + 1e-6), n / train.len() as f64)
        })
        .collect();
    let mut total = 0.0;
    for &z in eval {
        let logp: Vec<f64> = stats
            .iter()
            .map(|(m, v, prior)| {
                prior.ln() - 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (z - m).powi(2) / v)
            })
            .collect();
        let p1 = 1.0 / (1.0 + (logp[0] - logp[1]).exp());
        let h = |p: f64| {
            if p <= 0.0 || p >= 1.0 {
                0.0
            } else {
                -p * p.log2()
            }
        };
        total += h(p1) + h(1.0 - p1);
    }
    total / eval.len() as f64
}

#[test]
fn conditional_entropy_matches_hand_qda() {
    let mut rng = Lcg(9);
    let n = 120;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let train: Vec<f64> = labels
        .iter()
        .map(|&l| rng.normal() * 0.8 + if l == 1 { 1.0 } else { -1.0 })
        .collect();
    let eval: Vec<f64> = (0..50).map(|_| 2.0 * rng.normal()).collect();
    let model = fit_qda(&DMatrix::from_column_slice(n, 1, &train), &labels).unwrap();
    let got = conditional_entropy(&model, &DMatrix::from_column_slice(50, 1, &eval)).unwrap();
    assert_relative_eq!(got, entropy_1d(&train, &labels, &eval), epsilon = 1e-9);
}

#[test]
fn search_agrees_with_exhaustive_enumeration() {
    let mut rng = Lcg(21);
    let n = 240;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    // Dims 0 and 2 carry the class; 1 and 3 are noise.
    let z = DMatrix::from_fn(n, 4, |i, j| {
        let shift = if labels[i] == 1 { 1.0 } else { -1.0 };
        match j {
            0 => 2.0 * shift + rng.normal() * 0.7,
            2 => shift + rng.normal(),
            _ => rng.normal(),
        }
    });
    let part = search_partition(&z, &labels, &z, SearchOptions::default()).unwrap();
    let report = part.search().unwrap();

    // Best loss per cardinality by brute force.
    let mut best = [f64::INFINITY; 4];
    let mut arg = vec![Vec::new(); 4];
    for s in proper_subsets(4) {
        let l = partition_loss(&s, &z, &labels, &z).unwrap();
        if l < best[s.len()] {
            let c = s.len();
            best[c] = l;
            arg[c] = s;
        }
    }
    for row in &report.per_cardinality {
        assert_relative_eq!(row.loss, best[row.cardinality], epsilon = 1e-12);
        assert_eq!(row.subset, arg[row.cardinality]);
    }

    // Selection rule: z-score the minima, smallest cardinality under the
    // slack threshold.
    let losses: Vec<f64> = (1..4).map(|c| best[c]).collect();
    let mu = losses.iter().sum::<f64>() / 3.0;
    let sd = (losses.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / 3.0).sqrt();
    let norm: Vec<f64> = losses.iter().map(|l| (l - mu) / sd).collect();
    let m = norm.iter().copied().fold(f64::INFINITY, f64::min);
    let tau = m + m.abs() * 0.1;
    let card = 1 + norm.iter().position(|&v| v < tau || v == m).unwrap();
    assert_eq!(report.chosen_cardinality, card);
    assert_eq!(part.z_d(), arg[card].as_slice());
    assert!(part.z_d().contains(&0));
}

#[test]
fn auroc_equals_pairwise_oracle_on_ties() {
    let pos = [1.0, 1.0, 2.0, 3.0, 3.0];
    let neg = [1.0, 2.0, 2.0, 0.0];
    assert_eq!(auroc(&pos, &neg).unwrap(), pairwise_auroc(&pos, &neg));
}

#[test]
fn latent_gradient_matches_finite_differences_on_toy() {
    use oodcf::counterfactual::{PartitionObjective, Phase};
    let ds = make_toy(200, 50, 1);
    let (x, y) = ds.id_data();
    let projection = ProjectionModel::fit(&x, 2, Scaling::CenterOnly).unwrap();
    let z = projection.project_matrix(&x).unwrap();
    let partition = Partition::from_discriminative(&[0], 2).unwrap();
    let model = fit_partition_density(&z, &y, &partition).unwrap();
    let mut rng = Lcg(2);
    for phase in [Phase::NonDis, Phase::Dis, Phase::Joint] {
        for target in 0..2 {
            let obj = PartitionObjective::for_phase(&model, &projection, phase, target).unwrap();
            for _ in 0..5 {
                let p = [3.0 * rng.normal(), 3.0 * rng.normal()];
                let g = obj.gradient(&p).unwrap();
                let fd = central_difference(|q| obj.loss(q).unwrap(), &p, 1e-5);
                for (a, b) in g.iter().zip(&fd) {
                    assert_relative_eq!(a, b, max_relative = 1e-5, epsilon = 1e-7);
                }
            }
        }
    }
}
