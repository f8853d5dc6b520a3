//! Fitting every model for one split and evaluating the variants on it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classifier::{CfiClassifier, TrainConfig};
use crate::counterfactual::{
    batch_generate, cfi_generate, generate, generate_ablation, CfiConfig, CounterfactualResult,
    GenerationConfig, Variant,
};
use crate::dataset::{split, LabeledDataset, SplitSpec};
use crate::density::{
    fit_partition_density, ood_score, MahalanobisModel, OodScore, PartitionDensityModel,
};
use crate::error::{Error, Result};
use crate::partition::{search_partition, Partition, SearchOptions};
use crate::projection::{ProjectionModel, Scaling};
use crate::report::{auroc, evaluate_run, EvalRow};

/// Rows on which partition entropies are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalOn {
    /// Held-out ID test rows.
    #[default]
    Test,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Latent dims; `None` keeps every input dimension.
    pub k: Option<usize>,
    pub scaling: Scaling,
    pub search: SearchOptions,
    pub eval_on: EvalOn,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: None,
            scaling: Scaling::UnitVariance,
            search: SearchOptions::default(),
            eval_on: EvalOn::Test,
        }
    }
}

/// Projection, partition, densities and baselines fit on ID training rows.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub projection: ProjectionModel,
    pub density: PartitionDensityModel,
    pub mahalanobis: MahalanobisModel,
    pub classifier: Option<CfiClassifier>,
}

impl FittedPipeline {
    /// Fits on the ID rows of `train`; `eval` supplies the ID rows for the
    /// partition entropies when `cfg.eval_on` is `Test`.
    pub fn fit(
        train: &LabeledDataset,
        eval: &LabeledDataset,
        cfg: &PipelineConfig,
        classifier: Option<TrainConfig>,
    ) -> Result<Self> {
        let (x_train, _) = train.id_data();
        if x_train.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        let k = cfg.k.unwrap_or(train.n_features());
        let projection = ProjectionModel::fit(&x_train, k, cfg.scaling)?;
        Self::fit_with_projection(train, eval, cfg, projection, classifier)
    }

    /// Like [`FittedPipeline::fit`] with an already fitted projection.
    pub fn fit_with_projection(
        train: &LabeledDataset,
        eval: &LabeledDataset,
        cfg: &PipelineConfig,
        projection: ProjectionModel,
        classifier: Option<TrainConfig>,
    ) -> Result<Self> {
        let (x_train, y_train) = train.id_data();
        if x_train.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        let z_train = projection.project_matrix(&x_train)?;
        let z_eval = match cfg.eval_on {
            EvalOn::Train => z_train.clone(),
            EvalOn::Test => {
                let (x_eval, _) = eval.id_data();
                if x_eval.nrows() == 0 {
                    return Err(Error::EmptyInput);
                }
                projection.project_matrix(&x_eval)?
            }
        };
        let partition = search_partition(&z_train, &y_train, &z_eval, cfg.search)?;
        Self::with_partition(&x_train, &y_train, projection, partition, classifier)
    }

    /// Same as [`FittedPipeline::fit`] but with a fixed partition.
    pub fn with_partition(
        x_train: &DMatrix<f64>,
        y_train: &[usize],
        projection: ProjectionModel,
        partition: Partition,
        classifier: Option<TrainConfig>,
    ) -> Result<Self> {
        let z_train = projection.project_matrix(x_train)?;
        let density = fit_partition_density(&z_train, y_train, &partition)?;
        let mahalanobis = MahalanobisModel::fit(&z_train, y_train)?;
        let classifier = classifier
            .map(|tc| CfiClassifier::train(x_train, y_train, tc))
            .transpose()?;
        Ok(Self {
            projection,
            density,
            mahalanobis,
            classifier,
        })
    }

    pub fn partition(&self) -> &Partition {
        self.density.partition()
    }

    pub fn score(&self, x: &[f64]) -> Result<OodScore> {
        ood_score(&self.density, &self.projection, x)
    }

    pub fn mahalanobis(&self, x: &[f64]) -> Result<f64> {
        self.mahalanobis
            .class_conditional(&self.projection.project(x)?)
    }

    pub fn marginal_mahalanobis(&self, x: &[f64]) -> Result<f64> {
        self.mahalanobis.marginal(&self.projection.project(x)?)
    }

    pub fn counterfactual(
        &self,
        x: &[f64],
        variant: Variant,
        generation: &GenerationConfig,
        cfi: &CfiConfig,
    ) -> Result<CounterfactualResult> {
        match variant {
            Variant::Full => generate(x, &self.density, &self.projection, generation),
            Variant::Cfi => {
                let clf = self.classifier.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("CFI needs a trained classifier".into())
                })?;
                cfi_generate(x, clf, &self.density, &self.projection, cfi)
            }
            v => generate_ablation(x, &self.density, &self.projection, generation, v),
        }
    }
}

/// Everything one seed of an experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train_fraction: f64,
    pub pipeline: PipelineConfig,
    pub generation: GenerationConfig,
    pub cfi: CfiConfig,
    /// Classifier recipe for CFI; its seed is replaced by the run seed.
    pub classifier: TrainConfig,
    pub variants: Vec<Variant>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            pipeline: PipelineConfig::default(),
            generation: GenerationConfig::default(),
            cfi: CfiConfig::default(),
            classifier: TrainConfig::default(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug)]
pub struct VariantOutcome {
    pub variant: Variant,
    /// One slot per test OOD row, in row order.
    pub results: Vec<Result<CounterfactualResult>>,
    pub row: EvalRow,
}

#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub pipeline: FittedPipeline,
    pub variants: Vec<VariantOutcome>,
}

/// Splits with `seed`, fits on the ID training rows, and generates
/// counterfactuals for every OOD test row under each requested variant.
///
/// Rows whose generation fails are left out of that variant's metrics; a
/// variant with no successful row fails the seed.
pub fn run_seed(ds: &LabeledDataset, cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    if cfg.variants.is_empty() {
        return Err(Error::Config("no variants selected".into()));
    }
    let (train, test) = split(
        ds,
        SplitSpec {
            train_fraction: cfg.train_fraction,
            seed,
        },
    )?;
    let needs_classifier = cfg.variants.contains(&Variant::Cfi);
    let classifier = needs_classifier.then_some(TrainConfig {
        seed,
        ..cfg.classifier
    });
    let pipeline = FittedPipeline::fit(&train, &test, &cfg.pipeline, classifier)?;
    let (id_test, _) = test.id_data();
    let ood_rows: Vec<Vec<f64>> = test.ood_indices().iter().map(|&i| test.row(i)).collect();
    if ood_rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut variants = Vec::with_capacity(cfg.variants.len());
    for &variant in &cfg.variants {
        let results = batch_generate(&ood_rows, |x| {
            pipeline.counterfactual(x, variant, &cfg.generation, &cfg.cfi)
        });
        let ok: Vec<CounterfactualResult> = results
            .iter()
            .filter_map(|r| r.as_ref().ok().cloned())
            .collect();
        if ok.is_empty() {
            let first = results
                .into_iter()
                .find_map(|r| r.err())
                .unwrap_or(Error::EmptyInput);
            return Err(first);
        }
        let row = evaluate_run(
            variant.label(),
            &ok,
            &id_test,
            &pipeline.density,
            &pipeline.projection,
        )?;
        variants.push(VariantOutcome {
            variant,
            results,
            row,
        });
    }
    Ok(SeedOutcome {
        seed,
        train,
        test,
        pipeline,
        variants,
    })
}

/// Detection AUROCs of the three scores, ID test rows against OOD test rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionAurocs {
    pub custom: f64,
    pub mahalanobis: f64,
    pub marginal_mahalanobis: f64,
}

impl DetectionAurocs {
    pub const LABELS: [&'static str; 3] = [
        "Custom metric",
        "Mahalanobis Distance",
        "Marginal Mahalanobis Distance",
    ];

    pub fn values(&self) -> [f64; 3] {
        [self.custom, self.mahalanobis, self.marginal_mahalanobis]
    }
}

/// Higher-is-more-ID scores (negated losses and distances) for every row of
/// `test`, split into ID positives and OOD negatives.
pub fn detection_aurocs(
    pipeline: &FittedPipeline,
    test: &LabeledDataset,
) -> Result<DetectionAurocs> {
    let mut pos = [Vec::new(), Vec::new(), Vec::new()];
    let mut neg = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..test.n_rows() {
        let x = test.row(i);
        let scores = [
            -pipeline.score(&x)?.l_total,
            -pipeline.mahalanobis(&x)?,
            -pipeline.marginal_mahalanobis(&x)?,
        ];
        let side = if test.ood_flag[i] { &mut neg } else { &mut pos };
        for (s, v) in side.iter_mut().zip(scores) {
            s.push(v);
        }
    }
    Ok(DetectionAurocs {
        custom: auroc(&pos[0], &neg[0])?,
        mahalanobis: auroc(&pos[1], &neg[1])?,
        marginal_mahalanobis: auroc(&pos[2], &neg[2])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_toy;

    fn toy_cfg() -> ExperimentConfig {
        ExperimentConfig {
            pipeline: PipelineConfig {
                k: Some(2),
                scaling: Scaling::CenterOnly,
                ..PipelineConfig::default()
            },
            classifier: TrainConfig {
                epochs: 50,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn toy_seed_runs_every_variant() {
        let ds = make_toy(150, 40, 1);
        let out = run_seed(&ds, &toy_cfg(), 1).unwrap();
        assert_eq!(out.pipeline.partition().z_d(), &[0]);
        assert_eq!(out.variants.len(), 5);
        for v in &out.variants {
            assert_eq!(v.results.len(), 40);
            assert!((0.0..=1.0).contains(&v.row.auroc));
        }
        let labels: Vec<&str> = out
            .variants
            .iter()
            .map(|v| v.row.approach.as_str())
            .collect();
        assert_eq!(labels, ["OOD CF", "OOD SG", "OOD SN", "OOD SD", "CFI"]);
    }

    #[test]
    fn variant_selection_is_respected() {
        let ds = make_toy(100, 20, 2);
        let cfg = ExperimentConfig {
            variants: vec![Variant::Sn, Variant::Sd],
            ..toy_cfg()
        };
        let out = run_seed(&ds, &cfg, 0).unwrap();
        assert_eq!(out.variants.len(), 2);
        assert!(out.pipeline.classifier.is_none());
    }

    #[test]
    fn untouched_ood_points_stay_detectable() {
        let ds = make_toy(300, 100, 4);
        let (train, test) = split(
            &ds,
            SplitSpec {
                train_fraction: 0.8,
                seed: 4,
            },
        )
        .unwrap();
        let p = FittedPipeline::fit(&train, &test, &toy_cfg().pipeline, None).unwrap();
        let a = detection_aurocs(&p, &test).unwrap();
        assert!(a.custom >= 0.99, "{a:?}");
    }
}
