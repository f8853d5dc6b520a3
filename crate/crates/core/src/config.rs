//! Run configuration: a TOML file with one table per stage, overridable
//! from the command line and echoed into every output.
//!
//! ```toml
//! [data]
//! path = "data/wine_like.csv"   # or "toy"
//! label_column = "class"
//! ood_rule = "class_equals:2"
//! train_fraction = 0.8
//!
//! [toy]
//! n_per_class = 1000
//! n_ood = 1000
//!
//! [projection]
//! k = 13                        # default: every input dim (2 for the toy)
//! standardize = "unit"          # or "center" (toy default)
//!
//! [partition]
//! slack = 0.1
//! cap = 20
//! eval_on = "test"              # or "train"
//!
//! [generation]
//! order = "nd"                  # or "dn"
//! alpha = 0.05
//! max_iter = 500
//! stop_quantile = 0.5
//!
//! [cfi]
//! lambda = 0.1
//!
//! [run]
//! variants = ["full", "sg", "sn", "sd", "cfi"]
//! seeds = [0, 1, 2, 3, 4]
//! out = "out"
//! emit_trajectories = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::counterfactual::{CfiConfig, GenerationConfig, Order, Variant};
use crate::error::{Error, Result};
use crate::partition::{SearchOptions, DEFAULT_CAP, DEFAULT_SLACK};
use crate::pipeline::{EvalOn, ExperimentConfig, PipelineConfig};
use crate::projection::Scaling;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// CSV path, or `toy` for the generated 2D data.
    pub path: Option<String>,
    pub label_column: String,
    pub ood_rule: Option<String>,
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            label_column: "class".into(),
            ood_rule: None,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySection {
    pub n_per_class: usize,
    pub n_ood: usize,
    /// Start point of the plotted trajectories.
    pub point: [f64; 2],
    pub target: usize,
}

impl Default for ToySection {
    fn default() -> Self {
        Self {
            n_per_class: 1000,
            n_ood: 1000,
            point: [0.0, 2.0],
            target: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSection {
    pub k: Option<usize>,
    pub standardize: Option<Standardize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    /// Center and scale to unit variance.
    Unit,
    /// Center only.
    Center,
}

impl From<Standardize> for Scaling {
    fn from(s: Standardize) -> Self {
        match s {
            Standardize::Unit => Scaling::UnitVariance,
            Standardize::Center => Scaling::CenterOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSection {
    pub slack: f64,
    pub cap: usize,
    pub eval_on: EvalOn,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            slack: DEFAULT_SLACK,
            cap: DEFAULT_CAP,
            eval_on: EvalOn::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub order: Order,
    pub alpha: f64,
    pub max_iter: usize,
    pub stop_quantile: f64,
    pub target: Option<usize>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let g = GenerationConfig::default();
        Self {
            order: g.order,
            alpha: g.step_size,
            max_iter: g.max_iter,
            stop_quantile: g.stop_quantile,
            target: g.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfiSection {
    pub lambda: f64,
    pub target_probability: f64,
    pub step_size: f64,
    pub max_iter: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for CfiSection {
    fn default() -> Self {
        let c = CfiConfig::default();
        let t = TrainConfig::default();
        Self {
            lambda: c.lambda,
            target_probability: c.target_probability,
            step_size: c.step_size,
            max_iter: c.max_iter,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub emit_trajectories: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            seeds: (0..5).collect(),
            out: PathBuf::from("out"),
            emit_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub toy: ToySection,
    pub projection: ProjectionSection,
    pub partition: PartitionSection,
    pub generation: GenerationSection,
    pub cfi: CfiSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// True when the data source is the generated toy distribution.
    pub fn is_toy(&self) -> bool {
        self.data.path.as_deref().is_none_or(|p| p == "toy")
    }

    /// Fills the settings that depend on the data source: k = 2 and
    /// center-only scaling for the toy, unit variance otherwise.
    pub fn resolve_defaults(&mut self) {
        if self.projection.standardize.is_none() {
            self.projection.standardize = Some(if self.is_toy() {
                Standardize::Center
            } else {
                Standardize::Unit
            });
        }
        if self.projection.k.is_none() && self.is_toy() {
            self.projection.k = Some(2);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.run.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.data.train_fraction
            )));
        }
        if self.toy.n_per_class < 2 || self.toy.n_ood < 1 {
            return Err(Error::Config(
                "toy needs n_per_class >= 2 and n_ood >= 1".into(),
            ));
        }
        self.experiment().generation.validate()
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            train_fraction: self.data.train_fraction,
            pipeline: PipelineConfig {
                k: self.projection.k,
                scaling: self
                    .projection
                    .standardize
                    .unwrap_or(Standardize::Unit)
                    .into(),
                search: SearchOptions {
                    slack: self.partition.slack,
                    cap: self.partition.cap,
                },
                eval_on: self.partition.eval_on,
            },
            generation: GenerationConfig {
                order: self.generation.order,
                step_size: self.generation.alpha,
                max_iter: self.generation.max_iter,
                stop_quantile: self.generation.stop_quantile,
                target: self.generation.target,
            },
            cfi: CfiConfig {
                lambda: self.cfi.lambda,
                target_probability: self.cfi.target_probability,
                step_size: self.cfi.step_size,
                max_iter: self.cfi.max_iter,
                target: self.generation.target,
            },
            classifier: TrainConfig {
                epochs: self.cfi.epochs,
                learning_rate: self.cfi.learning_rate,
                batch_size: self.cfi.batch_size,
                seed: 0,
            },
            variants: self.run.variants.clone(),
        }
    }

    /// Compact JSON of the resolved config.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Comment lines placed at the top of every CSV output.
    pub fn csv_header(&self) -> String {
        format!(
            "# oodcf {}\n# config: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.to_json()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert!(c.is_toy());
        assert_eq!(c.run.seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml_str(
            r#"
            [data]
            path = "wine.csv"
            ood_rule = "class_equals:2"
            [projection]
            k = 5
            [generation]
            order = "dn"
            alpha = 0.1
            [run]
            variants = ["sn", "sd"]
            seeds = [7]
            "#,
        )
        .unwrap();
        assert!(!c.is_toy());
        assert_eq!(c.projection.k, Some(5));
        assert_eq!(c.generation.order, Order::DisFirst);
        let e = c.experiment();
        assert_eq!(e.generation.step_size, 0.1);
        assert_eq!(e.variants, vec![Variant::Sn, Variant::Sd]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("[generation]\nalpah = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn toy_defaults_resolve() {
        let mut c = RunConfig::default();
        c.resolve_defaults();
        assert_eq!(c.projection.k, Some(2));
        assert_eq!(c.projection.standardize, Some(Standardize::Center));
        let mut t = RunConfig::default();
        t.data.path = Some("x.csv".into());
        t.resolve_defaults();
        assert_eq!(t.projection.k, None);
        assert_eq!(t.projection.standardize, Some(Standardize::Unit));
    }

    #[test]
    fn header_is_stable() {
        let c = RunConfig::default();
        assert_eq!(c.csv_header(), c.csv_header());
        assert!(c.csv_header().starts_with("# oodcf "));
    }
}
