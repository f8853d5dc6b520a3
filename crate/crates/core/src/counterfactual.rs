//! Two-step counterfactual generation for OOD inputs.
//!
//! An input is moved in standardized space by plain gradient descent on the
//! negative log-likelihood of one latent partition at a time: the pooled
//! Gaussian over z_n and the target-class Gaussian over z_d, in the
//! configured order. Because the PCA loadings are orthonormal, a step on one
//! partition leaves the other partition's latent coordinates untouched.
//!
//! Ablations run a single phase (non-dis only, dis only, or one joint
//! Gaussian over all latent dims). The CFI baseline descends the squared
//! target-probability loss of a logistic classifier with an L1 penalty.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::CfiClassifier;
use crate::density::{OodScore, PartitionDensityModel};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianComponent;
use crate::projection::ProjectionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Order {
    #[default]
    #[serde(rename = "nd")]
    NonDisFirst,
    #[serde(rename = "dn")]
    DisFirst,
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nd" | "non_dis_first" | "non-dis-first" => Ok(Order::NonDisFirst),
            "dn" | "dis_first" | "dis-first" => Ok(Order::DisFirst),
            _ => Err(Error::Config(format!("unknown order `{s}`; use nd or dn"))),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::NonDisFirst => "nd",
            Order::DisFirst => "dn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub order: Order,
    /// Gradient step in standardized units.
    pub step_size: f64,
    /// Iteration cap per step.
    pub max_iter: usize,
    /// A step stops once its NLL falls to this quantile of the ID training
    /// NLLs for the same partition.
    pub stop_quantile: f64,
    /// Target class; `None` picks the class with the lowest discriminative
    /// NLL at the original point.
    pub target: Option<usize>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            order: Order::NonDisFirst,
            step_size: 0.05,
            max_iter: 500,
            stop_quantile: 0.5,
            target: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.stop_quantile > 0.0 && self.stop_quantile <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "stop quantile must lie in (0, 1], got {}",
                self.stop_quantile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Two-step generation.
    Full,
    /// Single joint Gaussian over all latent dims.
    Sg,
    /// Non-discriminative step only.
    Sn,
    /// Discriminative step only.
    Sd,
    /// Counterfactual-instances baseline.
    Cfi,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::Sg,
        Variant::Sn,
        Variant::Sd,
        Variant::Cfi,
    ];

    /// Row label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "OOD CF",
            Variant::Sg => "OOD SG",
            Variant::Sn => "OOD SN",
            Variant::Sd => "OOD SD",
            Variant::Cfi => "CFI",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Sg => "sg",
            Variant::Sn => "sn",
            Variant::Sd => "sd",
            Variant::Cfi => "cfi",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Which objective a descent phase optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    NonDis,
    Dis,
    Joint,
    Cfi,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::NonDis => "non_dis",
            Phase::Dis => "dis",
            Phase::Joint => "joint",
            Phase::Cfi => "cfi",
        }
    }
}

/// One descent phase: every standardized-space iterate, starting point
/// included, and the phase objective at each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub phase: Phase,
    pub points: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    /// Early-stop level of the phase objective.
    pub threshold: f64,
    /// Step size in effect at the end (smaller than configured if the
    /// halve-on-increase guard fired).
    pub final_step_size: f64,
}

impl StepTrace {
    pub fn steps_taken(&self) -> usize {
        self.points.len() - 1
    }

    pub fn loss_before(&self) -> f64 {
        self.losses[0]
    }

    pub fn loss_after(&self) -> f64 {
        *self.losses.last().expect("trace has a starting point")
    }

    pub fn start(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn end(&self) -> &[f64] {
        self.points.last().expect("trace has a starting point")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualResult {
    pub variant: Variant,
    pub target_class: usize,
    pub x_original: Vec<f64>,
    /// Always exactly `x_original + delta`.
    pub x_counterfactual: Vec<f64>,
    /// Raw-unit perturbation; the sum of the per-step displacements.
    pub delta: Vec<f64>,
    pub steps: Vec<StepTrace>,
    pub score_before: OodScore,
    pub score_after: OodScore,
}

impl CounterfactualResult {
    /// Raw-unit displacement contributed by step `i`.
    pub fn step_delta(&self, i: usize, projection: &ProjectionModel) -> Vec<f64> {
        step_delta(&self.steps[i], projection)
    }
}

fn step_delta(step: &StepTrace, projection: &ProjectionModel) -> Vec<f64> {
    step.end()
        .iter()
        .zip(step.start())
        .zip(&projection.standardizer().scale)
        .map(|((e, s), scale)| (e - s) * scale)
        .collect()
}

/// NLL of one Gaussian over selected latent dims, as a function of the
/// standardized input.
pub struct PartitionObjective<'a> {
    component: &'a GaussianComponent,
    /// ∂z_P/∂x_std
    jacobian: DMatrix<f64>,
}

impl<'a> PartitionObjective<'a> {
    pub fn new(component: &'a GaussianComponent, jacobian: DMatrix<f64>) -> Result<Self> {
        check_dim(component.dim(), jacobian.nrows())?;
        Ok(Self {
            component,
            jacobian,
        })
    }

    /// Objective for a generation phase under the fitted models.
    pub fn for_phase(
        model: &'a PartitionDensityModel,
        projection: &ProjectionModel,
        phase: Phase,
        target: usize,
    ) -> Result<Self> {
        let partition = model.partition();
        let all: Vec<usize>;
        let (component, dims) = match phase {
            Phase::NonDis => (model.non_dis(), partition.z_n()),
            Phase::Dis => (model.dis_component(target)?, partition.z_d()),
            Phase::Joint => {
                all = (0..partition.k()).collect();
                (model.joint_component(target)?, all.as_slice())
            }
            Phase::Cfi => {
                return Err(Error::InvalidArgument(
                    "the CFI phase has no Gaussian objective".into(),
                ))
            }
        };
        Self::new(component, projection.jacobian(dims)?)
    }

    pub fn input_dim(&self) -> usize {
        self.jacobian.ncols()
    }

    fn latent(&self, x_std: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x_std.len())?;
        Ok((&self.jacobian * DVector::from_column_slice(x_std))
            .iter()
            .copied()
            .collect())
    }

    pub fn loss(&self, x_std: &[f64]) -> Result<f64> {
        self.component.nll(&self.latent(x_std)?)
    }

    /// ∇ₓ NLL = Jᵀ Σ⁻¹ (J x − μ).
    pub fn gradient(&self, x_std: &[f64]) -> Result<Vec<f64>> {
        let v = self
            .component
            .precision_times_residual(&self.latent(x_std)?)?;
        Ok((self.jacobian.transpose() * v).iter().copied().collect())
    }
}

/// Plain gradient descent with early stopping at `threshold` and a guard
/// that halves the step after two consecutive loss increases.
///
/// If the last iterate ends above the starting loss, the trace is cut back
/// to its lowest-loss iterate.
fn descend(
    phase: Phase,
    objective: &PartitionObjective<'_>,
    start: Vec<f64>,
    threshold: f64,
    step_size: f64,
    max_iter: usize,
) -> Result<StepTrace> {
    let first = objective.loss(&start)?;
    let mut points = vec![start];
    let mut losses = vec![first];
    let diverged = |iteration: usize, points: Vec<Vec<f64>>| Error::NonFiniteLoss {
        phase: phase.name().into(),
        iteration,
        trajectory: points,
    };
    if !first.is_finite() {
        return Err(diverged(0, points));
    }
    let mut alpha = step_size;
    let mut rises = 0;
    for iteration in 1..=max_iter {
        let current_loss = *losses.last().unwrap();
        if current_loss <= threshold {
            break;
        }
        let current = points.last().unwrap();
        let grad = objective.gradient(current)?;
        let next: Vec<f64> = current
            .iter()
            .zip(&grad)
            .map(|(x, g)| x - alpha * g)
            .collect();
        let loss = objective.loss(&next)?;
        points.push(next);
        if !loss.is_finite() {
            return Err(diverged(iteration, points));
        }
        if loss > current_loss {
            rises += 1;
            if rises >= 2 {
                alpha *= 0.5;
                rises = 0;
            }
        } else {
            rises = 0;
        }
        losses.push(loss);
    }
    if *losses.last().unwrap() > first {
        let best = losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        points.truncate(best + 1);
        losses.truncate(best + 1);
    }
    Ok(StepTrace {
        phase,
        points,
        losses,
        threshold,
        final_step_size: alpha,
    })
}

fn resolve_target(
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
    x: &[f64],
    requested: Option<usize>,
) -> Result<usize> {
    match requested {
        Some(t) if t < model.n_classes() => Ok(t),
        Some(t) => Err(Error::UnknownClass {
            class: t,
            n_classes: model.n_classes(),
        }),
        None => {
            let (_, z_d) = model.partition().split_latent(&projection.project(x)?)?;
            model.closest_class(&z_d)
        }
    }
}

fn assemble(
    variant: Variant,
    target_class: usize,
    x: &[f64],
    steps: Vec<StepTrace>,
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
) -> Result<CounterfactualResult> {
    let mut delta = vec![0.0; x.len()];
    for step in &steps {
        for (d, s) in delta.iter_mut().zip(step_delta(step, projection)) {
            *d += s;
        }
    }
    let x_counterfactual: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
    Ok(CounterfactualResult {
        variant,
        target_class,
        score_before: crate::density::ood_score(model, projection, x)?,
        score_after: crate::density::ood_score(model, projection, &x_counterfactual)?,
        x_original: x.to_vec(),
        x_counterfactual,
        delta,
        steps,
    })
}

fn run_phases(
    x: &[f64],
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
    cfg: &GenerationConfig,
    phases: &[Phase],
    variant: Variant,
) -> Result<CounterfactualResult> {
    cfg.validate()?;
    check_dim(projection.input_dim(), x.len())?;
    check_dim(model.partition().k(), projection.latent_dim())?;
    let target = resolve_target(model, projection, x, cfg.target)?;
    let mut current = projection.standardizer().transform(x)?;
    let mut steps = Vec::with_capacity(phases.len());
    for &phase in phases {
        let objective = PartitionObjective::for_phase(model, projection, phase, target)?;
        let threshold = match phase {
            Phase::NonDis => model.non_dis_threshold(cfg.stop_quantile),
            Phase::Dis => model.dis_threshold(target, cfg.stop_quantile)?,
            Phase::Joint => model.joint_threshold(target, cfg.stop_quantile)?,
            Phase::Cfi => unreachable!("CFI is not a Gaussian phase"),
        };
        let trace = descend(
            phase,
            &objective,
            current,
            threshold,
            cfg.step_size,
            cfg.max_iter,
        )?;
        current = trace.end().to_vec();
        steps.push(trace);
    }
    assemble(variant, target, x, steps, model, projection)
}

/// Two-step counterfactual of a raw-unit input, in `cfg.order`.
pub fn generate(
    x: &[f64],
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
    cfg: &GenerationConfig,
) -> Result<CounterfactualResult> {
    let phases = match cfg.order {
        Order::NonDisFirst => [Phase::NonDis, Phase::Dis],
        Order::DisFirst => [Phase::Dis, Phase::NonDis],
    };
    run_phases(x, model, projection, cfg, &phases, Variant::Full)
}

/// Single-phase ablations: `Sg`, `Sn` or `Sd`.
pub fn generate_ablation(
    x: &[f64],
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
    cfg: &GenerationConfig,
    variant: Variant,
) -> Result<CounterfactualResult> {
    let phase = match variant {
        Variant::Sg => Phase::Joint,
        Variant::Sn => Phase::NonDis,
        Variant::Sd => Phase::Dis,
        other => {
            return Err(Error::InvalidArgument(format!(
                "`{other}` is not an ablation variant"
            )))
        }
    };
    run_phases(x, model, projection, cfg, &[phase], variant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfiConfig {
    /// Weight of the L1 distance term.
    pub lambda: f64,
    /// Desired probability of the target class.
    pub target_probability: f64,
    pub step_size: f64,
    pub max_iter: usize,
    /// Target class; `None` uses the same rule as the two-step generator.
    pub target: Option<usize>,
}

impl Default for CfiConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            target_probability: 1.0,
            step_size: 0.1,
            max_iter: 1000,
            target: None,
        }
    }
}

/// Counterfactual-instances baseline: minimizes
/// (q_t(x′) − p_t)² + λ‖x′ − x‖₁ in the classifier's standardized space.
///
/// The smooth term takes a gradient step; the L1 term is handled by
/// soft-thresholding the displacement from the original point, so any
/// coordinate whose pull is weaker than λ stays exactly where it started.
/// The stored trace is mapped into the projection's standardized space.
pub fn cfi_generate(
    x: &[f64],
    classifier: &CfiClassifier,
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
    cfg: &CfiConfig,
) -> Result<CounterfactualResult> {
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be non-negative, got {}",
            cfg.lambda
        )));
    }
    if cfg.step_size.is_nan() || cfg.step_size <= 0.0 || cfg.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "CFI step size and max_iter must be positive".into(),
        ));
    }
    check_dim(projection.input_dim(), x.len())?;
    check_dim(projection.input_dim(), classifier.model.input_dim())?;
    let target = resolve_target(model, projection, x, cfg.target)?;
    let clf = &classifier.model;
    let origin = classifier.standardizer.transform(x)?;
    let shrink = cfg.step_size * cfg.lambda;
    let loss_at = |p: &[f64]| -> Result<f64> {
        let (q, _) = clf.class_probability_gradient(p, target)?;
        let l1: f64 = p.iter().zip(&origin).map(|(a, b)| (a - b).abs()).sum();
        Ok((q - cfg.target_probability).powi(2) + cfg.lambda * l1)
    };
    let mut points = vec![origin.clone()];
    let mut losses = vec![loss_at(&origin)?];
    for iteration in 1..=cfg.max_iter {
        let current = points.last().unwrap();
        let (q, dq) = clf.class_probability_gradient(current, target)?;
        let coef = 2.0 * (q - cfg.target_probability);
        let next: Vec<f64> = current
            .iter()
            .zip(&dq)
            .zip(&origin)
            .map(|((c, g), o)| {
                let moved = c - cfg.step_size * coef * g - o;
                o + moved.signum() * (moved.abs() - shrink).max(0.0)
            })
            .collect();
        let loss = loss_at(&next)?;
        if !loss.is_finite() {
            points.push(next);
            return Err(Error::NonFiniteLoss {
                phase: Phase::Cfi.name().into(),
                iteration,
                trajectory: points,
            });
        }
        let settled = next == *current;
        points.push(next);
        losses.push(loss);
        if settled {
            break;
        }
    }
    // Coordinates still at the origin map to the exact start, so untouched
    // features get a delta of exactly zero.
    let start = projection.standardizer().transform(x)?;
    let mut mapped = Vec::with_capacity(points.len());
    for p in &points {
        let moved = projection
            .standardizer()
            .transform(&classifier.standardizer.inverse_transform(p)?)?;
        mapped.push(
            (0..p.len())
                .map(|j| {
                    if p[j] == origin[j] {
                        start[j]
                    } else {
                        moved[j]
                    }
                })
                .collect(),
        );
    }
    let trace = StepTrace {
        phase: Phase::Cfi,
        points: mapped,
        losses,
        threshold: f64::NEG_INFINITY,
        final_step_size: cfg.step_size,
    };
    assemble(Variant::Cfi, target, x, vec![trace], model, projection)
}

/// Applies `generate_one` to every row, in parallel, keeping input order.
/// A failing row yields an `Err` in its slot; the other rows are unaffected.
pub fn batch_generate<F>(rows: &[Vec<f64>], generate_one: F) -> Vec<Result<CounterfactualResult>>
where
    F: Fn(&[f64]) -> Result<CounterfactualResult> + Sync,
{
    rows.par_iter().map(|row| generate_one(row)).collect()
}
