//! The `oodcf` command line: `toy`, `run`, `partition` and `score`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, Standardize};
use crate::counterfactual::{CounterfactualResult, GenerationConfig, Order, Variant};
use crate::dataset::{
    apply_ood_rule, load_csv, make_toy, split_indices, LabeledDataset, OodRule, SplitSpec,
};
use crate::error::{Error, ErrorClass, Result};
use crate::gaussian::select_columns;
use crate::partition::{conditional_entropy, fit_qda, search_partition, Partition, SearchOptions};
use crate::pipeline::{
    detection_aurocs, run_seed, DetectionAurocs, EvalOn, FittedPipeline, SeedOutcome,
};
use crate::projection::ProjectionModel;
use crate::report::{
    format_table, per_seed_csv, repeat_and_aggregate, summary_csv, Aggregate, EvalRow,
};
use crate::svg::Plot;

#[derive(Debug, Parser)]
#[command(
    name = "oodcf",
    version,
    about = "Counterfactual explanations for out-of-distribution inputs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// 2D toy experiment: detection AUROCs, ablations and trajectory plots.
    Toy(CommonArgs),
    /// Full pipeline on a tabular dataset.
    Run(CommonArgs),
    /// Projection and partition search only.
    Partition(CommonArgs),
    /// Per-row OOD scores and the fitted projection.
    Score(ScoreArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV path, or `toy`.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub label_col: Option<String>,
    /// `class_equals:V`, `above_upper_quartile:COL` or `column_equals:COL=V`.
    #[arg(long)]
    pub ood_rule: Option<String>,
    /// Number of principal components.
    #[arg(long)]
    pub k: Option<usize>,
    /// `nd` (non-dis step first) or `dn`.
    #[arg(long)]
    pub order: Option<Order>,
    /// Comma-separated subset of full,sg,sn,sd,cfi.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// Comma-separated seeds; repeatable.
    #[arg(long, alias = "seed", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub stop_quantile: Option<f64>,
    #[arg(long)]
    pub slack: Option<f64>,
    /// Largest k allowed in the exhaustive partition search.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub emit_trajectories: bool,
    #[arg(long, value_enum)]
    pub standardize: Option<Standardize>,
    /// Rows for the partition entropies: `test` or `train`.
    #[arg(long, value_parser = parse_eval_on)]
    pub eval_on: Option<EvalOn>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// L1 weight of the CFI baseline.
    #[arg(long)]
    pub cfi_lambda: Option<f64>,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub n_ood: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Reuse a saved projection instead of fitting one.
    #[arg(long)]
    pub projection: Option<PathBuf>,
}

fn parse_eval_on(s: &str) -> std::result::Result<EvalOn, String> {
    match s {
        "test" => Ok(EvalOn::Test),
        "train" => Ok(EvalOn::Train),
        _ => Err(format!("expected `test` or `train`, got `{s}`")),
    }
}

impl CommonArgs {
    /// Config file (or defaults) with the flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        if let Some(d) = &self.data {
            c.data.path = Some(d.clone());
        }
        set!(self.label_col, c.data.label_column);
        if let Some(r) = &self.ood_rule {
            c.data.ood_rule = Some(r.clone());
        }
        set!(self.train_fraction, c.data.train_fraction);
        if self.k.is_some() {
            c.projection.k = self.k;
        }
        if self.standardize.is_some() {
            c.projection.standardize = self.standardize;
        }
        set!(self.slack, c.partition.slack);
        set!(self.cap, c.partition.cap);
        set!(self.eval_on, c.partition.eval_on);
        set!(self.order, c.generation.order);
        set!(self.alpha, c.generation.alpha);
        set!(self.max_iter, c.generation.max_iter);
        set!(self.stop_quantile, c.generation.stop_quantile);
        set!(self.cfi_lambda, c.cfi.lambda);
        set!(self.n_per_class, c.toy.n_per_class);
        set!(self.n_ood, c.toy.n_ood);
        set!(self.variants, c.run.variants);
        if !self.seeds.is_empty() {
            c.run.seeds = self.seeds.clone();
        }
        set!(self.out, c.run.out);
        if self.emit_trajectories {
            c.run.emit_trajectories = true;
        }
        c.resolve_defaults();
        c.validate()?;
        Ok(c)
    }
}

/// Parses the process arguments, runs the command and returns the exit
/// status. Failures print a JSON error record on stderr.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                eprintln!(
                    "{}",
                    json!({"error": "Usage", "class": "config", "message": e.kind().to_string()})
                );
            }
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        return report_error(&e);
    }
    match run(cli) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
        ErrorClass::Io => 5,
    }
}

/// Machine-readable description of a failure.
pub fn error_record(e: &Error) -> Value {
    let class = match e.class() {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
        ErrorClass::Io => "io",
    };
    let mut rec = json!({
        "error": e.kind(),
        "class": class,
        "message": e.to_string(),
        "exit_code": exit_code(e.class()),
    });
    if let Error::SeedFailed { seed, .. } = e {
        rec["seed"] = json!(seed);
    }
    rec
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    eprintln!("{}", error_record(e));
    exit_code(e.class())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("OODCF_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Config(format!(
            "OODCF_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    // A pool built earlier in the process (tests) is fine to keep.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Toy(a) => cmd_toy(&a.resolve()?),
        Command::Run(a) => cmd_run(&a.resolve()?),
        Command::Partition(a) => cmd_partition(&a.resolve()?),
        Command::Score(a) => cmd_score(&a.common.resolve()?, a.projection.as_deref()),
    }
}

/// Where the rows come from: a fixed table or the seeded toy generator.
enum Source {
    Table(LabeledDataset),
    Toy { n_per_class: usize, n_ood: usize },
}

impl Source {
    fn open(cfg: &RunConfig) -> Result<Self> {
        if cfg.is_toy() {
            return Ok(Source::Toy {
                n_per_class: cfg.toy.n_per_class,
                n_ood: cfg.toy.n_ood,
            });
        }
        let path = cfg.data.path.as_deref().expect("non-toy source has a path");
        let rule = cfg.data.ood_rule.as_deref().ok_or_else(|| {
            Error::Config("an OOD rule is required for CSV data (--ood-rule)".into())
        })?;
        let rule = OodRule::from_str(rule)?;
        let table = load_csv(path, &cfg.data.label_column)?;
        Ok(Source::Table(apply_ood_rule(&table, &rule)?))
    }

    fn dataset(&self, seed: u64) -> LabeledDataset {
        match self {
            Source::Table(ds) => ds.clone(),
            Source::Toy { n_per_class, n_ood } => make_toy(*n_per_class, *n_ood, seed),
        }
    }
}

/// Runs `f` for every seed in parallel; results come back in seed order and
/// the first failure is reported with its seed.
fn per_seed<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = seeds.par_iter().map(|&s| f(s)).collect();
    seeds
        .iter()
        .zip(results)
        .map(|(&seed, r)| {
            r.map_err(|e| Error::SeedFailed {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

fn aggregate(seeds: &[u64], rows: &[Vec<EvalRow>]) -> Result<Aggregate> {
    repeat_and_aggregate(seeds, |seed| {
        let i = seeds
            .iter()
            .position(|&s| s == seed)
            .expect("seed is listed");
        Ok(rows[i].clone())
    })
}

struct Output<'a> {
    dir: PathBuf,
    cfg: &'a RunConfig,
}

impl<'a> Output<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.run.out)?;
        Ok(Self {
            dir: cfg.run.out.clone(),
            cfg,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn csv(&self, name: &str, body: &str) -> Result<()> {
        fs::write(self.path(name), self.cfg.csv_header() + body)?;
        Ok(())
    }

    /// JSON object with a leading `config` field.
    fn json(&self, name: &str, fields: Value) -> Result<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("config".into(), serde_json::to_value(self.cfg)?);
        if let Value::Object(m) = fields {
            obj.extend(m);
        }
        fs::write(
            self.path(name),
            serde_json::to_string_pretty(&Value::Object(obj))? + "\n",
        )?;
        Ok(())
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        fs::write(self.path(name), body)?;
        Ok(())
    }
}

fn write_eval(out: &Output, agg: &Aggregate) -> Result<()> {
    out.csv("eval.csv", &summary_csv(&agg.rows))?;
    out.csv("eval_per_seed.csv", &per_seed_csv(&agg.per_seed))?;
    out.json(
        "eval.json",
        json!({"rows": agg.rows, "std": agg.std, "per_seed": agg.per_seed}),
    )
}

fn join_indices(v: &[usize]) -> String {
    v.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn partition_csv_rows(seed: u64, p: &Partition, out: &mut String) {
    if let Some(report) = p.search() {
        for c in &report.per_cardinality {
            let _ = writeln!(
                out,
                "{seed},{},{},{},{},{},{}",
                c.cardinality,
                join_indices(&c.subset),
                c.loss,
                c.normalized,
                c.cardinality == report.chosen_cardinality,
                report.alternative_cardinality == Some(c.cardinality),
            );
        }
    }
}

const PARTITION_CSV_HEADER: &str = "seed,cardinality,subset,loss,normalized,chosen,alternative\n";

fn partition_table(seed: u64, p: &Partition) -> String {
    let mut s = format!(
        "seed {seed}: z_d = {{{}}}, z_n = {{{}}}\n",
        join_indices(p.z_d()),
        join_indices(p.z_n())
    );
    if let Some(r) = p.search() {
        let _ = writeln!(
            s,
            "{:>11}  {:<24}  {:>10}  {:>10}  chosen",
            "cardinality", "subset", "loss", "normalized"
        );
        for c in &r.per_cardinality {
            let _ = writeln!(
                s,
                "{:>11}  {:<24}  {:>10.4}  {:>10.4}  {}",
                c.cardinality,
                format!("{{{}}}", join_indices(&c.subset)),
                c.loss,
                c.normalized,
                if c.cardinality == r.chosen_cardinality {
                    "*"
                } else {
                    ""
                }
            );
        }
        for w in &r.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
    }
    s
}

/// One CSV row per trajectory point: coordinates in standardized space and
/// both partition NLLs (discriminative under the target class).
fn trajectory_rows(
    prefix: &str,
    r: &CounterfactualResult,
    pipeline: &FittedPipeline,
    out: &mut String,
) -> Result<()> {
    let mut index = 0;
    for (step, trace) in r.steps.iter().enumerate() {
        for (iteration, point) in trace.points.iter().enumerate() {
            let z = pipeline.projection.project_std(point)?;
            let (z_n, z_d) = pipeline.partition().split_latent(&z)?;
            let l_n = pipeline.density.nll_non_dis(&z_n)?;
            let l_d = pipeline.density.nll_dis(&z_d, Some(r.target_class))?;
            let coords: Vec<String> = point.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "{prefix}{index},{step},{},{iteration},{},{l_n},{l_d}",
                trace.phase.name(),
                coords.join(",")
            );
            index += 1;
        }
    }
    Ok(())
}

fn trajectory_header(leading: &str, d: usize) -> String {
    let coords: Vec<String> = (0..d).map(|j| format!("x_std_{j}")).collect();
    format!(
        "{leading}index,step,phase,iteration,{},l_n,l_d\n",
        coords.join(",")
    )
}

struct ToySeed {
    outcome: SeedOutcome,
    aurocs: DetectionAurocs,
    entropies: Vec<f64>,
}

fn single_dim_entropies(outcome: &SeedOutcome, eval_on: EvalOn) -> Result<Vec<f64>> {
    let (x_train, y_train) = outcome.train.id_data();
    let p = &outcome.pipeline.projection;
    let z_train = p.project_matrix(&x_train)?;
    let z_eval = match eval_on {
        EvalOn::Train => z_train.clone(),
        EvalOn::Test => p.project_matrix(&outcome.test.id_data().0)?,
    };
    (0..p.latent_dim())
        .map(|j| {
            let qda = fit_qda(&select_columns(&z_train, &[j]), &y_train)?;
            conditional_entropy(&qda, &select_columns(&z_eval, &[j]))
        })
        .collect()
}

pub fn cmd_toy(cfg: &RunConfig) -> Result<()> {
    let source = Source::open(cfg)?;
    let exp = cfg.experiment();
    let seeds = &cfg.run.seeds;
    let runs = per_seed(seeds, |seed| {
        let ds = source.dataset(seed);
        let outcome = run_seed(&ds, &exp, seed)?;
        let aurocs = detection_aurocs(&outcome.pipeline, &outcome.test)?;
        let entropies = single_dim_entropies(&outcome, cfg.partition.eval_on)?;
        Ok(ToySeed {
            outcome,
            aurocs,
            entropies,
        })
    })?;
    let out = Output::new(cfg)?;

    // Detection table.
    let mut table1 = String::from("metric,auroc,std,n_seeds\n");
    let mut table1_seed = String::from("metric,seed,auroc\n");
    let mut printed = format!("{:<30}  {:>6}\n", "Metric", "AUROC");
    let mut metrics_json = Vec::new();
    for (m, label) in DetectionAurocs::LABELS.iter().enumerate() {
        let vals: Vec<f64> = runs.iter().map(|r| r.aurocs.values()[m]).collect();
        let mean = crate::stats::mean(&vals);
        let std = sample_std(&vals);
        let _ = writeln!(table1, "{label},{mean},{std},{}", vals.len());
        for (seed, v) in seeds.iter().zip(&vals) {
            let _ = writeln!(table1_seed, "{label},{seed},{v}");
        }
        let _ = writeln!(printed, "{label:<30}  {mean:>6.3}");
        metrics_json.push(json!({"metric": label, "auroc": mean, "std": std, "per_seed": vals}));
    }
    out.csv("table1.csv", &table1)?;
    out.csv("table1_per_seed.csv", &table1_seed)?;

    let mut partition_csv = String::from(PARTITION_CSV_HEADER);
    let mut entropy_json = Vec::new();
    for (seed, r) in seeds.iter().zip(&runs) {
        partition_csv_rows(*seed, r.outcome.pipeline.partition(), &mut partition_csv);
        entropy_json.push(json!({
            "seed": seed,
            "z_d": r.outcome.pipeline.partition().z_d(),
            "entropy_per_pc": r.entropies,
        }));
    }
    out.csv("partition.csv", &partition_csv)?;
    out.json(
        "table1.json",
        json!({"metrics": metrics_json, "partitions": entropy_json}),
    )?;

    let rows: Vec<Vec<EvalRow>> = runs
        .iter()
        .map(|r| r.outcome.variants.iter().map(|v| v.row.clone()).collect())
        .collect();
    let agg = aggregate(seeds, &rows)?;
    write_eval(&out, &agg)?;

    // Plots and trajectories from the first seed.
    let first = &runs[0].outcome;
    let ds = source.dataset(seeds[0]);
    out.text(
        "scatter.svg",
        &toy_scatter(&ds, &first.pipeline.projection).render(),
    )?;
    let mut traj_csv = trajectory_header("order,", 2);
    for order in [Order::NonDisFirst, Order::DisFirst] {
        let gen = GenerationConfig {
            order,
            target: Some(cfg.toy.target),
            ..exp.generation
        };
        let r = crate::counterfactual::generate(
            &cfg.toy.point,
            &first.pipeline.density,
            &first.pipeline.projection,
            &gen,
        )?;
        trajectory_rows(&format!("{order},"), &r, &first.pipeline, &mut traj_csv)?;
        out.text(
            &format!("trajectory_{order}.svg"),
            &toy_trajectory(&ds, &first.pipeline.projection, &r, order)?.render(),
        )?;
    }
    out.csv("trajectories.csv", &traj_csv)?;

    println!("{printed}");
    println!("{}", format_table(&agg.rows));
    println!(
        "z_d (seed {}) = {{{}}}; per-PC entropy: {:?}",
        seeds[0],
        join_indices(first.pipeline.partition().z_d()),
        runs[0].entropies
    );
    println!("outputs written to {}", out.dir.display());
    Ok(())
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = crate::stats::mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

const CLASS_COLORS: [&str; 6] = [
    "#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#bcbd22",
];
const OOD_COLOR: &str = "#ff7f0e";

fn toy_scatter(ds: &LabeledDataset, projection: &ProjectionModel) -> Plot {
    let mut plot = Plot::new(
        640.0,
        480.0,
        "ID classes, OOD data and principal components",
    );
    add_data_layers(&mut plot, ds, 1.6);
    let mean = &projection.standardizer().mean;
    let scale = &projection.standardizer().scale;
    for (j, var) in projection.explained_variance().iter().enumerate() {
        let len = 2.0 * var.sqrt();
        let w = projection.loadings().column(j);
        let to = [
            mean[0] + w[0] * len * scale[0],
            mean[1] + w[1] * len * scale[1],
        ];
        plot.arrow([mean[0], mean[1]], to, "black");
    }
    plot
}

fn add_data_layers(plot: &mut Plot, ds: &LabeledDataset, radius: f64) {
    for c in 0..ds.n_classes {
        let pts: Vec<[f64; 2]> = (0..ds.n_rows())
            .filter(|&i| !ds.ood_flag[i] && ds.class_label[i] == Some(c))
            .map(|i| [ds.features[(i, 0)], ds.features[(i, 1)]])
            .collect();
        plot.scatter(
            pts,
            CLASS_COLORS[c % CLASS_COLORS.len()],
            radius,
            &format!("class {c}"),
        );
    }
    let ood: Vec<[f64; 2]> = ds
        .ood_indices()
        .into_iter()
        .map(|i| [ds.features[(i, 0)], ds.features[(i, 1)]])
        .collect();
    plot.scatter(ood, OOD_COLOR, radius, "OOD");
}

fn toy_trajectory(
    ds: &LabeledDataset,
    projection: &ProjectionModel,
    r: &CounterfactualResult,
    order: Order,
) -> Result<Plot> {
    let title = match order {
        Order::NonDisFirst => "Trajectory: non-discriminative step first",
        Order::DisFirst => "Trajectory: discriminative step first",
    };
    let mut plot = Plot::new(640.0, 480.0, title);
    add_data_layers(&mut plot, ds, 1.2);
    let colors = ["#d62728", "#000000"];
    for (i, step) in r.steps.iter().enumerate() {
        let pts = step
            .points
            .iter()
            .map(|p| {
                projection
                    .standardizer()
                    .inverse_transform(p)
                    .map(|v| [v[0], v[1]])
            })
            .collect::<Result<Vec<_>>>()?;
        plot.polyline(
            pts,
            colors[i % 2],
            1.8,
            &format!("step {}: {}", i + 1, step.phase.name()),
        );
    }
    Ok(plot)
}

pub fn cmd_run(cfg: &RunConfig) -> Result<()> {
    let source = Source::open(cfg)?;
    let exp = cfg.experiment();
    let seeds = &cfg.run.seeds;
    let runs = per_seed(seeds, |seed| {
        let ds = source.dataset(seed);
        let (_, test_idx) = split_indices(
            &ds,
            SplitSpec {
                train_fraction: exp.train_fraction,
                seed,
            },
        )?;
        Ok((run_seed(&ds, &exp, seed)?, test_idx))
    })?;
    let out = Output::new(cfg)?;

    let mut partition_csv = String::from(PARTITION_CSV_HEADER);
    let mut printed_partitions = String::new();
    for (seed, (o, _)) in seeds.iter().zip(&runs) {
        partition_csv_rows(*seed, o.pipeline.partition(), &mut partition_csv);
        printed_partitions.push_str(&partition_table(*seed, o.pipeline.partition()));
    }
    out.csv("partition.csv", &partition_csv)?;

    let rows: Vec<Vec<EvalRow>> = runs
        .iter()
        .map(|(o, _)| o.variants.iter().map(|v| v.row.clone()).collect())
        .collect();
    let agg = aggregate(seeds, &rows)?;
    write_eval(&out, &agg)?;

    let ds0 = source.dataset(seeds[0]);
    let names = &ds0.feature_names;
    let cols = |p: &str| {
        names
            .iter()
            .map(|n| format!("{p}:{n}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut cf_csv = format!(
        "seed,variant,row,target,status,steps,{},{},{},l_n_before,l_d_before,l_total_before,l_n_after,l_d_after,l_total_after\n",
        cols("x"),
        cols("cf"),
        cols("delta")
    );
    let mut traj_csv = trajectory_header("seed,variant,row,", names.len());
    let mut failures = 0;
    for (seed, (o, test_idx)) in seeds.iter().zip(&runs) {
        let ood_rows: Vec<usize> = o.test.ood_indices().iter().map(|&i| test_idx[i]).collect();
        for v in &o.variants {
            for (row, result) in ood_rows.iter().zip(&v.results) {
                match result {
                    Ok(r) => {
                        let f = |xs: &[f64]| {
                            xs.iter()
                                .map(|x| x.to_string())
                                .collect::<Vec<_>>()
                                .join(",")
                        };
                        let steps: usize = r.steps.iter().map(|s| s.steps_taken()).sum();
                        let (b, a) = (r.score_before, r.score_after);
                        let _ = writeln!(
                            cf_csv,
                            "{seed},{},{row},{},ok,{steps},{},{},{},{},{},{},{},{},{}",
                            v.variant,
                            r.target_class,
                            f(&r.x_original),
                            f(&r.x_counterfactual),
                            f(&r.delta),
                            b.l_n,
                            b.l_d,
                            b.l_total,
                            a.l_n,
                            a.l_d,
                            a.l_total
                        );
                        if cfg.run.emit_trajectories {
                            trajectory_rows(
                                &format!("{seed},{},{row},", v.variant),
                                r,
                                &o.pipeline,
                                &mut traj_csv,
                            )?;
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        let empty = ",".repeat(3 * names.len() + 5);
                        let _ =
                            writeln!(cf_csv, "{seed},{},{row},,{},{empty}", v.variant, e.kind());
                    }
                }
            }
        }
    }
    out.csv("counterfactuals.csv", &cf_csv)?;
    if cfg.run.emit_trajectories {
        out.csv("trajectories.csv", &traj_csv)?;
    }

    print!("{printed_partitions}");
    println!();
    println!("{}", format_table(&agg.rows));
    if failures > 0 {
        println!("{failures} counterfactual(s) failed; see counterfactuals.csv");
    }
    println!("outputs written to {}", out.dir.display());
    Ok(())
}

pub fn cmd_partition(cfg: &RunConfig) -> Result<()> {
    let source = Source::open(cfg)?;
    let exp = cfg.experiment();
    let seeds = &cfg.run.seeds;
    let partitions = per_seed(seeds, |seed| {
        let ds = source.dataset(seed);
        let (train, test) = crate::dataset::split(
            &ds,
            SplitSpec {
                train_fraction: exp.train_fraction,
                seed,
            },
        )?;
        let (x_train, y_train) = train.id_data();
        let k = exp.pipeline.k.unwrap_or(ds.n_features());
        let projection = ProjectionModel::fit(&x_train, k, exp.pipeline.scaling)?;
        let z_train = projection.project_matrix(&x_train)?;
        let z_eval = match exp.pipeline.eval_on {
            EvalOn::Train => z_train.clone(),
            EvalOn::Test => projection.project_matrix(&test.id_data().0)?,
        };
        search_partition(
            &z_train,
            &y_train,
            &z_eval,
            SearchOptions {
                slack: cfg.partition.slack,
                cap: cfg.partition.cap,
            },
        )
    })?;
    let out = Output::new(cfg)?;
    let mut csv = String::from(PARTITION_CSV_HEADER);
    let mut printed = String::new();
    let mut reports = Vec::new();
    for (seed, p) in seeds.iter().zip(&partitions) {
        partition_csv_rows(*seed, p, &mut csv);
        printed.push_str(&partition_table(*seed, p));
        reports.push(json!({"seed": seed, "z_d": p.z_d(), "z_n": p.z_n(), "search": p.search()}));
    }
    out.csv("partition.csv", &csv)?;
    out.json("partition.json", json!({"partitions": reports}))?;
    print!("{printed}");
    println!("outputs written to {}", out.dir.display());
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow {
    row: usize,
    split: &'static str,
    l_n: f64,
    l_d: f64,
    l_total: f64,
    mahalanobis: f64,
    marginal_mahalanobis: f64,
    ood_flag: bool,
}

/// Scores every row under a pipeline fit on the first seed's split.
pub fn cmd_score(cfg: &RunConfig, projection: Option<&Path>) -> Result<()> {
    let source = Source::open(cfg)?;
    let exp = cfg.experiment();
    let seed = cfg.run.seeds[0];
    let ds = source.dataset(seed);
    let spec = SplitSpec {
        train_fraction: exp.train_fraction,
        seed,
    };
    let (train_idx, _) = split_indices(&ds, spec)?;
    let (train, test) = crate::dataset::split(&ds, spec)?;
    let pipeline = match projection {
        Some(p) => FittedPipeline::fit_with_projection(
            &train,
            &test,
            &exp.pipeline,
            ProjectionModel::load(p)?,
            None,
        )?,
        None => FittedPipeline::fit(&train, &test, &exp.pipeline, None)?,
    };
    let rows = (0..ds.n_rows())
        .into_par_iter()
        .map(|i| {
            let x = ds.row(i);
            let s = pipeline.score(&x)?;
            Ok(ScoreRow {
                row: i,
                split: if train_idx.binary_search(&i).is_ok() {
                    "train"
                } else {
                    "test"
                },
                l_n: s.l_n,
                l_d: s.l_d,
                l_total: s.l_total,
                mahalanobis: pipeline.mahalanobis(&x)?,
                marginal_mahalanobis: pipeline.marginal_mahalanobis(&x)?,
                ood_flag: ds.ood_flag[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Output::new(cfg)?;
    let mut csv =
        String::from("row,split,l_n,l_d,l_total,mahalanobis,marginal_mahalanobis,ood_flag\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.row,
            r.split,
            r.l_n,
            r.l_d,
            r.l_total,
            r.mahalanobis,
            r.marginal_mahalanobis,
            r.ood_flag
        );
    }
    out.csv("scores.csv", &csv)?;
    let mut proj: Value = serde_json::from_str(&pipeline.projection.to_json()?)?;
    proj["config"] = serde_json::to_value(cfg)?;
    out.text(
        "projection.json",
        &(serde_json::to_string_pretty(&proj)? + "\n"),
    )?;
    let aurocs = detection_aurocs(&pipeline, &test)?;
    print!("{}", partition_table(seed, pipeline.partition()));
    println!();
    for (label, v) in DetectionAurocs::LABELS.iter().zip(aurocs.values()) {
        println!("{label:<30}  {v:.3}");
    }
    println!("outputs written to {}", out.dir.display());
    Ok(())
}
