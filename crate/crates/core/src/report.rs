//! Evaluation metrics and result tables.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::counterfactual::CounterfactualResult;
use crate::density::{ood_score, PartitionDensityModel};
use crate::error::{check_dim, Error, Result};
use crate::projection::ProjectionModel;
use crate::stats::mean;

/// ‖a − b‖₁
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks (Mann–Whitney U).
pub fn auroc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::EmptyInput);
    }
    if positive.iter().chain(negative).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("AUROC scores contain NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of 1-based mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let n_pos = all[i..=j].iter().filter(|e| e.1).count();
        rank_sum += mid_rank * n_pos as f64;
        i = j + 1;
    }
    let n_p = positive.len() as f64;
    let n_n = negative.len() as f64;
    let u = rank_sum - n_p * (n_p + 1.0) / 2.0;
    Ok(u / (n_p * n_n))
}

/// One row of the results table; values are means over `n_seeds` runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub approach: String,
    pub non_dis: f64,
    pub dis: f64,
    pub l1: f64,
    pub auroc: f64,
    pub n_seeds: usize,
}

/// Mean Non-dis / Dis NLL and raw L1 of the counterfactuals, and the AUROC
/// of ID test rows (positives) against the counterfactuals (negatives)
/// using −l_total as the detection score.
pub fn evaluate_run(
    approach: &str,
    counterfactuals: &[CounterfactualResult],
    id_test: &DMatrix<f64>,
    model: &PartitionDensityModel,
    projection: &ProjectionModel,
) -> Result<EvalRow> {
    if counterfactuals.is_empty() || id_test.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let cf_scores = counterfactuals
        .iter()
        .map(|r| ood_score(model, projection, &r.x_counterfactual))
        .collect::<Result<Vec<_>>>()?;
    let l1 = counterfactuals
        .iter()
        .map(|r| l1_distance(&r.x_original, &r.x_counterfactual))
        .collect::<Result<Vec<_>>>()?;
    let id_scores = (0..id_test.nrows())
        .map(|i| {
            let row: Vec<f64> = id_test.row(i).iter().copied().collect();
            ood_score(model, projection, &row).map(|s| -s.l_total)
        })
        .collect::<Result<Vec<_>>>()?;
    let neg: Vec<f64> = cf_scores.iter().map(|s| -s.l_total).collect();
    Ok(EvalRow {
        approach: approach.to_string(),
        non_dis: mean(&cf_scores.iter().map(|s| s.l_n).collect::<Vec<_>>()),
        dis: mean(&cf_scores.iter().map(|s| s.l_d).collect::<Vec<_>>()),
        l1: mean(&l1),
        auroc: auroc(&id_scores, &neg)?,
        n_seeds: 1,
    })
}

/// Long-form record for one approach under one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRow {
    pub approach: String,
    pub seed: u64,
    pub non_dis: f64,
    pub dis: f64,
    pub l1: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSpread {
    pub approach: String,
    pub non_dis: f64,
    pub dis: f64,
    pub l1: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    /// Per-approach means, in the order approaches first appeared.
    pub rows: Vec<EvalRow>,
    /// Per-approach sample standard deviations (0 for a single seed).
    pub std: Vec<MetricSpread>,
    pub per_seed: Vec<SeedRow>,
}

/// Runs `run` for every seed (in parallel) and averages each approach's
/// metrics. Results are folded in seed order, so the aggregate does not
/// depend on scheduling. The first failing seed (in seed order) aborts.
pub fn repeat_and_aggregate<F>(seeds: &[u64], run: F) -> Result<Aggregate>
where
    F: Fn(u64) -> Result<Vec<EvalRow>> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let results: Vec<Result<Vec<EvalRow>>> = seeds.par_iter().map(|&s| run(s)).collect();
    let mut per_seed = Vec::new();
    for (&seed, result) in seeds.iter().zip(results) {
        let rows = result.map_err(|e| Error::SeedFailed {
            seed,
            source: Box::new(e),
        })?;
        per_seed.extend(rows.into_iter().map(|r| SeedRow {
            approach: r.approach,
            seed,
            non_dis: r.non_dis,
            dis: r.dis,
            l1: r.l1,
            auroc: r.auroc,
        }));
    }
    let mut approaches: Vec<String> = Vec::new();
    for r in &per_seed {
        if !approaches.contains(&r.approach) {
            approaches.push(r.approach.clone());
        }
    }
    let mut rows = Vec::new();
    let mut std = Vec::new();
    for approach in approaches {
        let group: Vec<&SeedRow> = per_seed.iter().filter(|r| r.approach == approach).collect();
        let col = |f: fn(&SeedRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let (nd, d, l1, au) = (
            col(|r| r.non_dis),
            col(|r| r.dis),
            col(|r| r.l1),
            col(|r| r.auroc),
        );
        rows.push(EvalRow {
            approach: approach.clone(),
            non_dis: mean(&nd),
            dis: mean(&d),
            l1: mean(&l1),
            auroc: mean(&au),
            n_seeds: group.len(),
        });
        std.push(MetricSpread {
            approach,
            non_dis: sample_std(&nd),
            dis: sample_std(&d),
            l1: sample_std(&l1),
            auroc: sample_std(&au),
        });
    }
    Ok(Aggregate {
        rows,
        std,
        per_seed,
    })
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub const TABLE_HEADER: [&str; 5] = ["Approach", "Non-dis", "Dis", "L1", "AUROC"];

/// Aligned plain-text table with the `Approach, Non-dis, Dis, L1, AUROC`
/// columns, three decimals.
pub fn format_table(rows: &[EvalRow]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.approach.clone(),
                format!("{:.3}", r.non_dis),
                format!("{:.3}", r.dis),
                format!("{:.3}", r.l1),
                format!("{:.3}", r.auroc),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        for (i, (c, w)) in row.iter().zip(&widths).enumerate() {
            if i == 0 {
                out.push_str(&format!("{c:<w$}"));
            } else {
                out.push_str(&format!("  {c:>w$}"));
            }
        }
        out.push('\n');
    };
    line(&mut out, &TABLE_HEADER);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(
        &mut out,
        &rule.iter().map(String::as_str).collect::<Vec<_>>(),
    );
    for row in &cells {
        line(
            &mut out,
            &row.iter().map(String::as_str).collect::<Vec<_>>(),
        );
    }
    out
}

/// `approach,non_dis,dis,l1,auroc,n_seeds` rows.
pub fn summary_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("approach,non_dis,dis,l1,auroc,n_seeds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.approach, r.non_dis, r.dis, r.l1, r.auroc, r.n_seeds
        ));
    }
    out
}

/// `approach,seed,non_dis,dis,l1,auroc` rows.
pub fn per_seed_csv(rows: &[SeedRow]) -> String {
    let mut out = String::from("approach,seed,non_dis,dis,l1,auroc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.approach, r.seed, r.non_dis, r.dis, r.l1, r.auroc
        ));
    }
    out
}
