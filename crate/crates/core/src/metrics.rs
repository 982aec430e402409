//! Reduction recall/precision, dataset statistics and length-bucketed
//! downstream accuracy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sql::text_answers_match;
use crate::table::{linearize_table, Instance, Reduction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("bucket boundaries must be non-empty and strictly ascending")]
    BadBoundaries,
    #[error("length mismatch: {0} predictions for {1} gold entries")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Recall is 1 for an empty gold set and precision is 1 for an empty
/// prediction.
pub fn item_scores(predicted: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> ItemScores {
    let hit = predicted.intersection(gold).count() as f64;
    let recall = if gold.is_empty() { 1.0 } else { hit / gold.len() as f64 };
    let precision = if predicted.is_empty() {
        1.0
    } else {
        hit / predicted.len() as f64
    };
    ItemScores {
        recall,
        precision,
        f1: f1(precision, recall),
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn item_recall(predicted: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    item_scores(predicted, gold).recall
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-instance scores.
    #[default]
    Macro,
    /// Scores of the pooled counts.
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScores {
    pub lower_tokens: usize,
    pub upper_tokens: Option<usize>,
    pub count: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub averaging: Averaging,
    pub count: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Kept cells over total cells, averaged over instances.
    pub mean_reduction_ratio: Option<f64>,
    pub buckets: Vec<BucketScores>,
}

fn average(pairs: &[(&BTreeSet<usize>, &BTreeSet<usize>)], averaging: Averaging) -> ItemScores {
    if pairs.is_empty() {
        return ItemScores {
            recall: 0.0,
            precision: 0.0,
            f1: 0.0,
        };
    }
    match averaging {
        Averaging::Macro => {
            let n = pairs.len() as f64;
            let scores: Vec<ItemScores> = pairs.iter().map(|(p, g)| item_scores(p, g)).collect();
            ItemScores {
                recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
                precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
                f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
            }
        }
        Averaging::Micro => {
            let (mut hit, mut np, mut ng) = (0usize, 0usize, 0usize);
            for (p, g) in pairs {
                hit += p.intersection(g).count();
                np += p.len();
                ng += g.len();
            }
            let recall = if ng == 0 { 1.0 } else { hit as f64 / ng as f64 };
            let precision = if np == 0 { 1.0 } else { hit as f64 / np as f64 };
            ItemScores {
                recall,
                precision,
                f1: f1(precision, recall),
            }
        }
    }
}

/// Recall report over (predicted, gold) item sets. `lengths` and
/// `boundaries` add a per-bucket breakdown.
pub fn recall_report(
    predicted: &[BTreeSet<usize>],
    gold: &[BTreeSet<usize>],
    averaging: Averaging,
    buckets: Option<(&[usize], &[usize])>,
) -> Result<RecallReport, MetricsError> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), gold.len()));
    }
    let pairs: Vec<_> = predicted.iter().zip(gold).collect();
    let all = average(&pairs, averaging);
    let mut bucket_scores = Vec::new();
    if let Some((lengths, boundaries)) = buckets {
        let assignment = bucket_by_length(lengths, boundaries)?;
        for k in 0..boundaries.len() {
            let members: Vec<_> = pairs
                .iter()
                .zip(&assignment)
                .filter(|(_, &b)| b == k)
                .map(|(p, _)| *p)
                .collect();
            let s = average(&members, averaging);
            bucket_scores.push(BucketScores {
                lower_tokens: boundaries[k],
                upper_tokens: boundaries.get(k + 1).copied(),
                count: members.len(),
                recall: s.recall,
                precision: s.precision,
                f1: s.f1,
            });
        }
    }
    Ok(RecallReport {
        averaging,
        count: pairs.len(),
        recall: all.recall,
        precision: all.precision,
        f1: all.f1,
        mean_reduction_ratio: None,
        buckets: bucket_scores,
    })
}

pub fn reduction_ratio(instance: &Instance, reduction: &Reduction) -> f64 {
    let total = instance.table.num_cells();
    if total == 0 {
        return 0.0;
    }
    (reduction.columns.len() * reduction.rows.len()) as f64 / total as f64
}

/// Bucket index per length: `k` such that `boundaries[k] <= len <
/// boundaries[k+1]`. Lengths below the first boundary fall in bucket 0.
pub fn bucket_by_length(lengths: &[usize], boundaries: &[usize]) -> Result<Vec<usize>, MetricsError> {
    if boundaries.is_empty() || boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::BadBoundaries);
    }
    Ok(lengths
        .iter()
        .map(|&len| boundaries.partition_point(|&b| b <= len).saturating_sub(1))
        .collect())
}

/// Full-context token count of an instance's table.
pub fn context_tokens(instance: &Instance) -> usize {
    linearize_table(&instance.table).token_count
}

/// Split a model answer into answer items. Multiple answers are
/// separated by `" | "`.
pub fn split_answer(text: &str) -> Vec<String> {
    text.split(" | ").map(|s| s.trim().to_string()).collect()
}

pub fn answer_correct(predicted: &str, gold: &[String]) -> bool {
    text_answers_match(&split_answer(predicted), gold)
}

/// Fraction of predictions matching their gold answers.
pub fn downstream_accuracy(predicted: &[String], gold: &[Vec<String>]) -> Result<f64, MetricsError> {
    if predicted.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), gold.len()));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let correct = predicted
        .iter()
        .zip(gold)
        .filter(|(p, g)| answer_correct(p, g))
        .count();
    Ok(correct as f64 / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub lower_tokens: usize,
    pub upper_tokens: Option<usize>,
    pub count: usize,
    pub correct: usize,
    /// `None` for an empty bucket.
    pub accuracy: Option<f64>,
}

pub fn bucketed_accuracy(
    predicted: &[String],
    gold: &[Vec<String>],
    lengths: &[usize],
    boundaries: &[usize],
) -> Result<Vec<BucketAccuracy>, MetricsError> {
    if predicted.len() != gold.len() || lengths.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), gold.len()));
    }
    let assignment = bucket_by_length(lengths, boundaries)?;
    let mut out: Vec<BucketAccuracy> = boundaries
        .iter()
        .enumerate()
        .map(|(k, &b)| BucketAccuracy {
            lower_tokens: b,
            upper_tokens: boundaries.get(k + 1).copied(),
            count: 0,
            correct: 0,
            accuracy: None,
        })
        .collect();
    for ((p, g), &k) in predicted.iter().zip(gold).zip(&assignment) {
        out[k].count += 1;
        if answer_correct(p, g) {
            out[k].correct += 1;
        }
    }
    for b in &mut out {
        if b.count > 0 {
            b.accuracy = Some(b.correct as f64 / b.count as f64);
        }
    }
    Ok(out)
}

pub const TOKEN_THRESHOLDS: [usize; 2] = [4096, 8192];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub instances: usize,
    pub tables: usize,
    pub avg_columns: f64,
    pub max_columns: usize,
    pub avg_rows: f64,
    pub max_rows: usize,
    pub avg_cells: f64,
    pub max_cells: usize,
    pub avg_tokens: f64,
    pub max_tokens: usize,
    /// Instances with more than 4096 and more than 8192 context tokens.
    pub over_4096_tokens: usize,
    pub over_8192_tokens: usize,
}

/// Per-instance shape statistics; `tables` counts distinct tables by
/// content.
pub fn dataset_stats(instances: &[Instance]) -> DatasetStats {
    if instances.is_empty() {
        return DatasetStats::default();
    }
    let n = instances.len() as f64;
    let mut s = DatasetStats {
        instances: instances.len(),
        ..Default::default()
    };
    let mut tables = BTreeSet::new();
    for inst in instances {
        let t = &inst.table;
        let tokens = context_tokens(inst);
        tables.insert(serde_json::to_string(t).unwrap_or_default());
        s.avg_columns += t.num_columns() as f64 / n;
        s.avg_rows += t.num_rows() as f64 / n;
        s.avg_cells += t.num_cells() as f64 / n;
        s.avg_tokens += tokens as f64 / n;
        s.max_columns = s.max_columns.max(t.num_columns());
        s.max_rows = s.max_rows.max(t.num_rows());
        s.max_cells = s.max_cells.max(t.num_cells());
        s.max_tokens = s.max_tokens.max(tokens);
        s.over_4096_tokens += usize::from(tokens > TOKEN_THRESHOLDS[0]);
        s.over_8192_tokens += usize::from(tokens > TOKEN_THRESHOLDS[1]);
    }
    s.tables = tables.len();
    s
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Document written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub columns: Option<RecallReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rows: Option<RecallReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bucket_accuracy: Vec<BucketAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset: Option<DatasetStats>,
}

impl Default for Report {
    fn default() -> Self {
        Report {
            format_version: REPORT_FORMAT_VERSION,
            columns: None,
            rows: None,
            accuracy: None,
            bucket_accuracy: Vec::new(),
            dataset: None,
        }
    }
}

/// Plot-ready CSV of bucketed accuracy.
pub fn bucket_csv(buckets: &[BucketAccuracy]) -> String {
    let mut out = String::from("lower_tokens,upper_tokens,count,correct,accuracy\n");
    for b in buckets {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            b.lower_tokens,
            b.upper_tokens.map(|u| u.to_string()).unwrap_or_default(),
            b.count,
            b.correct,
            b.accuracy.map(|a| a.to_string()).unwrap_or_default()
        ));
    }
    out
}
