//! Gold relevance labels by removal and re-execution.
//!
//! An item (column or row) is irrelevant when the instance's SQL still
//! reproduces the gold answers after the item is removed. Items are tried
//! once each in table order (columns left to right, then rows top to bottom
//! on the column-projected table); a removal that keeps the answers intact is
//! kept, otherwise the item is restored and marked relevant. Columns named by
//! the query are relevant without a trial.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sql::{self, answers_match, SqlAst};
use crate::table::{project, Instance, Reduction, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    MissingSql,
    UnsupportedSql,
    GoldMismatch,
    InvalidInstance,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::MissingSql => "missing_sql",
            SkipReason::UnsupportedSql => "unsupported_sql",
            SkipReason::GoldMismatch => "gold_mismatch",
            SkipReason::InvalidInstance => "invalid_instance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SkipReason::MissingSql,
            SkipReason::UnsupportedSql,
            SkipReason::GoldMismatch,
            SkipReason::InvalidInstance,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationStatus {
    Ok,
    Skipped(SkipReason),
}

impl AnnotationStatus {
    /// `"ok"` or `"skipped:<reason>"`.
    pub fn to_label(self) -> String {
        match self {
            AnnotationStatus::Ok => "ok".to_string(),
            AnnotationStatus::Skipped(r) => format!("skipped:{r}"),
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        if s == "ok" {
            return Some(AnnotationStatus::Ok);
        }
        s.strip_prefix("skipped:")
            .and_then(SkipReason::parse)
            .map(AnnotationStatus::Skipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Columns,
    Rows,
    Both,
}

impl std::str::FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "columns" => Ok(Target::Columns),
            "rows" => Ok(Target::Rows),
            "both" => Ok(Target::Both),
            other => Err(format!("unknown target {other:?} (columns|rows|both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceAnnotation {
    pub relevant_columns: BTreeSet<usize>,
    /// `None` when only columns were annotated.
    pub relevant_rows: Option<BTreeSet<usize>>,
    pub status: AnnotationStatus,
}

impl RelevanceAnnotation {
    pub fn skipped(reason: SkipReason) -> Self {
        RelevanceAnnotation {
            relevant_columns: BTreeSet::new(),
            relevant_rows: None,
            status: AnnotationStatus::Skipped(reason),
        }
    }
}

fn checked_query(instance: &Instance) -> Result<SqlAst, SkipReason> {
    let sql_text = instance.sql.as_deref().ok_or(SkipReason::MissingSql)?;
    let ast = sql::parse_sql(sql_text).map_err(|_| SkipReason::UnsupportedSql)?;
    if !reproduces(&ast, &instance.table, &instance.answers) {
        return Err(SkipReason::GoldMismatch);
    }
    Ok(ast)
}

fn reproduces(ast: &SqlAst, table: &Table, gold: &[String]) -> bool {
    matches!(sql::execute(ast, table), Ok(v) if answers_match(&v, gold))
}

/// Columns whose removal breaks execution or changes the answers.
pub fn annotate_columns(instance: &Instance) -> Result<BTreeSet<usize>, SkipReason> {
    let ast = checked_query(instance)?;
    Ok(greedy_columns(&ast, instance))
}

fn greedy_columns(ast: &SqlAst, instance: &Instance) -> BTreeSet<usize> {
    let table = &instance.table;
    let referenced: BTreeSet<usize> = ast
        .referenced_columns()
        .into_iter()
        .filter_map(|c| table.column_index(c))
        .collect();
    let all_rows: BTreeSet<usize> = (0..table.num_rows()).collect();
    let mut kept = table.all_columns();
    for c in 0..table.num_columns() {
        if referenced.contains(&c) {
            continue;
        }
        let mut trial = kept.clone();
        trial.remove(&c);
        let reduced = project(
            table,
            &Reduction {
                columns: trial.clone(),
                rows: all_rows.clone(),
            },
        )
        .expect("indices in bounds");
        if reproduces(ast, &reduced, &instance.answers) {
            kept = trial;
        }
    }
    kept
}

/// Rows whose removal (from the table projected to `relevant_columns`)
/// breaks execution or changes the answers.
pub fn annotate_rows(
    instance: &Instance,
    relevant_columns: &BTreeSet<usize>,
) -> Result<BTreeSet<usize>, SkipReason> {
    let ast = checked_query(instance)?;
    greedy_rows(&ast, instance, relevant_columns)
}

fn greedy_rows(
    ast: &SqlAst,
    instance: &Instance,
    relevant_columns: &BTreeSet<usize>,
) -> Result<BTreeSet<usize>, SkipReason> {
    let table = &instance.table;
    let narrowed = project(table, &Reduction::new(relevant_columns.iter().copied(), 0..table.num_rows()))
        .map_err(|_| SkipReason::InvalidInstance)?;
    if !reproduces(ast, &narrowed, &instance.answers) {
        return Err(SkipReason::GoldMismatch);
    }
    let all_cols: BTreeSet<usize> = (0..narrowed.num_columns()).collect();
    let mut kept: BTreeSet<usize> = (0..narrowed.num_rows()).collect();
    for r in 0..narrowed.num_rows() {
        let mut trial = kept.clone();
        trial.remove(&r);
        let reduced = project(
            &narrowed,
            &Reduction {
                columns: all_cols.clone(),
                rows: trial.clone(),
            },
        )
        .expect("indices in bounds");
        if reproduces(ast, &reduced, &instance.answers) {
            kept = trial;
        }
    }
    Ok(kept)
}

/// Annotate one instance for `target`.
pub fn annotate_instance(instance: &Instance, target: Target) -> RelevanceAnnotation {
    if instance.validate().is_err() {
        return RelevanceAnnotation::skipped(SkipReason::InvalidInstance);
    }
    let ast = match checked_query(instance) {
        Ok(ast) => ast,
        Err(reason) => return RelevanceAnnotation::skipped(reason),
    };
    let columns = greedy_columns(&ast, instance);
    let rows = match target {
        Target::Columns => None,
        Target::Rows | Target::Both => match greedy_rows(&ast, instance, &columns) {
            Ok(rows) => Some(rows),
            Err(reason) => return RelevanceAnnotation::skipped(reason),
        },
    };
    RelevanceAnnotation {
        relevant_columns: columns,
        relevant_rows: rows,
        status: AnnotationStatus::Ok,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipStats {
    pub annotated: usize,
    pub errors: usize,
    pub skipped: BTreeMap<SkipReason, usize>,
}

impl SkipStats {
    pub fn total_skipped(&self) -> usize {
        self.skipped.values().sum()
    }
}

/// Order-preserving parallel annotation. Input errors (e.g. malformed
/// records) pass through untouched and are counted.
pub fn annotate_dataset<E: Send>(
    items: Vec<Result<Instance, E>>,
    target: Target,
    parallelism: usize,
) -> (Vec<Result<(Instance, RelevanceAnnotation), E>>, SkipStats) {
    let work = |items: Vec<Result<Instance, E>>| -> Vec<Result<(Instance, RelevanceAnnotation), E>> {
        items
            .into_par_iter()
            .map(|item| {
                item.map(|inst| {
                    let ann = annotate_instance(&inst, target);
                    (inst, ann)
                })
            })
            .collect()
    };
    let out = match rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
    {
        Ok(pool) => pool.install(|| work(items)),
        Err(_) => work(items),
    };
    let mut stats = SkipStats::default();
    for item in &out {
        match item {
            Err(_) => stats.errors += 1,
            Ok((_, ann)) => match ann.status {
                AnnotationStatus::Ok => stats.annotated += 1,
                AnnotationStatus::Skipped(r) => *stats.skipped.entry(r).or_default() += 1,
            },
        }
    }
    (out, stats)
}
