use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataError, InstanceRecord};
use crate::annotate::{annotate_instance, AnnotationStatus, Target};
use crate::seed::derived_rng;
use crate::sql::{run, values_to_answers};
use crate::table::{Cell, Instance, Table};

/// Header vocabulary. Disjoint from the question template words and from
/// the generated cell values.
pub const HEADER_WORDS: &[&str] = &[
    "year", "city", "country", "team", "player", "score", "rank", "club", "venue", "season",
    "league", "coach", "stadium", "region", "district", "capital", "population", "area",
    "height", "weight", "distance", "budget", "revenue", "salary", "price", "rating", "votes",
    "party", "candidate", "winner", "margin", "points", "goals", "wins", "losses", "matches",
    "titles", "medals", "athlete", "event", "album", "artist", "director", "film", "episode",
    "author", "language", "platform",
];

const TEMPLATE_WORDS: &[&str] = &["what", "is", "the", "of", "where", "count", "total", "minimum", "maximum"];

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Relative frequencies of the query templates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMix {
    pub lookup: f64,
    pub count: f64,
    pub sum: f64,
    pub min_max: f64,
}

impl Default for QueryMix {
    fn default() -> Self {
        QueryMix {
            lookup: 0.4,
            count: 0.2,
            sum: 0.2,
            min_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub instances: usize,
    /// Inclusive column-count range.
    pub columns: (usize, usize),
    /// Inclusive row-count range.
    pub rows: (usize, usize),
    pub value_vocab: usize,
    pub questions_per_table: usize,
    pub mix: QueryMix,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            instances: 2000,
            columns: (4, 10),
            rows: (5, 60),
            value_vocab: 200,
            questions_per_table: 3,
            mix: QueryMix::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Config(m.to_string()));
        if self.columns.0 < 2 || self.columns.0 > self.columns.1 || self.columns.1 > HEADER_WORDS.len() {
            return bad("column range must satisfy 2 <= min <= max <= header word count");
        }
        if self.rows.0 < 1 || self.rows.0 > self.rows.1 {
            return bad("row range must satisfy 1 <= min <= max");
        }
        if self.value_vocab < 2 {
            return bad("value_vocab must be at least 2");
        }
        if self.questions_per_table == 0 {
            return bad("questions_per_table must be positive");
        }
        let m = self.mix;
        let w = [m.lookup, m.count, m.sum, m.min_max];
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("query mix weights must be non-negative and sum to 1");
        }
        Ok(())
    }
}

/// Pseudo-word cell values, distinct from header and template words.
fn value_words(n: usize, seed: u64) -> Vec<String> {
    let mut rng = derived_rng(seed, &[0]);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(&mut rng).unwrap(), VOWELS.choose(&mut rng).unwrap()))
            .collect();
        if HEADER_WORDS.contains(&w.as_str()) || TEMPLATE_WORDS.contains(&w.as_str()) {
            continue;
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

enum ColumnKind {
    Numeric,
    Categorical,
}

fn generate_table(cfg: &SynthConfig, values: &[String], rng: &mut impl Rng) -> (Table, Vec<ColumnKind>) {
    let ncols = rng.gen_range(cfg.columns.0..=cfg.columns.1);
    let nrows = rng.gen_range(cfg.rows.0..=cfg.rows.1);
    let headers: Vec<String> = HEADER_WORDS
        .choose_multiple(rng, ncols)
        .map(|s| s.to_string())
        .collect();
    let mut kinds: Vec<ColumnKind> = (0..ncols)
        .map(|_| {
            if rng.gen_bool(0.4) {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            }
        })
        .collect();
    // at least one key column and one numeric column
    let key = rng.gen_range(0..ncols);
    kinds[key] = ColumnKind::Categorical;
    if !kinds.iter().any(|k| matches!(k, ColumnKind::Numeric)) {
        let other = (key + 1 + rng.gen_range(0..ncols - 1)) % ncols;
        kinds[other] = ColumnKind::Numeric;
    }
    let columns: Vec<Vec<Cell>> = kinds
        .iter()
        .map(|k| match k {
            ColumnKind::Numeric => (0..nrows).map(|_| Cell::from(rng.gen_range(1..1000i64))).collect(),
            ColumnKind::Categorical => {
                let pool_size = (nrows / rng.gen_range(2..=4)).clamp(2, values.len());
                let pool: Vec<&String> = values.choose_multiple(rng, pool_size).collect();
                (0..nrows)
                    .map(|_| Cell::text((*pool.choose(rng).unwrap()).clone()))
                    .collect()
            }
        })
        .collect();
    let rows = (0..nrows)
        .map(|r| columns.iter().map(|c| c[r].clone()).collect())
        .collect();
    (Table::new(headers, rows).expect("distinct headers"), kinds)
}

fn pick_template(mix: &QueryMix, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let w = [mix.lookup, mix.count, mix.sum, mix.min_max];
    let mut acc = 0.0;
    for (i, x) in w.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    w.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

/// One (sql, question) pair over `table`, or `None` if the template does
/// not fit the table.
fn generate_query(
    table: &Table,
    kinds: &[ColumnKind],
    template: usize,
    rng: &mut impl Rng,
) -> Option<(String, String)> {
    let cats: Vec<usize> = (0..kinds.len()).filter(|&i| matches!(kinds[i], ColumnKind::Categorical)).collect();
    let nums: Vec<usize> = (0..kinds.len()).filter(|&i| matches!(kinds[i], ColumnKind::Numeric)).collect();
    let b = *cats.choose(rng)?;
    let a = match template {
        0 | 1 => {
            let others: Vec<usize> = (0..kinds.len()).filter(|&i| i != b).collect();
            *others.choose(rng)?
        }
        _ => *nums.choose(rng)?,
    };
    let row = rng.gen_range(0..table.num_rows());
    let v = table.rows()[row][b].to_string();
    let (ha, hb) = (&table.columns()[a], &table.columns()[b]);
    Some(match template {
        0 => (
            format!("select {ha} where {hb} = '{v}'"),
            format!("what is the {ha} where {hb} is {v}?"),
        ),
        1 => (
            format!("select count({ha}) where {hb} = '{v}'"),
            format!("what is the count of {ha} where {hb} is {v}?"),
        ),
        2 => (
            format!("select sum({ha}) where {hb} = '{v}'"),
            format!("what is the total {ha} where {hb} is {v}?"),
        ),
        _ => {
            let (f, word) = if rng.gen_bool(0.5) { ("min", "minimum") } else { ("max", "maximum") };
            (
                format!("select {f}({ha}) where {hb} = '{v}'"),
                format!("what is the {word} {ha} where {hb} is {v}?"),
            )
        }
    })
}

/// Generate annotated synthetic instances. Table `t` draws from its own
/// RNG stream, so output does not depend on thread count.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<InstanceRecord>, DataError> {
    cfg.validate()?;
    let values = value_words(cfg.value_vocab, cfg.seed);
    let n_tables = cfg.instances.div_ceil(cfg.questions_per_table);
    let mut records: Vec<InstanceRecord> = (0..n_tables)
        .into_par_iter()
        .flat_map_iter(|t| {
            let mut rng = derived_rng(cfg.seed, &[1, t as u64]);
            let (table, kinds) = generate_table(cfg, &values, &mut rng);
            let mut out = Vec::new();
            let mut seen = BTreeSet::new();
            let mut attempts = 0;
            while out.len() < cfg.questions_per_table && attempts < 50 {
                attempts += 1;
                let template = pick_template(&cfg.mix, &mut rng);
                let Some((sql, question)) = generate_query(&table, &kinds, template, &mut rng) else {
                    continue;
                };
                if !seen.insert(sql.clone()) {
                    continue;
                }
                let Ok(result) = run(&sql, &table) else { continue };
                let instance = Instance {
                    id: format!("syn-{t}-{}", out.len()),
                    question,
                    table: table.clone(),
                    sql: Some(sql),
                    answers: values_to_answers(&result),
                };
                let ann = annotate_instance(&instance, Target::Both);
                if ann.status != AnnotationStatus::Ok {
                    continue;
                }
                let mut record = InstanceRecord::from_instance(instance);
                record.set_annotation(&ann);
                out.push(record);
            }
            out
        })
        .collect();
    records.truncate(cfg.instances);
    Ok(records)
}
