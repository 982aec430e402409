#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabreduce::annotate::RelevanceAnnotation;
use tabreduce::policy::{Action, EncodedInstance, PolicyParams};
use tabreduce::sql::{answers_match, run, values_to_answers};
use tabreduce::table::{project, Instance, Reduction};

/// Run the CLI in-process and return its exit code.
pub fn tabreduce(args: &[&str]) -> i32 {
    let argv = std::iter::once("tabreduce").chain(args.iter().copied()).map(String::from).collect();
    tabreduce::cli::main_with_args(argv)
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Random parameters at `dim` over a vocabulary of `vocab` ids.
pub fn random_params(vocab: usize, dim: usize, seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = PolicyParams::zeros(vocab, dim);
    for t in p.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-0.8..0.8);
        }
    }
    p
}

/// A random encoded instance and a gold action sequence over its items.
pub fn random_episode(vocab: usize, seed: u64) -> (EncodedInstance, Vec<Action>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let n = rng.gen_range(1..=4);
        (0..n).map(|_| rng.gen_range(0..vocab)).collect()
    };
    let question = tokens(&mut rng);
    let n_items = rng.gen_range(1..=5);
    let items: Vec<Vec<usize>> = (0..n_items).map(|_| tokens(&mut rng)).collect();
    let mut gold: Vec<usize> = (0..n_items).filter(|_| rng.gen_bool(0.5)).collect();
    gold.sort_unstable();
    let mut actions: Vec<Action> = gold.into_iter().map(Action::Item).collect();
    if actions.len() < n_items {
        actions.push(Action::Stop);
    }
    (EncodedInstance { question, items }, actions)
}

/// Sufficiency and single-item minimality of an annotation, checked by
/// re-running the gold SQL on hand-built sub-tables.
pub fn check_sufficient_and_minimal(inst: &Instance, ann: &RelevanceAnnotation) -> Result<(), String> {
    use std::collections::BTreeSet;
    let sql = inst.sql.as_deref().ok_or("no sql")?;
    let rows = ann.relevant_rows.clone().ok_or("rows not annotated")?;
    let cols = &ann.relevant_columns;
    let answers = |c: &BTreeSet<usize>, r: &BTreeSet<usize>| {
        let sub = project(&inst.table, &Reduction::new(c.iter().copied(), r.iter().copied())).expect("in bounds");
        matches!(run(sql, &sub), Ok(v) if answers_match(&v, &inst.answers))
    };
    if !answers(cols, &rows) {
        return Err(format!("{}: annotated sub-table does not answer {sql}", inst.id));
    }
    for &c in cols {
        let mut fewer = cols.clone();
        fewer.remove(&c);
        if answers(&fewer, &rows) {
            return Err(format!("{}: column {c} is not needed for {sql}", inst.id));
        }
    }
    for &r in &rows {
        let mut fewer = rows.clone();
        fewer.remove(&r);
        if answers(cols, &fewer) {
            return Err(format!("{}: row {r} is not needed for {sql}", inst.id));
        }
    }
    Ok(())
}

pub struct OracleCase {
    pub instance: Instance,
    pub query: oracle::Query,
}

/// Random small table and monotone query whose gold answers come from the
/// naive evaluator. Cases where the evaluator fails are redrawn.
pub fn oracle_case(rng: &mut ChaCha8Rng, id: usize) -> OracleCase {
    loop {
        let g = oracle::random_table(rng, 5, 6, true);
        let query = oracle::random_monotone_query(rng, &g);
        let Ok(values) = oracle::naive_eval(&(&g.table).into(), &query) else {
            continue;
        };
        let instance = Instance {
            id: format!("o{id}"),
            question: "oracle question".into(),
            table: g.table,
            sql: Some(query.to_sql()),
            answers: values_to_answers(&values),
        };
        return OracleCase { instance, query };
    }
}

/// Whether a greedy annotation is one of the minimum-size sufficient sets
/// found by exhaustive search, first over columns with every row kept,
/// then over rows of the table narrowed to the annotated columns.
pub fn check_against_brute_force(case: &OracleCase, ann: &RelevanceAnnotation) -> Result<(), String> {
    let inst = &case.instance;
    let table = &inst.table;
    let sufficient = |cols: &std::collections::BTreeSet<usize>, rows: &std::collections::BTreeSet<usize>| {
        let sub = oracle::sub_grid(table, cols, rows);
        matches!(oracle::naive_eval(&sub, &case.query), Ok(v) if answers_match(&v, &inst.answers))
    };
    let all_rows = (0..table.num_rows()).collect();
    let col_sets = oracle::minimum_subsets(table.num_columns(), |c| sufficient(c, &all_rows));
    if !col_sets.contains(&ann.relevant_columns) {
        return Err(format!(
            "{}: columns {:?} not among minimum sets {col_sets:?} for {}",
            inst.id,
            ann.relevant_columns,
            inst.sql.as_deref().unwrap_or_default()
        ));
    }
    let rows = ann.relevant_rows.as_ref().ok_or("rows not annotated")?;
    let row_sets = oracle::minimum_subsets(table.num_rows(), |r| sufficient(&ann.relevant_columns, r));
    if !row_sets.contains(rows) {
        return Err(format!(
            "{}: rows {rows:?} not among minimum sets {row_sets:?} for {}",
            inst.id,
            inst.sql.as_deref().unwrap_or_default()
        ));
    }
    Ok(())
}
