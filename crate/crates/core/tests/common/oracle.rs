//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the engine or the annotator.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tabreduce::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Num,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

const OPS: [(Op, &str); 6] = [
    (Op::Eq, "="),
    (Op::Ne, "!="),
    (Op::Lt, "<"),
    (Op::Le, "<="),
    (Op::Gt, ">"),
    (Op::Ge, ">="),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Lit {
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agg {
    CountStar,
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub agg: Option<Agg>,
    /// Projected or aggregated column; unused for `count(*)`.
    pub column: String,
    pub preds: Vec<(String, Op, Lit)>,
    pub order: Option<(String, bool)>,
    pub limit: Option<u64>,
}

impl Query {
    pub fn to_sql(&self) -> String {
        let proj = match self.agg {
            None => self.column.clone(),
            Some(Agg::CountStar) => "count(*)".into(),
            Some(a) => {
                let f = match a {
                    Agg::Count => "count",
                    Agg::Sum => "sum",
                    Agg::Avg => "avg",
                    Agg::Min => "min",
                    Agg::Max => "max",
                    Agg::CountStar => unreachable!(),
                };
                format!("{f}({})", self.column)
            }
        };
        let mut s = format!("select {proj} from t");
        for (i, (c, op, lit)) in self.preds.iter().enumerate() {
            let sym = OPS.iter().find(|(o, _)| o == op).unwrap().1;
            let lit = match lit {
                Lit::Num(x) => format!("{x}"),
                Lit::Text(t) => format!("'{t}'"),
            };
            s.push_str(if i == 0 { " where " } else { " and " });
            s.push_str(&format!("{c} {sym} {lit}"));
        }
        if let Some((c, desc)) = &self.order {
            s.push_str(&format!(" order by {c} {}", if *desc { "desc" } else { "asc" }));
        }
        if let Some(n) = self.limit {
            s.push_str(&format!(" limit {n}"));
        }
        s
    }
}

const WORDS: &[&str] = &["apple", "Apple", "berry", "cherry", "Date", "fig", "grape", "kiwi"];

pub struct Generated {
    pub table: Table,
    pub kinds: Vec<Kind>,
}

/// Random typed table: every column is all numbers or all text, with some
/// nulls. `non_negative` keeps numbers at zero or above.
pub fn random_table(rng: &mut ChaCha8Rng, max_rows: usize, max_cols: usize, non_negative: bool) -> Generated {
    let n_cols = rng.gen_range(1..=max_cols);
    let n_rows = rng.gen_range(0..=max_rows);
    let kinds: Vec<Kind> = (0..n_cols)
        .map(|_| if rng.gen_bool(0.5) { Kind::Num } else { Kind::Text })
        .collect();
    let lo = if non_negative { 0 } else { -5 };
    let rows = (0..n_rows)
        .map(|_| {
            kinds
                .iter()
                .map(|k| {
                    if rng.gen_bool(0.1) {
                        return Cell::Null;
                    }
                    match k {
                        Kind::Num if rng.gen_bool(0.15) => Cell::Number(rng.gen_range(lo..12) as f64 + 0.5),
                        Kind::Num => Cell::Number(rng.gen_range(lo..12) as f64),
                        Kind::Text => Cell::Text(WORDS.choose(rng).unwrap().to_string()),
                    }
                })
                .collect()
        })
        .collect();
    let headers = (0..n_cols).map(|i| format!("c{i}")).collect();
    Generated {
        table: Table::new(headers, rows).expect("rectangular"),
        kinds,
    }
}

fn random_literal(rng: &mut ChaCha8Rng, kind: Kind) -> Lit {
    match kind {
        Kind::Num => Lit::Num(rng.gen_range(-2..12) as f64),
        Kind::Text => Lit::Text(WORDS.choose(rng).unwrap().to_lowercase()),
    }
}

/// Any query in the supported grammar, including ones that must fail
/// (unknown columns, ordering text against numbers, sums over text).
pub fn random_query(rng: &mut ChaCha8Rng, g: &Generated) -> Query {
    let n = g.kinds.len();
    let col = |rng: &mut ChaCha8Rng| -> (String, Option<Kind>) {
        if rng.gen_bool(0.04) {
            ("zz".into(), None)
        } else {
            let i = rng.gen_range(0..n);
            (format!("c{i}"), Some(g.kinds[i]))
        }
    };
    let agg = match rng.gen_range(0..12) {
        0 => Some(Agg::CountStar),
        1 => Some(Agg::Count),
        2 => Some(Agg::Sum),
        3 => Some(Agg::Avg),
        4 => Some(Agg::Min),
        5 => Some(Agg::Max),
        _ => None,
    };
    let (column, _) = col(rng);
    let preds = (0..rng.gen_range(0..=2))
        .map(|_| {
            let (c, kind) = col(rng);
            let op = OPS.choose(rng).unwrap().0;
            let lit = match kind {
                Some(Kind::Text) if rng.gen_bool(0.15) => Lit::Num(3.0),
                Some(k) => random_literal(rng, k),
                None => Lit::Num(1.0),
            };
            (c, op, lit)
        })
        .collect();
    let (order, limit) = if agg.is_none() {
        let order = rng.gen_bool(0.4).then(|| (col(rng).0, rng.gen_bool(0.5)));
        (order, rng.gen_bool(0.3).then(|| rng.gen_range(1..=4)))
    } else {
        (None, None)
    };
    Query {
        agg,
        column,
        preds,
        order,
        limit,
    }
}

/// Queries whose sufficient row sets are closed under supersets: plain
/// projections, counts, sums over non-negative numbers, min and max.
pub fn random_monotone_query(rng: &mut ChaCha8Rng, g: &Generated) -> Query {
    let n = g.kinds.len();
    let nums: Vec<usize> = (0..n).filter(|&i| g.kinds[i] == Kind::Num).collect();
    let any = |rng: &mut ChaCha8Rng| rng.gen_range(0..n);
    let (agg, c) = match rng.gen_range(0..6) {
        0 => (Some(Agg::CountStar), any(rng)),
        1 => (Some(Agg::Count), any(rng)),
        2 if !nums.is_empty() => (Some(Agg::Sum), *nums.choose(rng).unwrap()),
        3 => (Some(Agg::Min), any(rng)),
        4 => (Some(Agg::Max), any(rng)),
        _ => (None, any(rng)),
    };
    let preds = (0..rng.gen_range(0..=2))
        .map(|_| {
            let i = any(rng);
            let op = OPS.choose(rng).unwrap().0;
            (format!("c{i}"), op, random_literal(rng, g.kinds[i]))
        })
        .collect();
    Query {
        agg,
        column: format!("c{c}"),
        preds,
        order: None,
        limit: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    MissingColumn,
    TypeMismatch,
    EmptyAggregate,
}

fn number_of(cell: &Cell) -> Option<f64> {
    match cell {
        Cell::Number(x) => Some(*x),
        _ => None,
    }
}

fn lower(cell: &Cell) -> String {
    match cell {
        Cell::Text(s) => s.trim().to_lowercase(),
        Cell::Number(x) => format!("{x}"),
        Cell::Null => String::new(),
    }
}

fn holds(op: Op, ord: Ordering) -> bool {
    match op {
        Op::Eq => ord.is_eq(),
        Op::Ne => ord.is_ne(),
        Op::Lt => ord.is_lt(),
        Op::Le => ord.is_le(),
        Op::Gt => ord.is_gt(),
        Op::Ge => ord.is_ge(),
    }
}

/// Plain rows and headers; unlike [`Table`] it may have no columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl From<&Table> for Grid {
    fn from(t: &Table) -> Self {
        Grid {
            columns: t.columns().to_vec(),
            rows: t.rows().to_vec(),
        }
    }
}

/// Literal reading of the query: scan rows in order, test each predicate
/// left to right, then project, sort, cut or aggregate. Assumes columns
/// generated by [`random_table`] (numbers never stored as text).
pub fn naive_eval(table: &Grid, q: &Query) -> Result<Vec<Cell>, Failure> {
    let idx = |name: &str| table.columns.iter().position(|c| c == name).ok_or(Failure::MissingColumn);
    let mut names: Vec<&str> = q.preds.iter().map(|p| p.0.as_str()).collect();
    if q.agg != Some(Agg::CountStar) {
        names.push(&q.column);
    }
    if let Some((c, _)) = &q.order {
        names.push(c);
    }
    for n in &names {
        idx(n)?;
    }

    let mut matching = Vec::new();
    'rows: for (r, row) in table.rows.iter().enumerate() {
        for (c, op, lit) in &q.preds {
            let cell = &row[idx(c)?];
            let pass = match (cell, lit) {
                (Cell::Null, _) => false,
                (Cell::Number(a), Lit::Num(b)) => holds(*op, a.partial_cmp(b).unwrap()),
                (Cell::Text(_), Lit::Num(_)) => match op {
                    Op::Eq => false,
                    Op::Ne => true,
                    _ => return Err(Failure::TypeMismatch),
                },
                (Cell::Text(a), Lit::Text(b)) => holds(*op, a.trim().to_lowercase().cmp(&b.to_lowercase())),
                (Cell::Number(_), Lit::Text(_)) => unreachable!("not generated"),
            };
            if !pass {
                continue 'rows;
            }
        }
        matching.push(r);
    }

    let cells = |c: usize| -> Vec<&Cell> { matching.iter().map(|&r| &table.rows[r][c]).collect() };
    match q.agg {
        Some(Agg::CountStar) => Ok(vec![Cell::Number(matching.len() as f64)]),
        Some(agg) => {
            let present: Vec<&Cell> = cells(idx(&q.column)?).into_iter().filter(|c| **c != Cell::Null).collect();
            if agg == Agg::Count {
                return Ok(vec![Cell::Number(present.len() as f64)]);
            }
            if present.is_empty() {
                return Err(Failure::EmptyAggregate);
            }
            let nums: Option<Vec<f64>> = present.iter().map(|c| number_of(c)).collect();
            match (agg, nums) {
                (Agg::Sum | Agg::Avg, None) => Err(Failure::TypeMismatch),
                (Agg::Sum, Some(v)) => Ok(vec![Cell::Number(v.iter().fold(0.0, |a, b| a + b))]),
                (Agg::Avg, Some(v)) => Ok(vec![Cell::Number(v.iter().fold(0.0, |a, b| a + b) / v.len() as f64)]),
                (_, Some(v)) => {
                    let mut best = v[0];
                    for &x in &v {
                        if (agg == Agg::Min && x < best) || (agg == Agg::Max && x > best) {
                            best = x;
                        }
                    }
                    Ok(vec![Cell::Number(best)])
                }
                (_, None) => {
                    let mut best = present[0];
                    for &c in &present {
                        let ord = lower(c).cmp(&lower(best));
                        if (agg == Agg::Min && ord.is_lt()) || (agg == Agg::Max && ord.is_gt()) {
                            best = c;
                        }
                    }
                    Ok(vec![best.clone()])
                }
            }
        }
        None => {
            let mut rows = matching.clone();
            if let Some((c, desc)) = &q.order {
                let c = idx(c)?;
                // insertion sort: equal keys keep table order
                let key_cmp = |a: usize, b: usize| -> Ordering {
                    let (x, y) = (&table.rows[a][c], &table.rows[b][c]);
                    match (x, y) {
                        (Cell::Null, Cell::Null) => Ordering::Equal,
                        (Cell::Null, _) => Ordering::Greater,
                        (_, Cell::Null) => Ordering::Less,
                        (Cell::Number(p), Cell::Number(q)) => {
                            let o = p.partial_cmp(q).unwrap();
                            if *desc { o.reverse() } else { o }
                        }
                        _ => {
                            let o = lower(x).cmp(&lower(y));
                            if *desc { o.reverse() } else { o }
                        }
                    }
                };
                for i in 1..rows.len() {
                    let mut j = i;
                    while j > 0 && key_cmp(rows[j - 1], rows[j]).is_gt() {
                        rows.swap(j - 1, j);
                        j -= 1;
                    }
                }
            }
            let c = idx(&q.column)?;
            let mut out: Vec<Cell> = rows.iter().map(|&r| table.rows[r][c].clone()).collect();
            if let Some(n) = q.limit {
                out.truncate(n as usize);
            }
            Ok(out)
        }
    }
}

/// Keep only `cols` (in order) and `rows` of `table`.
pub fn sub_grid(table: &Table, cols: &BTreeSet<usize>, rows: &BTreeSet<usize>) -> Grid {
    Grid {
        columns: cols.iter().map(|&c| table.columns()[c].clone()).collect(),
        rows: rows
            .iter()
            .map(|&r| cols.iter().map(|&c| table.rows()[r][c].clone()).collect())
            .collect(),
    }
}

/// Every subset of `0..n` of minimum size for which `ok` holds.
pub fn minimum_subsets(n: usize, ok: impl Fn(&BTreeSet<usize>) -> bool) -> Vec<BTreeSet<usize>> {
    let mut best: Vec<BTreeSet<usize>> = Vec::new();
    let mut best_size = usize::MAX;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size > best_size {
            continue;
        }
        let set: BTreeSet<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if ok(&set) {
            if size < best_size {
                best.clear();
                best_size = size;
            }
            best.push(set);
        }
    }
    best
}
