//! A small SQL engine for single-table SELECT queries.
//!
//! Supported grammar:
//!
//! ```text
//! SELECT <column> | <agg>(<column>) | COUNT(*)
//!   [FROM <table>]
//!   [WHERE <column> <op> <literal> [AND ...]]
//!   [ORDER BY <column> [ASC|DESC]]
//!   [LIMIT <n>] [;]
//! ```
//!
//! `<agg>` is one of `count`, `sum`, `avg`, `min`, `max`; `<op>` is one of
//! `=`, `!=` (`<>`), `<`, `<=`, `>`, `>=`. Identifiers may be quoted with
//! double quotes or backticks. The FROM clause is ignored: the table is
//! supplied at execution time. Anything else (joins, grouping, `OR`,
//! subqueries, arithmetic) is rejected as [`ParseError::Unsupported`].
//!
//! Comparison semantics: predicates on null cells are false; text cells that
//! look like numbers (`"2,008"`) compare numerically against numeric
//! literals; string comparison is case-insensitive on trimmed text.

mod exec;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::table::Cell as Value;
pub use exec::{execute, run};
pub use parser::parse_sql;

/// Byte range into the query text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {}..{}: {message}", span.start, span.end)]
    Syntax { message: String, span: Span },
    #[error("unsupported query feature {token:?} at {}..{}", span.start, span.end)]
    Unsupported { token: String, span: Span },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecutionError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("type mismatch on column {column:?}: {detail}")]
    TypeMismatch { column: String, detail: String },
    #[error("{0} over an empty set")]
    EmptyAggregate(AggFunc),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SqlError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Execution(#[from] ExecutionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "count" => AggFunc::Count,
            "sum" => AggFunc::Sum,
            "avg" => AggFunc::Avg,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

impl fmt::Display for AggFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "=" => CmpOp::Eq,
            "!=" | "<>" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Column(String),
    /// `column: None` is `COUNT(*)`.
    Aggregate {
        func: AggFunc,
        column: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: String,
    pub op: CmpOp,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderBy {
    pub column: String,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqlAst {
    pub projection: Projection,
    /// Conjunction.
    pub predicates: Vec<Predicate>,
    pub order_by: Option<OrderBy>,
    pub limit: Option<u64>,
}

impl SqlAst {
    /// Every column name the query mentions, in order of appearance.
    pub fn referenced_columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        match &self.projection {
            Projection::Column(c) => out.push(c.as_str()),
            Projection::Aggregate {
                column: Some(c), ..
            } => out.push(c.as_str()),
            Projection::Aggregate { column: None, .. } => {}
        }
        out.extend(self.predicates.iter().map(|p| p.column.as_str()));
        if let Some(o) = &self.order_by {
            out.push(o.column.as_str());
        }
        out
    }
}

fn write_ident(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    let bare = !name.is_empty()
        && name.chars().all(|c| c.is_alphanumeric() || c == '_')
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && is_bare_identifier(name);
    if bare {
        f.write_str(name)
    } else {
        write!(f, "`{}`", name.replace('`', "``"))
    }
}

fn is_bare_identifier(name: &str) -> bool {
    // keywords need quoting
    let probe = format!("select {name}");
    parse_sql(&probe).is_ok()
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => f.write_str(&crate::table::format_number(*n)),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

impl fmt::Display for SqlAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("select ")?;
        match &self.projection {
            Projection::Column(c) => write_ident(f, c)?,
            Projection::Aggregate { func, column } => {
                write!(f, "{func}(")?;
                match column {
                    Some(c) => write_ident(f, c)?,
                    None => f.write_str("*")?,
                }
                f.write_str(")")?;
            }
        }
        f.write_str(" from w")?;
        for (i, p) in self.predicates.iter().enumerate() {
            f.write_str(if i == 0 { " where " } else { " and " })?;
            write_ident(f, &p.column)?;
            write!(f, " {} {}", p.op.symbol(), p.value)?;
        }
        if let Some(o) = &self.order_by {
            f.write_str(" order by ")?;
            write_ident(f, &o.column)?;
            f.write_str(if o.descending { " desc" } else { " asc" })?;
        }
        if let Some(n) = self.limit {
            write!(f, " limit {n}")?;
        }
        Ok(())
    }
}

/// Parse text as a number, accepting thousands separators (`"2,008"`).
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    if t.is_empty()
        || !t
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, ',' | '.' | '-' | '+'))
        || !t.chars().any(|c| c.is_ascii_digit())
    {
        return None;
    }
    t.replace(',', "").parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Numeric view of a value, if it has one.
pub fn numeric_value(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => Some(*n),
        Value::Text(s) => parse_number(s),
        Value::Null => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Normalized {
    Num(f64),
    Str(String),
}

fn normalize_text(s: &str) -> Normalized {
    match parse_number(s) {
        Some(n) => Normalized::Num(n),
        None => Normalized::Str(s.trim().to_lowercase()),
    }
}

fn normalize_value(v: &Value) -> Normalized {
    match v {
        Value::Null => Normalized::Str(String::new()),
        Value::Number(n) => Normalized::Num(*n),
        Value::Text(s) => normalize_text(s),
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-6 * a.abs().max(b.abs())
}

fn multiset_equal(mut a: Vec<Normalized>, mut b: Vec<Normalized>) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let key = |n: &Normalized| match n {
        Normalized::Num(x) => (0u8, *x, String::new()),
        Normalized::Str(s) => (1u8, 0.0, s.clone()),
    };
    let cmp = |x: &Normalized, y: &Normalized| {
        let (kx, vx, sx) = key(x);
        let (ky, vy, sy) = key(y);
        kx.cmp(&ky)
            .then(vx.total_cmp(&vy))
            .then_with(|| sx.cmp(&sy))
    };
    a.sort_by(cmp);
    b.sort_by(cmp);
    a.iter().zip(&b).all(|(x, y)| match (x, y) {
        (Normalized::Num(p), Normalized::Num(q)) => close(*p, *q),
        (Normalized::Str(p), Normalized::Str(q)) => p == q,
        _ => false,
    })
}

/// Multiset equality after trimming, lowercasing and numeric normalization
/// (relative tolerance 1e-6).
pub fn answers_match(result: &[Value], gold: &[String]) -> bool {
    multiset_equal(
        result.iter().map(normalize_value).collect(),
        gold.iter().map(|g| normalize_text(g)).collect(),
    )
}

/// [`answers_match`] for free-text predictions.
pub fn text_answers_match(predicted: &[String], gold: &[String]) -> bool {
    multiset_equal(
        predicted.iter().map(|p| normalize_text(p)).collect(),
        gold.iter().map(|g| normalize_text(g)).collect(),
    )
}

/// Render execution results as answer strings.
pub fn values_to_answers(values: &[Value]) -> Vec<String> {
    values
        .iter()
        .map(|v| match v {
            Value::Null => String::new(),
            other => other.to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_match_examples() {
        assert!(answers_match(&[Value::text("Beijing")], &["beijing".into()]));
        assert!(answers_match(&[Value::Number(2.0)], &["2.0".into()]));
        assert!(!answers_match(&[Value::text("Beijing")], &["London".into()]));
        assert!(answers_match(&[Value::text("2,008")], &["2008".into()]));
        assert!(answers_match(
            &[Value::text("a"), Value::text("b")],
            &["B".into(), " a ".into()]
        ));
        assert!(!answers_match(
            &[Value::text("a"), Value::text("a")],
            &["a".into()]
        ));
        assert!(answers_match(&[Value::Number(1.0 + 1e-9)], &["1".into()]));
        assert!(!answers_match(&[Value::Number(1.001)], &["1".into()]));
        assert!(answers_match(&[], &[]));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_number("2,008"), Some(2008.0));
        assert_eq!(parse_number(" -3.5 "), Some(-3.5));
        assert_eq!(parse_number("inf"), None);
        assert_eq!(parse_number("12a"), None);
        assert_eq!(parse_number("-"), None);
    }
}
