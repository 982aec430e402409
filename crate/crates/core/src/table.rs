//! Table data model, row linearization, prompt templates and token budgeting.
//!
//! Rows are rendered as `Row0: (year,2008), (city,Beijing) Row1: ...`. Headers
//! and values containing `,`, `(`, `)` or `"` are wrapped in double quotes with
//! embedded quotes doubled, so the format can be parsed back losslessly (see
//! [`parse_linearized_rows`]).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("{axis} index {index} out of bounds (len {len})")]
    IndexOutOfBounds {
        axis: &'static str,
        index: usize,
        len: usize,
    },
    #[error("empty column selection")]
    EmptySelection,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate header {0:?}")]
    DuplicateHeader(String),
    #[error("table has no columns")]
    NoColumns,
    #[error("question is empty")]
    EmptyQuestion,
}

/// A single table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    #[serde(serialize_with = "serialize_number")]
    Number(f64),
    Text(String),
}

fn serialize_number<S: serde::Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if let Some(i) = as_exact_integer(*value) {
        s.serialize_i64(i)
    } else {
        s.serialize_f64(*value)
    }
}

pub(crate) fn as_exact_integer(value: f64) -> Option<i64> {
    if value.fract() == 0.0 && value.abs() < 9.0e15 {
        Some(value as i64)
    } else {
        None
    }
}

/// Canonical text form of a number: integers without a fractional part,
/// everything else in shortest round-trip form.
pub fn format_number(value: f64) -> String {
    match as_exact_integer(value) {
        Some(i) => i.to_string(),
        None => value.to_string(),
    }
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("null"),
            Cell::Number(n) => f.write_str(&format_number(*n)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<f64> for Cell {
    fn from(n: f64) -> Self {
        Cell::Number(n)
    }
}

impl From<i64> for Cell {
    fn from(n: i64) -> Self {
        Cell::Number(n as f64)
    }
}

/// Rectangular grid of cells with unique headers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            columns: Vec<String>,
            rows: Vec<Vec<Cell>>,
        }
        let raw = Raw::deserialize(d)?;
        Table::new(raw.columns, raw.rows).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn normalize_header(h: &str) -> String {
    h.trim().to_lowercase()
}

impl Table {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, TableError> {
        if columns.is_empty() {
            return Err(TableError::NoColumns);
        }
        let mut seen = BTreeSet::new();
        for h in &columns {
            if !seen.insert(normalize_header(h)) {
                return Err(TableError::DuplicateHeader(h.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::RaggedRow {
                    row: i,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
        }
        Ok(Table { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cells(&self) -> usize {
        self.columns.len() * self.rows.len()
    }

    /// Case-insensitive, whitespace-trimmed header lookup.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let key = normalize_header(name);
        self.columns.iter().position(|h| normalize_header(h) == key)
    }

    pub fn all_columns(&self) -> BTreeSet<usize> {
        (0..self.columns.len()).collect()
    }

    /// Row prefix of length `n` (clamped).
    pub fn head(&self, n: usize) -> Table {
        Table {
            columns: self.columns.clone(),
            rows: self.rows[..n.min(self.rows.len())].to_vec(),
        }
    }
}

/// Question/table pair with optional gold SQL and answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub question: String,
    pub table: Table,
    pub sql: Option<String>,
    pub answers: Vec<String>,
}

impl Instance {
    pub fn validate(&self) -> Result<(), TableError> {
        if self.question.trim().is_empty() {
            return Err(TableError::EmptyQuestion);
        }
        Ok(())
    }
}

/// Selected column and row indices of a table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reduction {
    pub columns: BTreeSet<usize>,
    pub rows: BTreeSet<usize>,
}

impl Reduction {
    pub fn new(
        columns: impl IntoIterator<Item = usize>,
        rows: impl IntoIterator<Item = usize>,
    ) -> Self {
        Reduction {
            columns: columns.into_iter().collect(),
            rows: rows.into_iter().collect(),
        }
    }

    pub fn full(table: &Table) -> Self {
        Reduction::new(0..table.num_columns(), 0..table.num_rows())
    }

    pub fn check_bounds(&self, table: &Table) -> Result<(), TableError> {
        if let Some(&c) = self.columns.iter().find(|&&c| c >= table.num_columns()) {
            return Err(TableError::IndexOutOfBounds {
                axis: "column",
                index: c,
                len: table.num_columns(),
            });
        }
        if let Some(&r) = self.rows.iter().find(|&&r| r >= table.num_rows()) {
            return Err(TableError::IndexOutOfBounds {
                axis: "row",
                index: r,
                len: table.num_rows(),
            });
        }
        Ok(())
    }
}

/// Keep the selected columns and rows in their original relative order.
///
/// An empty column selection is not an error: the result has zero columns
/// and one empty cell list per selected row.
pub fn project(table: &Table, reduction: &Reduction) -> Result<Table, TableError> {
    reduction.check_bounds(table)?;
    let columns = reduction
        .columns
        .iter()
        .map(|&c| table.columns[c].clone())
        .collect();
    let rows = reduction
        .rows
        .iter()
        .map(|&r| {
            reduction
                .columns
                .iter()
                .map(|&c| table.rows[r][c].clone())
                .collect()
        })
        .collect();
    Ok(Table { columns, rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedContext {
    pub text: String,
    pub token_count: usize,
    pub truncated: bool,
}

/// Whitespace-delimited word count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

fn needs_quotes(s: &str) -> bool {
    s.contains([',', '(', ')', '"'])
}

/// Quote a header or text value for the row format.
pub fn quote_field(s: &str) -> String {
    if needs_quotes(s) || s.is_empty() || s.eq_ignore_ascii_case("null") {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_cell(cell: &Cell) -> String {
    match cell {
        Cell::Null => "null".to_string(),
        Cell::Number(n) => format_number(*n),
        Cell::Text(s) => quote_field(s),
    }
}

/// One row as `Row{label}: (h,v), (h,v)`.
pub fn linearize_row(table: &Table, row: usize, columns: &[usize], label: usize) -> String {
    let pairs: Vec<String> = columns
        .iter()
        .map(|&c| {
            format!(
                "({},{})",
                quote_field(&table.columns[c]),
                render_cell(&table.rows[row][c])
            )
        })
        .collect();
    format!("Row{}: {}", label, pairs.join(", "))
}

fn check_columns(table: &Table, columns: &BTreeSet<usize>) -> Result<Vec<usize>, TableError> {
    if columns.is_empty() {
        return Err(TableError::EmptySelection);
    }
    if let Some(&c) = columns.iter().find(|&&c| c >= table.num_columns()) {
        return Err(TableError::IndexOutOfBounds {
            axis: "column",
            index: c,
            len: table.num_columns(),
        });
    }
    Ok(columns.iter().copied().collect())
}

/// Linearize every row of `table` restricted to `column_subset`.
pub fn linearize_rows(
    table: &Table,
    column_subset: &BTreeSet<usize>,
) -> Result<LinearizedContext, TableError> {
    let rows: Vec<usize> = (0..table.num_rows()).collect();
    linearize_selected(table, column_subset, &rows)
}

/// Linearize the given rows (labelled with their original indices).
pub fn linearize_selected(
    table: &Table,
    column_subset: &BTreeSet<usize>,
    rows: &[usize],
) -> Result<LinearizedContext, TableError> {
    let cols = check_columns(table, column_subset)?;
    if let Some(&r) = rows.iter().find(|&&r| r >= table.num_rows()) {
        return Err(TableError::IndexOutOfBounds {
            axis: "row",
            index: r,
            len: table.num_rows(),
        });
    }
    let text = rows
        .iter()
        .map(|&r| linearize_row(table, r, &cols, r))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(LinearizedContext {
        token_count: count_tokens(&text),
        text,
        truncated: false,
    })
}

/// Linearization of a whole table over all of its columns.
pub fn linearize_table(table: &Table) -> LinearizedContext {
    linearize_rows(table, &table.all_columns()).expect("tables have at least one column")
}

/// Drop trailing rows until the full-table linearization fits `budget_tokens`.
pub fn truncate_to_budget(table: &Table, budget_tokens: usize) -> (Table, bool) {
    let cols: Vec<usize> = (0..table.num_columns()).collect();
    let mut used = 0usize;
    let mut keep = 0usize;
    for r in 0..table.num_rows() {
        let cost = count_tokens(&linearize_row(table, r, &cols, r));
        if used + cost > budget_tokens {
            break;
        }
        used += cost;
        keep += 1;
    }
    (table.head(keep), keep < table.num_rows())
}

const COLUMN_PROMPT_PREFIX: &str =
    "Select relevant columns from a table to answer a question. Output '@' if done generating.";
const ROW_PROMPT_PREFIX: &str =
    "Select relevant rows from a table to answer a question. Output '@' if done generating.";

fn quote_header_for_list(h: &str) -> String {
    if needs_quotes(h) || h.trim() != h {
        format!("\"{}\"", h.replace('"', "\"\""))
    } else {
        h.to_string()
    }
}

/// Comma-joined header list; headers containing separators are double-quoted.
pub fn join_headers<S: AsRef<str>>(headers: &[S]) -> String {
    headers
        .iter()
        .map(|h| quote_header_for_list(h.as_ref()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Inverse of [`join_headers`]. Unquoted items are trimmed.
pub fn parse_header_list(text: &str) -> Vec<String> {
    split_quoted(text, ',')
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect()
}

/// Split on `sep` outside double quotes, unquoting quoted items.
pub(crate) fn split_quoted(text: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let mut item = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            while let Some(c) = chars.next() {
                if c == '"' {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        item.push('"');
                    } else {
                        break;
                    }
                } else {
                    item.push(c);
                }
            }
            // skip to separator
            for c in chars.by_ref() {
                if c == sep {
                    break;
                }
            }
            out.push(item);
            if chars.peek().is_none() {
                break;
            }
        } else {
            let mut hit_sep = false;
            for c in chars.by_ref() {
                if c == sep {
                    hit_sep = true;
                    break;
                }
                item.push(c);
            }
            out.push(item.trim().to_string());
            if !hit_sep {
                break;
            }
        }
    }
    out
}

pub fn build_column_prompt(question: &str, table: &Table) -> String {
    format!(
        "{COLUMN_PROMPT_PREFIX} Question: {question}, List of column headers: {}",
        join_headers(table.columns())
    )
}

pub fn build_row_prompt(
    question: &str,
    table: &Table,
    relevant_columns: &BTreeSet<usize>,
) -> Result<String, TableError> {
    let rows = linearize_rows(table, relevant_columns)?;
    Ok(format!("{ROW_PROMPT_PREFIX} Question: {question}, Rows: {}", rows.text))
}

/// A row recovered from linearized text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub label: usize,
    pub pairs: Vec<(String, Cell)>,
    /// False when the text ended inside this row.
    pub complete: bool,
}

/// Recover `Row{i}: (h,v), ...` entries from arbitrary text. Text outside
/// row entries is ignored. A trailing row cut off mid-pair is returned with
/// `complete = false`.
pub fn parse_linearized_rows(text: &str) -> Vec<ParsedRow> {
    let bytes = text.as_bytes();
    let mut rows = Vec::new();
    let mut i = 0;
    while let Some((label, after)) = find_row_marker(text, i) {
        let mut pos = after;
        let mut pairs = Vec::new();
        let mut complete = true;
        loop {
            while pos < bytes.len() && bytes[pos] == b' ' {
                pos += 1;
            }
            if pos >= bytes.len() || bytes[pos] != b'(' {
                // a separator followed by nothing means the row was cut
                if pos >= bytes.len() && !pairs.is_empty() && text[..pos].trim_end().ends_with(',') {
                    complete = false;
                }
                break;
            }
            match parse_pair(text, pos + 1) {
                Some((h, v, end)) => {
                    pairs.push((h, v));
                    pos = end;
                    if pos < bytes.len() && bytes[pos] == b',' {
                        pos += 1;
                        continue;
                    }
                    break;
                }
                None => {
                    complete = false;
                    pos = bytes.len();
                    break;
                }
            }
        }
        rows.push(ParsedRow {
            label,
            pairs,
            complete,
        });
        i = pos;
    }
    rows
}

fn find_row_marker(text: &str, from: usize) -> Option<(usize, usize)> {
    let mut start = from;
    while let Some(off) = text[start..].find("Row") {
        let at = start + off;
        let rest = &text[at + 3..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let boundary_ok = at == 0 || text[..at].ends_with(char::is_whitespace);
        if !digits.is_empty() && rest[digits.len()..].starts_with(':') && boundary_ok {
            let label = digits.parse().ok()?;
            return Some((label, at + 3 + digits.len() + 1));
        }
        start = at + 3;
    }
    None
}

/// Parse `h,v)` starting after the opening parenthesis.
fn parse_pair(text: &str, pos: usize) -> Option<(String, Cell, usize)> {
    let (header, quoted_h, pos) = parse_field(text, pos, ',')?;
    let _ = quoted_h;
    let (value, quoted_v, pos) = parse_field(text, pos, ')')?;
    let cell = if !quoted_v && value == "null" {
        Cell::Null
    } else {
        Cell::Text(value)
    };
    Some((header, cell, pos))
}

fn parse_field(text: &str, pos: usize, terminator: char) -> Option<(String, bool, usize)> {
    let rest = text.get(pos..)?;
    if let Some(inner) = rest.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = inner.char_indices().peekable();
        while let Some((idx, c)) = chars.next() {
            if c == '"' {
                if matches!(chars.peek(), Some((_, '"'))) {
                    chars.next();
                    out.push('"');
                } else {
                    let after = pos + 1 + idx + 1;
                    return text[after..]
                        .starts_with(terminator)
                        .then_some((out, true, after + 1));
                }
            } else {
                out.push(c);
            }
        }
        None
    } else {
        let end = rest.find(terminator)?;
        Some((rest[..end].to_string(), false, pos + end + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(cols: &[&str], rows: Vec<Vec<Cell>>) -> Table {
        Table::new(cols.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    fn olympics() -> Table {
        t(
            &["year", "city"],
            vec![
                vec![2008i64.into(), "Beijing".into()],
                vec![2012i64.into(), "London".into()],
            ],
        )
    }

    #[test]
    fn table_invariants() {
        assert_eq!(Table::new(vec![], vec![]), Err(TableError::NoColumns));
        assert!(matches!(
            Table::new(vec!["A".into(), " a ".into()], vec![]),
            Err(TableError::DuplicateHeader(_))
        ));
        assert!(matches!(
            Table::new(vec!["a".into()], vec![vec![]]),
            Err(TableError::RaggedRow { row: 0, .. })
        ));
    }

    #[test]
    fn project_cases() {
        let table = t(
            &["a", "b", "c"],
            (0..3)
                .map(|r| (0..3).map(|c| Cell::from((r * 3 + c) as i64)).collect())
                .collect(),
        );
        assert_eq!(project(&table, &Reduction::full(&table)).unwrap(), table);
        let p = project(&table, &Reduction::new([0, 2], [1])).unwrap();
        assert_eq!(p.columns(), &["a".to_string(), "c".to_string()]);
        assert_eq!(p.rows(), &[vec![Cell::from(3i64), Cell::from(5i64)]]);
        let empty = project(&table, &Reduction::new([], [0, 1])).unwrap();
        assert_eq!(empty.num_columns(), 0);
        assert_eq!(empty.num_rows(), 2);
        assert!(matches!(
            project(&table, &Reduction::new([3], [])),
            Err(TableError::IndexOutOfBounds { axis: "column", .. })
        ));
    }

    #[test]
    fn linearize_examples() {
        let table = olympics().head(1);
        let lin = linearize_rows(&table, &[0, 1].into()).unwrap();
        assert_eq!(lin.text, "Row0: (year,2008), (city,Beijing)");
        assert_eq!(lin.token_count, 3);

        let lin = linearize_rows(&olympics(), &[1].into()).unwrap();
        assert_eq!(lin.text, "Row0: (city,Beijing) Row1: (city,London)");

        let empty = olympics().head(0);
        let lin = linearize_rows(&empty, &[0].into()).unwrap();
        assert_eq!(lin.text, "");
        assert_eq!(lin.token_count, 0);

        assert_eq!(
            linearize_rows(&olympics(), &BTreeSet::new()),
            Err(TableError::EmptySelection)
        );
    }

    #[test]
    fn quoting_and_null() {
        let table = t(
            &["name, full", "v"],
            vec![vec!["a (b)".into(), Cell::Null], vec!["null".into(), "x\"y".into()]],
        );
        let lin = linearize_table(&table);
        assert_eq!(
            lin.text,
            "Row0: (\"name, full\",\"a (b)\"), (v,null) Row1: (\"name, full\",\"null\"), (v,\"x\"\"y\")"
        );
        let parsed = parse_linearized_rows(&lin.text);
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].pairs[0], ("name, full".into(), "a (b)".into()));
        assert_eq!(parsed[0].pairs[1], ("v".into(), Cell::Null));
        assert_eq!(parsed[1].pairs[0].1, Cell::text("null"));
        assert_eq!(parsed[1].pairs[1].1, Cell::text("x\"y"));
        assert!(parsed.iter().all(|r| r.complete));
    }

    #[test]
    fn parse_detects_cut_rows() {
        let text = "Q: x Row0: (a,1), (b,2) Row1: (a,3), (b,";
        let parsed = parse_linearized_rows(text);
        assert_eq!(parsed.len(), 2);
        assert!(parsed[0].complete);
        assert!(!parsed[1].complete);
        assert_eq!(parsed[1].pairs.len(), 1);
        let between = parse_linearized_rows("Row0: (a,1), (b,2) Row1: (a,3),");
        assert!(between[0].complete);
        assert!(!between[1].complete);
    }

    #[test]
    fn prompts() {
        let table = t(&["year", "winner"], vec![]);
        assert_eq!(
            build_column_prompt("who won?", &table),
            "Select relevant columns from a table to answer a question. Output '@' if done generating. Question: who won?, List of column headers: year, winner"
        );
        assert!(build_column_prompt("", &table).contains("Question: , List"));
        let tricky = t(&["a,b", "c"], vec![]);
        let prompt = build_column_prompt("q", &tricky);
        let list = prompt.split("List of column headers: ").nth(1).unwrap();
        assert_eq!(list, "\"a,b\", c");
        assert_eq!(parse_header_list(list), vec!["a,b".to_string(), "c".to_string()]);

        let row_prompt = build_row_prompt("q", &olympics(), &[1].into()).unwrap();
        assert!(row_prompt.ends_with("Rows: Row0: (city,Beijing) Row1: (city,London)"));
        assert!(row_prompt.starts_with("Select relevant rows"));
        assert_eq!(row_prompt, build_row_prompt("q", &olympics(), &[1].into()).unwrap());
        assert_eq!(
            build_row_prompt("q", &olympics(), &BTreeSet::new()),
            Err(TableError::EmptySelection)
        );
    }

    #[test]
    fn token_counts() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("a b  c"), 3);
        // "Row0:" "(year,2008)," "(city,Beijing)" "Row1:" "(year,2012)," "(city,London)"
        assert_eq!(linearize_table(&olympics()).token_count, 6);
    }

    #[test]
    fn truncation() {
        let (same, cut) = truncate_to_budget(&olympics(), 100);
        assert_eq!(same, olympics());
        assert!(!cut);

        let (zero, cut) = truncate_to_budget(&olympics().head(1), 0);
        assert_eq!(zero.num_rows(), 0);
        assert!(cut);

        // 10 rows of 3 tokens each; budget 12 keeps 4 rows.
        let table = t(
            &["a", "b"],
            (0..10).map(|i| vec![Cell::from(i as i64), "x".into()]).collect(),
        );
        let (kept, cut) = truncate_to_budget(&table, 12);
        assert!(cut);
        assert_eq!(kept, table.head(4));
        let (kept, _) = truncate_to_budget(&table, 14);
        assert_eq!(kept.num_rows(), 4);
    }

    #[test]
    fn cell_json() {
        let cells: Vec<Cell> = serde_json::from_str(r#"[null, 2008, 2.5, "2,008"]"#).unwrap();
        assert_eq!(
            cells,
            vec![Cell::Null, Cell::Number(2008.0), Cell::Number(2.5), Cell::text("2,008")]
        );
        assert_eq!(serde_json::to_string(&cells).unwrap(), r#"[null,2008,2.5,"2,008"]"#);
    }
}
