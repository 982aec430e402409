use std::collections::BTreeSet;

use super::{ChatMessage, LlmClient, LlmError, Transport};
use crate::table::{build_column_prompt, build_row_prompt, split_quoted, Reduction, Table};

/// Parsed selection plus the items that matched nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selection {
    pub items: BTreeSet<usize>,
    pub unknown: Vec<String>,
}

/// Text before the first `@` end marker.
fn before_stop(text: &str) -> &str {
    text.split('@').next().unwrap_or("")
}

/// Parse a comma-separated header list such as `"year, city @"`. Headers
/// match exactly, then case-insensitively.
pub fn parse_column_selection(text: &str, headers: &[String]) -> Selection {
    let mut out = Selection::default();
    for item in split_quoted(before_stop(text), ',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let hit = headers
            .iter()
            .position(|h| h == item)
            .or_else(|| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(item)));
        match hit {
            Some(i) => {
                out.items.insert(i);
            }
            None => out.unknown.push(item.to_string()),
        }
    }
    out
}

/// Parse a comma-separated row list; items may be `Row3`, `row 3` or `3`.
pub fn parse_row_selection(text: &str, num_rows: usize) -> Selection {
    let mut out = Selection::default();
    for item in before_stop(text).split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let digits = item
            .strip_prefix("Row")
            .or_else(|| item.strip_prefix("row"))
            .unwrap_or(item)
            .trim()
            .trim_end_matches(':');
        match digits.parse::<usize>() {
            Ok(r) if r < num_rows => {
                out.items.insert(r);
            }
            _ => out.unknown.push(item.to_string()),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaselineReduction {
    pub reduction: Reduction,
    pub column_warnings: Vec<String>,
    pub row_warnings: Vec<String>,
}

impl BaselineReduction {
    pub fn warning_count(&self) -> usize {
        self.column_warnings.len() + self.row_warnings.len()
    }
}

/// Prompted two-stage reduction: ask for columns, then for rows over the
/// chosen columns. No rows are requested when no column was chosen.
pub fn llm_reduce_baseline<T: Transport>(
    client: &LlmClient<T>,
    question: &str,
    table: &Table,
) -> Result<BaselineReduction, LlmError> {
    let reply = client.complete(&[ChatMessage::user(build_column_prompt(question, table))])?;
    let cols = parse_column_selection(&reply, table.columns());
    let mut out = BaselineReduction {
        column_warnings: cols.unknown,
        ..Default::default()
    };
    if cols.items.is_empty() {
        return Ok(out);
    }
    let prompt = build_row_prompt(question, table, &cols.items).expect("non-empty in-bounds columns");
    let reply = client.complete(&[ChatMessage::user(prompt)])?;
    let rows = parse_row_selection(&reply, table.num_rows());
    out.reduction = Reduction {
        columns: cols.items,
        rows: rows.items,
    };
    out.row_warnings = rows.unknown;
    Ok(out)
}
