use serde::{Deserialize, Serialize};

use crate::sql::{answers_match, run, values_to_answers};
use crate::table::{parse_linearized_rows, Cell, Table};

pub const UNKNOWN_ANSWER: &str = "unknown";

/// Offline reader that sees only the first `budget` prompt tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockLlmConfig {
    pub budget: usize,
}

impl MockLlmConfig {
    pub fn new(budget: usize) -> Option<Self> {
        (budget > 0).then_some(MockLlmConfig { budget })
    }
}

/// Prefix of `prompt` holding its first `budget` whitespace tokens.
pub fn truncate_prompt(prompt: &str, budget: usize) -> &str {
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in prompt.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                if seen == budget {
                    return &prompt[..i];
                }
            }
        } else if !in_token {
            in_token = true;
            seen += 1;
            if seen > budget {
                return &prompt[..i];
            }
        }
    }
    prompt
}

/// Rebuild a table from the complete `Row{i}: (h,v)` entries in `text`.
/// Columns appear in first-seen order; missing cells are null.
fn reconstruct(text: &str) -> Option<Table> {
    let rows: Vec<_> = parse_linearized_rows(text).into_iter().filter(|r| r.complete).collect();
    let mut headers: Vec<String> = Vec::new();
    for r in &rows {
        for (h, _) in &r.pairs {
            if !headers.contains(h) {
                headers.push(h.clone());
            }
        }
    }
    let cells = rows
        .iter()
        .map(|r| {
            headers
                .iter()
                .map(|h| {
                    r.pairs
                        .iter()
                        .find(|(k, _)| k == h)
                        .map(|(_, v)| v.clone())
                        .unwrap_or(Cell::Null)
                })
                .collect()
        })
        .collect();
    Table::new(headers, cells).ok()
}

/// Answer by running the gold SQL over whatever table survives in the
/// truncated prompt. Returns the answer when it matches gold, otherwise
/// [`UNKNOWN_ANSWER`].
pub fn mock_complete(
    _question: &str,
    prompt: &str,
    cfg: &MockLlmConfig,
    gold_sql: &str,
    gold_answers: &[String],
) -> String {
    let Some(table) = reconstruct(truncate_prompt(prompt, cfg.budget)) else {
        return UNKNOWN_ANSWER.to_string();
    };
    match run(gold_sql, &table) {
        Ok(values) if answers_match(&values, gold_answers) => values_to_answers(&values).join(" | "),
        _ => UNKNOWN_ANSWER.to_string(),
    }
}
