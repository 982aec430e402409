use std::cmp::Ordering;

use super::{
    numeric_value, parse_number, parse_sql, AggFunc, CmpOp, ExecutionError, Literal, Projection,
    SqlAst, SqlError, Value,
};
use crate::table::{format_number, Table};

fn resolve(table: &Table, name: &str) -> Result<usize, ExecutionError> {
    table
        .column_index(name)
        .ok_or_else(|| ExecutionError::MissingColumn(name.to_string()))
}

fn text_key(v: &Value) -> String {
    match v {
        Value::Text(s) => s.trim().to_lowercase(),
        Value::Number(n) => format_number(*n),
        Value::Null => String::new(),
    }
}

fn apply(op: CmpOp, ord: Ordering) -> bool {
    match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

fn compare(cell: &Value, op: CmpOp, lit: &Literal, column: &str) -> Result<bool, ExecutionError> {
    if cell.is_null() {
        return Ok(false);
    }
    let lit_num = match lit {
        Literal::Number(n) => Some(*n),
        Literal::Text(s) => parse_number(s),
    };
    match (numeric_value(cell), lit_num) {
        (Some(a), Some(b)) => Ok(apply(op, a.total_cmp(&b))),
        (None, Some(_)) if matches!(lit, Literal::Number(_)) => match op {
            CmpOp::Eq => Ok(false),
            CmpOp::Ne => Ok(true),
            _ => Err(ExecutionError::TypeMismatch {
                column: column.to_string(),
                detail: format!("cannot order text {cell} against a number"),
            }),
        },
        _ => {
            let rhs = match lit {
                Literal::Text(s) => s.trim().to_lowercase(),
                Literal::Number(n) => format_number(*n),
            };
            Ok(apply(op, text_key(cell).cmp(&rhs)))
        }
    }
}

fn aggregate(
    func: AggFunc,
    column: Option<(usize, &str)>,
    table: &Table,
    rows: &[usize],
) -> Result<Value, ExecutionError> {
    let Some((c, name)) = column else {
        // COUNT(*)
        return Ok(Value::Number(rows.len() as f64));
    };
    let cells: Vec<&Value> = rows
        .iter()
        .map(|&r| &table.rows()[r][c])
        .filter(|v| !v.is_null())
        .collect();
    if func == AggFunc::Count {
        return Ok(Value::Number(cells.len() as f64));
    }
    if cells.is_empty() {
        return Err(ExecutionError::EmptyAggregate(func));
    }
    let nums: Option<Vec<f64>> = cells.iter().map(|v| numeric_value(v)).collect();
    match (func, nums) {
        (AggFunc::Sum, Some(ns)) => Ok(Value::Number(ns.iter().sum())),
        (AggFunc::Avg, Some(ns)) => Ok(Value::Number(ns.iter().sum::<f64>() / ns.len() as f64)),
        (AggFunc::Sum | AggFunc::Avg, None) => Err(ExecutionError::TypeMismatch {
            column: name.to_string(),
            detail: format!("{func} over non-numeric cells"),
        }),
        (AggFunc::Min | AggFunc::Max, Some(ns)) => {
            let mut best = ns[0];
            for &n in &ns[1..] {
                let better = if func == AggFunc::Min { n < best } else { n > best };
                if better {
                    best = n;
                }
            }
            Ok(Value::Number(best))
        }
        (AggFunc::Min | AggFunc::Max, None) => {
            let mut best = cells[0];
            for &v in &cells[1..] {
                let ord = text_key(v).cmp(&text_key(best));
                let better = if func == AggFunc::Min {
                    ord == Ordering::Less
                } else {
                    ord == Ordering::Greater
                };
                if better {
                    best = v;
                }
            }
            Ok(best.clone())
        }
        (AggFunc::Count, _) => unreachable!(),
    }
}

/// Execute a parsed query against `table`.
///
/// Rows are filtered by the predicates, then either aggregated or
/// ordered, limited and projected.
pub fn execute(ast: &SqlAst, table: &Table) -> Result<Vec<Value>, ExecutionError> {
    let preds = ast
        .predicates
        .iter()
        .map(|p| Ok((resolve(table, &p.column)?, p)))
        .collect::<Result<Vec<_>, ExecutionError>>()?;
    let projected = match &ast.projection {
        Projection::Column(c) => Some((resolve(table, c)?, c.as_str())),
        Projection::Aggregate {
            column: Some(c), ..
        } => Some((resolve(table, c)?, c.as_str())),
        Projection::Aggregate { column: None, .. } => None,
    };
    let order = match &ast.order_by {
        Some(o) => Some((resolve(table, &o.column)?, o.descending)),
        None => None,
    };

    let mut rows = Vec::new();
    for (r, row) in table.rows().iter().enumerate() {
        let mut keep = true;
        for (c, p) in &preds {
            if !compare(&row[*c], p.op, &p.value, &p.column)? {
                keep = false;
                break;
            }
        }
        if keep {
            rows.push(r);
        }
    }

    let mut out = match &ast.projection {
        Projection::Aggregate { func, .. } => vec![aggregate(*func, projected, table, &rows)?],
        Projection::Column(_) => {
            if let Some((c, descending)) = order {
                sort_rows(table, c, descending, &mut rows);
            }
            let (c, _) = projected.expect("column projection");
            rows.iter().map(|&r| table.rows()[r][c].clone()).collect()
        }
    };
    if let Some(n) = ast.limit {
        out.truncate(n as usize);
    }
    Ok(out)
}

/// Stable sort; nulls last in both directions. Numeric order when every
/// non-null cell is numeric, case-insensitive text order otherwise.
fn sort_rows(table: &Table, c: usize, descending: bool, rows: &mut [usize]) {
    let cell = |r: usize| &table.rows()[r][c];
    let numeric = rows
        .iter()
        .filter(|&&r| !cell(r).is_null())
        .all(|&r| numeric_value(cell(r)).is_some());
    rows.sort_by(|&a, &b| {
        let (va, vb) = (cell(a), cell(b));
        match (va.is_null(), vb.is_null()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Greater,
            (false, true) => return Ordering::Less,
            _ => {}
        }
        let ord = if numeric {
            numeric_value(va)
                .unwrap()
                .total_cmp(&numeric_value(vb).unwrap())
        } else {
            text_key(va).cmp(&text_key(vb))
        };
        if descending {
            ord.reverse()
        } else {
            ord
        }
    });
}

/// Parse and execute in one step.
pub fn run(sql: &str, table: &Table) -> Result<Vec<Value>, SqlError> {
    let ast = parse_sql(sql)?;
    Ok(execute(&ast, table)?)
}
