//! Derive the relevant columns and rows of one question from its gold SQL.

use tabreduce::annotate::{annotate_instance, Target};
use tabreduce::table::{linearize_selected, linearize_table, Cell, Instance, Table};

fn main() {
    let table = Table::new(
        vec!["rank".into(), "nation".into(), "gold".into(), "silver".into(), "bronze".into()],
        vec![
            vec![Cell::Number(1.0), Cell::text("China"), Cell::Number(48.0), Cell::Number(22.0), Cell::Number(30.0)],
            vec![Cell::Number(2.0), Cell::text("USA"), Cell::Number(36.0), Cell::Number(39.0), Cell::Number(37.0)],
            vec![Cell::Number(3.0), Cell::text("Russia"), Cell::Number(24.0), Cell::Number(13.0), Cell::Number(23.0)],
            vec![Cell::Number(4.0), Cell::text("UK"), Cell::Number(19.0), Cell::Number(13.0), Cell::Number(15.0)],
        ],
    )
    .expect("valid table");
    let instance = Instance {
        id: "medals-1".into(),
        question: "how many silver medals did the usa win?".into(),
        table,
        sql: Some("select silver from t where nation = 'USA'".into()),
        answers: vec!["39".into()],
    };

    let ann = annotate_instance(&instance, Target::Both);
    println!("status:  {:?}", ann.status);
    println!("columns: {:?}", ann.relevant_columns);
    println!("rows:    {:?}", ann.relevant_rows);

    let full = linearize_table(&instance.table);
    let rows: Vec<usize> = ann.relevant_rows.iter().flatten().copied().collect();
    let reduced = linearize_selected(&instance.table, &ann.relevant_columns, &rows).expect("in bounds");
    println!("\nfull ({} tokens):\n{}", full.token_count, full.text);
    println!("\nreduced ({} tokens):\n{}", reduced.token_count, reduced.text);
}
