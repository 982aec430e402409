//! Generate an annotated synthetic corpus and split it by table.

use tabreduce::data::{generate_synthetic, split_by_table, SplitRatios, SynthConfig};
use tabreduce::metrics::dataset_stats;

fn main() {
    let records = generate_synthetic(&SynthConfig {
        instances: 600,
        seed: 42,
        ..Default::default()
    })
    .expect("valid config");
    let first = &records[0];
    println!("{}: {}", first.id, first.question);
    println!("  sql:     {}", first.sql.as_deref().unwrap_or("-"));
    println!("  answers: {:?}", first.answers);
    println!("  columns: {:?}  rows: {:?}", first.relevant_columns, first.relevant_rows);

    let split = split_by_table(records, SplitRatios::default(), 42).expect("split");
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        let instances: Vec<_> = part.iter().map(|r| r.instance()).collect();
        let stats = dataset_stats(&instances);
        println!("{name:>5}: {} instances, longest context {} tokens", part.len(), stats.max_tokens);
    }
}
