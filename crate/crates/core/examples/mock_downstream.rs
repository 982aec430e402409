//! Offline reader with a token budget: full tables lose answers once they
//! outgrow the budget, annotated reductions keep them.

use tabreduce::data::{generate_synthetic, SynthConfig};
use tabreduce::llm::{mock_complete, qa_prompt, MockLlmConfig};
use tabreduce::metrics::answer_correct;
use tabreduce::table::{linearize_selected, linearize_table};

fn main() {
    let records = generate_synthetic(&SynthConfig {
        instances: 300,
        seed: 5,
        ..Default::default()
    })
    .expect("valid config");
    let mock = MockLlmConfig::new(150).expect("positive budget");
    let (mut full_ok, mut reduced_ok, mut n) = (0, 0, 0);
    for r in &records {
        let (Some(sql), Some(cols), Some(rows)) = (&r.sql, &r.relevant_columns, &r.relevant_rows) else {
            continue;
        };
        let inst = r.instance();
        let rows: Vec<usize> = rows.iter().copied().collect();
        let contexts = [
            linearize_table(&inst.table).text,
            linearize_selected(&inst.table, cols, &rows).expect("in bounds").text,
        ];
        let [full, reduced] = contexts.map(|ctx| {
            let reply = mock_complete(&inst.question, &qa_prompt(&inst.question, &ctx), &mock, sql, &inst.answers);
            answer_correct(&reply, &inst.answers)
        });
        full_ok += usize::from(full);
        reduced_ok += usize::from(reduced);
        n += 1;
    }
    println!("budget {} tokens over {n} questions", mock.budget);
    println!("  full table: {:.1}% correct", 100.0 * full_ok as f64 / n as f64);
    println!("  reduced:    {:.1}% correct", 100.0 * reduced_ok as f64 / n as f64);
}
