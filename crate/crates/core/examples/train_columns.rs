//! Supervised training of a column-selection policy, then prediction.

use tabreduce::data::{annotated_pairs, generate_synthetic, split_by_table, SplitRatios, SynthConfig};
use tabreduce::policy::ItemKind;
use tabreduce::trainer::{evaluate_recall, init_model, make_examples, train_sft, SftConfig};

fn main() {
    let records = generate_synthetic(&SynthConfig::default()).expect("valid config");
    let split = split_by_table(records, SplitRatios::default(), 1).expect("split");
    let train_pairs = annotated_pairs(&split.train);
    let cfg = SftConfig::default();
    let model = init_model(ItemKind::Columns, &train_pairs, &cfg);
    let train = make_examples(&model, &train_pairs);
    let valid = make_examples(&model, &annotated_pairs(&split.valid));
    let test_pairs = annotated_pairs(&split.test);
    let test = make_examples(&model, &test_pairs);

    let out = train_sft(model, &train, &valid, &cfg).expect("training");
    for rec in &out.history {
        println!("epoch {:>2}  loss {:.4}  valid recall {:.4}", rec.epoch, rec.train_loss, rec.valid_recall.unwrap_or(0.0));
    }
    let recall = evaluate_recall(&out.model.params, &test).expect("eval");
    println!("best epoch {}, test recall {recall:.4}", out.best_epoch);

    let (inst, ann) = &test_pairs[0];
    let picked = out.model.predict(&out.model.encode_instance(inst, None)).expect("decode");
    let names = |ids: &std::collections::BTreeSet<usize>| -> Vec<&str> {
        ids.iter().map(|&i| inst.table.columns()[i].as_str()).collect()
    };
    println!("\n{}\n  predicted {:?}\n  gold      {:?}", inst.question, names(&picked), names(&ann.relevant_columns));
}
