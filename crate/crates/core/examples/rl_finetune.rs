//! PPO fine-tuning of a column policy first fitted on a tenth of the data.

use tabreduce::data::{annotated_pairs, generate_synthetic, split_by_table, SplitRatios, SynthConfig};
use tabreduce::policy::ItemKind;
use tabreduce::trainer::{evaluate_recall, init_model, make_examples, train_rl, train_sft, PpoConfig, SftConfig};

fn main() {
    let records = generate_synthetic(&SynthConfig::default()).expect("valid config");
    let split = split_by_table(records, SplitRatios::default(), 0).expect("split");
    let train_pairs = annotated_pairs(&split.train);
    let sft_cfg = SftConfig::default();
    let model = init_model(ItemKind::Columns, &train_pairs, &sft_cfg);
    let train = make_examples(&model, &train_pairs);
    let valid = make_examples(&model, &annotated_pairs(&split.valid));
    let test = make_examples(&model, &annotated_pairs(&split.test));

    let few = &train[..train.len() / 10];
    let sft = train_sft(model, few, &valid, &sft_cfg).expect("sft");
    let before = evaluate_recall(&sft.model.params, &test).expect("eval");
    println!("sft on {} examples: test recall {before:.4}", few.len());

    let cfg = PpoConfig::default();
    let rl = train_rl(sft.model, &train, &valid, &cfg, |rec, _| {
        println!(
            "iter {:>2}  beta {:.3}  kl {:.4}  reward {:+.3}  valid {}",
            rec.iteration,
            rec.beta,
            rec.mean_kl,
            rec.mean_task_reward,
            rec.valid_recall.map_or("-".into(), |r| format!("{r:.4}"))
        );
        Ok(())
    })
    .expect("ppo");
    let after = evaluate_recall(&rl.model.params, &test).expect("eval");
    println!("after ppo (best iteration {}): test recall {after:.4}", rl.best_iteration);
}
