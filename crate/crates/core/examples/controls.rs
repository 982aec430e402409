//! Reward, KL coefficient and top-p mask in isolation.

use std::collections::BTreeSet;

use tabreduce::policy::apply_top_p_mask;
use tabreduce::reward::{task_reward, RewardConfig};
use tabreduce::trainer::{update_beta, PpoConfig};

fn main() {
    let gold = BTreeSet::from([1, 3]);
    for predicted in [BTreeSet::from([1, 3]), BTreeSet::from([1, 2, 3]), BTreeSet::from([1])] {
        let r = task_reward(&predicted, &gold, &RewardConfig::default())
            .with_kl(-2.0, -2.5, 0.2)
            .expect("finite");
        println!("predicted {predicted:?}: task {:+.2}, shaped {:+.2}", r.task_reward, r.shaped);
    }

    let cfg = PpoConfig::default();
    let mut beta = cfg.beta0;
    for kl in [0.2, 0.1, 0.06, 0.05, 0.02] {
        beta = update_beta(beta, kl, &cfg);
        println!("measured kl {kl:.2} -> beta {beta:.4}");
    }

    let probs = [0.5, 0.25, 0.15, 0.07, 0.03];
    for p in [0.5, 0.9, 1.0] {
        println!("top-p {p}: {:?}", apply_top_p_mask(&probs, p));
    }
}
