//! Supervised fine-tuning and PPO training of the pointer policy.

mod adam;
mod ppo;
mod run_dir;
mod sft;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::annotate::{AnnotationStatus, RelevanceAnnotation};
use crate::metrics::item_recall;
use crate::policy::{candidate_texts, EncodedInstance, ItemKind, PolicyError, PolicyModel, PolicyParams, Vocabulary};
use crate::table::Instance;

pub use crate::seed::derived_rng;
pub use adam::Adam;
pub use ppo::{
    collect_rollouts, compute_advantages, eval_iterations, measured_kl, ppo_update, train_rl,
    update_beta, IterationRecord, PpoConfig, RlOutcome, Rollout, TrainState,
};
pub use run_dir::RunDir;
pub(crate) use run_dir::write_json;
pub use sft::{train_sft, train_sft_with, SftConfig, SftEpochRecord, SftOutcome, TargetOrder};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// An encoded instance with its gold item set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub enc: EncodedInstance,
    pub gold: BTreeSet<usize>,
}

/// Gold items of `kind` for an annotated instance, if usable.
pub fn gold_items(kind: ItemKind, ann: &RelevanceAnnotation) -> Option<&BTreeSet<usize>> {
    if ann.status != AnnotationStatus::Ok {
        return None;
    }
    match kind {
        ItemKind::Columns => Some(&ann.relevant_columns),
        ItemKind::Rows => ann.relevant_rows.as_ref(),
    }
}

/// Vocabulary over questions and candidate texts of usable instances.
/// Row candidates are restricted to the gold columns.
pub fn build_vocabulary(kind: ItemKind, data: &[(Instance, RelevanceAnnotation)]) -> Vocabulary {
    let mut texts = Vec::new();
    for (inst, ann) in data {
        if gold_items(kind, ann).is_none() {
            continue;
        }
        texts.push(inst.question.clone());
        texts.extend(candidate_texts(kind, inst, Some(&ann.relevant_columns)));
    }
    Vocabulary::build(texts.iter().map(String::as_str))
}

/// Fresh model with a vocabulary over `train` and `cfg.dim`/`cfg.seed`.
pub fn init_model(kind: ItemKind, train: &[(Instance, RelevanceAnnotation)], cfg: &SftConfig) -> PolicyModel {
    PolicyModel::new(kind, build_vocabulary(kind, train), cfg.dim, cfg.seed)
}

/// Training examples for `model`; instances without usable gold labels
/// are dropped.
pub fn make_examples(model: &PolicyModel, data: &[(Instance, RelevanceAnnotation)]) -> Vec<TrainExample> {
    data.par_iter()
        .filter_map(|(inst, ann)| {
            let gold = gold_items(model.kind, ann)?;
            Some(TrainExample {
                id: inst.id.clone(),
                enc: model.encode_instance(inst, Some(&ann.relevant_columns)),
                gold: gold.clone(),
            })
        })
        .collect()
}

/// Greedy predictions for every example.
pub fn predict_all(params: &PolicyParams, examples: &[TrainExample]) -> Result<Vec<BTreeSet<usize>>, PolicyError> {
    examples
        .par_iter()
        .map(|ex| {
            let trace = crate::policy::sample_episode(
                params,
                None,
                &ex.enc,
                crate::policy::DecodeMode::Greedy,
                None,
                &mut rand::rngs::mock::StepRng::new(0, 0),
            )?;
            Ok(trace.selected)
        })
        .collect()
}

/// Macro-averaged greedy recall.
pub fn evaluate_recall(params: &PolicyParams, examples: &[TrainExample]) -> Result<f64, PolicyError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let preds = predict_all(params, examples)?;
    let total: f64 = preds
        .iter()
        .zip(examples)
        .map(|(p, ex)| item_recall(p, &ex.gold))
        .sum();
    Ok(total / examples.len() as f64)
}

pub(crate) fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
