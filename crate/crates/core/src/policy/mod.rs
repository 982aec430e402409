//! Autoregressive pointer policy over candidate items plus STOP.
//!
//! A question and each candidate item (a column header or a linearized row)
//! are encoded as mean token embeddings `q` and `v_j`. At every step the
//! policy scores the remaining candidates with `(qᵀM + hᵀN) v_j` and STOP
//! with `q·w + h·u + b`, where `h` is the mean encoding of the items chosen so
//! far. Actions are laid out as the remaining candidates in ascending index
//! order followed by STOP; ties always break toward the lower position.

mod gradcheck;
mod network;
mod params;
mod top_p;
mod vocab;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::table::{linearize_row, Instance};

pub use gradcheck::{
    finite_difference_check, grad_check_ppo, grad_check_sft, GradCheckReport, PpoFixture,
};
pub use network::{
    encode_tokens, entropy, ppo_loss_and_grad, sample_episode, sequence_logprob,
    sft_loss_and_grad, step_distribution, value_estimate, Action, DecodeMode, EncodedInstance,
    EpisodeStep, EpisodeTrace, PpoLossConfig, PpoLossStats, PpoSample,
};
pub use params::{ItemKind, PolicyModel, PolicyParams, MODEL_FORMAT_VERSION, TENSOR_NAMES};
pub use top_p::apply_top_p_mask;
pub use vocab::{tokenize, Vocabulary, OOV_TOKEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid action sequence: {0}")]
    InvalidAction(String),
    #[error("invalid model file: {0}")]
    Format(String),
}

pub const DEFAULT_DIM: usize = 64;

/// Texts of the candidate items a policy of `kind` chooses from.
///
/// Row candidates are single-row linearizations restricted to `columns`
/// (all columns when `None`).
pub fn candidate_texts(kind: ItemKind, instance: &Instance, columns: Option<&BTreeSet<usize>>) -> Vec<String> {
    let table = &instance.table;
    match kind {
        ItemKind::Columns => table.columns().to_vec(),
        ItemKind::Rows => {
            let cols: Vec<usize> = match columns {
                Some(c) if !c.is_empty() => c.iter().copied().collect(),
                _ => (0..table.num_columns()).collect(),
            };
            (0..table.num_rows())
                .map(|r| linearize_row(table, r, &cols, r))
                .collect()
        }
    }
}

/// SFT target: gold items in table order, then STOP.
pub fn gold_actions(gold: &BTreeSet<usize>) -> Vec<Action> {
    gold.iter()
        .map(|&i| Action::Item(i))
        .chain(std::iter::once(Action::Stop))
        .collect()
}

impl PolicyModel {
    pub fn encode(&self, question: &str, items: &[String]) -> EncodedInstance {
        EncodedInstance {
            question: self.vocab.encode_item(question),
            items: items.iter().map(|t| self.vocab.encode_item(t)).collect(),
        }
    }

    pub fn encode_instance(
        &self,
        instance: &Instance,
        columns: Option<&BTreeSet<usize>>,
    ) -> EncodedInstance {
        self.encode(&instance.question, &candidate_texts(self.kind, instance, columns))
    }

    /// Greedy decode; returns the selected item set.
    pub fn predict(&self, encoded: &EncodedInstance) -> Result<BTreeSet<usize>, PolicyError> {
        let trace = sample_episode(
            &self.params,
            None,
            encoded,
            DecodeMode::Greedy,
            None,
            &mut rand::rngs::mock::StepRng::new(0, 0),
        )?;
        Ok(trace.selected)
    }
}
