use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PolicyError, Vocabulary};

/// Learnable parameters of the pointer policy and its value head.
///
/// Matrices are row-major `dim × dim`; the embedding table is
/// `vocab_size × dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub dim: usize,
    pub vocab_size: usize,
    pub embedding: Vec<f64>,
    /// Scores items against the question: `qᵀ M v`.
    pub query_bilinear: Vec<f64>,
    /// Scores items against the selection history: `hᵀ N v`.
    pub history_bilinear: Vec<f64>,
    pub stop_query: Vec<f64>,
    pub stop_history: Vec<f64>,
    pub stop_bias: f64,
    pub value_query: Vec<f64>,
    pub value_history: Vec<f64>,
    pub value_bias: f64,
}

pub const TENSOR_NAMES: [&str; 9] = [
    "embedding",
    "query_bilinear",
    "history_bilinear",
    "stop_query",
    "stop_history",
    "stop_bias",
    "value_query",
    "value_history",
    "value_bias",
];

impl PolicyParams {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        PolicyParams {
            dim,
            vocab_size,
            embedding: vec![0.0; vocab_size * dim],
            query_bilinear: vec![0.0; dim * dim],
            history_bilinear: vec![0.0; dim * dim],
            stop_query: vec![0.0; dim],
            stop_history: vec![0.0; dim],
            stop_bias: 0.0,
            value_query: vec![0.0; dim],
            value_history: vec![0.0; dim],
            value_bias: 0.0,
        }
    }

    /// Policy entries i.i.d. uniform in [-0.1, 0.1]; value head zero.
    pub fn init(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyParams::zeros(vocab.len(), dim);
        for t in [
            &mut p.embedding,
            &mut p.query_bilinear,
            &mut p.history_bilinear,
            &mut p.stop_query,
            &mut p.stop_history,
        ] {
            for x in t.iter_mut() {
                *x = rng.gen_range(-0.1..=0.1);
            }
        }
        p.stop_bias = rng.gen_range(-0.1..=0.1);
        p
    }

    pub fn tensors(&self) -> [&[f64]; 9] {
        [
            &self.embedding,
            &self.query_bilinear,
            &self.history_bilinear,
            &self.stop_query,
            &self.stop_history,
            std::slice::from_ref(&self.stop_bias),
            &self.value_query,
            &self.value_history,
            std::slice::from_ref(&self.value_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            &mut self.embedding,
            &mut self.query_bilinear,
            &mut self.history_bilinear,
            &mut self.stop_query,
            &mut self.stop_history,
            std::slice::from_mut(&mut self.stop_bias),
            &mut self.value_query,
            &mut self.value_history,
            std::slice::from_mut(&mut self.value_bias),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams::zeros(self.vocab_size, self.dim)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn embedding_row(&self, token: usize) -> &[f64] {
        &self.embedding[token * self.dim..(token + 1) * self.dim]
    }
}

/// What a model file's policy selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Columns,
    Rows,
}

/// Vocabulary plus parameters; the unit that is trained and saved.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub kind: ItemKind,
    pub vocab: Vocabulary,
    pub params: PolicyParams,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: ItemKind,
    dim: usize,
    vocabulary: Vocabulary,
    parameters: ModelTensors,
}

#[derive(Serialize, Deserialize)]
struct ModelTensors {
    embedding: Vec<f64>,
    query_bilinear: Vec<f64>,
    history_bilinear: Vec<f64>,
    stop_query: Vec<f64>,
    stop_history: Vec<f64>,
    stop_bias: f64,
    value_query: Vec<f64>,
    value_history: Vec<f64>,
    value_bias: f64,
}

impl PolicyModel {
    pub fn new(kind: ItemKind, vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        let params = PolicyParams::init(&vocab, dim, seed);
        PolicyModel {
            kind,
            vocab,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        let p = &self.params;
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind,
            dim: p.dim,
            vocabulary: self.vocab.clone(),
            parameters: ModelTensors {
                embedding: p.embedding.clone(),
                query_bilinear: p.query_bilinear.clone(),
                history_bilinear: p.history_bilinear.clone(),
                stop_query: p.stop_query.clone(),
                stop_history: p.stop_history.clone(),
                stop_bias: p.stop_bias,
                value_query: p.value_query.clone(),
                value_history: p.value_history.clone(),
                value_bias: p.value_bias,
            },
        };
        serde_json::to_string(&file).expect("finite parameters serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| PolicyError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(PolicyError::Format(format!(
                "unsupported model format_version {}",
                file.format_version
            )));
        }
        let dim = file.dim;
        let v = file.vocabulary.len();
        let t = file.parameters;
        let shapes = [
            ("embedding", t.embedding.len(), v * dim),
            ("query_bilinear", t.query_bilinear.len(), dim * dim),
            ("history_bilinear", t.history_bilinear.len(), dim * dim),
            ("stop_query", t.stop_query.len(), dim),
            ("stop_history", t.stop_history.len(), dim),
            ("value_query", t.value_query.len(), dim),
            ("value_history", t.value_history.len(), dim),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(PolicyError::Format(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        Ok(PolicyModel {
            kind: file.kind,
            vocab: file.vocabulary,
            params: PolicyParams {
                dim,
                vocab_size: v,
                embedding: t.embedding,
                query_bilinear: t.query_bilinear,
                history_bilinear: t.history_bilinear,
                stop_query: t.stop_query,
                stop_history: t.stop_history,
                stop_bias: t.stop_bias,
                value_query: t.value_query,
                value_history: t.value_history,
                value_bias: t.value_bias,
            },
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Format(e.to_string()))?;
        Self::from_json(&text)
    }
}
