use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, InstanceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<InstanceRecord>,
    pub valid: Vec<InstanceRecord>,
    pub test: Vec<InstanceRecord>,
}

/// Partition records so that all questions over the same table land in the
/// same part. Tables are identified by content; their order is shuffled
/// with `seed` and cut by `ratios` (rounded to whole tables). Records keep
/// their input order within each part.
pub fn split_by_table(
    records: Vec<InstanceRecord>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Split, DataError> {
    let parts = [ratios.train, ratios.valid, ratios.test];
    if parts.iter().any(|r| !(*r >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Config("split ratios must be non-negative and sum to 1".into()));
    }
    let mut group_of: HashMap<String, usize> = HashMap::new();
    let mut groups = Vec::with_capacity(records.len());
    for r in &records {
        let key = serde_json::to_string(&r.table).expect("tables serialize");
        let next = group_of.len();
        groups.push(*group_of.entry(key).or_insert(next));
    }
    let n = group_of.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_valid = ((ratios.valid * n as f64).round() as usize).min(n - n_train.min(n));
    let mut part = vec![2u8; n];
    for (pos, &g) in order.iter().enumerate() {
        part[g] = if pos < n_train {
            0
        } else if pos < n_train + n_valid {
            1
        } else {
            2
        };
    }
    let mut out = Split::default();
    for (r, g) in records.into_iter().zip(groups) {
        match part[g] {
            0 => out.train.push(r),
            1 => out.valid.push(r),
            _ => out.test.push(r),
        }
    }
    Ok(out)
}
