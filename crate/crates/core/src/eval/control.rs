//! Control tasks: random labels assigned per word type.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::AttributeDataset;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlTask {
    pub seed: u64,
    pub num_labels: usize,
    pub mapping: BTreeMap<String, usize>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl ControlTask {
    /// Label of `word_type`: uniform over `0..num_labels`, fixed by the word
    /// type and the seed alone.
    pub fn label_for(word_type: &str, num_labels: usize, seed: u64) -> usize {
        let key = fnv1a(word_type.as_bytes()) ^ seed.rotate_left(32);
        ChaCha8Rng::seed_from_u64(key).random_range(0..num_labels)
    }

    pub fn build<'a>(
        word_types: impl IntoIterator<Item = &'a str>,
        num_labels: usize,
        seed: u64,
    ) -> Self {
        let mapping = word_types
            .into_iter()
            .map(|w| (w.to_string(), Self::label_for(w, num_labels, seed)))
            .collect();
        Self {
            seed,
            num_labels,
            mapping,
        }
    }
}

/// Same rows and label set, labels replaced by the control mapping.
pub fn make_control(dataset: &AttributeDataset, seed: u64) -> Result<AttributeDataset> {
    let z = dataset.num_classes().max(1);
    let labels = dataset
        .word_types()
        .iter()
        .map(|w| ControlTask::label_for(w, z, seed))
        .collect();
    dataset.relabel(labels)
}
