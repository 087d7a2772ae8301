//! Seeded synthetic datasets with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledSentence;
use crate::embed::{Embedder, Fingerprint, MockEmbedder, SentenceEmbedding, EMBEDDING_DIM};
use crate::expert::{enumerate_combinations_with, one_hot_offsets};
use crate::model::{EiTrait, Eventivity, EventivityArity, ExpertIndex, Impact, Initiativity, StacLabel, TimeEnd};

pub const SYNTHETIC_ENCODER_ID: &str = "synthetic-blocks-v1";

/// Deterministic STAC label as a function of four traits. Under uniformly
/// drawn records each label has probability 1/4.
pub fn stac_rule(ei: &ExpertIndex) -> StacLabel {
    let dynamic = ei.eventivity == Eventivity::Dynamic;
    if dynamic && ei.initiativity == Initiativity::Initiate {
        StacLabel::Action
    } else if !dynamic && ei.time_end == TimeEnd::Future {
        StacLabel::Task
    } else if ei.impact == Impact::Impactful {
        StacLabel::Consequence
    } else {
        StacLabel::Situation
    }
}

fn draw_records(n: usize, rng: &mut ChaCha8Rng, arity: EventivityArity) -> Vec<ExpertIndex> {
    let all = enumerate_combinations_with(arity);
    (0..n).map(|_| all[rng.random_range(0..all.len())]).collect()
}

/// Rows whose STAC label is [`stac_rule`] of a uniformly drawn Expert Index,
/// with mock embeddings of unrelated text. The embedding carries no label
/// information.
pub fn ei_governed(n: usize, seed: u64) -> Vec<LabeledSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = draw_records(n, &mut rng, EventivityArity::Two);
    let texts: Vec<String> = (0..n).map(|i| format!("synthetic event {seed}-{i}")).collect();
    let embedder = MockEmbedder;
    texts
        .into_iter()
        .zip(records)
        .map(|(text, ei)| LabeledSentence {
            embedding: embedder.embed(&text).expect("mock embedding"),
            text,
            stac: Some(stac_rule(&ei)),
            expert_index: ei,
        })
        .collect()
}

const BLOCK: usize = 48;

/// Noise-free block centroid for a record: each (trait, category) slot owns
/// `BLOCK` coordinates set to 1.
pub fn block_centroid(ei: &ExpertIndex, arity: EventivityArity) -> Vec<f32> {
    let mut v = vec![0.0f32; EMBEDDING_DIM];
    for (t, off) in EiTrait::ALL.iter().zip(one_hot_offsets(arity)) {
        let slot = off + ei.category(*t, arity);
        v[slot * BLOCK..(slot + 1) * BLOCK].iter_mut().for_each(|x| *x = 1.0);
    }
    v
}

/// Rows whose embeddings are block centroids plus uniform noise of amplitude
/// `noise`. With `noise` well below 0.5 every trait is separable from any
/// single coordinate of its blocks.
pub fn separable(n: usize, seed: u64, noise: f32, arity: EventivityArity) -> Vec<LabeledSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = draw_records(n, &mut rng, arity);
    records
        .into_iter()
        .enumerate()
        .map(|(i, ei)| {
            let text = format!("separable sentence {seed}-{i}");
            let vector: Vec<f32> =
                block_centroid(&ei, arity).into_iter().map(|c| c + rng.random_range(-noise..=noise)).collect();
            LabeledSentence {
                embedding: SentenceEmbedding::new(vector, Fingerprint::of(SYNTHETIC_ENCODER_ID, &text))
                    .expect("finite 768-vector"),
                text,
                stac: Some(stac_rule(&ei)),
                expert_index: ei,
            }
        })
        .collect()
}
