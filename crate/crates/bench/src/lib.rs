//! Shared fixtures for the benchmark targets.

use rand::Rng;

use pseudogen_core::{rng, LogitVector};

/// Random normalized logit vectors of the given size.
pub fn random_logits(count: usize, len: usize, seed: u64) -> Vec<LogitVector> {
    let mut r = rng::stream(seed, "bench-logits", 0);
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = (0..len).map(|_| r.random::<f64>() + 1e-6).collect();
            LogitVector::from_probs(&raw)
        })
        .collect()
}

/// Token corpora shaped like the toy world's generations.
pub fn review_corpus(count: usize, seed: u64) -> Vec<Vec<String>> {
    let mut r = rng::stream(seed, "bench-corpus", 0);
    (0..count)
        .map(|_| {
            let class = r.random_range(0..2usize);
            pseudogen_core::text::split_tokens(&pseudogen_core::toyworld::sample_review(
                class, &mut r,
            ))
        })
        .collect()
}
