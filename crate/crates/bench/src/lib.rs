//! Shared fixtures for the criterion benchmarks.

use orient_core::synth;
use orient_core::{AlignedPair, Embedding, SeededRng};

/// A source that is an exact similarity transform of a random target.
pub fn transformed_pair(n: usize, d: usize, seed: u64) -> AlignedPair {
    let mut rng = SeededRng::new(seed);
    let target = synth::random_embedding(&mut rng, n, d);
    let q = synth::random_orthogonal(&mut rng, d);
    let shift: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let moved = synth::similarity_transform_rows(target.matrix(), &q, 2.5, &shift);
    let noisy = synth::add_noise(&mut rng, &moved, 0.01);
    let source = target.with_matrix(noisy).expect("same shape");
    AlignedPair::new(target, source).expect("shared tokens")
}

pub fn random_embedding(n: usize, d: usize, seed: u64) -> Embedding {
    synth::random_embedding(&mut SeededRng::new(seed), n, d)
}
