//! Shared fixtures for the pipeline benchmarks.

use storyline_core::corpus::synth::{synth_corpus, SynthConfig};
use storyline_core::{train_all, DocRepr, ModelSet, TrainerConfig};

/// A synthetic stream of `stories * docs_per_story` documents.
pub fn stream(stories: usize, docs_per_story: usize, seed: u64) -> Vec<DocRepr> {
    let cfg = SynthConfig {
        n_stories: stories,
        docs_per_story,
        seed,
        ..SynthConfig::default()
    };
    synth_corpus(&cfg)
        .and_then(|c| c.reprs())
        .expect("valid synthetic configuration")
}

/// Models trained on the default synthetic benchmark.
pub fn trained_models() -> ModelSet {
    let docs = stream(20, 30, 0);
    train_all(&docs, &[], &TrainerConfig::default())
        .expect("training on the default benchmark")
        .models
}
