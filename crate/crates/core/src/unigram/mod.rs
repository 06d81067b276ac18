//! Unigram language model tokenization.
//!
//! A model assigns each piece an independent probability; a word's
//! segmentations form a lattice whose best path (Viterbi) is the
//! tokenization and whose total mass (forward algorithm) is the word's
//! marginal likelihood.

mod lattice;
mod model;
mod trainer;

pub use model::{Segmentation, UnigramModel, NORMALIZATION_TOLERANCE};
pub use trainer::{
    corpus_loglik, em_fit, em_fit_traced, prune, removal_count, seed_vocab, token_losses,
    train_unigram, LossTable, UnigramConfig, COUNT_FLOOR,
};
