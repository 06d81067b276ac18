//! Subword tokenization: BPE and unigram-LM vocabulary training and
//! tokenization, plus vocabulary profiling and morphological boundary
//! evaluation for comparing the two.

pub mod bpe;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod model_file;
pub mod morpho;
pub mod profile;
pub mod tokenizer;
pub mod unigram;

pub use error::{Error, Result};
pub use model_file::ModelFile;
pub use tokenizer::Model;
