use std::collections::BTreeSet;

use unicode_normalization::UnicodeNormalization;

use crate::bpe::BpeModel;
use crate::corpus::SplitMode;
use crate::unigram::UnigramModel;

/// A trained tokenizer of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Bpe(BpeModel),
    Unigram(UnigramModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Bpe(_) => "bpe",
            Model::Unigram(_) => "unigram",
        }
    }

    pub fn marker(&self) -> char {
        match self {
            Model::Bpe(m) => m.marker(),
            Model::Unigram(m) => m.marker(),
        }
    }

    pub fn unk_token(&self) -> &str {
        match self {
            Model::Bpe(m) => m.unk_token(),
            Model::Unigram(m) => m.unk_token(),
        }
    }

    /// Tokenizes one marker-prefixed word.
    pub fn tokenize_word(&self, word: &str) -> Vec<String> {
        match self {
            Model::Bpe(m) => m.tokenize(word),
            Model::Unigram(m) => m.tokenize(word),
        }
    }

    /// Normalizes a line of raw text, splits it, prefixes each unit with
    /// the marker and tokenizes it.
    pub fn tokenize_line(&self, line: &str, mode: SplitMode) -> Vec<String> {
        let normalized: String = line.nfc().collect();
        let marker = self.marker();
        let word_tokens = |unit: &str| {
            let mut word = String::with_capacity(unit.len() + 4);
            word.push(marker);
            word.push_str(unit);
            self.tokenize_word(&word)
        };
        match mode {
            SplitMode::Whitespace => normalized.split_whitespace().flat_map(word_tokens).collect(),
            SplitMode::Line => {
                let unit: String = normalized.chars().filter(|c| !c.is_whitespace()).collect();
                if unit.is_empty() {
                    Vec::new()
                } else {
                    word_tokens(&unit)
                }
            }
        }
    }

    /// Vocabulary tokens, excluding the unk token.
    pub fn vocab(&self) -> BTreeSet<String> {
        match self {
            Model::Bpe(m) => m.vocab().clone(),
            Model::Unigram(m) => m
                .pieces()
                .iter()
                .filter(|p| p.as_str() != m.unk_token())
                .cloned()
                .collect(),
        }
    }

    /// Every token in id order: the unk token, then single characters, then
    /// the remaining tokens, each group in code-point order.
    pub fn tokens_in_id_order(&self) -> Vec<String> {
        let vocab = self.vocab();
        let (singles, longer): (Vec<String>, Vec<String>) =
            vocab.into_iter().partition(|t| t.chars().nth(1).is_none());
        std::iter::once(self.unk_token().to_owned())
            .chain(singles)
            .chain(longer)
            .collect()
    }
}

impl From<BpeModel> for Model {
    fn from(m: BpeModel) -> Self {
        Model::Bpe(m)
    }
}

impl From<UnigramModel> for Model {
    fn from(m: UnigramModel) -> Self {
        Model::Unigram(m)
    }
}
