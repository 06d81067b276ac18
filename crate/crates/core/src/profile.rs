//! Vocabulary and corpus profiles for comparing tokenizers: token length
//! distribution, rank-frequency curve with a low-frequency "dead zone",
//! tokens per word, and per-token frequency differences between two
//! tokenizations of the same corpus.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::corpus::WordCounts;
use crate::error::{Error, Result};
use crate::tokenizer::Model;

/// Divisor of the median token frequency below which a token is in the
/// dead zone.
pub const DEAD_ZONE_DIVISOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VocabProfile {
    /// Token length in code points, not counting the word-boundary marker.
    pub length_histogram: BTreeMap<usize, usize>,
    pub mean_token_length: f64,
    /// Every vocabulary token with its corpus frequency, most frequent
    /// first (ties in code-point order).
    pub rank_frequency: Vec<(String, u64)>,
    /// Number of vocabulary tokens per frequency bin: bin 0 holds
    /// frequency 0, bin `b ≥ 1` holds `[2^(b-1), 2^b)`.
    pub frequency_bins: BTreeMap<u32, usize>,
    pub dead_zone_threshold: f64,
    pub dead_zone_count: usize,
    pub tokens_per_word: f64,
    pub tokens_per_word_type: f64,
    /// Occurrences of the unk token in the corpus tokenization.
    pub unk_occurrences: u64,
}

/// Tokenizes each word type once (in parallel, results in word order).
fn tokenize_types<'a>(model: &Model, counts: &'a WordCounts) -> Vec<(&'a str, u64, Vec<String>)> {
    let words: Vec<(&str, u64)> = counts.iter().collect();
    words
        .into_par_iter()
        .map(|(w, c)| (w, c, model.tokenize_word(w)))
        .collect()
}

/// Occurrences of each emitted token over the count-weighted corpus.
pub fn token_frequencies(model: &Model, counts: &WordCounts) -> BTreeMap<String, u64> {
    accumulate(&tokenize_types(model, counts))
}

fn accumulate(tokenized: &[(&str, u64, Vec<String>)]) -> BTreeMap<String, u64> {
    let mut freqs: HashMap<&str, u64> = HashMap::new();
    for (_, c, tokens) in tokenized {
        for t in tokens {
            *freqs.entry(t.as_str()).or_insert(0) += c;
        }
    }
    freqs.into_iter().map(|(t, f)| (t.to_owned(), f)).collect()
}

fn median(sorted: &[u64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0,
    }
}

/// Frequency under which a vocabulary token is in the dead zone:
/// `max(1, median / divisor)`.
pub fn dead_zone_threshold(freqs: &[u64], divisor: f64) -> f64 {
    let mut sorted = freqs.to_vec();
    sorted.sort_unstable();
    (median(&sorted) / divisor).max(1.0)
}

pub fn dead_zone_count(freqs: &[u64], divisor: f64) -> usize {
    let threshold = dead_zone_threshold(freqs, divisor);
    freqs.iter().filter(|&&f| (f as f64) < threshold).count()
}

fn frequency_bin(f: u64) -> u32 {
    if f == 0 {
        0
    } else {
        64 - f.leading_zeros()
    }
}

pub fn profile_vocab(model: &Model, counts: &WordCounts) -> VocabProfile {
    let marker = model.marker();
    let tokenized = tokenize_types(model, counts);
    let freqs = accumulate(&tokenized);
    let vocab = model.vocab();

    let mut length_histogram = BTreeMap::new();
    let mut total_len = 0usize;
    for t in &vocab {
        let len = t.chars().filter(|&c| c != marker).count();
        *length_histogram.entry(len).or_insert(0) += 1;
        total_len += len;
    }
    let mean_token_length = if vocab.is_empty() {
        0.0
    } else {
        total_len as f64 / vocab.len() as f64
    };

    let mut rank_frequency: Vec<(String, u64)> = vocab
        .iter()
        .map(|t| (t.clone(), freqs.get(t).copied().unwrap_or(0)))
        .collect();
    rank_frequency.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let vocab_freqs: Vec<u64> = rank_frequency.iter().map(|&(_, f)| f).collect();
    let mut frequency_bins = BTreeMap::new();
    for &f in &vocab_freqs {
        *frequency_bins.entry(frequency_bin(f)).or_insert(0) += 1;
    }

    let (mut tokens_weighted, mut tokens_types) = (0u64, 0u64);
    for (_, c, tokens) in &tokenized {
        tokens_weighted += c * tokens.len() as u64;
        tokens_types += tokens.len() as u64;
    }
    let tokens_per_word = ratio(tokens_weighted, counts.total_words());
    let tokens_per_word_type = ratio(tokens_types, counts.total_word_types() as u64);

    VocabProfile {
        length_histogram,
        mean_token_length,
        rank_frequency,
        frequency_bins,
        dead_zone_threshold: dead_zone_threshold(&vocab_freqs, DEAD_ZONE_DIVISOR),
        dead_zone_count: dead_zone_count(&vocab_freqs, DEAD_ZONE_DIVISOR),
        tokens_per_word,
        tokens_per_word_type,
        unk_occurrences: freqs.get(model.unk_token()).copied().unwrap_or(0),
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffRow {
    pub token: String,
    pub freq_a: u64,
    pub freq_b: u64,
    /// `freq_a - freq_b`.
    pub diff: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyDiffReport {
    /// Largest `|diff|` first.
    pub rows: Vec<DiffRow>,
    /// Tokens more frequent under model A, largest gap first.
    pub more_in_a: Vec<DiffRow>,
    /// Tokens more frequent under model B, largest gap first.
    pub more_in_b: Vec<DiffRow>,
}

/// Compares per-token corpus frequencies of two tokenizations, keeping the
/// `top_n` largest differences overall and in each direction.
pub fn frequency_diff(
    model_a: &Model,
    model_b: &Model,
    counts: &WordCounts,
    top_n: usize,
) -> Result<FrequencyDiffReport> {
    if model_a.marker() != model_b.marker() {
        return Err(Error::MixedMarkers(model_a.marker(), model_b.marker()));
    }
    let fa = token_frequencies(model_a, counts);
    let fb = token_frequencies(model_b, counts);
    let mut tokens: Vec<&String> = fa.keys().chain(fb.keys()).collect();
    tokens.sort();
    tokens.dedup();
    let mut all: Vec<DiffRow> = tokens
        .into_iter()
        .map(|t| {
            let freq_a = fa.get(t).copied().unwrap_or(0);
            let freq_b = fb.get(t).copied().unwrap_or(0);
            DiffRow {
                token: t.clone(),
                freq_a,
                freq_b,
                diff: freq_a as i64 - freq_b as i64,
            }
        })
        .collect();
    all.sort_by(|a, b| {
        b.diff
            .unsigned_abs()
            .cmp(&a.diff.unsigned_abs())
            .then_with(|| a.token.cmp(&b.token))
    });
    let more_in_a = all.iter().filter(|r| r.diff > 0).take(top_n).cloned().collect();
    let more_in_b = all.iter().filter(|r| r.diff < 0).take(top_n).cloned().collect();
    all.truncate(top_n);
    Ok(FrequencyDiffReport {
        rows: all,
        more_in_a,
        more_in_b,
    })
}
