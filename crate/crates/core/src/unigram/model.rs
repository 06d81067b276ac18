use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

use super::lattice::{Lattice, NEG_INF};

/// Allowed deviation of `Σ exp(logprob)` from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Penalty below the least likely piece used for unknown characters when
/// the model has no explicit unk entry.
const MISSING_UNK_MARGIN: f64 = 10.0;

/// A unigram language model over subword pieces.
///
/// Pieces are kept in code-point order; the piece index used by lattices is
/// the position in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    marker: char,
    unk_token: String,
    pieces: Vec<String>,
    logprobs: Vec<f64>,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
}

impl UnigramModel {
    /// Builds a model from log probabilities. They must be finite, at most 0,
    /// and sum (in probability space) to 1.
    pub fn from_logprobs<I, S>(marker: char, unk_token: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let table: BTreeMap<String, f64> = entries.into_iter().map(|(s, lp)| (s.into(), lp)).collect();
        if table.is_empty() {
            return Err(Error::InvalidArgument("unigram model has no pieces".into()));
        }
        for (piece, &lp) in &table {
            if piece.is_empty() {
                return Err(Error::InvalidArgument("empty piece".into()));
            }
            if !lp.is_finite() || lp > 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "piece {piece:?} has log probability {lp}, expected finite and at most 0"
                )));
            }
        }
        let total: f64 = table.values().map(|lp| lp.exp()).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self::from_table(marker, unk_token.into(), table))
    }

    /// Builds a model from probabilities that already sum to 1.
    pub fn from_probs<I, S>(marker: char, unk_token: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self::from_logprobs(marker, unk_token, entries.into_iter().map(|(s, p)| (s, p.ln())))
    }

    /// Builds a model from positive weights, normalizing them.
    pub fn from_weights<I, S>(marker: char, unk_token: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries: Vec<(String, f64)> = entries.into_iter().map(|(s, w)| (s.into(), w)).collect();
        if let Some((s, w)) = entries.iter().find(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument(format!("piece {s:?} has weight {w}")));
        }
        let log_total = entries.iter().map(|(_, w)| w).sum::<f64>().ln();
        let table = entries
            .into_iter()
            .map(|(s, w)| (s, w.ln() - log_total))
            .collect();
        Ok(Self::from_table(marker, unk_token.into(), table))
    }

    pub(crate) fn from_table(marker: char, unk_token: String, table: BTreeMap<String, f64>) -> Self {
        let mut pieces = Vec::with_capacity(table.len());
        let mut logprobs = Vec::with_capacity(table.len());
        for (piece, lp) in table {
            pieces.push(piece);
            logprobs.push(lp);
        }
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i as u32))
            .collect();
        let max_piece_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(0);
        UnigramModel {
            marker,
            unk_token,
            pieces,
            logprobs,
            index,
            max_piece_chars,
        }
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn unk_token(&self) -> &str {
        &self.unk_token
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// `(piece, log probability)` in code-point order of the pieces.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.pieces.iter().map(String::as_str).zip(self.logprobs.iter().copied())
    }

    pub fn logprob(&self, piece: &str) -> Option<f64> {
        self.index.get(piece).map(|&i| self.logprobs[i as usize])
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub(crate) fn piece_id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub(crate) fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub(crate) fn max_piece_chars(&self) -> usize {
        self.max_piece_chars
    }

    /// Single-character pieces and the unk token: never pruned.
    pub fn is_protected(&self, piece: &str) -> bool {
        piece == self.unk_token || piece.chars().nth(1).is_none()
    }

    /// Log probability charged for a character the model cannot segment.
    pub fn unk_logprob(&self) -> f64 {
        match self.logprob(&self.unk_token) {
            Some(lp) => lp,
            None => {
                self.logprobs.iter().copied().fold(f64::INFINITY, f64::min) - MISSING_UNK_MARGIN
            }
        }
    }

    /// Returns a copy restricted to `keep`, renormalized.
    pub(crate) fn retain(&self, keep: impl Fn(&str) -> bool) -> Self {
        let kept: Vec<(&str, f64)> = self.iter().filter(|(p, _)| keep(p)).collect();
        let log_total = log_sum_exp(kept.iter().map(|&(_, lp)| lp));
        let table = kept
            .into_iter()
            .map(|(p, lp)| (p.to_owned(), lp - log_total))
            .collect();
        Self::from_table(self.marker, self.unk_token.clone(), table)
    }

    /// Log of the total probability of all segmentations of `word`.
    /// Returns negative infinity when no segmentation exists.
    pub fn marginal_loglik(&self, word: &str) -> f64 {
        let lattice = Lattice::build(self, word, false);
        lattice.log_partition(self.logprobs())
    }

    /// Maximum-likelihood segmentation of `word`. Unknown characters are
    /// emitted as the unk token at [`UnigramModel::unk_logprob`].
    ///
    /// Ties (scores equal to within a relative 1e-12) go to the
    /// segmentation with fewer tokens, then to the one with the longer token
    /// at the first position where the two differ.
    pub fn viterbi(&self, word: &str) -> Segmentation {
        let lattice = Lattice::build(self, word, true);
        let path = lattice.viterbi(self.logprobs(), self.unk_logprob());
        let mut tokens = Vec::with_capacity(path.len());
        let mut log_likelihood = 0.0;
        for edge in path {
            match edge.piece {
                Some(id) => {
                    tokens.push(self.pieces[id as usize].clone());
                    log_likelihood += self.logprobs[id as usize];
                }
                None => {
                    tokens.push(self.unk_token.clone());
                    log_likelihood += self.unk_logprob();
                }
            }
        }
        if tokens.is_empty() && !word.is_empty() {
            log_likelihood = NEG_INF;
        }
        Segmentation {
            tokens,
            log_likelihood,
        }
    }

    pub fn tokenize(&self, word: &str) -> Vec<String> {
        self.viterbi(word).tokens
    }
}

/// A segmentation of one word with its log likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub tokens: Vec<String>,
    pub log_likelihood: f64,
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
