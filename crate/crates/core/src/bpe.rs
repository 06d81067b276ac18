//! Byte-pair encoding over code points.
//!
//! Training starts from the character inventory and repeatedly fuses the
//! most frequent adjacent token pair, counting pairs inside words only and
//! weighting each word type by its corpus count. Equal counts are broken by
//! the smaller `(left, right)` pair in code-point order. Tokenization
//! replays the merges in creation order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use crate::corpus::{CharInventory, WordCounts};
use crate::error::{Error, Result};

pub const DEFAULT_UNK: &str = "<unk>";

const UNK_ID: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct BpeModel {
    marker: char,
    unk_token: String,
    alphabet: Vec<char>,
    merges: Vec<(String, String)>,
    vocab: BTreeSet<String>,
    // Lookup tables derived from the fields above.
    ids: HashMap<String, u32>,
    names: Vec<String>,
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.marker == other.marker
            && self.unk_token == other.unk_token
            && self.alphabet == other.alphabet
            && self.merges == other.merges
    }
}

impl Eq for BpeModel {}

impl BpeModel {
    /// Assembles a model from its alphabet and ordered merges, checking that
    /// every merge only uses characters or products of earlier merges.
    pub fn new(
        marker: char,
        unk_token: impl Into<String>,
        alphabet: impl IntoIterator<Item = char>,
        merges: Vec<(String, String)>,
    ) -> Result<Self> {
        let unk_token = unk_token.into();
        let alphabet: Vec<char> = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut ids: HashMap<String, u32> = HashMap::new();
        let mut vocab = BTreeSet::new();
        let mut names: Vec<String> = Vec::new();
        let mut intern = |s: String, ids: &mut HashMap<String, u32>| -> u32 {
            let next = ids.len() as u32;
            *ids.entry(s.clone()).or_insert_with(|| {
                names.push(s);
                next
            })
        };
        for &c in &alphabet {
            let s = c.to_string();
            if s == unk_token {
                return Err(Error::InvalidArgument(format!(
                    "unk token {unk_token:?} collides with an alphabet character"
                )));
            }
            vocab.insert(s.clone());
            intern(s, &mut ids);
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (left, right)) in merges.iter().enumerate() {
            let (Some(&l), Some(&r)) = (ids.get(left), ids.get(right)) else {
                return Err(Error::InvalidArgument(format!(
                    "merge {rank} ({left:?}, {right:?}) uses a token not created earlier"
                )));
            };
            let product = format!("{left}{right}");
            if product == unk_token {
                return Err(Error::InvalidArgument(format!(
                    "merge {rank} produces the unk token {unk_token:?}"
                )));
            }
            vocab.insert(product.clone());
            let id = intern(product, &mut ids);
            if ranks.insert((l, r), (rank, id)).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "merge {rank} ({left:?}, {right:?}) is repeated"
                )));
            }
        }
        Ok(BpeModel {
            marker,
            unk_token,
            alphabet,
            merges,
            vocab,
            ids,
            names,
            ranks,
        })
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn unk_token(&self) -> &str {
        &self.unk_token
    }

    /// Characters of the training inventory, in code-point order.
    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Characters plus merge products. Does not include the unk token.
    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Tokenizes one marker-prefixed word. Characters outside the alphabet
    /// become the unk token and never take part in a merge.
    pub fn tokenize(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<u32> = word
            .chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                self.ids.get(&*c.encode_utf8(&mut buf)).copied().unwrap_or(UNK_ID)
            })
            .collect();
        // The lowest-ranked pair present is always the next merge in replay
        // order: a product can only pair with merges created after it.
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, id)| (rank, id, w[0], w[1])))
                .min_by_key(|&(rank, ..)| rank);
            let Some((_, new_id, left, right)) = best else {
                break;
            };
            apply_merge(&mut symbols, left, right, new_id);
        }
        symbols
            .into_iter()
            .map(|id| {
                if id == UNK_ID {
                    self.unk_token.clone()
                } else {
                    self.names[id as usize].clone()
                }
            })
            .collect()
    }
}

/// Replaces each leftmost, non-overlapping `(left, right)` occurrence.
fn apply_merge(symbols: &mut Vec<u32>, left: u32, right: u32, new_id: u32) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(new_id);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    *symbols = out;
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Trainer state after the last merge: every word type with its current
/// token sequence.
pub(crate) struct TrainOutput {
    pub model: BpeModel,
    #[cfg_attr(not(test), allow(dead_code))]
    pub segmented: Vec<(String, Vec<String>)>,
}

/// Trains a BPE model whose vocabulary holds `k` tokens, or fewer if no
/// pair occurs at least twice before that size is reached.
pub fn train_bpe(counts: &WordCounts, k: usize) -> Result<BpeModel> {
    train_bpe_with_unk(counts, k, DEFAULT_UNK)
}

pub fn train_bpe_with_unk(counts: &WordCounts, k: usize, unk_token: &str) -> Result<BpeModel> {
    Ok(train_impl(counts, k, unk_token)?.model)
}

pub(crate) fn train_impl(counts: &WordCounts, k: usize, unk: &str) -> Result<TrainOutput> {
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let inventory: CharInventory = counts.char_inventory();
    if k < inventory.len() {
        return Err(Error::Infeasible(format!(
            "vocabulary size {k} is smaller than the {} characters of the corpus",
            inventory.len()
        )));
    }

    let mut tokens: Vec<String> = inventory.iter().map(String::from).collect();
    let mut ids: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    let mut words: Vec<(Vec<u32>, u64)> = counts
        .iter()
        .map(|(w, c)| {
            let syms = w.chars().map(|ch| ids[&ch.to_string()]).collect();
            (syms, c)
        })
        .collect();

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (idx, (syms, c)) in words.iter().enumerate() {
        for w in syms.windows(2) {
            *pair_counts.entry((w[0], w[1])).or_insert(0) += c;
            pair_words.entry((w[0], w[1])).or_default().insert(idx);
        }
    }
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| Candidate {
            count,
            left: tokens[pair.0 as usize].clone(),
            right: tokens[pair.1 as usize].clone(),
            pair,
        })
        .collect();

    let mut vocab_len = tokens.len();
    let mut merges = Vec::new();
    while vocab_len < k {
        let Some(top) = heap.pop() else { break };
        if pair_counts.get(&top.pair).copied() != Some(top.count) {
            continue; // stale entry
        }
        if top.count < 2 {
            break;
        }
        let (left, right) = top.pair;
        let product = format!("{}{}", top.left, top.right);
        let new_id = match ids.get(&product) {
            Some(&id) => id,
            None => {
                let id = tokens.len() as u32;
                tokens.push(product.clone());
                ids.insert(product, id);
                vocab_len += 1;
                id
            }
        };
        merges.push((top.left, top.right));

        let affected: Vec<usize> = {
            let mut v: Vec<usize> = pair_words
                .remove(&top.pair)
                .unwrap_or_default()
                .into_iter()
                .collect();
            v.sort_unstable();
            v
        };
        let mut delta: HashMap<(u32, u32), i64> = HashMap::new();
        for idx in affected {
            let (syms, c) = &mut words[idx];
            let c = *c as i64;
            for w in syms.windows(2) {
                *delta.entry((w[0], w[1])).or_insert(0) -= c;
            }
            apply_merge(syms, left, right, new_id);
            for w in syms.windows(2) {
                *delta.entry((w[0], w[1])).or_insert(0) += c;
                pair_words.entry((w[0], w[1])).or_default().insert(idx);
            }
        }
        let mut changed: Vec<((u32, u32), i64)> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        changed.sort_unstable();
        for (pair, d) in changed {
            let entry = pair_counts.entry(pair).or_insert(0);
            let updated = *entry as i64 + d;
            debug_assert!(updated >= 0);
            if updated <= 0 {
                pair_counts.remove(&pair);
                pair_words.remove(&pair);
            } else {
                *entry = updated as u64;
                heap.push(Candidate {
                    count: updated as u64,
                    left: tokens[pair.0 as usize].clone(),
                    right: tokens[pair.1 as usize].clone(),
                    pair,
                });
            }
        }
    }

    let segmented = counts
        .iter()
        .zip(&words)
        .map(|((w, _), (syms, _))| {
            (
                w.to_owned(),
                syms.iter().map(|&id| tokens[id as usize].clone()).collect(),
            )
        })
        .collect();
    let model = BpeModel::new(counts.marker(), unk, inventory.iter(), merges)?;
    Ok(TrainOutput { model, segmented })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DEFAULT_MARKER;

    fn wc(pairs: &[(&str, u64)]) -> WordCounts {
        WordCounts::from_pairs(DEFAULT_MARKER, pairs.iter().copied()).unwrap()
    }

    fn pair(l: &str, r: &str) -> (String, String) {
        (l.to_owned(), r.to_owned())
    }

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn most_frequent_pair_first() {
        // (▁,a)=5, (a,a)=3, (a,b)=2
        let model = train_bpe(&wc(&[("▁aa", 3), ("▁ab", 2)]), 4).unwrap();
        assert_eq!(model.merges(), &[pair("▁", "a")]);
        let vocab: Vec<&str> = model.vocab().iter().map(String::as_str).collect();
        assert_eq!(vocab, vec!["a", "b", "▁", "▁a"]);
    }

    #[test]
    fn k_equal_to_inventory_means_no_merges() {
        let model = train_bpe(&wc(&[("▁ab", 1)]), 3).unwrap();
        assert!(model.merges().is_empty());
        assert_eq!(model.vocab_size(), 3);
    }

    #[test]
    fn ties_break_by_code_point_order() {
        // Four characters, so the first merge needs k = 5.
        let model = train_bpe(&wc(&[("▁abc", 2)]), 5).unwrap();
        assert_eq!(model.merges(), &[pair("a", "b")]);
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let model = train_bpe(&wc(&[("▁ab", 1), ("▁cd", 1)]), 100).unwrap();
        assert!(model.merges().is_empty());
    }

    #[test]
    fn infeasible_and_empty() {
        assert!(matches!(
            train_bpe(&wc(&[("▁ab", 1)]), 2),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            train_bpe(&WordCounts::new(DEFAULT_MARKER), 10),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn replay_in_merge_order() {
        let model = BpeModel::new(
            DEFAULT_MARKER,
            DEFAULT_UNK,
            "▁ab".chars(),
            vec![pair("▁", "a"), pair("▁a", "b")],
        )
        .unwrap();
        assert_eq!(model.tokenize("▁aab"), toks(&["▁a", "a", "b"]));
        assert_eq!(model.tokenize("▁ab"), toks(&["▁ab"]));
    }

    #[test]
    fn character_fallback_and_unk() {
        let plain = BpeModel::new(DEFAULT_MARKER, DEFAULT_UNK, "▁ab".chars(), vec![]).unwrap();
        assert_eq!(plain.tokenize("▁ab"), toks(&["▁", "a", "b"]));

        let model =
            BpeModel::new(DEFAULT_MARKER, DEFAULT_UNK, "▁a".chars(), vec![pair("▁", "a")]).unwrap();
        assert_eq!(model.tokenize("▁aq"), toks(&["▁a", "<unk>"]));
    }

    #[test]
    fn overlapping_pairs_merge_leftmost_first() {
        let model = train_bpe(&wc(&[("▁aaa", 5)]), 3).unwrap();
        assert_eq!(model.merges(), &[pair("a", "a")]);
        assert_eq!(model.tokenize("▁aaa"), toks(&["▁", "aa", "a"]));
    }

    #[test]
    fn rejects_merges_out_of_order() {
        let err = BpeModel::new(
            DEFAULT_MARKER,
            DEFAULT_UNK,
            "▁ab".chars(),
            vec![pair("▁a", "b"), pair("▁", "a")],
        );
        assert!(err.is_err());
    }

    #[test]
    fn tokenizing_corpus_reproduces_training_state() {
        let counts = wc(&[
            ("▁lower", 5),
            ("▁lowest", 2),
            ("▁newer", 6),
            ("▁wider", 3),
            ("▁new", 2),
            ("▁aaaa", 3),
        ]);
        for k in 13..40 {
            let out = train_impl(&counts, k, DEFAULT_UNK).unwrap();
            for (word, state) in &out.segmented {
                assert_eq!(&out.model.tokenize(word), state, "k={k} word={word}");
            }
        }
    }
}
