//! Unigram-LM vocabulary training: seed with frequent substrings, then
//! alternate EM fitting with likelihood-based pruning until the target size
//! is reached.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::bpe::DEFAULT_UNK;
use crate::corpus::WordCounts;
use crate::error::{Error, Result};

use super::lattice::{Lattice, NEG_INF};
use super::model::{log_sum_exp, UnigramModel};

/// Expected counts below this are raised to it before normalizing, so every
/// piece keeps a finite log probability.
pub const COUNT_FLOOR: f64 = 1e-10;

/// Above this many (unprotected piece × word type) pairs the renormalization
/// term of the token losses is interpolated instead of evaluated per piece.
const EXACT_RENORM_BUDGET: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct UnigramConfig {
    pub vocab_size: usize,
    pub alpha: f64,
    pub em_iterations: usize,
    pub max_token_len: usize,
    /// Seed cap; `None` means 100 × `vocab_size`.
    pub max_seed: Option<usize>,
    pub unk_token: String,
}

impl Default for UnigramConfig {
    fn default() -> Self {
        UnigramConfig {
            vocab_size: 20_000,
            alpha: 0.25,
            em_iterations: 2,
            max_token_len: 16,
            max_seed: None,
            unk_token: DEFAULT_UNK.to_owned(),
        }
    }
}

/// Per-piece likelihood loss of removal. Protected pieces are not scored.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    pub losses: BTreeMap<String, f64>,
    pub protected: BTreeSet<String>,
}

/// Initial vocabulary: every character, plus the substrings (up to
/// `max_token_len` code points) with a count-weighted occurrence of at least
/// two, keeping the `max_seed` most frequent entries overall. Probabilities
/// are proportional to the substring counts.
pub fn seed_vocab(
    counts: &WordCounts,
    max_seed: usize,
    max_token_len: usize,
    unk_token: &str,
) -> Result<UnigramModel> {
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let inventory = counts.char_inventory();
    if max_seed < inventory.len() {
        return Err(Error::Infeasible(format!(
            "seed cap {max_seed} is below the {} corpus characters",
            inventory.len()
        )));
    }
    if inventory.iter().any(|c| unk_token.chars().eq(std::iter::once(c))) {
        return Err(Error::InvalidArgument(format!(
            "unk token {unk_token:?} is a corpus character"
        )));
    }

    let mut substrings: HashMap<&str, u64> = HashMap::new();
    for (word, count) in counts.iter() {
        let offsets: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n = offsets.len() - 1;
        for start in 0..n {
            for end in start + 1..=(start + max_token_len).min(n) {
                *substrings.entry(&word[offsets[start]..offsets[end]]).or_insert(0) += count;
            }
        }
    }

    let mut table: BTreeMap<String, f64> = BTreeMap::new();
    for c in inventory.iter() {
        let s = c.to_string();
        let n = substrings[s.as_str()];
        table.insert(s, n as f64);
    }
    let mut candidates: Vec<(&str, u64)> = substrings
        .into_iter()
        .filter(|&(s, n)| n >= 2 && s.chars().nth(1).is_some() && s != unk_token)
        .collect();
    candidates.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (s, n) in candidates.into_iter().take(max_seed - inventory.len()) {
        table.insert(s.to_owned(), n as f64);
    }
    table.insert(unk_token.to_owned(), COUNT_FLOOR);
    normalize(&mut table);
    Ok(UnigramModel::from_table(counts.marker(), unk_token.to_owned(), table))
}

fn normalize(table: &mut BTreeMap<String, f64>) {
    let log_total = table.values().sum::<f64>().ln();
    for v in table.values_mut() {
        *v = v.ln() - log_total;
    }
}

fn word_list(counts: &WordCounts) -> Vec<(&str, f64)> {
    counts.iter().map(|(w, c)| (w, c as f64)).collect()
}

fn build_lattices(model: &UnigramModel, words: &[(&str, f64)]) -> Vec<Lattice> {
    words
        .par_iter()
        .map(|(w, _)| Lattice::build(model, w, false))
        .collect()
}

/// Σ over word types of count × marginal log likelihood.
pub fn corpus_loglik(model: &UnigramModel, counts: &WordCounts) -> f64 {
    let words = word_list(counts);
    let per_word: Vec<f64> = words
        .par_iter()
        .map(|&(w, c)| c * model.marginal_loglik(w))
        .collect();
    per_word.into_iter().sum()
}

/// One EM iteration. Returns the updated model and the corpus log
/// likelihood of the model that was passed in.
fn em_step(model: &UnigramModel, words: &[(&str, f64)]) -> (UnigramModel, f64) {
    let lattices = build_lattices(model, words);
    let logprobs = model.logprobs();
    let per_word: Vec<(Vec<(u32, f64)>, f64)> = lattices
        .par_iter()
        .zip(words.par_iter())
        .map(|(lattice, &(_, c))| {
            let mut out = Vec::new();
            let log_z = lattice.expected_counts(logprobs, c, &mut out);
            (out, c * log_z)
        })
        .collect();

    let mut expected = vec![0.0f64; model.len()];
    let mut loglik = 0.0;
    for (contrib, ll) in per_word {
        for (id, v) in contrib {
            expected[id as usize] += v;
        }
        loglik += ll;
    }
    let table = model
        .pieces()
        .iter()
        .zip(expected)
        .map(|(p, e)| (p.clone(), e.max(COUNT_FLOOR)))
        .collect::<BTreeMap<_, _>>();
    let mut table = table;
    normalize(&mut table);
    (
        UnigramModel::from_table(model.marker(), model.unk_token().to_owned(), table),
        loglik,
    )
}

/// Runs `iterations` EM steps: expected piece counts from forward-backward
/// over each word's lattice (weighted by word count), then re-estimated
/// probabilities.
pub fn em_fit(model: &UnigramModel, counts: &WordCounts, iterations: usize) -> UnigramModel {
    em_fit_traced(model, counts, iterations).0
}

/// Like [`em_fit`], also returning the corpus log likelihood before each
/// iteration and after the last one (`iterations + 1` values).
pub fn em_fit_traced(
    model: &UnigramModel,
    counts: &WordCounts,
    iterations: usize,
) -> (UnigramModel, Vec<f64>) {
    let words = word_list(counts);
    let mut model = model.clone();
    let mut trace = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let (next, ll) = em_step(&model, &words);
        trace.push(ll);
        model = next;
    }
    trace.push(corpus_loglik(&model, counts));
    (model, trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) enum RenormStrategy {
    Auto,
    Exact,
    Interpolated,
}

/// Likelihood lost by removing each unprotected piece: corpus log
/// likelihood under the model minus that under the model without the piece,
/// renormalized. Uses full marginal likelihoods.
pub fn token_losses(model: &UnigramModel, counts: &WordCounts) -> LossTable {
    token_losses_with(model, counts, RenormStrategy::Auto)
}

/// Removing piece `t` with probability `p` rescales every other piece by
/// `r = 1 / (1 - p)`, so a segmentation with `n` tokens gains a factor
/// `r^n`. With `x = ln r` and `K_w(x) = ln E[e^{xN}]` the cumulant generating
/// function of the token count under word `w`'s posterior:
///
/// ```text
/// L_t = -G(x) + Σ_{w ∋ t} c_w [ln Z_w + K_w(x) - ln Z'_w(x)],   G(x) = Σ_w c_w K_w(x)
/// ```
///
/// where `Z'_w(x)` sums the segmentations of `w` avoiding `t` under the
/// rescaled probabilities. Only words whose lattice contains `t` need a
/// lattice pass; `G` is shared by all pieces.
pub(crate) fn token_losses_with(
    model: &UnigramModel,
    counts: &WordCounts,
    strategy: RenormStrategy,
) -> LossTable {
    let words = word_list(counts);
    let lattices = build_lattices(model, &words);
    let logprobs = model.logprobs();

    // Per word: ln Z_w and the normalized token-count distribution.
    let stats: Vec<(f64, Vec<f64>)> = lattices
        .par_iter()
        .map(|lattice| {
            let poly = lattice.token_count_polynomial(logprobs);
            let log_z = log_sum_exp(poly.iter().copied());
            let q = poly.into_iter().map(|v| v - log_z).collect();
            (log_z, q)
        })
        .collect();
    let cgf = CorpusCgf {
        words: words
            .iter()
            .zip(&stats)
            .filter(|(_, (log_z, _))| *log_z > NEG_INF)
            .map(|(&(_, c), (_, q))| (c, q.as_slice()))
            .collect(),
    };

    let mut containing: Vec<Vec<u32>> = vec![Vec::new(); model.len()];
    for (idx, lattice) in lattices.iter().enumerate() {
        let mut ids: Vec<u32> = lattice.edges.iter().filter_map(|e| e.piece).collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            containing[id as usize].push(idx as u32);
        }
    }

    let mut protected = BTreeSet::new();
    let mut scored: Vec<(u32, f64)> = Vec::new();
    for (id, piece) in model.pieces().iter().enumerate() {
        if model.is_protected(piece) {
            protected.insert(piece.clone());
        } else {
            let x = -(-logprobs[id].exp()).ln_1p();
            scored.push((id as u32, x));
        }
    }

    let use_exact = match strategy {
        RenormStrategy::Exact => true,
        RenormStrategy::Interpolated => false,
        RenormStrategy::Auto => scored.len().saturating_mul(words.len()) <= EXACT_RENORM_BUDGET,
    };
    let x_max = scored.iter().map(|&(_, x)| x).fold(0.0, f64::max);
    let interpolant = if use_exact || scored.is_empty() {
        None
    } else {
        Chebyshev::fit_validated(|x| cgf.eval(x), x_max)
    };

    let losses: Vec<f64> = scored
        .par_iter()
        .map(|&(id, x)| {
            let global = match &interpolant {
                Some(cheb) => cheb.eval(x),
                None => cgf.eval(x),
            };
            let mut local = 0.0;
            for &w in &containing[id as usize] {
                let w = w as usize;
                let (log_z, q) = &stats[w];
                if *log_z == NEG_INF {
                    continue;
                }
                let without = lattices[w].forward(|e| match e.piece {
                    Some(p) if p == id => NEG_INF,
                    Some(p) => logprobs[p as usize] + x,
                    None => NEG_INF,
                })[lattices[w].len];
                if without == NEG_INF {
                    return f64::INFINITY;
                }
                local += words[w].1 * (log_z + cgf_word(q, x) - without);
            }
            local - global
        })
        .collect();

    LossTable {
        losses: scored
            .iter()
            .zip(losses)
            .map(|(&(id, _), l)| (model.pieces()[id as usize].clone(), l))
            .collect(),
        protected,
    }
}

fn cgf_word(q: &[f64], x: f64) -> f64 {
    log_sum_exp(q.iter().enumerate().map(|(n, &lq)| lq + x * n as f64))
}

/// `G(x) = Σ_w c_w ln Σ_n q_w[n] e^{xn}`.
struct CorpusCgf<'a> {
    words: Vec<(f64, &'a [f64])>,
}

impl CorpusCgf<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.words.iter().map(|&(c, q)| c * cgf_word(q, x)).sum()
    }
}

/// Chebyshev interpolant on `[0, b]`.
#[derive(Debug, Clone)]
pub(crate) struct Chebyshev {
    b: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    pub fn fit(f: impl Fn(f64) -> f64, b: f64, nodes: usize) -> Chebyshev {
        let n = nodes as f64;
        let values: Vec<f64> = (0..nodes)
            .map(|k| {
                let theta = std::f64::consts::PI * (k as f64 + 0.5) / n;
                f(0.5 * b * (1.0 + theta.cos()))
            })
            .collect();
        let coeffs = (0..nodes)
            .map(|j| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / n).cos())
                    .sum();
                2.0 * s / n
            })
            .collect();
        Chebyshev { b, coeffs }
    }

    /// Fits with increasing node counts until the interpolant agrees with
    /// `f` at off-node check points to a relative 1e-11. `None` if no fit
    /// up to 512 nodes qualifies.
    pub fn fit_validated(f: impl Fn(f64) -> f64, b: f64) -> Option<Chebyshev> {
        if b <= 0.0 {
            return None;
        }
        let checks: Vec<(f64, f64)> = (0..9)
            .map(|i| {
                let x = b * (i as f64 + 0.37) / 9.0;
                (x, f(x))
            })
            .chain(std::iter::once((b, f(b))))
            .collect();
        let scale = checks.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
        let mut nodes = 32;
        while nodes <= 512 {
            let cheb = Chebyshev::fit(&f, b, nodes);
            let err = checks
                .iter()
                .map(|&(x, v)| (cheb.eval(x) - v).abs())
                .fold(0.0, f64::max);
            if err <= 1e-11 * scale {
                return Some(cheb);
            }
            nodes *= 2;
        }
        None
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = 2.0 * x / self.b - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + 0.5 * self.coeffs[0]
    }
}

/// Pieces `prune` removes: `min(|V| - k, ⌊α|V|⌋)`.
pub fn removal_count(vocab_len: usize, k: usize, alpha: f64) -> usize {
    if vocab_len <= k {
        return 0;
    }
    let by_fraction = (alpha * vocab_len as f64).floor() as usize;
    (vocab_len - k).min(by_fraction)
}

/// Removes the [`removal_count`] unprotected pieces whose removal costs the
/// least likelihood (smallest loss; ties by piece order) and renormalizes.
pub fn prune(model: &UnigramModel, losses: &LossTable, k: usize, alpha: f64) -> Result<UnigramModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    check_protected_fit(model, k)?;
    let n = removal_count(model.len(), k, alpha);
    remove_lowest(model, losses, n)
}

fn check_protected_fit(model: &UnigramModel, k: usize) -> Result<()> {
    let protected = model.pieces().iter().filter(|p| model.is_protected(p)).count();
    if protected > k {
        return Err(Error::Infeasible(format!(
            "{protected} protected pieces (characters and unk) exceed vocabulary size {k}"
        )));
    }
    Ok(())
}

fn remove_lowest(model: &UnigramModel, losses: &LossTable, n: usize) -> Result<UnigramModel> {
    if n == 0 {
        return Ok(model.clone());
    }
    let mut ranked: Vec<(&str, f64)> = losses
        .losses
        .iter()
        .filter(|(p, _)| model.contains(p) && !model.is_protected(p))
        .map(|(p, &l)| (p.as_str(), l))
        .collect();
    if ranked.len() < n {
        return Err(Error::Infeasible(format!(
            "asked to remove {n} pieces but only {} are scored",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let doomed: BTreeSet<&str> = ranked[..n].iter().map(|&(p, _)| p).collect();
    Ok(model.retain(|p| !doomed.contains(p)))
}

/// Full training loop: seed, then {EM, losses, prune} while the vocabulary
/// exceeds `vocab_size`, then a final EM fit.
pub fn train_unigram(counts: &WordCounts, config: &UnigramConfig) -> Result<UnigramModel> {
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {} outside [0, 1]",
            config.alpha
        )));
    }
    if config.em_iterations == 0 || config.max_token_len == 0 {
        return Err(Error::InvalidArgument(
            "EM iterations and maximum token length must be at least 1".into(),
        ));
    }
    let k = config.vocab_size;
    let chars = counts.char_inventory().len();
    if k < chars + 1 {
        return Err(Error::Infeasible(format!(
            "vocabulary size {k} leaves no room for {chars} characters plus the unk token"
        )));
    }
    let max_seed = config.max_seed.unwrap_or(k.saturating_mul(100)).max(chars);
    let mut model = seed_vocab(counts, max_seed, config.max_token_len, &config.unk_token)?;
    check_protected_fit(&model, k)?;
    while model.len() > k {
        model = em_fit(&model, counts, config.em_iterations);
        let losses = token_losses(&model, counts);
        // ⌊α|V|⌋ can be 0 on small vocabularies; always make progress.
        let n = removal_count(model.len(), k, config.alpha).max(1);
        model = remove_lowest(&model, &losses, n)?;
    }
    Ok(em_fit(&model, counts, config.em_iterations))
}
