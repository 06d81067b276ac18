//! Segmentation lattice over the code points of one word.

use super::model::{log_add, UnigramModel};

pub(crate) const NEG_INF: f64 = f64::NEG_INFINITY;

/// Relative tolerance under which two path scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Edge {
    pub start: u32,
    pub end: u32,
    /// `None` marks an unknown single character.
    pub piece: Option<u32>,
}

/// Edges sorted by `(start, end)`; positions are code-point offsets.
#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    pub len: usize,
    pub edges: Vec<Edge>,
}

impl Lattice {
    pub fn build(model: &UnigramModel, word: &str, with_unk: bool) -> Lattice {
        let offsets: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let len = offsets.len() - 1;
        let max_len = model.max_piece_chars().max(1);
        let mut edges = Vec::new();
        for start in 0..len {
            for end in start + 1..=(start + max_len).min(len) {
                let piece = model.piece_id(&word[offsets[start]..offsets[end]]);
                if piece.is_some() || (with_unk && end == start + 1) {
                    edges.push(Edge {
                        start: start as u32,
                        end: end as u32,
                        piece,
                    });
                }
            }
        }
        Lattice { len, edges }
    }

    /// Forward log scores: `alpha[i]` sums over all paths from 0 to `i`.
    /// Edges scored `NEG_INF` are excluded.
    pub fn forward(&self, score: impl Fn(&Edge) -> f64) -> Vec<f64> {
        let mut alpha = vec![NEG_INF; self.len + 1];
        alpha[0] = 0.0;
        for e in &self.edges {
            let s = score(e);
            let from = alpha[e.start as usize];
            if s == NEG_INF || from == NEG_INF {
                continue;
            }
            let to = &mut alpha[e.end as usize];
            *to = log_add(*to, from + s);
        }
        alpha
    }

    /// Backward log scores: `beta[i]` sums over all paths from `i` to the end.
    pub fn backward(&self, score: impl Fn(&Edge) -> f64) -> Vec<f64> {
        let mut beta = vec![NEG_INF; self.len + 1];
        beta[self.len] = 0.0;
        for e in self.edges.iter().rev() {
            let s = score(e);
            let to = beta[e.end as usize];
            if s == NEG_INF || to == NEG_INF {
                continue;
            }
            let from = &mut beta[e.start as usize];
            *from = log_add(*from, s + to);
        }
        beta
    }

    pub fn log_partition(&self, logprobs: &[f64]) -> f64 {
        if self.len == 0 {
            return NEG_INF;
        }
        self.forward(|e| piece_score(e, logprobs))[self.len]
    }

    /// Posterior expected occurrences of each piece, scaled by `weight`,
    /// appended to `out`. Returns the log partition function.
    pub fn expected_counts(&self, logprobs: &[f64], weight: f64, out: &mut Vec<(u32, f64)>) -> f64 {
        let score = |e: &Edge| piece_score(e, logprobs);
        let alpha = self.forward(score);
        let log_z = alpha[self.len];
        if log_z == NEG_INF {
            return log_z;
        }
        let beta = self.backward(score);
        for e in &self.edges {
            let Some(id) = e.piece else { continue };
            let lp = alpha[e.start as usize] + logprobs[id as usize] + beta[e.end as usize] - log_z;
            if lp > NEG_INF {
                out.push((id, weight * lp.exp()));
            }
        }
        log_z
    }

    /// `poly[n]` is the log of the summed probability of all segmentations
    /// with exactly `n` tokens.
    pub fn token_count_polynomial(&self, logprobs: &[f64]) -> Vec<f64> {
        let n = self.len;
        let mut table = vec![vec![NEG_INF; n + 1]; n + 1];
        table[0][0] = 0.0;
        for e in &self.edges {
            let s = piece_score(e, logprobs);
            if s == NEG_INF {
                continue;
            }
            let (start, end) = (e.start as usize, e.end as usize);
            for k in 0..=start {
                let from = table[start][k];
                if from == NEG_INF {
                    continue;
                }
                table[end][k + 1] = log_add(table[end][k + 1], from + s);
            }
        }
        table.swap_remove(n)
    }

    /// Best path under the tie rules documented on [`UnigramModel::viterbi`].
    /// Returns an empty path when the word cannot be segmented.
    pub fn viterbi(&self, logprobs: &[f64], unk_logprob: f64) -> Vec<Edge> {
        #[derive(Clone, Copy)]
        struct Best {
            score: f64,
            tokens: usize,
            edge: Option<Edge>,
        }
        let none = Best {
            score: NEG_INF,
            tokens: usize::MAX,
            edge: None,
        };
        let mut best = vec![none; self.len + 1];
        best[self.len] = Best {
            score: 0.0,
            tokens: 0,
            edge: None,
        };
        for e in self.edges.iter().rev() {
            let next = best[e.end as usize];
            if next.score == NEG_INF {
                continue;
            }
            let s = match e.piece {
                Some(id) => logprobs[id as usize],
                None => unk_logprob,
            };
            let cand = Best {
                score: s + next.score,
                tokens: next.tokens + 1,
                edge: Some(*e),
            };
            let cur = &mut best[e.start as usize];
            let replace = match cur.edge {
                None => true,
                Some(cur_edge) => {
                    if tied(cand.score, cur.score) {
                        cand.tokens < cur.tokens
                            || (cand.tokens == cur.tokens && e.end > cur_edge.end)
                    } else {
                        cand.score > cur.score
                    }
                }
            };
            if replace {
                *cur = cand;
            }
        }
        let mut path = Vec::new();
        let mut pos = 0;
        while pos < self.len {
            let Some(edge) = best[pos].edge else {
                return Vec::new();
            };
            path.push(edge);
            pos = edge.end as usize;
        }
        path
    }
}

fn piece_score(e: &Edge, logprobs: &[f64]) -> f64 {
    match e.piece {
        Some(id) => logprobs[id as usize],
        None => NEG_INF,
    }
}

pub(crate) fn tied(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= TIE_TOLERANCE * scale
}
