//! Boundary-level agreement between tokenizer segmentations and reference
//! morphological segmentations.
//!
//! Only references with two or more morphs are scored. Each word is
//! tokenized with the marker prepended; the marker is then stripped, so a
//! word kept whole has no internal boundaries. Precision and recall are
//! taken over boundary counts weighted by each reference's weight.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read};

use crate::error::{Error, Result};
use crate::tokenizer::Model;

/// Separator between morphs in the reference file.
pub const MORPH_SEPARATOR: char = '|';

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSegmentation {
    pub word: String,
    pub morphs: Vec<String>,
    pub weight: f64,
}

impl ReferenceSegmentation {
    pub fn new(morphs: Vec<String>, weight: f64) -> Result<Self> {
        if morphs.is_empty() || morphs.iter().any(String::is_empty) {
            return Err(Error::InvalidArgument("empty morph".into()));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidArgument(format!("weight {weight} is not a non-negative number")));
        }
        Ok(ReferenceSegmentation {
            word: morphs.concat(),
            morphs,
            weight,
        })
    }
}

/// Reads `word<TAB>weight<TAB>morph|morph|...` rows. Blank lines and lines
/// starting with `#` are skipped. Literal pipes inside morphs are not
/// supported.
pub fn read_references<R: Read>(reader: R) -> Result<Vec<ReferenceSegmentation>> {
    let mut refs = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let bad = |msg: String| Error::BadReference { line: lineno, msg };
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [word, weight, morphs] = fields[..] else {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| bad(format!("weight {weight:?} is not a number")))?;
        let morphs: Vec<String> = morphs.split(MORPH_SEPARATOR).map(str::to_owned).collect();
        let reference = ReferenceSegmentation::new(morphs, weight).map_err(|e| bad(e.to_string()))?;
        if reference.word != word {
            return Err(bad(format!(
                "morphs concatenate to {:?}, not {word:?}",
                reference.word
            )));
        }
        refs.push(reference);
    }
    Ok(refs)
}

/// Internal split offsets (cumulative code-point lengths of every token
/// but the last) after removing the marker from the first token.
pub fn boundaries<S: AsRef<str>>(tokens: &[S], marker: char) -> BTreeSet<usize> {
    let mut lengths: Vec<usize> = tokens.iter().map(|t| t.as_ref().chars().count()).collect();
    if let Some(first) = tokens.first() {
        if first.as_ref().starts_with(marker) {
            lengths[0] -= 1;
        }
    }
    let total: usize = lengths.iter().sum();
    let mut out = BTreeSet::new();
    let mut pos = 0;
    for len in &lengths[..lengths.len().saturating_sub(1)] {
        pos += len;
        if pos > 0 && pos < total {
            out.insert(pos);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub weighted_candidate_boundaries: f64,
    pub weighted_reference_boundaries: f64,
    pub weighted_matches: f64,
    /// References scored.
    pub words_evaluated: usize,
    /// References dropped for having a single morph.
    pub skipped_single_morph: usize,
    /// References dropped because their tokenization contains the unk token.
    pub skipped_unk: usize,
}

/// Scores `model` against `references`.
pub fn boundary_prf(model: &Model, references: &[ReferenceSegmentation]) -> Result<BoundaryReport> {
    boundary_prf_with(
        |word| model.tokenize_word(word),
        model.marker(),
        model.unk_token(),
        references,
    )
}

/// Scores an arbitrary word tokenizer. `tokenize` receives the
/// marker-prefixed word.
pub fn boundary_prf_with(
    tokenize: impl Fn(&str) -> Vec<String>,
    marker: char,
    unk_token: &str,
    references: &[ReferenceSegmentation],
) -> Result<BoundaryReport> {
    let (mut cand, mut reference, mut matches) = (0.0, 0.0, 0.0);
    let (mut evaluated, mut single, mut unk) = (0, 0, 0);
    for r in references {
        if r.morphs.len() < 2 {
            single += 1;
            continue;
        }
        let mut word = String::with_capacity(r.word.len() + 4);
        word.push(marker);
        word.push_str(&r.word);
        let tokens = tokenize(&word);
        if tokens.iter().any(|t| t == unk_token) {
            unk += 1;
            continue;
        }
        let predicted = boundaries(&tokens, marker);
        let gold = boundaries(&r.morphs, marker);
        cand += r.weight * predicted.len() as f64;
        reference += r.weight * gold.len() as f64;
        matches += r.weight * predicted.intersection(&gold).count() as f64;
        evaluated += 1;
    }
    if evaluated == 0 && unk == 0 {
        return Err(Error::NoMultimorphemicReferences);
    }
    let precision = if cand > 0.0 { matches / cand } else { 0.0 };
    let recall = if reference > 0.0 { matches / reference } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BoundaryReport {
        precision,
        recall,
        f1,
        weighted_candidate_boundaries: cand,
        weighted_reference_boundaries: reference,
        weighted_matches: matches,
        words_evaluated: evaluated,
        skipped_single_morph: single,
        skipped_unk: unk,
    })
}
