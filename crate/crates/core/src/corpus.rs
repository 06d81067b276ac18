//! Corpus ingestion: raw text to marker-prefixed word counts.
//!
//! Text is NFC-normalized, split into units (whitespace-separated words, or
//! whole lines for scripts written without spaces), and each unit is
//! prefixed with the word-boundary marker before counting. Both trainers
//! consume the resulting [`WordCounts`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Default word-boundary marker, U+2581 LOWER ONE EIGHTH BLOCK.
pub const DEFAULT_MARKER: char = '\u{2581}';

/// How raw text is cut into countable units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Split on Unicode whitespace.
    #[default]
    Whitespace,
    /// Each non-empty line is one unit; whitespace inside the line is dropped.
    Line,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(SplitMode::Whitespace),
            "line" => Ok(SplitMode::Line),
            other => Err(Error::InvalidArgument(format!("unknown split mode {other:?}"))),
        }
    }
}

/// Multiset of marker-prefixed words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordCounts {
    entries: BTreeMap<String, u64>,
    marker: char,
    total_words: u64,
}

impl WordCounts {
    pub fn new(marker: char) -> Self {
        WordCounts {
            entries: BTreeMap::new(),
            marker,
            total_words: 0,
        }
    }

    /// Builds counts from already-prefixed words. Each key must start with
    /// exactly one marker and contain no whitespace; zero counts are dropped.
    pub fn from_pairs<I, S>(marker: char, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut counts = WordCounts::new(marker);
        for (word, count) in pairs {
            let word = word.into();
            let mut chars = word.chars();
            if chars.next() != Some(marker) {
                return Err(Error::InvalidArgument(format!(
                    "word {word:?} does not start with the marker"
                )));
            }
            if chars.any(|c| c == marker || c.is_whitespace()) {
                return Err(Error::InvalidArgument(format!(
                    "word {word:?} contains whitespace or a second marker"
                )));
            }
            if count > 0 {
                *counts.entries.entry(word).or_insert(0) += count;
                counts.total_words += count;
            }
        }
        Ok(counts)
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn total_words(&self) -> u64 {
        self.total_words
    }

    pub fn total_word_types(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> u64 {
        self.entries.get(word).copied().unwrap_or(0)
    }

    /// Iterates `(word, count)` in code-point order of the words.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.entries.iter().map(|(w, &c)| (w.as_str(), c))
    }

    fn add_unit(&mut self, unit: &str) {
        let mut word = String::with_capacity(unit.len() + self.marker.len_utf8());
        word.push(self.marker);
        word.push_str(unit);
        *self.entries.entry(word).or_insert(0) += 1;
        self.total_words += 1;
    }

    /// Adds every count of `other` into `self`. Commutative and associative,
    /// so sharded ingestion can be reduced in any order.
    pub fn merge(&mut self, other: &WordCounts) -> Result<()> {
        if other.marker != self.marker {
            return Err(Error::MixedMarkers(self.marker, other.marker));
        }
        for (word, count) in other.iter() {
            *self.entries.entry(word.to_owned()).or_insert(0) += count;
        }
        self.total_words += other.total_words;
        Ok(())
    }

    pub fn char_inventory(&self) -> CharInventory {
        char_inventory(self)
    }
}

/// The set of code points present in a [`WordCounts`], marker included.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CharInventory {
    chars: BTreeSet<char>,
}

impl CharInventory {
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains(&c)
    }

    /// Characters in code-point order.
    pub fn iter(&self) -> impl Iterator<Item = char> + '_ {
        self.chars.iter().copied()
    }
}

impl FromIterator<char> for CharInventory {
    fn from_iter<T: IntoIterator<Item = char>>(iter: T) -> Self {
        CharInventory {
            chars: iter.into_iter().collect(),
        }
    }
}

pub fn char_inventory(counts: &WordCounts) -> CharInventory {
    counts.entries.keys().flat_map(|w| w.chars()).collect()
}

/// Ingests a byte stream. Lines are read incrementally; the marker check and
/// UTF-8 validation report positions relative to the start of the stream.
pub fn ingest<R: Read>(reader: R, marker: char, mode: SplitMode) -> Result<WordCounts> {
    let mut reader = BufReader::new(reader);
    let mut counts = WordCounts::new(marker);
    let mut buf = Vec::new();
    let mut offset = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let line = std::str::from_utf8(&buf).map_err(|e| Error::InvalidUtf8 {
            offset: offset + e.valid_up_to(),
        })?;
        ingest_line(&mut counts, line, mode)?;
        offset += n;
    }
    Ok(counts)
}

pub fn ingest_str(text: &str, marker: char, mode: SplitMode) -> Result<WordCounts> {
    ingest(text.as_bytes(), marker, mode)
}

fn ingest_line(counts: &mut WordCounts, raw: &str, mode: SplitMode) -> Result<()> {
    if raw.contains(counts.marker) {
        return Err(Error::MarkerCollision {
            marker: counts.marker,
        });
    }
    let normalized: String = raw.nfc().collect();
    // NFC can compose a character equal to the marker only if the marker
    // itself has a decomposition, so this re-check is nearly always a no-op.
    if normalized.contains(counts.marker) {
        return Err(Error::MarkerCollision {
            marker: counts.marker,
        });
    }
    match mode {
        SplitMode::Whitespace => {
            for unit in normalized.split_whitespace() {
                counts.add_unit(unit);
            }
        }
        SplitMode::Line => {
            let unit: String = normalized.chars().filter(|c| !c.is_whitespace()).collect();
            if !unit.is_empty() {
                counts.add_unit(&unit);
            }
        }
    }
    Ok(())
}

/// Opens a corpus for reading. `-` means standard input; paths ending in
/// `.gz` are decompressed transparently.
pub fn open_input(path: &Path) -> Result<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(MultiGzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}
