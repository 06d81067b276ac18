//! Command-line front end. `main.rs` parses arguments and maps errors to
//! exit codes; everything else lives here so it can be tested in-process.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bpe::{self, DEFAULT_UNK};
use crate::corpus::{self, SplitMode, WordCounts};
use crate::error::{Error, Result};
use crate::model_file::{ModelFile, TrainingMetadata};
use crate::morpho;
use crate::profile;
use crate::tokenizer::Model;
use crate::unigram::{self, UnigramConfig};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SUBTOK_THREADS";

pub mod exit_code {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
    pub const CORRUPT_MODEL: i32 = 5;
    pub const MARKER_COLLISION: i32 = 6;
    pub const INVALID_INPUT: i32 = 7;
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => exit_code::IO,
        Error::Infeasible(_) | Error::EmptyCorpus => exit_code::INFEASIBLE,
        Error::CorruptModel(_) => exit_code::CORRUPT_MODEL,
        Error::MarkerCollision { .. } => exit_code::MARKER_COLLISION,
        Error::InvalidUtf8 { .. }
        | Error::InvalidArgument(_)
        | Error::BadReference { .. }
        | Error::NoMultimorphemicReferences
        | Error::MixedMarkers(..) => exit_code::INVALID_INPUT,
    }
}

#[derive(Debug, Parser)]
#[command(name = "subtok", version, about = "Train, apply and compare subword tokenizers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Bpe,
    Unigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Whitespace,
    Line,
}

impl From<Mode> for SplitMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Whitespace => SplitMode::Whitespace,
            Mode::Line => SplitMode::Line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputKind {
    Tokens,
    Ids,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    All,
    A,
    B,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tokenizer and write the model file.
    Train {
        /// Corpus path (`-` for stdin, `.gz` decompressed).
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "unigram")]
        method: Method,
        #[arg(long, default_value_t = 20_000)]
        vocab_size: usize,
        /// Fraction of the vocabulary pruned per unigram round.
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, default_value_t = corpus::DEFAULT_MARKER)]
        marker: char,
        #[arg(long, value_enum, default_value = "whitespace")]
        mode: Mode,
        #[arg(long, default_value = DEFAULT_UNK)]
        unk_token: String,
        /// EM iterations per unigram pruning round.
        #[arg(long, default_value_t = 2)]
        em_iterations: usize,
        #[arg(long, default_value_t = 16)]
        max_token_len: usize,
        /// Unigram seed vocabulary cap (default 100 × vocab size).
        #[arg(long)]
        max_seed: Option<usize>,
    },
    /// Tokenize text line by line.
    Tokenize {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long, default_value = "-")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "tokens")]
        output: OutputKind,
        #[arg(long, value_enum, default_value = "whitespace")]
        mode: Mode,
    },
    /// Profile a model's vocabulary over a corpus.
    Profile {
        #[arg(short, long)]
        model: PathBuf,
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "whitespace")]
        mode: Mode,
        /// Write summary.json and the TSV tables into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Tokens whose corpus frequency differs most between two models.
    Diff {
        #[arg(long)]
        model_a: PathBuf,
        #[arg(long)]
        model_b: PathBuf,
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "whitespace")]
        mode: Mode,
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long, value_enum, default_value = "all")]
        direction: Direction,
    },
    /// Boundary precision/recall/F1 against reference segmentations.
    EvalMorph {
        #[arg(short, long)]
        model: PathBuf,
        /// TSV rows: word, weight, morphs separated by `|`.
        #[arg(short, long)]
        references: PathBuf,
    },
}

/// Applies the thread-count environment variable, if set.
pub fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={value:?} is not a number")))?;
        // Fails only if a global pool already exists; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train {
            corpus,
            output,
            method,
            vocab_size,
            alpha,
            marker,
            mode,
            unk_token,
            em_iterations,
            max_token_len,
            max_seed,
        } => {
            let (counts, digest) = read_corpus_with_digest(&corpus, marker, mode.into())?;
            let model = match method {
                Method::Bpe => Model::Bpe(bpe::train_bpe_with_unk(&counts, vocab_size, &unk_token)?),
                Method::Unigram => Model::Unigram(unigram::train_unigram(
                    &counts,
                    &UnigramConfig {
                        vocab_size,
                        alpha,
                        em_iterations,
                        max_token_len,
                        max_seed,
                        unk_token,
                    },
                )?),
            };
            let file = ModelFile {
                model,
                training: Some(TrainingMetadata {
                    vocab_size: vocab_size as u64,
                    alpha,
                    corpus_digest: digest,
                    tool_version: env!("CARGO_PKG_VERSION").to_owned(),
                }),
            };
            file.save(&output)
        }
        Command::Tokenize {
            model,
            input,
            output,
            mode,
        } => {
            let model = ModelFile::load(&model)?.model;
            let reader = corpus::open_input(&input)?;
            tokenize_stream(&model, reader, stdout, output, mode.into())
        }
        Command::Profile {
            model,
            corpus,
            mode,
            out_dir,
        } => {
            let model = ModelFile::load(&model)?.model;
            let counts = read_corpus(&corpus, model.marker(), mode.into())?;
            let profile = profile::profile_vocab(&model, &counts);
            match out_dir {
                Some(dir) => write_profile_dir(&dir, &model, &profile),
                None => {
                    stdout.write_all(profile_summary_tsv(&model, &profile).as_bytes())?;
                    Ok(())
                }
            }
        }
        Command::Diff {
            model_a,
            model_b,
            corpus,
            mode,
            top,
            direction,
        } => {
            let a = ModelFile::load(&model_a)?.model;
            let b = ModelFile::load(&model_b)?.model;
            if a.marker() != b.marker() {
                return Err(Error::MixedMarkers(a.marker(), b.marker()));
            }
            let counts = read_corpus(&corpus, a.marker(), mode.into())?;
            let report = profile::frequency_diff(&a, &b, &counts, top)?;
            let rows = match direction {
                Direction::All => &report.rows,
                Direction::A => &report.more_in_a,
                Direction::B => &report.more_in_b,
            };
            writeln!(stdout, "token\tfreq_a\tfreq_b\tdiff")?;
            for r in rows {
                writeln!(stdout, "{}\t{}\t{}\t{}", r.token, r.freq_a, r.freq_b, r.diff)?;
            }
            Ok(())
        }
        Command::EvalMorph { model, references } => {
            let model = ModelFile::load(&model)?.model;
            let refs = morpho::read_references(fs::File::open(&references)?)?;
            let report = morpho::boundary_prf(&model, &refs)?;
            writeln!(stdout, "metric\tvalue")?;
            writeln!(stdout, "precision\t{:.9}", report.precision)?;
            writeln!(stdout, "recall\t{:.9}", report.recall)?;
            writeln!(stdout, "f1\t{:.9}", report.f1)?;
            writeln!(stdout, "weighted_candidate_boundaries\t{}", report.weighted_candidate_boundaries)?;
            writeln!(stdout, "weighted_reference_boundaries\t{}", report.weighted_reference_boundaries)?;
            writeln!(stdout, "weighted_matches\t{}", report.weighted_matches)?;
            writeln!(stdout, "words_evaluated\t{}", report.words_evaluated)?;
            writeln!(stdout, "skipped_single_morph\t{}", report.skipped_single_morph)?;
            writeln!(stdout, "skipped_unk\t{}", report.skipped_unk)?;
            Ok(())
        }
    }
}

/// Passes bytes through while hashing them.
struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

fn read_corpus(path: &Path, marker: char, mode: SplitMode) -> Result<WordCounts> {
    corpus::ingest(corpus::open_input(path)?, marker, mode)
}

fn read_corpus_with_digest(path: &Path, marker: char, mode: SplitMode) -> Result<(WordCounts, String)> {
    let mut reader = HashingReader {
        inner: corpus::open_input(path)?,
        hasher: Sha256::new(),
    };
    let counts = corpus::ingest(&mut reader, marker, mode)?;
    // Drain anything the line reader left unread.
    io::copy(&mut reader, &mut io::sink())?;
    let digest: String = reader
        .hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok((counts, format!("sha256:{digest}")))
}

const TOKENIZE_BATCH: usize = 4096;

/// One output line per input line. Batches are tokenized in parallel and
/// written in input order.
pub fn tokenize_stream(
    model: &Model,
    input: impl Read,
    output: &mut dyn Write,
    kind: OutputKind,
    mode: SplitMode,
) -> Result<()> {
    let ids: HashMap<String, usize> = match kind {
        OutputKind::Ids => model
            .tokens_in_id_order()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect(),
        OutputKind::Tokens => HashMap::new(),
    };
    let render = |line: &str| -> String {
        let tokens = model.tokenize_line(line, mode);
        match kind {
            OutputKind::Tokens => tokens.join(" "),
            OutputKind::Ids => tokens
                .iter()
                .map(|t| ids.get(t).copied().unwrap_or(0).to_string())
                .collect::<Vec<_>>()
                .join(" "),
        }
    };
    let mut out = BufWriter::new(output);
    let mut lines = BufReader::new(input).lines();
    loop {
        let batch: Vec<String> = lines
            .by_ref()
            .take(TOKENIZE_BATCH)
            .collect::<io::Result<_>>()
            .map_err(|e| match e.kind() {
                io::ErrorKind::InvalidData => Error::InvalidArgument("input is not valid UTF-8".into()),
                _ => Error::Io(e),
            })?;
        if batch.is_empty() {
            break;
        }
        let rendered: Vec<String> = batch.par_iter().map(|l| render(l)).collect();
        for line in rendered {
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn profile_summary_tsv(model: &Model, p: &profile::VocabProfile) -> String {
    let mut s = String::from("metric\tvalue\n");
    s += &format!("kind\t{}\n", model.kind());
    s += &format!("vocab_size\t{}\n", p.rank_frequency.len());
    s += &format!("mean_token_length\t{:.6}\n", p.mean_token_length);
    s += &format!("tokens_per_word\t{:.6}\n", p.tokens_per_word);
    s += &format!("tokens_per_word_type\t{:.6}\n", p.tokens_per_word_type);
    s += &format!("dead_zone_threshold\t{}\n", p.dead_zone_threshold);
    s += &format!("dead_zone_count\t{}\n", p.dead_zone_count);
    s += &format!("unk_occurrences\t{}\n", p.unk_occurrences);
    s
}

fn write_profile_dir(dir: &Path, model: &Model, p: &profile::VocabProfile) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.tsv"), profile_summary_tsv(model, p))?;

    let summary = serde_json::json!({
        "kind": model.kind(),
        "vocab_size": p.rank_frequency.len(),
        "mean_token_length": p.mean_token_length,
        "tokens_per_word": p.tokens_per_word,
        "tokens_per_word_type": p.tokens_per_word_type,
        "dead_zone_threshold": p.dead_zone_threshold,
        "dead_zone_count": p.dead_zone_count,
        "unk_occurrences": p.unk_occurrences,
        "length_histogram": p.length_histogram.iter().map(|(k, v)| (k.to_string(), v)).collect::<HashMap<_, _>>(),
    });
    let mut json = serde_json::to_string_pretty(&summary).expect("in-memory JSON");
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;

    let mut lengths = String::from("length\tcount\n");
    for (len, n) in &p.length_histogram {
        lengths += &format!("{len}\t{n}\n");
    }
    fs::write(dir.join("lengths.tsv"), lengths)?;

    let mut ranks = String::from("rank\ttoken\tfrequency\n");
    for (i, (t, f)) in p.rank_frequency.iter().enumerate() {
        ranks += &format!("{}\t{t}\t{f}\n", i + 1);
    }
    fs::write(dir.join("rank_frequency.tsv"), ranks)?;

    let mut bins = String::from("bin\tmin_frequency\tmax_frequency\ttokens\n");
    for (&b, n) in &p.frequency_bins {
        let (lo, hi) = if b == 0 { (0, 0) } else { (1u64 << (b - 1), (1u64 << b) - 1) };
        bins += &format!("{b}\t{lo}\t{hi}\t{n}\n");
    }
    fs::write(dir.join("frequency_bins.tsv"), bins)?;
    Ok(())
}
