//! On-disk model format.
//!
//! A model is one JSON document with sorted keys and every float written
//! with 17 significant digits, so identical models serialize to identical
//! bytes and floats survive a round trip exactly. Layout:
//!
//! ```text
//! {
//!   "alphabet": ["a", "b", "▁"],                // bpe only
//!   "format_version": 1,
//!   "kind": "bpe" | "unigram",
//!   "marker": "▁",
//!   "merges": [["▁", "a"], ...],                // bpe only, creation order
//!   "pieces": [["<unk>", -2.3e1], ...],         // unigram only, id order
//!   "training": { ... } | null,
//!   "unk_token": "<unk>"
//! }
//! ```

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{json, Map, Value};

use crate::bpe::BpeModel;
use crate::error::{Error, Result};
use crate::tokenizer::Model;
use crate::unigram::UnigramModel;

pub const FORMAT_VERSION: u64 = 1;

/// How a model was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMetadata {
    pub vocab_size: u64,
    pub alpha: f64,
    /// `sha256:<hex>` of the raw corpus bytes.
    pub corpus_digest: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub training: Option<TrainingMetadata>,
}

impl ModelFile {
    pub fn new(model: impl Into<Model>) -> Self {
        ModelFile {
            model: model.into(),
            training: None,
        }
    }

    pub fn to_value(&self) -> Value {
        let model = &self.model;
        let mut doc = Map::new();
        doc.insert("format_version".into(), json!(FORMAT_VERSION));
        doc.insert("kind".into(), json!(model.kind()));
        doc.insert("marker".into(), json!(model.marker().to_string()));
        doc.insert("unk_token".into(), json!(model.unk_token()));
        match model {
            Model::Bpe(m) => {
                let alphabet: Vec<String> = m.alphabet().iter().map(char::to_string).collect();
                doc.insert("alphabet".into(), json!(alphabet));
                doc.insert("merges".into(), json!(m.merges()));
            }
            Model::Unigram(m) => {
                let pieces: Vec<Value> = model
                    .tokens_in_id_order()
                    .into_iter()
                    .filter_map(|t| m.logprob(&t).map(|lp| json!([t, lp])))
                    .collect();
                doc.insert("pieces".into(), Value::Array(pieces));
            }
        }
        let training = match &self.training {
            Some(t) => json!({
                "alpha": t.alpha,
                "corpus_digest": t.corpus_digest,
                "tool_version": t.tool_version,
                "vocab_size": t.vocab_size,
            }),
            None => Value::Null,
        };
        doc.insert("training".into(), training);
        Value::Object(doc)
    }

    /// Canonical serialization.
    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter::default());
        self.to_value()
            .serialize(&mut ser)
            .expect("serializing to memory cannot fail");
        out.push(b'\n');
        String::from_utf8(out).expect("serde_json writes UTF-8")
    }

    pub fn parse(text: &str) -> Result<ModelFile> {
        let doc: Value = serde_json::from_str(text).map_err(|e| corrupt(format!("not JSON: {e}")))?;
        let doc = doc.as_object().ok_or_else(|| corrupt("top level is not an object"))?;

        let version = doc.get("format_version").and_then(Value::as_u64);
        if version != Some(FORMAT_VERSION) {
            return Err(corrupt(format!(
                "format_version must be {FORMAT_VERSION}, found {:?}",
                doc.get("format_version")
            )));
        }
        let marker = single_char(str_field(doc, "marker")?)
            .ok_or_else(|| corrupt("marker must be exactly one code point"))?;
        let unk = str_field(doc, "unk_token")?;
        if unk.is_empty() {
            return Err(corrupt("unk_token is empty"));
        }
        let kind = str_field(doc, "kind")?;
        let model = match kind {
            "bpe" => {
                if doc.contains_key("pieces") {
                    return Err(corrupt("bpe model carries a unigram \"pieces\" payload"));
                }
                let alphabet = array_field(doc, "alphabet")?
                    .iter()
                    .map(|v| v.as_str().and_then(single_char))
                    .collect::<Option<Vec<char>>>()
                    .ok_or_else(|| corrupt("alphabet entries must be single code points"))?;
                let merges = array_field(doc, "merges")?
                    .iter()
                    .map(|v| match v.as_array().map(Vec::as_slice) {
                        Some([Value::String(l), Value::String(r)]) => Some((l.clone(), r.clone())),
                        _ => None,
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| corrupt("merges must be [left, right] string pairs"))?;
                Model::Bpe(
                    BpeModel::new(marker, unk, alphabet, merges)
                        .map_err(|e| corrupt(format!("merge invariant violated: {e}")))?,
                )
            }
            "unigram" => {
                if doc.contains_key("merges") || doc.contains_key("alphabet") {
                    return Err(corrupt("unigram model carries a bpe payload"));
                }
                let entries = array_field(doc, "pieces")?
                    .iter()
                    .map(|v| match v.as_array().map(Vec::as_slice) {
                        Some([Value::String(p), lp]) => lp.as_f64().map(|lp| (p.clone(), lp)),
                        _ => None,
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| corrupt("pieces must be [piece, log probability] pairs"))?;
                let n = entries.len();
                let model = UnigramModel::from_logprobs(marker, unk, entries)
                    .map_err(|e| corrupt(format!("probability invariant violated: {e}")))?;
                if model.len() != n {
                    return Err(corrupt("duplicate piece"));
                }
                Model::Unigram(model)
            }
            other => return Err(corrupt(format!("unknown kind {other:?}"))),
        };

        let training = match doc.get("training") {
            None | Some(Value::Null) => None,
            Some(Value::Object(t)) => {
                let bad = || corrupt("training metadata is malformed");
                Some(TrainingMetadata {
                    vocab_size: t.get("vocab_size").and_then(Value::as_u64).ok_or_else(bad)?,
                    alpha: t.get("alpha").and_then(Value::as_f64).ok_or_else(bad)?,
                    corpus_digest: t
                        .get("corpus_digest")
                        .and_then(Value::as_str)
                        .ok_or_else(bad)?
                        .to_owned(),
                    tool_version: t
                        .get("tool_version")
                        .and_then(Value::as_str)
                        .ok_or_else(bad)?
                        .to_owned(),
                })
            }
            Some(_) => return Err(corrupt("training metadata is not an object")),
        };
        Ok(ModelFile { model, training })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let bytes = fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::InvalidUtf8 {
            offset: e.utf8_error().valid_up_to(),
        })?;
        ModelFile::parse(&text)
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptModel(msg.into())
}

fn single_char(s: &str) -> Option<char> {
    let mut it = s.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

fn str_field<'a>(doc: &'a Map<String, Value>, key: &str) -> Result<&'a str> {
    doc.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| corrupt(format!("missing string field {key:?}")))
}

fn array_field<'a>(doc: &'a Map<String, Value>, key: &str) -> Result<&'a Vec<Value>> {
    doc.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| corrupt(format!("missing array field {key:?}")))
}

/// Puts each top-level key and each element of a top-level list on its own
/// line; deeper containers stay inline. Floats get 17 significant digits.
#[derive(Default)]
struct CanonicalFormatter {
    // One entry per open container: whether it has emitted a value yet.
    stack: Vec<bool>,
}

impl CanonicalFormatter {
    fn broken(&self) -> bool {
        self.stack.len() <= 2
    }

    fn open<W: ?Sized + io::Write>(&mut self, w: &mut W, bracket: &[u8]) -> io::Result<()> {
        self.stack.push(false);
        w.write_all(bracket)
    }

    fn close<W: ?Sized + io::Write>(&mut self, w: &mut W, bracket: &[u8]) -> io::Result<()> {
        let broken = self.broken();
        let had_values = self.stack.pop().unwrap_or(false);
        if broken && had_values {
            w.write_all(b"\n")?;
            indent(w, self.stack.len())?;
        }
        w.write_all(bracket)
    }

    fn element<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if let Some(top) = self.stack.last_mut() {
            *top = true;
        }
        if !first {
            w.write_all(b",")?;
        }
        if self.broken() {
            w.write_all(b"\n")?;
            indent(w, self.stack.len())
        } else if !first {
            w.write_all(b" ")
        } else {
            Ok(())
        }
    }
}

fn indent<W: ?Sized + io::Write>(w: &mut W, depth: usize) -> io::Result<()> {
    for _ in 0..depth {
        w.write_all(b"  ")?;
    }
    Ok(())
}

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.open(w, b"[")
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.close(w, b"]")
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.element(w, first)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.open(w, b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.close(w, b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.element(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }
}
