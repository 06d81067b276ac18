use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use subtok::cli::exit_code;
use subtok::unigram::UnigramModel;
use subtok::ModelFile;

const M: char = '▁';

fn subtok(args: &[&str], stdin: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_subtok"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn save_unigram(dir: &Path, name: &str, probs: &[(&str, f64)]) -> PathBuf {
    let model = UnigramModel::from_probs(M, "<unk>", probs.iter().copied()).unwrap();
    let p = dir.join(name);
    ModelFile::new(model).save(&p).unwrap();
    p
}

#[test]
fn train_bpe_one_merge() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "aa aa aa ab ab\n");
    let model = dir.path().join("m.json");
    ok(&subtok(
        &["train", "--method", "bpe", "--vocab-size", "4", "-o", s(&model), s(&corpus)],
        b"",
    ));
    let v = json(&model);
    assert_eq!(v["kind"], "bpe");
    assert_eq!(v["merges"], serde_json::json!([["▁", "a"]]));
}

#[test]
fn train_unigram_single_char_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "a a a\n");
    let model = dir.path().join("m.json");
    ok(&subtok(
        &["train", "--method", "unigram", "--vocab-size", "3", "-o", s(&model), s(&corpus)],
        b"",
    ));
    let file = ModelFile::load(&model).unwrap();
    let mut tokens = file.model.tokens_in_id_order();
    tokens.sort();
    assert_eq!(tokens, ["<unk>", "a", "▁"]);
}

#[test]
fn defaults_recorded_in_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "the cat sat on the mat\n");
    let model = dir.path().join("m.json");
    ok(&subtok(&["train", "-o", s(&model), s(&corpus)], b""));
    let v = json(&model);
    assert_eq!(v["kind"], "unigram");
    assert_eq!(v["training"]["vocab_size"], 20000);
    assert_eq!(v["training"]["alpha"].as_f64(), Some(0.25));
    assert!(v["training"]["corpus_digest"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn corpus_from_stdin_and_gzip_match_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = "low lower lowest newer wider\n";
    let plain = write(dir.path(), "c.txt", text);
    let gz = dir.path().join("c.txt.gz");
    let mut enc = flate2::write::GzEncoder::new(fs::File::create(&gz).unwrap(), Default::default());
    enc.write_all(text.as_bytes()).unwrap();
    enc.finish().unwrap();

    let train = |input: &str, out: &str, stdin: &[u8]| {
        let path = dir.path().join(out);
        ok(&subtok(
            &["train", "--method", "bpe", "--vocab-size", "30", "-o", s(&path), input],
            stdin,
        ));
        fs::read_to_string(path).unwrap()
    };
    let a = train(s(&plain), "a.json", b"");
    let b = train("-", "b.json", text.as_bytes());
    // The digest covers the compressed bytes, so compare models only.
    let c = ModelFile::parse(&train(s(&gz), "c.json", b"")).unwrap().model;
    assert_eq!(a, b);
    assert_eq!(ModelFile::parse(&a).unwrap().model, c);
}

#[test]
fn tokenize_toy_unigram() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_unigram(dir.path(), "m.json", &[("▁a", 0.5), ("b", 0.3), ("▁", 0.1), ("a", 0.1)]);
    let out = ok(&subtok(&["tokenize", "-m", s(&model)], b"ab\n\nab ab\n"));
    assert_eq!(out, "▁a b\n\n▁a b ▁a b\n");

    // Ids follow canonical order: <unk>, single characters, then the rest.
    let ids = ok(&subtok(&["tokenize", "-m", s(&model), "--output", "ids"], b"ab q\n"));
    // a=1 b=2 ▁=3 ▁a=4, q is unknown.
    assert_eq!(ids, "4 2 3 0\n");
}

#[test]
fn tokenize_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_unigram(dir.path(), "m.json", &[("▁", 0.5), ("a", 0.5)]);
    assert_eq!(ok(&subtok(&["tokenize", "-m", s(&model)], b"")), "");
}

#[test]
fn tokenize_preserves_order_across_batches() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "ab ba abab\n");
    let model = dir.path().join("m.json");
    ok(&subtok(
        &["train", "--method", "bpe", "--vocab-size", "6", "-o", s(&model), s(&corpus)],
        b"",
    ));
    let unit = ok(&subtok(&["tokenize", "-m", s(&model)], b"ab\n"));
    let unit = unit.trim_end();
    let input: String = (0..10_000).map(|i| format!("{}\n", "ab ".repeat(i % 7))).collect();
    let out = ok(&subtok(&["tokenize", "-m", s(&model), "-i", "-"], input.as_bytes()));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 10_000);
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(*line, vec![unit; i % 7].join(" "), "line {i}");
    }
}

#[test]
fn diff_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "aa ab ba abab aa\n");
    let model = dir.path().join("m.json");
    ok(&subtok(
        &["train", "--method", "bpe", "--vocab-size", "8", "-o", s(&model), s(&corpus)],
        b"",
    ));
    let out = ok(&subtok(
        &["diff", "--model-a", s(&model), "--model-b", s(&model), s(&corpus)],
        b"",
    ));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("token\tfreq_a\tfreq_b\tdiff"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for row in rows {
        assert_eq!(row.rsplit('\t').next(), Some("0"), "{row}");
    }
}

#[test]
fn diff_rejects_mixed_markers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "aa ab\n");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (path, marker) in [(&a, "▁"), (&b, "#")] {
        ok(&subtok(
            &["train", "--method", "bpe", "--vocab-size", "4", "--marker", marker, "-o", s(path), s(&corpus)],
            b"",
        ));
    }
    let out = subtok(&["diff", "--model-a", s(&a), "--model-b", s(&b), s(&corpus)], b"");
    assert_eq!(out.status.code(), Some(exit_code::INVALID_INPUT));
}

fn morph_model(dir: &Path) -> PathBuf {
    let mut probs = vec![("▁un", 0.3), ("friend", 0.3), ("ly", 0.3)];
    let chars = ["▁", "d", "e", "f", "i", "l", "n", "r", "u", "y"];
    probs.extend(chars.iter().map(|c| (*c, 0.1 / chars.len() as f64)));
    save_unigram(dir, "m.json", &probs)
}

fn metric(report: &str, name: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name}\t")))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn eval_morph_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let model = morph_model(dir.path());

    let partial = write(dir.path(), "partial.tsv", "# word\tweight\tmorphs\nunfriendly\t1\tun|friendly\n");
    let out = ok(&subtok(&["eval-morph", "-m", s(&model), "-r", s(&partial)], b""));
    assert!(out.starts_with("metric\tvalue\n"));
    assert!((metric(&out, "precision") - 0.5).abs() < 1e-6);
    assert!((metric(&out, "recall") - 1.0).abs() < 1e-6);
    assert!((metric(&out, "f1") - 0.667).abs() < 1e-3);
    assert!((metric(&out, "f1") - 2.0 / 3.0).abs() < 1e-6);

    let perfect = write(dir.path(), "perfect.tsv", "unfriendly\t3\tun|friend|ly\nfriend\t1\tfriend\n");
    let out = ok(&subtok(&["eval-morph", "-m", s(&model), "-r", s(&perfect)], b""));
    assert_eq!(metric(&out, "f1"), 1.0);
    assert_eq!(metric(&out, "skipped_single_morph"), 1.0);
}

#[test]
fn eval_morph_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = morph_model(dir.path());
    let single = write(dir.path(), "single.tsv", "friend\t1\tfriend\n");
    let out = subtok(&["eval-morph", "-m", s(&model), "-r", s(&single)], b"");
    assert_eq!(out.status.code(), Some(exit_code::INVALID_INPUT));

    let bad = write(dir.path(), "bad.tsv", "unfriendly\t1\tun|friend\n");
    let out = subtok(&["eval-morph", "-m", s(&model), "-r", s(&bad)], b"");
    assert_eq!(out.status.code(), Some(exit_code::INVALID_INPUT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn profile_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "aa ab ba abab aa\n");
    let model = dir.path().join("m.json");
    ok(&subtok(
        &["train", "--method", "bpe", "--vocab-size", "8", "-o", s(&model), s(&corpus)],
        b"",
    ));
    let out = ok(&subtok(&["profile", "-m", s(&model), s(&corpus)], b""));
    assert!(out.starts_with("metric\tvalue\nkind\tbpe\n"));
    assert!(out.contains("\ndead_zone_count\t"));

    let reports = dir.path().join("reports");
    ok(&subtok(
        &["profile", "-m", s(&model), s(&corpus), "--out-dir", s(&reports)],
        b"",
    ));
    let header = |name: &str| {
        let text = fs::read_to_string(reports.join(name)).unwrap();
        text.lines().next().unwrap().to_owned()
    };
    assert_eq!(header("lengths.tsv"), "length\tcount");
    assert_eq!(header("rank_frequency.tsv"), "rank\ttoken\tfrequency");
    assert_eq!(header("frequency_bins.tsv"), "bin\tmin_frequency\tmax_frequency\ttokens");
    assert_eq!(header("summary.tsv"), "metric\tvalue");
    assert_eq!(json(&reports.join("summary.json"))["kind"], "bpe");
}

#[test]
fn retraining_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = (0..300)
        .map(|i| format!("token{} tokens tokenize tokenizer {}\n", i % 13, "ab".repeat(i % 5 + 1)))
        .collect();
    let corpus = write(dir.path(), "c.txt", &text);
    for method in ["bpe", "unigram"] {
        let a = dir.path().join(format!("{method}-a.json"));
        let b = dir.path().join(format!("{method}-b.json"));
        for (path, threads) in [(&a, "1"), (&b, "3")] {
            let out = Command::new(env!("CARGO_BIN_EXE_subtok"))
                .args(["train", "--method", method, "--vocab-size", "60", "-o", s(path), s(&corpus)])
                .env("SUBTOK_THREADS", threads)
                .output()
                .unwrap();
            ok(&out);
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{method}");
    }
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c.txt", "abc abc\n");
    let out_path = dir.path().join("m.json");
    let out = s(&out_path);

    let usage = subtok(&["train"], b"");
    assert_eq!(usage.status.code(), Some(exit_code::USAGE));

    let missing = subtok(&["train", "-o", out, s(&dir.path().join("nope.txt"))], b"");
    assert_eq!(missing.status.code(), Some(exit_code::IO));

    let infeasible = subtok(&["train", "--vocab-size", "2", "-o", out, s(&corpus)], b"");
    assert_eq!(infeasible.status.code(), Some(exit_code::INFEASIBLE));

    let empty = write(dir.path(), "empty.txt", " \n");
    let empty = subtok(&["train", "--method", "bpe", "-o", out, s(&empty)], b"");
    assert_eq!(empty.status.code(), Some(exit_code::INFEASIBLE));

    let collision = write(dir.path(), "marker.txt", "a▁b\n");
    let collision = subtok(&["train", "-o", out, s(&collision)], b"");
    assert_eq!(collision.status.code(), Some(exit_code::MARKER_COLLISION));

    let binary = dir.path().join("bin.txt");
    fs::write(&binary, b"ab \xff\n").unwrap();
    let binary = subtok(&["train", "-o", out, s(&binary)], b"");
    assert_eq!(binary.status.code(), Some(exit_code::INVALID_INPUT));

    let corrupt = write(dir.path(), "corrupt.json", "{\"kind\": \"bpe\"}\n");
    let corrupt = subtok(&["tokenize", "-m", s(&corrupt)], b"ab\n");
    assert_eq!(corrupt.status.code(), Some(exit_code::CORRUPT_MODEL));
    assert!(!String::from_utf8_lossy(&corrupt.stderr).is_empty());

    let codes = [
        exit_code::USAGE,
        exit_code::IO,
        exit_code::INFEASIBLE,
        exit_code::CORRUPT_MODEL,
        exit_code::MARKER_COLLISION,
        exit_code::INVALID_INPUT,
    ];
    let unique: std::collections::BTreeSet<i32> = codes.iter().copied().collect();
    assert_eq!(unique.len(), codes.len());
    assert!(!unique.contains(&exit_code::OK));
}
