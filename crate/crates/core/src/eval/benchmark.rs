//! Pairs extractor outputs with ground-truth texts and scores them.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{bleu, cer, rouge_l, BleuBreakdown, CerBreakdown, RougeBreakdown};
use crate::sample::{deserialize_sample, PlaceholderConfig};
use crate::text::whitespace_tokens;

pub const DEFAULT_TRUNCATE_CHARS: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkPair {
    pub extracted: PathBuf,
    pub ground_truth: PathBuf,
}

impl BenchmarkPair {
    pub fn new(extracted: impl Into<PathBuf>, ground_truth: impl Into<PathBuf>) -> Self {
        Self { extracted: extracted.into(), ground_truth: ground_truth.into() }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub truncate_chars: usize,
    pub placeholder: PlaceholderConfig,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self { truncate_chars: DEFAULT_TRUNCATE_CHARS, placeholder: PlaceholderConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub bleu: BleuBreakdown,
    pub rouge_l: RougeBreakdown,
    pub cer: CerBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub extracted: PathBuf,
    pub ground_truth: PathBuf,
    #[serde(flatten)]
    pub outcome: PairOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOutcome {
    Scored(PairScores),
    Error(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scored: usize,
    pub errors: usize,
    pub mean_bleu: f64,
    pub mean_rouge_l: f64,
    pub mean_cer: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<PairRow>,
    pub aggregate: Aggregate,
}

/// Reads an extractor output. Sample records (JSON) contribute their text
/// with placeholders removed; anything else is taken as plain text.
pub fn load_extracted_text(path: &Path, placeholder: &PlaceholderConfig) -> io::Result<String> {
    let bytes = std::fs::read(path)?;
    let is_record = matches!(path.extension().and_then(|e| e.to_str()), Some("json" | "jsonl"));
    if is_record {
        let first = bytes.split(|&b| b == b'\n').find(|l| !l.iter().all(u8::is_ascii_whitespace));
        if let Some(sample) = first.and_then(|l| deserialize_sample(l).ok()) {
            return Ok(sample.plain_text(placeholder));
        }
    }
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn truncate_chars(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

pub fn score_texts(extracted: &str, ground_truth: &str) -> Result<PairScores, String> {
    let cand = whitespace_tokens(extracted);
    let refr = whitespace_tokens(ground_truth);
    Ok(PairScores {
        bleu: bleu(&cand, &refr).map_err(|e| e.to_string())?,
        rouge_l: rouge_l(&cand, &refr).map_err(|e| e.to_string())?,
        cer: cer(extracted, ground_truth).map_err(|e| e.to_string())?,
    })
}

fn score_pair(pair: &BenchmarkPair, opts: &BenchmarkOptions) -> PairOutcome {
    let extracted = match load_extracted_text(&pair.extracted, &opts.placeholder) {
        Ok(t) => t,
        Err(e) => return PairOutcome::Error(format!("{}: {e}", pair.extracted.display())),
    };
    let truth = match std::fs::read(&pair.ground_truth) {
        Ok(b) => String::from_utf8_lossy(&b).into_owned(),
        Err(e) => return PairOutcome::Error(format!("{}: {e}", pair.ground_truth.display())),
    };
    let extracted = truncate_chars(&extracted, opts.truncate_chars);
    let truth = truncate_chars(&truth, opts.truncate_chars);
    match score_texts(extracted, truth) {
        Ok(s) => PairOutcome::Scored(s),
        Err(e) => PairOutcome::Error(e),
    }
}

/// Scores every pair; a failing pair becomes an error row and the run
/// continues.
pub fn run_benchmark(pairs: &[BenchmarkPair], opts: &BenchmarkOptions) -> BenchmarkReport {
    let rows: Vec<PairRow> = pairs
        .iter()
        .map(|pair| PairRow {
            extracted: pair.extracted.clone(),
            ground_truth: pair.ground_truth.clone(),
            outcome: score_pair(pair, opts),
        })
        .collect();

    let mut agg = Aggregate::default();
    for row in &rows {
        match &row.outcome {
            PairOutcome::Scored(s) => {
                agg.scored += 1;
                agg.mean_bleu += s.bleu.bleu;
                agg.mean_rouge_l += s.rouge_l.f;
                agg.mean_cer += s.cer.cer;
            }
            PairOutcome::Error(_) => agg.errors += 1,
        }
    }
    if agg.scored > 0 {
        let n = agg.scored as f64;
        agg.mean_bleu /= n;
        agg.mean_rouge_l /= n;
        agg.mean_cer /= n;
    }
    BenchmarkReport { rows, aggregate: agg }
}

/// Reads a pairs file: one `extracted<TAB>ground_truth` per line, `#`
/// comments and blank lines ignored. Relative paths resolve against the
/// pairs file's directory.
pub fn read_pairs_file(path: &Path) -> io::Result<Vec<BenchmarkPair>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: expected two tab-separated paths", lineno + 1))
        })?;
        pairs.push(BenchmarkPair::new(base.join(a.trim()), base.join(b.trim())));
    }
    Ok(pairs)
}

impl BenchmarkReport {
    pub fn render_table(&self) -> String {
        let names: Vec<String> = self.rows.iter().map(|r| r.extracted.display().to_string()).collect();
        let width = names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max("extracted".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}", "extracted", "BLEU", "ROUGE-L", "CER");
        for (row, name) in self.rows.iter().zip(&names) {
            match &row.outcome {
                PairOutcome::Scored(s) => {
                    let _ = writeln!(
                        out,
                        "{name:<width$}  {:>8.4}  {:>8.4}  {:>8.4}",
                        s.bleu.bleu, s.rouge_l.f, s.cer.cer
                    );
                }
                PairOutcome::Error(e) => {
                    let _ = writeln!(out, "{name:<width$}  error: {e}");
                }
            }
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  ({} scored, {} errors)",
            "mean", a.mean_bleu, a.mean_rouge_l, a.mean_cer, a.scored, a.errors
        );
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for row in &self.rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_files_score_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let text = "It was the best of times, it was the worst of times.";
        std::fs::write(dir.path().join("a.txt"), text).unwrap();
        std::fs::write(dir.path().join("b.txt"), text).unwrap();
        let report = run_benchmark(
            &[BenchmarkPair::new(dir.path().join("a.txt"), dir.path().join("b.txt"))],
            &BenchmarkOptions::default(),
        );
        let PairOutcome::Scored(s) = &report.rows[0].outcome else { panic!("expected scores") };
        assert_eq!((s.bleu.bleu, s.rouge_l.f, s.cer.cer), (1.0, 1.0, 0.0));
    }

    #[test]
    fn empty_extraction_scores_zero() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("out.txt"), "").unwrap();
        std::fs::write(dir.path().join("gt.txt"), "In my younger and more vulnerable years").unwrap();
        let report = run_benchmark(
            &[BenchmarkPair::new(dir.path().join("out.txt"), dir.path().join("gt.txt"))],
            &BenchmarkOptions::default(),
        );
        let PairOutcome::Scored(s) = &report.rows[0].outcome else { panic!("expected scores") };
        assert_eq!((s.bleu.bleu, s.rouge_l.f, s.cer.cer), (0.0, 0.0, 1.0));
    }

    #[test]
    fn unreadable_pair_becomes_error_row() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "x y").unwrap();
        let pairs = [
            BenchmarkPair::new(dir.path().join("a.txt"), dir.path().join("a.txt")),
            BenchmarkPair::new(dir.path().join("missing.txt"), dir.path().join("a.txt")),
        ];
        let report = run_benchmark(&pairs, &BenchmarkOptions::default());
        assert_eq!(report.aggregate.scored, 1);
        assert_eq!(report.aggregate.errors, 1);
        assert!(matches!(report.rows[1].outcome, PairOutcome::Error(_)));
        let table = report.render_table();
        assert!(table.contains("error:"));
        let mut buf = Vec::new();
        report.write_jsonl(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
    }

    #[test]
    fn sample_records_are_scored_without_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        let rec = r#"{"text":"<attachment>","modalities":[{"type":"image","value":"p1.png"}]}"#;
        std::fs::write(dir.path().join("s.jsonl"), rec).unwrap();
        let text = load_extracted_text(&dir.path().join("s.jsonl"), &PlaceholderConfig::default()).unwrap();
        assert_eq!(text, "");
    }

    #[test]
    fn truncation_counts_chars() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("abc", 10), "abc");
    }

    #[test]
    fn pairs_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pairs.tsv"), "# c\nout/a.txt\tgt/a.txt\n\n").unwrap();
        let pairs = read_pairs_file(&dir.path().join("pairs.tsv")).unwrap();
        assert_eq!(pairs, vec![BenchmarkPair::new(dir.path().join("out/a.txt"), dir.path().join("gt/a.txt"))]);
    }
}
