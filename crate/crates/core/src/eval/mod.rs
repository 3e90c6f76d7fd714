//! Extraction-fidelity metrics and the benchmark runner.

mod benchmark;
mod metrics;

pub use benchmark::{
    load_extracted_text, read_pairs_file, run_benchmark, score_texts, truncate_chars, Aggregate, BenchmarkOptions,
    BenchmarkPair, BenchmarkReport, PairOutcome, PairRow, PairScores, DEFAULT_TRUNCATE_CHARS,
};
pub use metrics::{
    bleu, cer, cer_chars, lcs_len, levenshtein, rouge_l, BleuBreakdown, CerBreakdown, MetricError, RougeBreakdown,
    BLEU_MAX_ORDER, BLEU_WEIGHT, ROUGE_BETA,
};
