//! BLEU, ROUGE-L and character error rate.
//!
//! Token-level metrics take whitespace tokens (case-sensitive, no stemming).
//! Both dynamic programs keep two rows only, so memory stays linear in the
//! shorter input even for 50k-character documents.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest n-gram order.
pub const BLEU_MAX_ORDER: usize = 4;
/// Uniform weight applied to every order.
pub const BLEU_WEIGHT: f64 = 1.0 / BLEU_MAX_ORDER as f64;
/// ROUGE-L F-measure weighting; 1 gives the harmonic mean of P and R.
pub const ROUGE_BETA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("reference is empty; the metric is undefined")]
    EmptyReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    pub bleu: f64,
    /// Brevity penalty. Reported as 0 for an empty candidate.
    pub bp: f64,
    /// Clipped n-gram precisions p1..p4.
    pub precisions: [f64; BLEU_MAX_ORDER],
    pub matches: [usize; BLEU_MAX_ORDER],
    pub totals: [usize; BLEU_MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
    pub empty_candidate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeBreakdown {
    pub f: f64,
    pub lcs: usize,
    pub precision: f64,
    pub recall: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CerBreakdown {
    pub cer: f64,
    pub distance: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with N=4, uniform weights and no smoothing: any zero
/// precision (including orders the candidate is too short to form) zeroes
/// the score.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Result<BleuBreakdown, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let c = candidate.len();
    let r = reference.len();

    let mut precisions = [0.0; BLEU_MAX_ORDER];
    let mut matches = [0usize; BLEU_MAX_ORDER];
    let mut totals = [0usize; BLEU_MAX_ORDER];
    for n in 1..=BLEU_MAX_ORDER {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let clipped: usize = cand
            .iter()
            .map(|(gram, &count)| count.min(refc.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = c.saturating_sub(n - 1);
        matches[n - 1] = clipped;
        totals[n - 1] = total;
        precisions[n - 1] = if total == 0 { 0.0 } else { clipped as f64 / total as f64 };
    }

    let bp = if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };

    let bleu = if precisions.iter().all(|&p| p > 0.0) {
        let log_sum: f64 = precisions.iter().map(|p| BLEU_WEIGHT * p.ln()).sum();
        bp * log_sum.exp()
    } else {
        0.0
    };

    Ok(BleuBreakdown {
        bleu,
        bp,
        precisions,
        matches,
        totals,
        candidate_len: c,
        reference_len: r,
        empty_candidate: c == 0,
    })
}

/// Length of the longest common subsequence, two rows of memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Result<RougeBreakdown, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let lcs = lcs_len(candidate, reference);
    let precision = if candidate.is_empty() { 0.0 } else { lcs as f64 / candidate.len() as f64 };
    let recall = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let f = if lcs == 0 { 0.0 } else { (1.0 + b2) * precision * recall / (b2 * precision + recall) };
    Ok(RougeBreakdown { f, lcs, precision, recall, beta: ROUGE_BETA })
}

/// Unit-cost Levenshtein distance, two rows of memory. Common prefixes and
/// suffixes are trimmed first.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);

    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0usize; short.len() + 1];
    for (i, x) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Character error rate normalised by the reference (ground-truth) length.
/// May exceed 1 when the candidate is much longer than the reference.
pub fn cer(candidate: &str, reference: &str) -> Result<CerBreakdown, MetricError> {
    let cand: Vec<char> = candidate.chars().collect();
    let refc: Vec<char> = reference.chars().collect();
    cer_chars(&cand, &refc)
}

pub fn cer_chars(candidate: &[char], reference: &[char]) -> Result<CerBreakdown, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let distance = levenshtein(candidate, reference);
    Ok(CerBreakdown { cer: distance as f64 / reference.len() as f64, distance, ref_len: reference.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::whitespace_tokens as toks;

    #[test]
    fn bleu_identity() {
        let text: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let b = bleu(&text, &text).unwrap();
        assert_eq!(b.bleu, 1.0);
        assert_eq!(b.bp, 1.0);
        assert_eq!(b.precisions, [1.0; 4]);
    }

    #[test]
    fn bleu_brevity_penalty_only() {
        let b = bleu(&toks("a b c d"), &toks("a b c d e")).unwrap();
        assert_eq!(b.precisions, [1.0; 4]);
        // exp(1 - 5/4)
        assert!((b.bp - 0.778_800_783_071_404_9).abs() < 1e-15);
        assert!((b.bleu - 0.778_800_783_071_404_9).abs() < 1e-15);
    }

    #[test]
    fn bleu_disjoint_and_empty() {
        assert_eq!(bleu(&toks("x y z w"), &toks("a b c d")).unwrap().bleu, 0.0);
        let e = bleu::<&str>(&[], &toks("a b")).unwrap();
        assert!(e.empty_candidate);
        assert_eq!(e.bleu, 0.0);
        assert_eq!(bleu(&toks("a"), &[]), Err(MetricError::EmptyReference));
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        let b = bleu(&toks("the the the the"), &toks("the cat")).unwrap();
        assert_eq!(b.matches[0], 1);
        assert_eq!(b.totals[0], 4);
    }

    #[test]
    fn rouge_examples() {
        let same = toks("one two three");
        assert_eq!(rouge_l(&same, &same).unwrap().f, 1.0);
        let r = rouge_l(&toks("a b c d"), &toks("a c b d")).unwrap();
        assert_eq!(r.lcs, 3);
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.recall, 0.75);
        assert!((r.f - 0.75).abs() < 1e-15);
        assert_eq!(rouge_l(&toks("x y"), &toks("a b")).unwrap().f, 0.0);
        assert_eq!(rouge_l::<&str>(&[], &toks("a")).unwrap().f, 0.0);
        assert_eq!(rouge_l(&toks("a"), &[]), Err(MetricError::EmptyReference));
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer("same", "same").unwrap().cer, 0.0);
        let k = cer("kitten", "sitting").unwrap();
        assert_eq!(k.distance, 3);
        assert!((k.cer - 3.0 / 7.0).abs() < 1e-15);
        let e = cer("", "abcde").unwrap();
        assert_eq!((e.distance, e.cer), (5, 1.0));
        assert!(cer("aaaaaaaa", "a").unwrap().cer > 1.0);
        assert_eq!(cer("x", ""), Err(MetricError::EmptyReference));
    }

    #[test]
    fn cer_counts_unicode_scalars() {
        let c = cer("naïve", "naive").unwrap();
        assert_eq!(c.distance, 1);
        assert_eq!(c.ref_len, 5);
    }
}
