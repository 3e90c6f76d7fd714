use std::collections::BTreeSet;

use thiserror::Error;

use crate::text::{sentences, terms};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("generator backend failed: {0}")]
    Backend(String),
}

/// Everything a generator may look at for one request.
#[derive(Debug, Clone, Copy)]
pub struct GenerationInput<'a> {
    /// Fully rendered prompt (the bare question when nothing was retrieved).
    pub prompt: &'a str,
    pub question: &'a str,
    /// Retrieved source texts in rank order.
    pub passages: &'a [&'a str],
    pub seed: u64,
}

pub trait Generator: Send + Sync {
    fn identity(&self) -> String;
    fn generate(&self, input: &GenerationInput<'_>) -> Result<String, GeneratorError>;
}

/// Returns the rendered prompt unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn identity(&self) -> String {
        "echo".into()
    }

    fn generate(&self, input: &GenerationInput<'_>) -> Result<String, GeneratorError> {
        Ok(input.prompt.to_string())
    }
}

/// Answers with the retrieved sentence sharing the most distinct terms with
/// the question; earlier sentences (by rank, then position) win ties. With
/// no passages, or no overlapping sentence, the answer is empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveGenerator;

impl ExtractiveGenerator {
    pub fn best_sentence<'a>(question: &str, passages: &[&'a str]) -> Option<&'a str> {
        let query: BTreeSet<String> = terms(question).into_iter().collect();
        let mut best: Option<(&str, usize)> = None;
        for passage in passages {
            for sentence in sentences(passage) {
                let words: BTreeSet<String> = terms(sentence).into_iter().collect();
                let overlap = words.intersection(&query).count();
                if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((sentence, overlap));
                }
            }
        }
        best.map(|(s, _)| s)
    }
}

impl Generator for ExtractiveGenerator {
    fn identity(&self) -> String {
        "extractive".into()
    }

    fn generate(&self, input: &GenerationInput<'_>) -> Result<String, GeneratorError> {
        Ok(Self::best_sentence(input.question, input.passages).unwrap_or_default().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_first_sentence() {
        let passages = ["red apple. green apple.", "apple red."];
        assert_eq!(ExtractiveGenerator::best_sentence("red apple", &passages), Some("red apple."));
    }

    #[test]
    fn nothing_to_extract() {
        assert_eq!(ExtractiveGenerator::best_sentence("q", &[]), None);
        assert_eq!(ExtractiveGenerator::best_sentence("q", &["unrelated words."]), None);
    }
}
