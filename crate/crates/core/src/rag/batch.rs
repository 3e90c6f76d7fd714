//! Offline answering over JSONL query files.
//!
//! Input lines are `{"id": .., "input": ".."}` (optionally `k` and `mode`).
//! Output lines, in input order, are `{"v":1,"id":..,"answer":..,"sources":[..]}`
//! or `{"v":1,"id":..,"error":".."}` when a line cannot be answered.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{RagEngine, RagRequest, SourceRef, SCHEMA_VERSION};
use crate::index::RetrievalMode;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("cannot read batch input {path}: {source}")]
    UnreadableInput { path: String, source: io::Error },
    #[error("cannot write batch output: {0}")]
    Output(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchInput {
    pub id: Value,
    pub input: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub mode: Option<RetrievalMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchOutput {
    Answer { v: u32, id: Value, answer: String, sources: Vec<SourceRef> },
    Error { v: u32, id: Value, error: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReport {
    pub ok: usize,
    pub failed: usize,
}

fn answer_line(line: &str, engine: &RagEngine, defaults: &RagRequest) -> BatchOutput {
    let parsed: Result<Value, _> = serde_json::from_str(line);
    let id = parsed.as_ref().ok().and_then(|v| v.get("id").cloned()).unwrap_or(Value::Null);
    let input = match parsed.and_then(serde_json::from_value::<BatchInput>) {
        Ok(i) => i,
        Err(e) => return BatchOutput::Error { v: SCHEMA_VERSION, id, error: format!("malformed line: {e}") },
    };
    let req = RagRequest {
        query: input.input,
        k: input.k.unwrap_or(defaults.k),
        mode: input.mode.unwrap_or(defaults.mode),
        template_id: defaults.template_id.clone(),
    };
    match engine.answer(&req) {
        Ok(resp) => BatchOutput::Answer { v: SCHEMA_VERSION, id: input.id, answer: resp.answer, sources: resp.sources },
        Err(e) => BatchOutput::Error { v: SCHEMA_VERSION, id: input.id, error: format!("{} stage: {e}", e.stage()) },
    }
}

/// One output line per non-blank input line, same order. A bad line yields
/// an error record and processing continues.
pub fn run_batch<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    engine: &RagEngine,
    defaults: &RagRequest,
) -> Result<BatchReport, BatchError> {
    let mut report = BatchReport::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let out = answer_line(&line, engine, defaults);
        match out {
            BatchOutput::Answer { .. } => report.ok += 1,
            BatchOutput::Error { .. } => report.failed += 1,
        }
        serde_json::to_writer(&mut output, &out).map_err(io::Error::from)?;
        output.write_all(b"\n")?;
    }
    output.flush()?;
    Ok(report)
}

pub fn run_batch_files(
    input: &Path,
    output: &Path,
    engine: &RagEngine,
    defaults: &RagRequest,
) -> Result<BatchReport, BatchError> {
    let file = File::open(input)
        .map_err(|source| BatchError::UnreadableInput { path: input.display().to_string(), source })?;
    let out = BufWriter::new(File::create(output)?);
    run_batch(BufReader::new(file), out, engine, defaults)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::index::{HashEmbedder, HybridIndex};
    use crate::postproc::Chunk;
    use crate::rag::{ExtractiveGenerator, RagResponse};

    fn engine() -> RagEngine {
        let mut idx = HybridIndex::new();
        let chunks: Vec<Chunk> = ["Paris is in France.", "Rome is in Italy.", "Oslo is in Norway."]
            .iter()
            .enumerate()
            .map(|(i, t)| Chunk {
                chunk_id: format!("c{i}"),
                doc_id: format!("d{i}"),
                text: t.to_string(),
                token_span: (0, 4),
                tags: vec![],
                modal_refs: vec![],
            })
            .collect();
        idx.add_chunks(&chunks, &HashEmbedder::default()).unwrap();
        RagEngine::new(Arc::new(idx), Arc::new(HashEmbedder::default()), Arc::new(ExtractiveGenerator))
    }

    fn run(input: &str) -> (Vec<Value>, BatchReport) {
        let mut out = Vec::new();
        let report = run_batch(input.as_bytes(), &mut out, &engine(), &RagRequest::new("", 1)).unwrap();
        let lines = String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        (lines, report)
    }

    #[test]
    fn preserves_ids_and_order() {
        let input = "{\"id\":\"a\",\"input\":\"Where is Paris?\"}\n{\"id\":2,\"input\":\"Where is Rome?\"}\n{\"id\":\"c\",\"input\":\"Where is Oslo?\"}\n";
        let (lines, report) = run(input);
        assert_eq!(report, BatchReport { ok: 3, failed: 0 });
        let ids: Vec<_> = lines.iter().map(|l| l["id"].clone()).collect();
        assert_eq!(ids, vec![Value::from("a"), Value::from(2), Value::from("c")]);
        assert_eq!(lines[1]["answer"], "Rome is in Italy.");
        assert!(lines[0]["sources"].is_array());
    }

    #[test]
    fn malformed_line_is_isolated() {
        let input = "{\"id\":1,\"input\":\"Paris?\"}\nnot json at all\n{\"id\":3,\"input\":\"Oslo?\"}\n";
        let (lines, report) = run(input);
        assert_eq!(report, BatchReport { ok: 2, failed: 1 });
        assert_eq!(lines[1]["id"], Value::Null);
        assert!(lines[1]["error"].is_string());
        assert_eq!(lines[2]["id"], 3);
    }

    #[test]
    fn empty_input_empty_output() {
        let (lines, report) = run("");
        assert!(lines.is_empty());
        assert_eq!(report.ok, 0);
    }

    #[test]
    fn missing_input_file() {
        let err = run_batch_files(Path::new("/nonexistent/q.jsonl"), Path::new("/tmp/x.jsonl"), &engine(), &RagRequest::new("", 1));
        assert!(matches!(err, Err(BatchError::UnreadableInput { .. })));
    }

    #[test]
    fn batch_equals_interactive() {
        let e = engine();
        let (lines, _) = run("{\"id\":0,\"input\":\"Where is Oslo?\"}\n");
        let direct: RagResponse = e.answer(&RagRequest::new("Where is Oslo?", 1)).unwrap();
        assert_eq!(lines[0]["answer"], direct.answer);
        let sources: Vec<SourceRef> = serde_json::from_value(lines[0]["sources"].clone()).unwrap();
        assert_eq!(sources, direct.sources);
    }
}
