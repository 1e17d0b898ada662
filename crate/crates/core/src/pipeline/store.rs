//! Line-delimited JSON store of architecture records. Loading is strict:
//! any malformed line fails the whole load with its line number.

use super::PipelineError;
use crate::graph::{MetaGraph, MetaGraphDoc};
use crate::iso::canonical_key;
use crate::record::{ArchRecord, RecordSource};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    meta: MetaGraphDoc,
    perf: f64,
    source: RecordSource,
    canon: String,
    seed: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_lines<W: Write>(out: &mut W, records: &[ArchRecord]) -> std::io::Result<()> {
    for r in records {
        let line = Line {
            meta: MetaGraphDoc::from(&r.meta),
            perf: r.perf,
            source: r.source,
            canon: r.canon.clone(),
            seed: r.seed,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Appends records, creating the file if needed.
pub fn append_records(path: &Path, records: &[ArchRecord]) -> Result<(), PipelineError> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    write_lines(&mut BufWriter::new(file), records).map_err(io_err(path))
}

/// Replaces the file with `records`.
pub fn write_records(path: &Path, records: &[ArchRecord]) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_lines(&mut BufWriter::new(file), records).map_err(io_err(path))
}

/// Loads every record. Blank lines are skipped; anything else that does not
/// parse, fails validation, carries a non-finite value, or whose stored
/// class key disagrees with its meta-graph is an error.
pub fn load_records(path: &Path) -> Result<Vec<ArchRecord>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| PipelineError::Schema {
            line: lineno,
            message,
        };
        let raw: Line = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        if !raw.perf.is_finite() {
            return Err(schema(format!("non-finite perf {}", raw.perf)));
        }
        let meta = MetaGraph::try_from(raw.meta).map_err(|e| schema(e.to_string()))?;
        let key = canonical_key(&meta);
        if key != raw.canon {
            return Err(schema(format!(
                "canon {} does not match meta-graph ({key})",
                raw.canon
            )));
        }
        out.push(ArchRecord {
            meta,
            perf: raw.perf,
            source: raw.source,
            canon: raw.canon,
            seed: raw.seed,
        });
    }
    Ok(out)
}
