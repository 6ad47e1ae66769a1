//! Newline-delimited JSON dataset files, one record per line, each line
//! carrying a mandatory schema-version field. Round-trips are lossless.

use super::CaseRecord;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Line {
    v: u32,
    #[serde(flatten)]
    record: CaseRecord,
}

pub fn write_dataset(path: &Path, records: &[CaseRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = Line {
            v: SCHEMA_VERSION,
            record: r.clone(),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::Data(format!("serialize case {}: {e}", r.case_id)))?;
        writeln!(w, "{json}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset; an empty file yields an empty vector, malformed lines
/// report their line number and the offending field.
pub fn read_dataset(path: &Path) -> Result<Vec<CaseRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        let found = value
            .get("v")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                detail: "missing schema-version field `v`".to_string(),
            })? as u32;
        if found != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let parsed: Line = serde_json::from_value(value).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(parsed.record);
    }
    Ok(out)
}

/// Ground-truth sidecar: `case_id,true_cate` rows.
pub fn write_truth_sidecar(path: &Path, rows: &[(u64, f64)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "case_id,true_cate").map_err(|e| Error::io(path, e))?;
    for (id, cate) in rows {
        writeln!(w, "{id},{cate}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth_sidecar(path: &Path) -> Result<Vec<(u64, f64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let parse = |s: Option<&str>, what: &str| -> Result<String> {
            s.map(|x| x.to_string()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                detail: format!("missing {what}"),
            })
        };
        let id: u64 = parse(parts.next(), "case_id")?.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            detail: format!("case_id: {e}"),
        })?;
        let cate: f64 = parse(parts.next(), "true_cate")?.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            detail: format!("true_cate: {e}"),
        })?;
        out.push((id, cate));
    }
    Ok(out)
}
