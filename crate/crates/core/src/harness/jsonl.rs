//! Line-delimited JSON files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::HarnessError;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Single appender for one output file; every record is written as one
/// complete line.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
    lines: usize,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(io(path))?;
        Ok(JsonlWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            lines: 0,
        })
    }

    pub fn append<T: Serialize>(&mut self, value: &T) -> Result<(), HarnessError> {
        let mut line = serde_json::to_string(value).expect("arena types always serialize");
        line.push('\n');
        self.out
            .write_all(line.as_bytes())
            .map_err(io(&self.path))?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn finish(mut self) -> Result<usize, HarnessError> {
        self.out.flush().map_err(io(&self.path))?;
        Ok(self.lines)
    }
}

/// Read every non-blank line, reporting the 1-based line number of the first
/// line that fails to parse, carries a `schema_version` other than `schema`
/// (when given), or is rejected by `check`.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    schema: Option<u32>,
    check: impl Fn(&T) -> Result<(), String>,
) -> Result<Vec<T>, HarnessError> {
    let file = File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| HarnessError::Jsonl {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| err(format!("invalid JSON: {e}")))?;
        if let Some(want) = schema {
            match raw
                .get("schema_version")
                .and_then(serde_json::Value::as_u64)
            {
                Some(v) if v == u64::from(want) => {}
                Some(v) => {
                    return Err(err(format!(
                        "schema_version {v} is not supported (expected {want})"
                    )))
                }
                None => return Err(err("missing schema_version".into())),
            }
        }
        let value: T = serde_path_to_error::deserialize(raw).map_err(|e| {
            let field = e.path().to_string();
            err(format!("at `{field}`: {}", e.into_inner()))
        })?;
        check(&value).map_err(err)?;
        out.push(value);
    }
    Ok(out)
}
