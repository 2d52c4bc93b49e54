use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::record::DialogueRecord;
use crate::error::{Error, Result};

pub fn write_records(path: &Path, records: &[DialogueRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Json(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse and validate one JSON-lines corpus file. Blank lines are skipped; any invalid
/// record aborts with its 1-based line number.
pub fn read_records(path: &Path) -> Result<Vec<DialogueRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let diag = |message: String| Error::Record { path: path.display().to_string(), line: i + 1, message };
        let rec: DialogueRecord = serde_json::from_str(&line).map_err(|e| diag(e.to_string()))?;
        rec.validate().map_err(|e| diag(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Load several corpus files in order.
pub fn load_external(paths: &[&Path]) -> Result<Vec<DialogueRecord>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_records(p)?);
    }
    Ok(out)
}
