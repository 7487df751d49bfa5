use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::InstanceRecord;

/// Read canonical JSONL. Blank lines are skipped; a malformed line fails
/// with its 1-based line number.
pub fn read_canonical_jsonl(path: &Path) -> Result<Vec<InstanceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_canonical_jsonl(&text, path)
}

pub fn parse_canonical_jsonl(text: &str, path: &Path) -> Result<Vec<InstanceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// One record per line, fields in canonical order.
pub fn write_canonical_jsonl<W: Write>(records: &[InstanceRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_canonical_jsonl(records: &[InstanceRecord]) -> String {
    let mut buf = Vec::new();
    write_canonical_jsonl(records, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
