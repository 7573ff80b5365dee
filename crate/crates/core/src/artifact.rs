//! Line-delimited JSON artifacts.
//!
//! An artifact file holds one JSON record per line. It may start with a header
//! line of the form `{"header": {...}}` carrying the resolved configuration
//! and content hashes of the command that wrote it.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct HeaderLine<H> {
    header: H,
}

/// Serializes `records` (one per line), preceded by `header` when given.
pub fn to_jsonl<T: Serialize, H: Serialize>(header: Option<&H>, records: &[T]) -> Result<String> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&serde_json::to_string(&HeaderLine { header: h })?);
        out.push('\n');
    }
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, H: Serialize>(
    path: &Path,
    header: Option<&H>,
    records: &[T],
) -> Result<()> {
    let body = to_jsonl(header, records)?;
    write_file(path, body.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a JSONL body. Returns the header value (if the first line is a
/// header record) and the records. Blank lines are skipped; any malformed
/// line is reported with its 1-based line number.
pub fn parse_jsonl<T: DeserializeOwned>(path: &Path, body: &str) -> Result<(Option<Value>, Vec<T>)> {
    let mut header = None;
    let mut records = Vec::new();
    let mut seen_record = false;
    for (i, line) in body.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if !seen_record && header.is_none() {
            let v: Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            if let Value::Object(map) = &v {
                if map.len() == 1 {
                    if let Some(h) = map.get("header") {
                        header = Some(h.clone());
                        continue;
                    }
                }
            }
            let rec: T = serde_json::from_value(v).map_err(|e| parse_err(e.to_string()))?;
            records.push(rec);
            seen_record = true;
            continue;
        }
        let rec: T = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        records.push(rec);
        seen_record = true;
    }
    Ok((header, records))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Option<Value>, Vec<T>)> {
    let body = read_to_string(path)?;
    parse_jsonl(path, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Rec {
        a: u32,
    }

    #[test]
    fn header_is_split_off() {
        let body = to_jsonl(Some(&serde_json::json!({"k": 1})), &[Rec { a: 1 }, Rec { a: 2 }]).unwrap();
        let (h, r): (_, Vec<Rec>) = parse_jsonl(Path::new("x"), &body).unwrap();
        assert_eq!(h.unwrap()["k"], 1);
        assert_eq!(r, vec![Rec { a: 1 }, Rec { a: 2 }]);
    }

    #[test]
    fn bad_line_reports_number() {
        let body = "{\"a\":1}\n{\"a\":2\n";
        let err = parse_jsonl::<Rec>(Path::new("f"), body).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }
}
