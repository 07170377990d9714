//! JSONL ingestion: one [`AmrGraph`] per line.

use std::io::{BufRead, Write};

use super::{AmrError, AmrGraph};

fn schema_field(err: &serde_json::Error) -> String {
    // serde names the field in backticks: "missing field `doc_id`".
    err.to_string()
        .split('`')
        .nth(1)
        .unwrap_or("record")
        .to_string()
}

/// Reads graphs in input order, validating each one. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn load_amr_jsonl<R: BufRead>(reader: R) -> Result<Vec<AmrGraph>, AmrError> {
    let mut graphs = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| AmrError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        if !value.is_object() {
            return Err(AmrError::MalformedLine {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        }
        let graph: AmrGraph =
            serde_json::from_value(value).map_err(|e| AmrError::SchemaViolation {
                line: line_no,
                field: schema_field(&e),
                reason: e.to_string(),
            })?;
        graph.validate().map_err(|v| AmrError::SchemaViolation {
            line: line_no,
            field: v.field,
            reason: v.reason,
        })?;
        graphs.push(graph);
    }
    Ok(graphs)
}

pub fn write_amr_jsonl<W: Write>(mut w: W, graphs: &[AmrGraph]) -> std::io::Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
