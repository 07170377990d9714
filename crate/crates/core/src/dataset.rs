//! Question records: one JSON object per line with the retrieved documents
//! and their labels.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on documents per question.
pub const MAX_DOCS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocRecord {
    pub doc_id: String,
    pub text: String,
    pub is_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    pub question_id: String,
    pub question_text: String,
    pub docs: Vec<DocRecord>,
}

impl QuestionRecord {
    pub fn labels(&self) -> Vec<bool> {
        self.docs.iter().map(|d| d.is_positive).collect()
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.doc_id.clone()).collect()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: question {question_id:?} lists doc {doc_id:?} twice")]
    DuplicateDocId {
        line: usize,
        question_id: String,
        doc_id: String,
    },
    #[error("line {line}: question {question_id:?} has {count} docs (limit {limit})")]
    TooManyDocs {
        line: usize,
        question_id: String,
        count: usize,
        limit: usize,
    },
    #[error("question {0:?} appears more than once")]
    DuplicateQuestion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads and validates records; the result is sorted by `question_id`.
pub fn load_dataset<R: BufRead>(
    reader: R,
    max_docs: usize,
) -> Result<Vec<QuestionRecord>, DatasetError> {
    let mut records = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if rec.docs.len() > max_docs {
            return Err(DatasetError::TooManyDocs {
                line: line_no,
                question_id: rec.question_id,
                count: rec.docs.len(),
                limit: max_docs,
            });
        }
        let mut seen = HashSet::new();
        for d in &rec.docs {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(DatasetError::DuplicateDocId {
                    line: line_no,
                    question_id: rec.question_id.clone(),
                    doc_id: d.doc_id.clone(),
                });
            }
        }
        records.push(rec);
    }
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    for w in records.windows(2) {
        if w[0].question_id == w[1].question_id {
            return Err(DatasetError::DuplicateQuestion(w[0].question_id.clone()));
        }
    }
    Ok(records)
}

pub fn write_dataset<W: Write>(mut w: W, records: &[QuestionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// `question_id \t doc_id \t relevance` for every document.
pub fn write_qrels<W: Write>(mut w: W, records: &[QuestionRecord]) -> std::io::Result<()> {
    for r in records {
        for d in &r.docs {
            writeln!(
                w,
                "{}\t{}\t{}",
                r.question_id,
                d.doc_id,
                u8::from(d.is_positive)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(qid: &str, docs: &[(&str, bool)]) -> QuestionRecord {
        QuestionRecord {
            question_id: qid.into(),
            question_text: "what is x".into(),
            docs: docs
                .iter()
                .map(|(id, p)| DocRecord {
                    doc_id: id.to_string(),
                    text: format!("text of {id}"),
                    is_positive: *p,
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_sorted() {
        let records = vec![
            rec("q2", &[("a", true)]),
            rec("q1", &[("b", false), ("c", true)]),
        ];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &records).unwrap();
        let back = load_dataset(&buf[..], MAX_DOCS).unwrap();
        assert_eq!(back[0], records[1]);
        assert_eq!(back[1], records[0]);
        assert_eq!(back[0].labels(), vec![false, true]);
    }

    #[test]
    fn validation_errors() {
        let dup = serde_json::to_string(&rec("q", &[("a", true), ("a", false)])).unwrap();
        assert!(matches!(
            load_dataset(dup.as_bytes(), MAX_DOCS),
            Err(DatasetError::DuplicateDocId { line: 1, .. })
        ));
        let many = serde_json::to_string(&rec("q", &[("a", true), ("b", false)])).unwrap();
        assert!(matches!(
            load_dataset(many.as_bytes(), 1),
            Err(DatasetError::TooManyDocs { .. })
        ));
        let extra = r#"{"question_id":"q","question_text":"t","docs":[],"extra":1}"#;
        assert!(matches!(
            load_dataset(extra.as_bytes(), MAX_DOCS),
            Err(DatasetError::Malformed { .. })
        ));
        let one = serde_json::to_string(&rec("q", &[])).unwrap();
        let twice = format!("{one}\n{one}\n");
        assert!(matches!(
            load_dataset(twice.as_bytes(), MAX_DOCS),
            Err(DatasetError::DuplicateQuestion(_))
        ));
    }

    #[test]
    fn qrels_rows() {
        let mut buf = Vec::new();
        write_qrels(&mut buf, &[rec("q1", &[("a", true), ("b", false)])]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "q1\ta\t1\nq1\tb\t0\n");
    }
}
