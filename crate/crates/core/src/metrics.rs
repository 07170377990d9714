//! Ranking metrics with explicit tie handling.
//!
//! Ranks follow competition ranking ("1224"): a document's rank is one plus
//! the number of documents scoring strictly higher, and tied documents form a
//! block. No tie order is ever materialized, so every metric is a function
//! of the score multiset alone.
//!
//! * MRR and MHits@10 use the optimistic (block) rank.
//! * MTRR replaces `1/r` by `2 / (2r + t - 1)`, the reciprocal of the mean of
//!   the optimistic rank `r` and pessimistic rank `r + t - 1`.
//! * TMHits@10 scores a positive in a block of size `τ` with `Σ` documents
//!   strictly above as `max(0, min(τ, 10 - Σ)) / τ`: the chance it lands in
//!   the top 10 under a uniformly random order within its block.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HITS_CUTOFF: usize = 10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("score for document {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("qrels reference doc {doc_id:?} which has no score under question {question_id:?}")]
    UnknownDocId { question_id: String, doc_id: String },
    #[error("qrels reference question {0:?} which is absent from the score file")]
    MissingQuestion(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

/// A maximal run of equal scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieBlock {
    /// Competition rank shared by the block.
    pub rank: usize,
    /// Number of documents in the block.
    pub size: usize,
}

/// Competition ranking of one question's documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TiedRanking {
    blocks: Vec<TieBlock>,
    block_of: Vec<usize>,
}

impl TiedRanking {
    pub fn len(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_of.is_empty()
    }

    /// Blocks in rank order.
    pub fn blocks(&self) -> &[TieBlock] {
        &self.blocks
    }

    pub fn rank(&self, doc: usize) -> usize {
        self.blocks[self.block_of[doc]].rank
    }

    /// Size of `doc`'s tie block, including `doc`.
    pub fn tie_count(&self, doc: usize) -> usize {
        self.blocks[self.block_of[doc]].size
    }

    /// Tie blocks ranked strictly above `doc`.
    pub fn higher_blocks(&self, doc: usize) -> &[TieBlock] {
        &self.blocks[..self.block_of[doc]]
    }

    pub fn reciprocal_rank(&self, doc: usize) -> f64 {
        1.0 / self.rank(doc) as f64
    }

    pub fn tied_reciprocal_rank(&self, doc: usize) -> f64 {
        let (r, t) = (self.rank(doc), self.tie_count(doc));
        if t == 1 {
            1.0 / r as f64
        } else {
            2.0 / (2 * r + t - 1) as f64
        }
    }

    pub fn hit(&self, doc: usize, k: usize) -> f64 {
        if self.rank(doc) <= k {
            1.0
        } else {
            0.0
        }
    }

    pub fn tied_hit(&self, doc: usize, k: usize) -> f64 {
        let tau = self.tie_count(doc);
        // Σ over higher blocks equals rank - 1 under competition ranking.
        let above = self.rank(doc) - 1;
        k.saturating_sub(above).min(tau) as f64 / tau as f64
    }
}

pub fn ranks_from_scores(scores: &[f64]) -> Result<TiedRanking, MetricsError> {
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore { index });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut blocks: Vec<TieBlock> = Vec::new();
    let mut block_of = vec![0; scores.len()];
    let mut prev: Option<f64> = None;
    for (pos, &doc) in order.iter().enumerate() {
        // -0.0 and 0.0 compare equal and share a block.
        if prev != Some(scores[doc]) {
            blocks.push(TieBlock {
                rank: pos + 1,
                size: 0,
            });
            prev = Some(scores[doc]);
        }
        let last = blocks.len() - 1;
        blocks[last].size += 1;
        block_of[doc] = last;
    }
    Ok(TiedRanking { blocks, block_of })
}

/// One question's ranking and the indices of its positive documents.
#[derive(Debug, Clone)]
pub struct RankedQuestion {
    pub question_id: String,
    pub ranking: TiedRanking,
    pub positives: Vec<usize>,
}

impl RankedQuestion {
    pub fn from_scores(
        question_id: impl Into<String>,
        scores: &[f64],
        positives: Vec<usize>,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            question_id: question_id.into(),
            ranking: ranks_from_scores(scores)?,
            positives,
        })
    }

    fn mean_over_positives(&self, f: impl Fn(usize) -> f64) -> Option<f64> {
        if self.positives.is_empty() {
            return None;
        }
        Some(self.positives.iter().map(|&p| f(p)).sum::<f64>() / self.positives.len() as f64)
    }
}

/// Mean over questions that have at least one positive; 0 when none do.
fn macro_mean(questions: &[RankedQuestion], f: impl Fn(&RankedQuestion) -> Option<f64>) -> f64 {
    let vals: Vec<f64> = questions.iter().filter_map(f).collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

pub fn mrr(questions: &[RankedQuestion]) -> f64 {
    macro_mean(questions, |q| {
        q.mean_over_positives(|p| q.ranking.reciprocal_rank(p))
    })
}

pub fn mhits10(questions: &[RankedQuestion]) -> f64 {
    macro_mean(questions, |q| {
        q.mean_over_positives(|p| q.ranking.hit(p, HITS_CUTOFF))
    })
}

pub fn mtrr(questions: &[RankedQuestion]) -> f64 {
    macro_mean(questions, |q| {
        q.mean_over_positives(|p| q.ranking.tied_reciprocal_rank(p))
    })
}

pub fn tmhits10(questions: &[RankedQuestion]) -> f64 {
    macro_mean(questions, |q| {
        q.mean_over_positives(|p| q.ranking.tied_hit(p, HITS_CUTOFF))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMetrics {
    pub question_id: String,
    pub docs: usize,
    pub positives: usize,
    pub mrr: f64,
    pub mhits10: f64,
    pub mtrr: f64,
    pub tmhits10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub mhits10: f64,
    pub mtrr: f64,
    pub tmhits10: f64,
    /// Questions contributing to the means.
    pub questions: usize,
    /// Questions skipped because they have no positive document.
    pub excluded_questions: Vec<String>,
    pub per_question: Vec<QuestionMetrics>,
}

impl EvalReport {
    pub fn from_questions(questions: &[RankedQuestion]) -> Self {
        let mut per_question = Vec::new();
        let mut excluded = Vec::new();
        for q in questions {
            if q.positives.is_empty() {
                excluded.push(q.question_id.clone());
                continue;
            }
            let one = std::slice::from_ref(q);
            per_question.push(QuestionMetrics {
                question_id: q.question_id.clone(),
                docs: q.ranking.len(),
                positives: q.positives.len(),
                mrr: mrr(one),
                mhits10: mhits10(one),
                mtrr: mtrr(one),
                tmhits10: tmhits10(one),
            });
        }
        Self {
            mrr: mrr(questions),
            mhits10: mhits10(questions),
            mtrr: mtrr(questions),
            tmhits10: tmhits10(questions),
            questions: per_question.len(),
            excluded_questions: excluded,
            per_question,
        }
    }

    pub fn to_table(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>8}", "metric", "value")?;
        for (name, v) in [
            ("MRR", self.mrr),
            ("MHits@10", self.mhits10),
            ("MTRR", self.mtrr),
            ("TMHits@10", self.tmhits10),
        ] {
            writeln!(f, "{name:<12} {v:>8.4}")?;
        }
        writeln!(f, "{:<12} {:>8}", "questions", self.questions)?;
        write!(f, "{:<12} {:>8}", "excluded", self.excluded_questions.len())
    }
}

fn open(path: &Path) -> Result<impl BufRead, MetricsError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| MetricsError::Io(path.display().to_string(), e))
}

/// Score file rows grouped by question, in file order within a question.
pub type ScoreTable = BTreeMap<String, Vec<(String, f64)>>;

pub fn read_scores<R: BufRead>(reader: R, name: &str) -> Result<ScoreTable, MetricsError> {
    let mut table = ScoreTable::new();
    let mut seen = HashSet::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MetricsError::Io(name.to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| MetricsError::Parse {
            file: name.to_string(),
            line: k + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let [qid, doc, score] = cols[..] else {
            return Err(err(format!(
                "expected 3 tab-separated columns, got {}",
                cols.len()
            )));
        };
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| err(format!("bad score {score:?}")))?;
        if !score.is_finite() {
            return Err(err("non-finite score".into()));
        }
        if !seen.insert((qid.to_string(), doc.to_string())) {
            return Err(err(format!("duplicate row for {qid}/{doc}")));
        }
        table
            .entry(qid.to_string())
            .or_default()
            .push((doc.to_string(), score));
    }
    Ok(table)
}

/// Relevance judgments: positive doc ids per question.
pub type Qrels = BTreeMap<String, HashSet<String>>;

/// Rows with relevance `> 0` are positives; other rows are ignored.
pub fn read_qrels<R: BufRead>(reader: R, name: &str) -> Result<Qrels, MetricsError> {
    let mut qrels = Qrels::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MetricsError::Io(name.to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| MetricsError::Parse {
            file: name.to_string(),
            line: k + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let [qid, doc, rel] = cols[..] else {
            return Err(err(format!(
                "expected 3 tab-separated columns, got {}",
                cols.len()
            )));
        };
        let rel: i64 = rel
            .trim()
            .parse()
            .map_err(|_| err(format!("bad relevance {rel:?}")))?;
        let entry = qrels.entry(qid.to_string()).or_default();
        if rel > 0 {
            entry.insert(doc.to_string());
        }
    }
    Ok(qrels)
}

pub fn evaluate_tables(scores: &ScoreTable, qrels: &Qrels) -> Result<EvalReport, MetricsError> {
    for (qid, positives) in qrels {
        let Some(rows) = scores.get(qid) else {
            if positives.is_empty() {
                continue;
            }
            return Err(MetricsError::MissingQuestion(qid.clone()));
        };
        for doc in positives {
            if !rows.iter().any(|(d, _)| d == doc) {
                return Err(MetricsError::UnknownDocId {
                    question_id: qid.clone(),
                    doc_id: doc.clone(),
                });
            }
        }
    }
    let mut questions = Vec::with_capacity(scores.len());
    for (qid, rows) in scores {
        let values: Vec<f64> = rows.iter().map(|(_, s)| *s).collect();
        let positives = match qrels.get(qid) {
            Some(pos) => rows
                .iter()
                .enumerate()
                .filter(|(_, (d, _))| pos.contains(d))
                .map(|(k, _)| k)
                .collect(),
            None => Vec::new(),
        };
        questions.push(RankedQuestion::from_scores(
            qid.clone(),
            &values,
            positives,
        )?);
    }
    Ok(EvalReport::from_questions(&questions))
}

/// Evaluates a `question_id \t doc_id \t score` file against qrels.
pub fn eval_scores_file(scores: &Path, qrels: &Path) -> Result<EvalReport, MetricsError> {
    let table = read_scores(open(scores)?, &scores.display().to_string())?;
    let qrels = read_qrels(open(qrels)?, &qrels.display().to_string())?;
    evaluate_tables(&table, &qrels)
}
