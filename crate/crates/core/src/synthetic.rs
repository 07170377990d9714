//! A separable synthetic corpus for end-to-end checks.
//!
//! Each question names three keywords. Its positive documents contain a
//! question-specific answer word plus all three keywords, both in
//! their text and on AMR paths leaving the `question` node. Negative
//! documents are filler with at most one keyword, and some of their AMR graphs
//! lack a `question` node altogether.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amr::{parse_penman, write_amr_jsonl, AmrGraph};
use crate::dataset::{write_dataset, write_qrels, DocRecord, QuestionRecord};
use crate::rng::stream;

/// The seed is not read from JSON; it comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    #[serde(skip)]
    pub seed: u64,
    pub train_questions: usize,
    pub dev_questions: usize,
    pub docs_per_question: usize,
    pub positives_per_question: usize,
    /// Share of negative documents whose AMR has no `question` node.
    pub no_question_fraction: f64,
    /// Number of distinct keywords questions draw from.
    pub keyword_vocabulary: usize,
    /// Number of distinct filler words.
    pub filler_vocabulary: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train_questions: 200,
            dev_questions: 50,
            docs_per_question: 20,
            positives_per_question: 2,
            no_question_fraction: 0.3,
            keyword_vocabulary: 20,
            filler_vocabulary: 60,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.train_questions + self.dev_questions == 0 {
            return Err("at least one question is required".into());
        }
        if self.docs_per_question == 0 || self.positives_per_question > self.docs_per_question {
            return Err(format!(
                "positives_per_question ({}) must not exceed docs_per_question ({}), which must be positive",
                self.positives_per_question, self.docs_per_question
            ));
        }
        if self.keyword_vocabulary < 3 || self.filler_vocabulary < 8 {
            return Err("need at least 3 keywords and 8 filler words".into());
        }
        if !(0.0..=1.0).contains(&self.no_question_fraction) {
            return Err("no_question_fraction must be within [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<QuestionRecord>,
    pub dev: Vec<QuestionRecord>,
    /// Every document's AMR, train then dev, in document order.
    pub amrs: Vec<AmrGraph>,
    /// Penman source per question id, `# ::id` headed blocks.
    pub penman: Vec<(String, String)>,
}

const ROLES: [&str; 5] = [":ARG0", ":ARG1", ":mod", ":topic", ":location"];

fn make_word(rng: &mut ChaCha8Rng) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let syllables = rng.gen_range(2..=3);
    (0..syllables)
        .flat_map(|_| {
            [
                C[rng.gen_range(0..C.len())] as char,
                V[rng.gen_range(0..V.len())] as char,
            ]
        })
        .collect()
}

fn fresh_words(count: usize, rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = make_word(rng);
        if used.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn role(rng: &mut ChaCha8Rng) -> &'static str {
    ROLES[rng.gen_range(0..ROLES.len())]
}

struct DocPlan {
    text: String,
    penman: String,
}

fn positive_doc(
    keywords: &[String],
    answer: &str,
    fillers: &[String],
    rng: &mut ChaCha8Rng,
) -> DocPlan {
    let mut chosen: Vec<&String> = keywords.iter().collect();
    chosen.shuffle(rng);
    let count = rng.gen_range(2..=4);
    let filler: Vec<&String> = fillers.choose_multiple(rng, count).collect();

    let mut penman = String::from("(q / question");
    for (i, kw) in chosen.iter().enumerate() {
        penman.push_str(&format!(" {} (k{} / {}", role(rng), i + 1, kw));
        if i == 0 {
            penman.push_str(&format!(" :mod (a / {answer}))"));
        } else {
            penman.push_str(" :mod a)");
        }
    }
    penman.push_str(&format!(" {} (f1 / {}))", role(rng), filler[0]));

    let mut words: Vec<&str> = chosen.iter().map(|s| s.as_str()).collect();
    words.push(answer);
    words.extend(filler.iter().map(|s| s.as_str()));
    words.shuffle(rng);
    DocPlan {
        text: words.join(" "),
        penman,
    }
}

fn negative_doc(
    keywords: &[String],
    fillers: &[String],
    with_question: bool,
    rng: &mut ChaCha8Rng,
) -> DocPlan {
    let count = rng.gen_range(4..=6);
    let filler: Vec<&String> = fillers.choose_multiple(rng, count).collect();
    let keyword = rng
        .gen_bool(0.3)
        .then(|| keywords.choose(rng).expect("keywords"));

    let mut penman = if with_question {
        format!(
            "(q / question {} (f1 / {} {} (f2 / {}))",
            role(rng),
            filler[0],
            role(rng),
            filler[1]
        )
    } else {
        format!("(f1 / {} {} (f2 / {})", filler[0], role(rng), filler[1])
    };
    penman.push_str(&format!(" {} (f3 / {})", role(rng), filler[2]));
    if let Some(kw) = keyword {
        penman.push_str(&format!(" {} (k1 / {kw})", role(rng)));
    }
    penman.push(')');

    let mut words: Vec<&str> = filler.iter().map(|s| s.as_str()).collect();
    if let Some(kw) = keyword {
        words.push(kw);
    }
    words.shuffle(rng);
    DocPlan {
        text: words.join(" "),
        penman,
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus, String> {
    cfg.validate()?;
    let total = cfg.train_questions + cfg.dev_questions;
    let mut vocab_rng = stream(cfg.seed, "synthetic-vocab", 0);
    let mut used = HashSet::new();
    let keywords = fresh_words(cfg.keyword_vocabulary, &mut vocab_rng, &mut used);
    let fillers = fresh_words(cfg.filler_vocabulary, &mut vocab_rng, &mut used);
    let answers = fresh_words(total, &mut vocab_rng, &mut used);

    let mut corpus = SyntheticCorpus {
        train: Vec::new(),
        dev: Vec::new(),
        amrs: Vec::new(),
        penman: Vec::new(),
    };
    for q in 0..total {
        let mut rng = stream(cfg.seed, "synthetic-question", q as u64);
        let (split, qid) = if q < cfg.train_questions {
            ("train", format!("train-{q:04}"))
        } else {
            ("dev", format!("dev-{:04}", q - cfg.train_questions))
        };
        let kws: Vec<String> = keywords.choose_multiple(&mut rng, 3).cloned().collect();
        let question_text = format!("what is {}", kws.join(" "));

        let mut slots: Vec<usize> = (0..cfg.docs_per_question).collect();
        slots.shuffle(&mut rng);
        let positive_slots: HashSet<usize> = slots[..cfg.positives_per_question]
            .iter()
            .copied()
            .collect();

        let mut docs = Vec::with_capacity(cfg.docs_per_question);
        let mut penman_file = String::new();
        for k in 0..cfg.docs_per_question {
            let doc_id = format!("{qid}-d{k:02}");
            let is_positive = positive_slots.contains(&k);
            let plan = if is_positive {
                positive_doc(&kws, &answers[q], &fillers, &mut rng)
            } else {
                let with_question = !rng.gen_bool(cfg.no_question_fraction);
                negative_doc(&kws, &fillers, with_question, &mut rng)
            };
            let graph = parse_penman(&plan.penman, &qid, &doc_id)
                .map_err(|e| format!("generated AMR for {doc_id} does not parse: {e}"))?;
            corpus.amrs.push(graph);
            penman_file.push_str(&format!("# ::id {qid} {doc_id}\n{}\n\n", plan.penman));
            docs.push(DocRecord {
                doc_id,
                text: plan.text,
                is_positive,
            });
        }
        corpus.penman.push((qid.clone(), penman_file));
        let record = QuestionRecord {
            question_id: qid,
            question_text,
            docs,
        };
        if split == "train" {
            corpus.train.push(record);
        } else {
            corpus.dev.push(record);
        }
    }
    Ok(corpus)
}

/// Writes `train.jsonl`, `dev.jsonl`, `train.qrels.tsv`, `dev.qrels.tsv`,
/// `amr.jsonl` and one Penman file per question under `penman/`.
pub fn write_corpus(corpus: &SyntheticCorpus, out_dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(out_dir.join("penman"))?;
    let create = |name: &str| fs::File::create(out_dir.join(name)).map(std::io::BufWriter::new);
    write_dataset(create("train.jsonl")?, &corpus.train)?;
    write_dataset(create("dev.jsonl")?, &corpus.dev)?;
    write_qrels(create("train.qrels.tsv")?, &corpus.train)?;
    write_qrels(create("dev.qrels.tsv")?, &corpus.dev)?;
    write_amr_jsonl(create("amr.jsonl")?, &corpus.amrs)?;
    for (qid, text) in &corpus.penman {
        fs::write(out_dir.join("penman").join(format!("{qid}.penman")), text)?;
    }
    Ok(())
}
