use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    backward, ce_loss, forward, lr_at, ranking_loss, ranking_pairs, score, AdamW, GcnModel,
    GnnError, Gradients, LossKind, Mode, QuestionInput,
};
use crate::metrics::{EvalReport, RankedQuestion};

const STEP_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    5
}
fn default_warmup() -> u64 {
    1000
}
fn default_total() -> u64 {
    50_000
}
fn default_eval_every() -> u64 {
    10_000
}
fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}
fn default_wd() -> f64 {
    0.01
}
fn default_pair_cap() -> usize {
    500
}

/// Loss and seed are not read from JSON: the strategy picks the loss and the
/// run seed is fanned out by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: u64,
    #[serde(default = "default_total")]
    pub total_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(skip, default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_pair_cap")]
    pub pair_cap: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            warmup_steps: default_warmup(),
            total_steps: default_total(),
            eval_every: default_eval_every(),
            loss: default_loss(),
            weight_decay: default_wd(),
            pair_cap: default_pair_cap(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |msg: String| Err(GnnError::InvalidConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0
            || self.total_steps == 0
            || self.eval_every == 0
            || self.pair_cap == 0
        {
            return bad("batch_size, total_steps, eval_every and pair_cap must be positive".into());
        }
        if !self.total_steps.is_multiple_of(self.eval_every) {
            return bad(format!(
                "eval_every ({}) must divide total_steps ({})",
                self.eval_every, self.total_steps
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    /// Mean batch loss since the previous record; absent at step 0.
    pub loss: Option<f64>,
    pub lr: f64,
    pub dev_mrr: Option<f64>,
    pub dev_mhits10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    /// Mean batch loss of every step, index 0 being step 1.
    pub step_losses: Vec<f64>,
    /// Step of the returned parameters.
    pub best_step: u64,
    pub best_dev_mrr: Option<f64>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("log record serializes") + "\n")
            .collect()
    }
}

/// Loss of one question and the parameter gradients. `pair_seed` keys the
/// pair subsampling of the ranking loss.
pub fn question_loss(
    model: &GcnModel,
    q: &QuestionInput,
    kind: LossKind,
    mode: Mode,
    pair_cap: usize,
    pair_seed: u64,
    salt: u64,
) -> Result<(f64, Gradients), GnnError> {
    let (state, cache) = forward(model, &q.topology, &q.features, mode)?;
    let s = score(&q.query, &state)?;
    let (loss, g) = match kind {
        LossKind::CrossEntropy => ce_loss(&s, &q.labels),
        LossKind::PairwiseRanking => {
            let mut rng = crate::rng::stream(pair_seed, "pairs", salt);
            let pairs = ranking_pairs(&q.labels, pair_cap, &mut rng);
            ranking_loss(&s, &pairs)
        }
    };
    let grads = backward(model, &q.topology, &q.query, &g, &cache)?;
    Ok((loss, grads))
}

/// Eval-mode scores for every question, in input order.
pub fn score_questions(
    model: &GcnModel,
    questions: &[QuestionInput],
) -> Result<Vec<Array1<f64>>, GnnError> {
    questions
        .par_iter()
        .map(|q| {
            let (state, _) = forward(model, &q.topology, &q.features, Mode::Eval)?;
            score(&q.query, &state)
        })
        .collect()
}

pub fn evaluate(model: &GcnModel, questions: &[QuestionInput]) -> Result<EvalReport, GnnError> {
    let scores = score_questions(model, questions)?;
    let ranked = questions
        .iter()
        .zip(&scores)
        .map(|(q, s)| {
            RankedQuestion::from_scores(
                q.question_id.clone(),
                s.as_slice().expect("contiguous scores"),
                q.positives(),
            )
            .map_err(|e| GnnError::NonFinite(format!("{}: {e}", q.question_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_questions(&ranked))
}

/// Shuffled passes over the training set.
struct Batches {
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    seed: u64,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            epoch: 0,
            seed,
        }
    }

    fn next(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.sort_unstable();
                let mut rng = crate::rng::stream(self.seed, "batches", self.epoch);
                self.order.shuffle(&mut rng);
                self.epoch += 1;
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Trains from `init` and returns the parameters with the best dev MRR seen
/// at an evaluation point (step 0 included). Without dev questions the final
/// parameters are returned.
///
/// Per-question gradients run on a pool of `threads` workers and are summed in
/// batch order, so results do not depend on the worker count.
pub fn train(
    train_set: &[QuestionInput],
    dev_set: &[QuestionInput],
    init: GcnModel,
    cfg: &TrainConfig,
    threads: usize,
) -> Result<(GcnModel, TrainLog), GnnError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(GnnError::EmptyDataset);
    }
    if train_set.iter().all(|q| !q.labels.contains(&true)) {
        return Err(GnnError::NoPositivesInDataset);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| GnnError::InvalidConfig(format!("thread pool: {e}")))?;

    pool.install(|| {
        let mut model = init;
        let mut opt = AdamW::new(&model, cfg.weight_decay);
        let mut log = TrainLog::default();
        let mut batches = Batches::new(train_set.len(), cfg.seed);
        let batch_size = cfg.batch_size.min(train_set.len());

        let mut best: Option<(f64, GcnModel, u64)> = None;
        let checkpoint = |model: &GcnModel,
                          step: u64,
                          loss: Option<f64>,
                          lr: f64,
                          log: &mut TrainLog,
                          best: &mut Option<(f64, GcnModel, u64)>|
         -> Result<(), GnnError> {
            let (dev_mrr, dev_hits) = if dev_set.is_empty() {
                (None, None)
            } else {
                let report = evaluate(model, dev_set)?;
                if best.as_ref().is_none_or(|(b, _, _)| report.mrr > *b) {
                    *best = Some((report.mrr, model.clone(), step));
                }
                (Some(report.mrr), Some(report.mhits10))
            };
            log.records.push(LogRecord {
                step,
                loss,
                lr,
                dev_mrr,
                dev_mhits10: dev_hits,
            });
            Ok(())
        };

        checkpoint(&model, 0, None, 0.0, &mut log, &mut best)?;
        let mut window = 0.0;
        for step in 1..=cfg.total_steps {
            let batch = batches.next(batch_size);
            let pair_seed = cfg.seed ^ step.wrapping_mul(STEP_MIX);
            let results = batch
                .par_iter()
                .map(|&i| {
                    question_loss(
                        &model,
                        &train_set[i],
                        cfg.loss,
                        Mode::Train {
                            step,
                            salt: i as u64,
                        },
                        cfg.pair_cap,
                        pair_seed,
                        i as u64,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut grads = Gradients::zeros_like(&model);
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                grads.add_assign(g);
            }
            let inv = 1.0 / batch.len() as f64;
            loss *= inv;
            grads.scale(inv);
            if !loss.is_finite() {
                return Err(GnnError::NonFinite(format!("training loss at step {step}")));
            }
            let lr = lr_at(step, cfg.learning_rate, cfg.warmup_steps);
            opt.step(&mut model, &grads, lr);
            log.step_losses.push(loss);
            window += loss;
            if step % cfg.eval_every == 0 {
                let mean = window / cfg.eval_every as f64;
                window = 0.0;
                checkpoint(&model, step, Some(mean), lr, &mut log, &mut best)?;
            }
        }

        match best {
            Some((mrr, model, step)) => {
                log.best_step = step;
                log.best_dev_mrr = Some(mrr);
                Ok((model, log))
            }
            None => {
                log.best_step = cfg.total_steps;
                Ok((model, log))
            }
        }
    })
}
