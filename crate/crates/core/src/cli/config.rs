use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::docgraph::{GraphOptions, NormMode};
use crate::gnn::{Strategy, TrainConfig};
use crate::rng::derive_seed;
use crate::synthetic::SyntheticConfig;

pub const DEFAULT_ENCODER_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 128;
pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// Settings shared by every subcommand. Each command reads the keys it needs;
/// unknown keys are rejected when the file is parsed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub strategy: Option<Strategy>,
    pub input_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub dev_dataset: Option<PathBuf>,
    pub amr: Option<PathBuf>,
    pub graphs_dir: Option<PathBuf>,
    pub embeddings_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub encoder_dim: Option<usize>,
    pub encoder_seed: Option<u64>,
    pub hidden_dim: Option<usize>,
    pub layers: Option<usize>,
    pub dropout: Option<f64>,
    pub norm_mode: Option<NormMode>,
    pub exclude_question_concept: Option<bool>,
    pub max_docs: Option<usize>,
    pub train: Option<TrainConfig>,
    pub synthetic: Option<SyntheticConfig>,
}

/// Flags that override config file keys of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// mlp, gcn, g-rag or g-rag-rl.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub input_dir: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub dev_dataset: Option<PathBuf>,
    #[arg(long)]
    pub amr: Option<PathBuf>,
    #[arg(long)]
    pub graphs_dir: Option<PathBuf>,
    #[arg(long)]
    pub embeddings_dir: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub encoder_dim: Option<usize>,
    #[arg(long)]
    pub encoder_seed: Option<u64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// per_channel_dims or per_row_both.
    #[arg(long, value_parser = parse_norm_mode)]
    pub norm_mode: Option<NormMode>,
    #[arg(long)]
    pub exclude_question_concept: Option<bool>,
    #[arg(long)]
    pub max_docs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub total_steps: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub pair_cap: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub train_questions: Option<usize>,
    #[arg(long)]
    pub dev_questions: Option<usize>,
    #[arg(long)]
    pub docs_per_question: Option<usize>,
    #[arg(long)]
    pub positives_per_question: Option<usize>,
    #[arg(long)]
    pub no_question_fraction: Option<f64>,
    #[arg(long)]
    pub keyword_vocabulary: Option<usize>,
}

fn parse_norm_mode(s: &str) -> Result<NormMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown norm mode {s:?} (expected per_channel_dims or per_row_both)"))
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Reads `flags.config` if given, then applies the flag overrides.
    pub fn resolve(flags: Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
                Self::from_json(&text).map_err(|e| match e {
                    CliError::Validation(m) => {
                        CliError::Validation(format!("{}: {m}", path.display()))
                    }
                    other => other,
                })?
            }
            None => Self::default(),
        };
        set(&mut cfg.seed, flags.seed);
        set(&mut cfg.strategy, flags.strategy);
        set(&mut cfg.input_dir, flags.input_dir);
        set(&mut cfg.dataset, flags.dataset);
        set(&mut cfg.dev_dataset, flags.dev_dataset);
        set(&mut cfg.amr, flags.amr);
        set(&mut cfg.graphs_dir, flags.graphs_dir);
        set(&mut cfg.embeddings_dir, flags.embeddings_dir);
        set(&mut cfg.checkpoint, flags.checkpoint);
        set(&mut cfg.scores, flags.scores);
        set(&mut cfg.qrels, flags.qrels);
        set(&mut cfg.out, flags.out);
        set(&mut cfg.out_dir, flags.out_dir);
        set(&mut cfg.encoder_dim, flags.encoder_dim);
        set(&mut cfg.encoder_seed, flags.encoder_seed);
        set(&mut cfg.hidden_dim, flags.hidden_dim);
        set(&mut cfg.layers, flags.layers);
        set(&mut cfg.dropout, flags.dropout);
        set(&mut cfg.norm_mode, flags.norm_mode);
        set(
            &mut cfg.exclude_question_concept,
            flags.exclude_question_concept,
        );
        set(&mut cfg.max_docs, flags.max_docs);

        let train_flags = [
            flags.learning_rate.is_some(),
            flags.batch_size.is_some(),
            flags.warmup_steps.is_some(),
            flags.total_steps.is_some(),
            flags.eval_every.is_some(),
            flags.pair_cap.is_some(),
            flags.weight_decay.is_some(),
        ];
        if train_flags.contains(&true) {
            let t = cfg.train.get_or_insert_with(TrainConfig::default);
            if let Some(v) = flags.learning_rate {
                t.learning_rate = v;
            }
            if let Some(v) = flags.batch_size {
                t.batch_size = v;
            }
            if let Some(v) = flags.warmup_steps {
                t.warmup_steps = v;
            }
            if let Some(v) = flags.total_steps {
                t.total_steps = v;
            }
            if let Some(v) = flags.eval_every {
                t.eval_every = v;
            }
            if let Some(v) = flags.pair_cap {
                t.pair_cap = v;
            }
            if let Some(v) = flags.weight_decay {
                t.weight_decay = v;
            }
        }

        let synth_flags = [
            flags.train_questions.is_some(),
            flags.dev_questions.is_some(),
            flags.docs_per_question.is_some(),
            flags.positives_per_question.is_some(),
            flags.no_question_fraction.is_some(),
            flags.keyword_vocabulary.is_some(),
        ];
        if synth_flags.contains(&true) {
            let s = cfg.synthetic.get_or_insert_with(SyntheticConfig::default);
            if let Some(v) = flags.train_questions {
                s.train_questions = v;
            }
            if let Some(v) = flags.dev_questions {
                s.dev_questions = v;
            }
            if let Some(v) = flags.docs_per_question {
                s.docs_per_question = v;
            }
            if let Some(v) = flags.positives_per_question {
                s.positives_per_question = v;
            }
            if let Some(v) = flags.no_question_fraction {
                s.no_question_fraction = v;
            }
            if let Some(v) = flags.keyword_vocabulary {
                s.keyword_vocabulary = v;
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn encoder_dim(&self) -> usize {
        self.encoder_dim.unwrap_or(DEFAULT_ENCODER_DIM)
    }

    pub fn encoder_seed(&self) -> u64 {
        self.encoder_seed
            .unwrap_or_else(|| derive_seed(self.seed(), "encoder"))
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            norm_mode: self.norm_mode.unwrap_or_default(),
            exclude_question_concept: self.exclude_question_concept.unwrap_or(false),
        }
    }

    pub fn max_docs(&self) -> usize {
        self.max_docs.unwrap_or(crate::dataset::MAX_DOCS)
    }

    pub fn strategy(&self) -> Result<Strategy, CliError> {
        self.strategy
            .ok_or_else(|| CliError::Validation("missing required key `strategy`".into()))
    }

    /// Training settings with the loss chosen by `strategy` and the seed
    /// derived from the run seed.
    pub fn train_config(&self, strategy: Strategy) -> TrainConfig {
        let mut t = self.train.clone().unwrap_or_default();
        t.loss = strategy.loss();
        t.seed = derive_seed(self.seed(), "train");
        t
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        let mut s = self.synthetic.clone().unwrap_or_default();
        s.seed = derive_seed(self.seed(), "synthetic");
        s
    }

    /// Layer widths `[d, h, ..., h, d]`.
    pub fn model_dims(&self) -> Result<Vec<usize>, CliError> {
        let layers = self.layers.unwrap_or(DEFAULT_LAYERS);
        if layers == 0 {
            return Err(CliError::Validation("`layers` must be at least 1".into()));
        }
        let d = self.encoder_dim();
        let h = self.hidden_dim.unwrap_or(DEFAULT_HIDDEN_DIM);
        let mut dims = vec![d];
        dims.extend(std::iter::repeat_n(h, layers - 1));
        dims.push(d);
        Ok(dims)
    }
}

/// Returns the path stored under `key`, checking it exists.
pub fn require_path<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    let path = value
        .as_deref()
        .ok_or_else(|| CliError::Validation(format!("missing required key `{key}`")))?;
    if !path.exists() {
        return Err(CliError::Validation(format!(
            "`{key}`: {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

/// Returns an output path stored under `key`; it need not exist yet.
pub fn require_output<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Validation(format!("missing required key `{key}`")))
}

/// Optional input path; must exist when given.
pub fn optional_path<'a>(
    value: &'a Option<PathBuf>,
    key: &str,
) -> Result<Option<&'a Path>, CliError> {
    match value {
        Some(_) => require_path(value, key).map(Some),
        None => Ok(None),
    }
}
