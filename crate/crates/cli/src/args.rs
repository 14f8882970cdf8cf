use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "jointre", version, about = "Joint entity and relation extraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a corpus, keep the epoch with the best dev average.
    Train(TrainArgs),
    /// Score a checkpoint against an annotated corpus.
    Eval(EvalArgs),
    /// Tag a corpus and write predictions in the corpus format.
    Predict(PredictArgs),
    /// Train and test once per seed and report mean (std).
    Seeds(SeedsArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Output directory for model.ckpt, report.txt and config.txt.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Print `key=value` lines instead of tables.
    #[arg(long)]
    pub kv: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeedsArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Number of seeds, run as first_seed, first_seed + 1, ...
    #[arg(long = "seeds", default_value_t = 10)]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub first_seed: u64,
    /// Optional directory receiving one sub-directory per seed.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Model inputs shared by `train` and `seeds`. Values given here override
/// those read from `--config`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `key = value` file, e.g. the config.txt written by `train`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Word vectors, one `word v1 .. vd` line each.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,

    #[arg(long, value_parser = ["1", "2"])]
    pub setup: Option<String>,
    #[arg(long, value_parser = ["joint", "pipeline"])]
    pub mode: Option<String>,
    #[arg(long)]
    pub no_char: bool,
    #[arg(long)]
    pub no_crf: bool,
    #[arg(long)]
    pub no_entity_emb: bool,
    #[arg(long)]
    pub no_bilinear: bool,
    #[arg(long)]
    pub no_linear: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub adam_epsilon: Option<f64>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub char_dim: Option<usize>,
    #[arg(long)]
    pub label_dim: Option<usize>,
    #[arg(long)]
    pub boundary_dim: Option<usize>,
    #[arg(long)]
    pub ffnn_dim: Option<usize>,
    #[arg(long)]
    pub lstm_hidden: Option<usize>,
    #[arg(long)]
    pub lstm_layers: Option<usize>,
    #[arg(long)]
    pub keep_prob: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Entity tags fed to the relation head while training.
    #[arg(long = "rc-labels", value_parser = ["predicted", "gold"])]
    pub rc_labels: Option<String>,
    #[arg(long, value_parser = ["mean", "sum"])]
    pub rc_loss_reduction: Option<String>,
    /// Forbid invalid BILOU transitions inside the CRF.
    #[arg(long)]
    pub strict_crf: bool,
    #[arg(long)]
    pub word_dropout_hides_chars: bool,
}

impl ModelArgs {
    /// Command-line overrides as `(config key, value)` pairs.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut opt = |key, v: Option<String>| {
            if let Some(v) = v {
                out.push((key, v));
            }
        };
        opt("setup", self.setup.clone());
        opt("mode", self.mode.clone());
        opt("epochs", self.epochs.map(|v| v.to_string()));
        opt("learning_rate", self.learning_rate.map(|v| v.to_string()));
        opt("adam_beta1", self.adam_beta1.map(|v| v.to_string()));
        opt("adam_beta2", self.adam_beta2.map(|v| v.to_string()));
        opt("adam_epsilon", self.adam_epsilon.map(|v| v.to_string()));
        opt("word_dim", self.word_dim.map(|v| v.to_string()));
        opt("char_dim", self.char_dim.map(|v| v.to_string()));
        opt("label_dim", self.label_dim.map(|v| v.to_string()));
        opt("boundary_dim", self.boundary_dim.map(|v| v.to_string()));
        opt("ffnn_dim", self.ffnn_dim.map(|v| v.to_string()));
        opt("lstm_hidden", self.lstm_hidden.map(|v| v.to_string()));
        opt("lstm_layers", self.lstm_layers.map(|v| v.to_string()));
        opt("keep_prob", self.keep_prob.map(|v| v.to_string()));
        opt("seed", self.seed.map(|v| v.to_string()));
        opt("rc_label_source", self.rc_labels.clone());
        opt("rc_loss_reduction", self.rc_loss_reduction.clone());
        let flags = [
            ("no_char", self.no_char),
            ("no_crf", self.no_crf),
            ("no_entity_emb", self.no_entity_emb),
            ("no_bilinear", self.no_bilinear),
            ("no_linear", self.no_linear),
            ("strict_crf_transitions", self.strict_crf),
            ("word_dropout_hides_chars", self.word_dropout_hides_chars),
        ];
        for (key, on) in flags {
            if on {
                out.push((key, "true".into()));
            }
        }
        out
    }
}
