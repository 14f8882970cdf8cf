//! Run configuration and its `key = value` text form.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

/// Setup 1 predicts entity boundaries; Setup 2 receives gold boundaries as
/// an extra input embedding and is scored by entity classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Joint,
    Pipeline,
}

/// Which entity tags feed the relation head while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagSource {
    Predicted,
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    _ => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), s
                    ))),
                }
            }
        }
    };
}

text_enum!(Setup { One => "1", Two => "2" });
text_enum!(Mode { Joint => "joint", Pipeline => "pipeline" });
text_enum!(TagSource { Predicted => "predicted", Gold => "gold" });
text_enum!(Reduction { Mean => "mean", Sum => "sum" });

/// The five ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablations {
    /// (a) drop the character-level word embedding from the input vector.
    pub no_char: bool,
    /// (b) per-token softmax instead of the CRF.
    pub no_crf: bool,
    /// (c) no predicted-label embedding in the relation head input.
    pub no_entity_emb: bool,
    /// (d) drop the bilinear term of the biaffine scorer.
    pub no_bilinear: bool,
    /// (e) drop the linear term of the biaffine scorer.
    pub no_linear: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub word: usize,
    pub char: usize,
    pub label: usize,
    pub boundary: usize,
    pub ffnn: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            word: 100,
            char: 25,
            label: 100,
            boundary: 100,
            ffnn: 100,
            lstm_hidden: 100,
            lstm_layers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub setup: Setup,
    pub mode: Mode,
    pub ablations: Ablations,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub dims: Dims,
    pub keep_prob: f64,
    pub seed: u64,
    pub rc_label_source: TagSource,
    pub rc_loss_reduction: Reduction,
    pub strict_crf_transitions: bool,
    /// When set, a word swapped for `UNK` by word dropout also hides its
    /// characters from the character BiLSTM.
    pub word_dropout_hides_chars: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            setup: Setup::One,
            mode: Mode::Joint,
            ablations: Ablations::default(),
            epochs: 100,
            adam: AdamConfig::default(),
            dims: Dims::default(),
            keep_prob: 0.67,
            seed: 1,
            rc_label_source: TagSource::Predicted,
            rc_loss_reduction: Reduction::Mean,
            strict_crf_transitions: false,
            word_dropout_hides_chars: false,
        }
    }
}

/// Every key accepted by [`RunConfig::set`], in the order they are written.
pub const KEYS: &[&str] = &[
    "setup",
    "mode",
    "no_char",
    "no_crf",
    "no_entity_emb",
    "no_bilinear",
    "no_linear",
    "epochs",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "word_dim",
    "char_dim",
    "label_dim",
    "boundary_dim",
    "ffnn_dim",
    "lstm_hidden",
    "lstm_layers",
    "keep_prob",
    "seed",
    "rc_label_source",
    "rc_loss_reduction",
    "strict_crf_transitions",
    "word_dropout_hides_chars",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<String> {
        let a = &self.ablations;
        let d = &self.dims;
        Some(match key {
            "setup" => self.setup.to_string(),
            "mode" => self.mode.to_string(),
            "no_char" => a.no_char.to_string(),
            "no_crf" => a.no_crf.to_string(),
            "no_entity_emb" => a.no_entity_emb.to_string(),
            "no_bilinear" => a.no_bilinear.to_string(),
            "no_linear" => a.no_linear.to_string(),
            "epochs" => self.epochs.to_string(),
            "learning_rate" => self.adam.learning_rate.to_string(),
            "adam_beta1" => self.adam.beta1.to_string(),
            "adam_beta2" => self.adam.beta2.to_string(),
            "adam_epsilon" => self.adam.epsilon.to_string(),
            "word_dim" => d.word.to_string(),
            "char_dim" => d.char.to_string(),
            "label_dim" => d.label.to_string(),
            "boundary_dim" => d.boundary.to_string(),
            "ffnn_dim" => d.ffnn.to_string(),
            "lstm_hidden" => d.lstm_hidden.to_string(),
            "lstm_layers" => d.lstm_layers.to_string(),
            "keep_prob" => self.keep_prob.to_string(),
            "seed" => self.seed.to_string(),
            "rc_label_source" => self.rc_label_source.to_string(),
            "rc_loss_reduction" => self.rc_loss_reduction.to_string(),
            "strict_crf_transitions" => self.strict_crf_transitions.to_string(),
            "word_dropout_hides_chars" => self.word_dropout_hides_chars.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let a = &mut self.ablations;
        let d = &mut self.dims;
        match key {
            "setup" => self.setup = v.parse()?,
            "mode" => self.mode = v.parse()?,
            "no_char" => a.no_char = parse(key, v)?,
            "no_crf" => a.no_crf = parse(key, v)?,
            "no_entity_emb" => a.no_entity_emb = parse(key, v)?,
            "no_bilinear" => a.no_bilinear = parse(key, v)?,
            "no_linear" => a.no_linear = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "learning_rate" => self.adam.learning_rate = parse(key, v)?,
            "adam_beta1" => self.adam.beta1 = parse(key, v)?,
            "adam_beta2" => self.adam.beta2 = parse(key, v)?,
            "adam_epsilon" => self.adam.epsilon = parse(key, v)?,
            "word_dim" => d.word = parse(key, v)?,
            "char_dim" => d.char = parse(key, v)?,
            "label_dim" => d.label = parse(key, v)?,
            "boundary_dim" => d.boundary = parse(key, v)?,
            "ffnn_dim" => d.ffnn = parse(key, v)?,
            "lstm_hidden" => d.lstm_hidden = parse(key, v)?,
            "lstm_layers" => d.lstm_layers = parse(key, v)?,
            "keep_prob" => self.keep_prob = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "rc_label_source" => self.rc_label_source = v.parse()?,
            "rc_loss_reduction" => self.rc_loss_reduction = v.parse()?,
            "strict_crf_transitions" => self.strict_crf_transitions = parse(key, v)?,
            "word_dropout_hides_chars" => self.word_dropout_hides_chars = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.ablations.no_bilinear && self.ablations.no_linear {
            return err("no_bilinear and no_linear together leave no relation scorer");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return err("keep_prob must lie in (0, 1]");
        }
        if self.epochs == 0 {
            return err("epochs must be positive");
        }
        let adam = &self.adam;
        if !(adam.learning_rate > 0.0 && adam.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&adam.beta1) || !(0.0..1.0).contains(&adam.beta2) {
            return err("Adam betas must lie in [0, 1)");
        }
        if adam.epsilon.is_nan() || adam.epsilon <= 0.0 {
            return err("adam_epsilon must be positive");
        }
        let d = &self.dims;
        if [d.word, d.char, d.label, d.boundary, d.ffnn, d.lstm_hidden, d.lstm_layers].contains(&0) {
            return err("every dimension must be positive");
        }
        if self.ablations.no_crf && self.strict_crf_transitions {
            return err("strict_crf_transitions needs the CRF (drop no_crf)");
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_kv_str(text)?;
        Ok(config)
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }
}
