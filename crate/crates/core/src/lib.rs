//! Joint named-entity recognition and relation classification.
//!
//! The model stacks three pieces on top of a small reverse-mode
//! differentiation engine ([`numerics`]):
//!
//! * an input encoder concatenating word embeddings, character-level BiLSTM
//!   word embeddings and, when entity boundaries are given, a boundary-tag
//!   embedding ([`encoder`]);
//! * a BiLSTM-CRF tagger over BILOU entity tags ([`ner`]);
//! * a relation classifier that embeds the predicted tags, runs a second
//!   BiLSTM and scores every ordered pair of entity-final tokens with a deep
//!   biaffine operator ([`rc`]).
//!
//! Both heads are trained under the summed loss `L = L_ner + L_rc`
//! ([`training`]) and evaluated with macro-averaged F1 ([`eval`]).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod ner;
pub mod nn;
pub mod numerics;
pub mod rc;
pub mod rng;
pub mod seeds;
pub mod training;

pub use config::RunConfig;
pub use data::{AnnotatedSentence, EntitySpan, Relation, Vocabularies};
pub use error::{Error, Result};
pub use eval::{EntityMetric, ScoreReport};
pub use model::{Model, Prediction};
pub use training::{train, train_joint, train_model, train_pipeline, StepRecord, TrainObserver, TrainReport};

/// Ten-sentence corpus with three entity types and two relation types, used
/// by the overfit tests and the browser demo.
pub const SYNTHETIC_CORPUS: &str = include_str!("../data/synthetic10.txt");
