//! The assembled joint model: encoder, entity head and relation head over one
//! parameter store.

use std::path::Path;
use std::rc::Rc;

use crate::config::{RunConfig, Setup, TagSource};
use crate::data::{
    bilou_to_spans, load_pretrained_words, spans_to_bilou, AnnotatedSentence, EntitySpan, Relation, Vocabularies,
};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::eval::{EntityMetric, ScoreReport};
use crate::ner::{crf_nll, softmax_decode, softmax_nll, strict_transition_mask, viterbi_decode, NerParams, TagSequence};
use crate::nn::Pass;
use crate::numerics::{argmax, ParamId, ParamStore, Tape, Var};
use crate::rc::{build_candidates, rc_loss, RcParams, RelationCandidate};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone)]
pub struct Layout {
    pub encoder: EncoderParams,
    pub ner: NerParams,
    pub rc: RcParams,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: RunConfig,
    pub vocab: Vocabularies,
    pub params: ParamStore,
    pub layout: Layout,
    strict_mask: Option<Rc<[bool]>>,
}

/// Entity tags, spans and directed relations predicted for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub tags: Vec<String>,
    pub spans: Vec<EntitySpan>,
    pub relations: Vec<Relation>,
}

/// Which losses a forward pass builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heads {
    Both,
    EntitiesOnly,
    /// Relation loss only, with the input vectors cut off from the encoder.
    RelationsOnly,
}

/// Loss nodes of one training forward pass.
#[derive(Debug, Clone)]
pub struct SentenceLosses {
    pub ner: Option<Var>,
    pub rc: Option<Var>,
    /// Tag ids fed to the relation head and where they came from.
    pub rc_tags: Vec<usize>,
    pub rc_tag_source: TagSource,
    pub candidates: usize,
}

impl Model {
    /// Fresh parameters drawn from the run seed's initialization stream.
    pub fn new(config: RunConfig, vocab: Vocabularies) -> Result<Self> {
        config.validate()?;
        if vocab.relations.len() < 2 {
            return Err(Error::Config(
                "the training corpus has no relation labels besides NEG".into(),
            ));
        }
        let mut rng = stream(config.seed, Stream::Init);
        let mut params = ParamStore::new();
        let encoder = EncoderParams::register(&mut params, &config, &vocab, &mut rng);
        let input_dim = EncoderParams::output_dim(&config);
        let tags = vocab.entity_tags.len();
        let ner = NerParams::register(&mut params, &config, tags, input_dim, &mut rng);
        let rc = RcParams::register(&mut params, &config, tags, vocab.relations.len(), input_dim, &mut rng);
        let strict_mask = config
            .strict_crf_transitions
            .then(|| Rc::from(strict_transition_mask(&vocab.entity_tags)));
        Ok(Model {
            config,
            vocab,
            params,
            layout: Layout { encoder, ner, rc },
            strict_mask,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_values()
    }

    /// Overwrites word embedding rows from a text vector file; returns the
    /// number of vocabulary words found.
    pub fn load_pretrained(&mut self, path: impl AsRef<Path>) -> Result<usize> {
        let table = self.params.get_mut(self.layout.encoder.words);
        load_pretrained_words(path, &self.vocab, table)
    }

    /// Parameters belonging to the relation head.
    pub fn rc_param_ids(&self) -> Vec<ParamId> {
        self.params
            .iter()
            .filter(|(_, name, _)| name.starts_with("rc."))
            .map(|(id, _, _)| id)
            .collect()
    }

    /// Checks that `other` has exactly this model's parameter names and
    /// shapes, in order, and reports the first difference.
    pub fn audit_shapes(&self, other: &ParamStore) -> Result<()> {
        let mut mine = self.params.iter();
        let mut theirs = other.iter();
        loop {
            match (mine.next(), theirs.next()) {
                (None, None) => return Ok(()),
                (Some((_, name, t)), None) => {
                    return Err(Error::ParamMismatch {
                        name: name.to_string(),
                        expected: t.shape().to_vec(),
                        found: Vec::new(),
                    })
                }
                (None, Some((_, name, t))) => {
                    return Err(Error::ParamMismatch {
                        name: name.to_string(),
                        expected: Vec::new(),
                        found: t.shape().to_vec(),
                    })
                }
                (Some((_, a, ta)), Some((_, b, tb))) => {
                    if a != b {
                        return Err(Error::Checkpoint(format!(
                            "expected parameter `{a}`, found `{b}`"
                        )));
                    }
                    if ta.shape() != tb.shape() {
                        return Err(Error::ParamMismatch {
                            name: a.to_string(),
                            expected: ta.shape().to_vec(),
                            found: tb.shape().to_vec(),
                        });
                    }
                }
            }
        }
    }

    fn gold_tag_ids(&self, sentence: &AnnotatedSentence) -> Result<Vec<usize>> {
        sentence
            .entity_tags
            .iter()
            .map(|t| {
                self.vocab
                    .entity_tags
                    .id(t)
                    .ok_or_else(|| Error::Corpus(format!("entity tag `{t}` is not in the model's tag set")))
            })
            .collect()
    }

    fn transitions(&self, tape: &mut Tape) -> Option<Var> {
        self.layout.ner.transitions.map(|t| tape.param(t))
    }

    fn decode(&self, tape: &Tape, emissions: Var, transitions: Option<Var>) -> TagSequence {
        let tags = self.layout.ner.tag_count;
        let em = tape.value(emissions);
        match transitions {
            Some(t) => viterbi_decode(em, tags, tape.value(t), self.strict_mask.as_deref()),
            None => softmax_decode(em, tags),
        }
    }

    /// Decoded ids passed through the repair rule, as tag ids and spans.
    fn repaired(&self, ids: &[usize]) -> (Vec<usize>, Vec<EntitySpan>) {
        let strings: Vec<&str> = ids.iter().map(|&i| self.vocab.entity_tags.symbol(i)).collect();
        let spans = bilou_to_spans(&strings);
        let tags = spans_to_bilou(&spans, ids.len()).expect("repaired spans never overlap");
        let ids = tags
            .iter()
            .map(|t| self.vocab.entity_tags.id(t).expect("repair keeps tag types"))
            .collect();
        (ids, spans)
    }

    /// Relation scores for every candidate, one length-`l` node each.
    fn score_candidates(
        &self,
        tape: &mut Tape,
        inputs: &[Var],
        tags: &[usize],
        candidates: &[RelationCandidate],
        pass: &mut Pass,
    ) -> Vec<Var> {
        if candidates.is_empty() {
            return Vec::new();
        }
        let rc = &self.layout.rc;
        let rs = rc.rc_inputs(tape, inputs, tags, pass);
        let mut positions: Vec<usize> = candidates.iter().flat_map(|c| [c.head, c.tail]).collect();
        positions.sort_unstable();
        positions.dedup();
        let projected = rc.project(tape, &rs, &positions, pass);
        candidates
            .iter()
            .map(|c| rc.biaffine(tape, projected[&c.head].0, projected[&c.tail].1))
            .collect()
    }

    /// Builds the requested losses for one annotated sentence.
    pub fn losses(
        &self,
        tape: &mut Tape,
        sentence: &AnnotatedSentence,
        pass: &mut Pass,
        heads: Heads,
        rc_tag_source: TagSource,
    ) -> Result<SentenceLosses> {
        let gold = self.gold_tag_ids(sentence)?;
        let mut inputs = self
            .layout
            .encoder
            .assemble_inputs(tape, sentence, &self.vocab, &self.config, pass)?;
        let mut ner = None;
        let mut decoded = None;
        if heads != Heads::RelationsOnly {
            let em = self.layout.ner.emissions(tape, &inputs, pass);
            let trans = self.transitions(tape);
            ner = Some(match trans {
                Some(t) => crf_nll(tape, em, t, &gold, self.strict_mask.clone())?,
                None => softmax_nll(tape, em, &gold)?,
            });
            if rc_tag_source == TagSource::Predicted && heads == Heads::Both {
                decoded = Some(self.decode(tape, em, trans).tags);
            }
        }
        if heads == Heads::EntitiesOnly {
            return Ok(SentenceLosses {
                ner,
                rc: None,
                rc_tags: Vec::new(),
                rc_tag_source,
                candidates: 0,
            });
        }
        if heads == Heads::RelationsOnly {
            inputs = inputs
                .iter()
                .map(|&v| {
                    let value = tape.value(v).to_vec();
                    tape.input_vec(value)
                })
                .collect();
        }
        let (rc_tags, spans) = match decoded {
            Some(ids) => self.repaired(&ids),
            None => (gold, sentence.spans()),
        };
        let source = if decoded_used(heads, rc_tag_source) {
            TagSource::Predicted
        } else {
            TagSource::Gold
        };
        let candidates = build_candidates(&spans, &sentence.relations, &self.vocab.relations);
        let scores = self.score_candidates(tape, &inputs, &rc_tags, &candidates, pass);
        let rc = rc_loss(tape, &candidates, &scores, self.config.rc_loss_reduction);
        Ok(SentenceLosses {
            ner,
            rc: Some(rc),
            rc_tags,
            rc_tag_source: source,
            candidates: candidates.len(),
        })
    }

    /// Deterministic prediction with dropout off. Setup 2 reads the gold
    /// boundary letters from `sentence`.
    pub fn predict(&self, sentence: &AnnotatedSentence) -> Result<Prediction> {
        if sentence.is_empty() {
            return Ok(Prediction {
                tags: Vec::new(),
                spans: Vec::new(),
                relations: Vec::new(),
            });
        }
        let mut tape = Tape::new(&self.params);
        let mut pass = Pass::eval();
        let inputs = self
            .layout
            .encoder
            .assemble_inputs(&mut tape, sentence, &self.vocab, &self.config, &mut pass)?;
        let em = self.layout.ner.emissions(&mut tape, &inputs, &mut pass);
        let trans = self.transitions(&mut tape);
        let decoded = self.decode(&tape, em, trans);
        let (ids, spans) = self.repaired(&decoded.tags);
        let candidates = build_candidates(&spans, &[], &self.vocab.relations);
        let scores = self.score_candidates(&mut tape, &inputs, &ids, &candidates, &mut pass);
        let relations = candidates
            .iter()
            .zip(&scores)
            .filter_map(|(c, &s)| {
                let label = argmax(tape.value(s));
                (label != 0).then(|| Relation::new(c.head, c.tail, self.vocab.relations.symbol(label)))
            })
            .collect();
        let tags = ids.iter().map(|&i| self.vocab.entity_tags.symbol(i).to_string()).collect();
        Ok(Prediction { tags, spans, relations })
    }

    pub fn predict_all(&self, sentences: &[AnnotatedSentence]) -> Result<Vec<Prediction>> {
        sentences.iter().map(|s| self.predict(s)).collect()
    }

    /// Scores predictions against a gold corpus: exact spans under Setup 1,
    /// the one-token rule under Setup 2.
    pub fn evaluate(&self, gold: &[AnnotatedSentence]) -> Result<ScoreReport> {
        if gold.is_empty() {
            return Err(Error::Corpus("evaluation corpus is empty".into()));
        }
        if let Some(i) = gold.iter().position(|s| !s.is_annotated()) {
            return Err(Error::Corpus(format!("sentence {i} has no gold entity tags")));
        }
        let preds = self.predict_all(gold)?;
        let metric = match self.config.setup {
            Setup::One => EntityMetric::Ner,
            Setup::Two => EntityMetric::Ec,
        };
        let gold_spans: Vec<_> = gold.iter().map(|s| s.spans()).collect();
        let gold_rels: Vec<_> = gold.iter().map(|s| s.relations.clone()).collect();
        let pred_spans: Vec<_> = preds.iter().map(|p| p.spans.clone()).collect();
        let pred_rels: Vec<_> = preds.into_iter().map(|p| p.relations).collect();
        Ok(ScoreReport::new(metric, &gold_spans, &pred_spans, &gold_rels, &pred_rels))
    }
}

fn decoded_used(heads: Heads, source: TagSource) -> bool {
    heads == Heads::Both && source == TagSource::Predicted
}
