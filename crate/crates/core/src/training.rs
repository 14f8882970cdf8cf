//! Joint and pipeline training. One sentence per Adam step, seeded
//! per-epoch shuffling, and selection of the epoch with the best dev score.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::config::{Mode, RunConfig, TagSource};
use crate::data::{AnnotatedSentence, Vocabularies};
use crate::error::{Error, Result};
use crate::eval::ScoreReport;
use crate::model::{Heads, Model};
use crate::nn::Pass;
use crate::numerics::{AdamState, Gradients, ParamId, ParamStore, Tape};
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Both heads under the summed loss.
    Joint,
    /// Pipeline stage one: the entity tagger alone.
    Entities,
    /// Pipeline stage two: the relation head on gold tags.
    Relations,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Joint => "joint",
            Stage::Entities => "entities",
            Stage::Relations => "relations",
        }
    }
}

/// Losses of one optimizer step. Absent heads contribute 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub stage: Stage,
    pub epoch: usize,
    /// Position of the sentence in the training corpus.
    pub sentence: usize,
    pub l_ner: f64,
    pub l_rc: f64,
    pub l_total: f64,
    pub rc_tag_source: Option<TagSource>,
    pub adam_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    /// Counted from 1.
    pub epoch: usize,
    pub train_loss_ner: f64,
    pub train_loss_rc: f64,
    pub dev_entity_f1: f64,
    pub dev_relation_f1: f64,
    pub dev_average: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the selected epoch of the final stage.
    pub best: usize,
    /// Pipeline only: index of the selected entity-tagger epoch.
    pub best_entities: Option<usize>,
    pub adam_steps: u64,
    pub num_parameters: usize,
    /// Dev scores of the returned parameters.
    pub dev: ScoreReport,
}

impl TrainReport {
    pub fn best_epoch(&self) -> &EpochRecord {
        &self.epochs[self.best]
    }

    /// Plain text rendering; identical runs give identical bytes.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "parameters {}", self.num_parameters).unwrap();
        writeln!(out, "adam_steps {}", self.adam_steps).unwrap();
        writeln!(
            out,
            "{:<10}{:>6}{:>14}{:>14}{:>10}{:>10}{:>10}",
            "stage", "epoch", "loss_ner", "loss_rc", "dev_ent", "dev_rel", "dev_avg"
        )
        .unwrap();
        for (i, e) in self.epochs.iter().enumerate() {
            let mark = if i == self.best || Some(i) == self.best_entities { " *" } else { "" };
            writeln!(
                out,
                "{:<10}{:>6}{:>14.6}{:>14.6}{:>10.2}{:>10.2}{:>10.2}{mark}",
                e.stage.name(),
                e.epoch,
                e.train_loss_ner,
                e.train_loss_rc,
                e.dev_entity_f1,
                e.dev_relation_f1,
                e.dev_average
            )
            .unwrap();
        }
        let b = self.best_epoch();
        writeln!(out, "best {} epoch {} dev average {:.2}", b.stage.name(), b.epoch, b.dev_average).unwrap();
        out.push('\n');
        out.push_str(&self.dev.to_table());
        out
    }
}

/// Hooks called during training.
pub trait TrainObserver {
    fn step(&mut self, _record: &StepRecord) {}
    fn epoch(&mut self, _record: &EpochRecord) {}
}

impl TrainObserver for () {}

impl<F: FnMut(&StepRecord)> TrainObserver for F {
    fn step(&mut self, record: &StepRecord) {
        self(record)
    }
}

/// Builds vocabularies from `train`, initializes a model and trains it in
/// the configured mode.
pub fn train(
    config: RunConfig,
    train: &[AnnotatedSentence],
    dev: &[AnnotatedSentence],
) -> Result<(Model, TrainReport)> {
    let model = Model::new(config, Vocabularies::build(train))?;
    train_model(model, train, dev, &mut ())
}

pub fn train_model(
    model: Model,
    train: &[AnnotatedSentence],
    dev: &[AnnotatedSentence],
    observer: &mut dyn TrainObserver,
) -> Result<(Model, TrainReport)> {
    match model.config.mode {
        Mode::Joint => train_joint(model, train, dev, observer),
        Mode::Pipeline => train_pipeline(model, train, dev, observer),
    }
}

fn check_corpora(train: &[AnnotatedSentence], dev: &[AnnotatedSentence]) -> Result<()> {
    for (name, corpus) in [("training", train), ("dev", dev)] {
        if corpus.is_empty() {
            return Err(Error::Corpus(format!("{name} corpus is empty")));
        }
        for (i, s) in corpus.iter().enumerate() {
            if !s.is_annotated() {
                return Err(Error::Corpus(format!("{name} sentence {i} has no gold entity tags")));
            }
            s.validate(i)?;
        }
    }
    Ok(())
}

struct StageRun<'c> {
    stage: Stage,
    train: &'c [AnnotatedSentence],
    dev: &'c [AnnotatedSentence],
    heads: Heads,
    rc_tag_source: TagSource,
    /// Parameters the optimizer may move.
    trainable: Vec<bool>,
    /// Ranks epochs by dev scores.
    select: fn(&ScoreReport) -> f64,
}

struct StageOutcome {
    epochs: Vec<EpochRecord>,
    best: usize,
    best_params: ParamStore,
    best_dev: ScoreReport,
    steps: u64,
}

fn run_stage(
    model: &mut Model,
    run: &StageRun,
    order_rng: &mut Rng,
    pass: &mut Pass,
    observer: &mut dyn TrainObserver,
) -> Result<StageOutcome> {
    let mut adam = AdamState::new(&model.params, model.config.adam);
    let mut grads = Gradients::for_params(&model.params);
    let mut order: Vec<usize> = (0..run.train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ParamStore, ScoreReport)> = None;
    for epoch in 1..=model.config.epochs {
        order.shuffle(order_rng);
        let (mut sum_ner, mut sum_rc) = (0.0, 0.0);
        for &i in &order {
            let sentence = &run.train[i];
            let mut tape = Tape::new(&model.params);
            let losses = model.losses(&mut tape, sentence, pass, run.heads, run.rc_tag_source)?;
            let total = match (losses.ner, losses.rc) {
                (Some(a), Some(b)) => tape.add(a, b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("every stage builds at least one loss"),
            };
            let record = StepRecord {
                stage: run.stage,
                epoch,
                sentence: i,
                l_ner: losses.ner.map_or(0.0, |v| tape.scalar(v)),
                l_rc: losses.rc.map_or(0.0, |v| tape.scalar(v)),
                l_total: tape.scalar(total),
                rc_tag_source: losses.rc.map(|_| losses.rc_tag_source),
                adam_step: adam.steps() + 1,
            };
            if !record.l_total.is_finite() {
                return Err(Error::Divergence { epoch, sentence: i });
            }
            tape.backward(total, &mut grads);
            drop(tape);
            adam.step_and_clear(&mut model.params, &mut grads, |id: ParamId| run.trainable[id.index()]);
            sum_ner += record.l_ner;
            sum_rc += record.l_rc;
            observer.step(&record);
        }
        let dev = model.evaluate(run.dev)?;
        let record = EpochRecord {
            stage: run.stage,
            epoch,
            train_loss_ner: sum_ner,
            train_loss_rc: sum_rc,
            dev_entity_f1: dev.entities.macro_f1,
            dev_relation_f1: dev.relations.macro_f1,
            dev_average: dev.average(),
        };
        observer.epoch(&record);
        let score = (run.select)(&dev);
        if best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((epochs.len(), score, model.params.clone(), dev));
        }
        epochs.push(record);
    }
    let (best, _, best_params, best_dev) = best.expect("at least one epoch");
    Ok(StageOutcome {
        epochs,
        best,
        best_params,
        best_dev,
        steps: adam.steps(),
    })
}

/// Minimizes `L_ner + L_rc` per sentence. The relation head reads the tags
/// decoded in the same pass unless the configuration asks for gold tags.
/// Returns the parameters of the epoch with the best dev average.
pub fn train_joint(
    mut model: Model,
    train: &[AnnotatedSentence],
    dev: &[AnnotatedSentence],
    observer: &mut dyn TrainObserver,
) -> Result<(Model, TrainReport)> {
    check_corpora(train, dev)?;
    let seed = model.config.seed;
    let mut order_rng = stream(seed, Stream::Shuffle);
    let mut pass = Pass::train(model.config.keep_prob, seed);
    let run = StageRun {
        stage: Stage::Joint,
        train,
        dev,
        heads: Heads::Both,
        rc_tag_source: model.config.rc_label_source,
        trainable: vec![true; model.params.len()],
        select: ScoreReport::average,
    };
    let out = run_stage(&mut model, &run, &mut order_rng, &mut pass, observer)?;
    model.params = out.best_params;
    let report = TrainReport {
        epochs: out.epochs,
        best: out.best,
        best_entities: None,
        adam_steps: out.steps,
        num_parameters: model.num_parameters(),
        dev: out.best_dev,
    };
    Ok((model, report))
}

/// Trains the encoder and tagger alone, keeps their best-dev-F1 epoch, then
/// trains the relation head on gold tags with everything else frozen. Dev
/// scoring in the second stage decodes with the frozen tagger.
pub fn train_pipeline(
    mut model: Model,
    train: &[AnnotatedSentence],
    dev: &[AnnotatedSentence],
    observer: &mut dyn TrainObserver,
) -> Result<(Model, TrainReport)> {
    check_corpora(train, dev)?;
    let seed = model.config.seed;
    let mut order_rng = stream(seed, Stream::Shuffle);
    let mut pass = Pass::train(model.config.keep_prob, seed);
    let rc_ids = model.rc_param_ids();
    let is_rc: Vec<bool> = model.params.ids().map(|id| rc_ids.contains(&id)).collect();

    let entities = StageRun {
        stage: Stage::Entities,
        train,
        dev,
        heads: Heads::EntitiesOnly,
        rc_tag_source: TagSource::Gold,
        trainable: is_rc.iter().map(|r| !r).collect(),
        select: |r| r.entities.macro_f1,
    };
    let first = run_stage(&mut model, &entities, &mut order_rng, &mut pass, observer)?;
    model.params = first.best_params;

    let relations = StageRun {
        stage: Stage::Relations,
        train,
        dev,
        heads: Heads::RelationsOnly,
        rc_tag_source: TagSource::Gold,
        trainable: is_rc,
        select: ScoreReport::average,
    };
    let second = run_stage(&mut model, &relations, &mut order_rng, &mut pass, observer)?;
    model.params = second.best_params;

    let offset = first.epochs.len();
    let mut epochs = first.epochs;
    epochs.extend(second.epochs);
    let report = TrainReport {
        epochs,
        best: offset + second.best,
        best_entities: Some(first.best),
        adam_steps: first.steps + second.steps,
        num_parameters: model.num_parameters(),
        dev: second.best_dev,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_corpus_str;

    const TEXT: &str = "0\tJohn\tB-Peop\n1\tSmith\tL-Peop\n2\tworks\tO\n3\tfor\tO\n4\tAcme\tU-Org\nR\t1\t4\tWork_For\n\n\
                        0\tMary\tU-Peop\n1\tlives\tO\n2\tin\tO\n3\tRome\tU-Loc\nR\t0\t3\tLive_In\n\n\
                        0\tIt\tO\n1\trained\tO\n";

    fn tiny(mode: Mode) -> RunConfig {
        let mut c = RunConfig::default();
        c.mode = mode;
        c.epochs = 3;
        c.dims.word = 4;
        c.dims.char = 3;
        c.dims.label = 3;
        c.dims.ffnn = 4;
        c.dims.lstm_hidden = 3;
        c
    }

    #[test]
    fn one_step_per_sentence_and_loss_identity() {
        let corpus = parse_corpus_str(TEXT).unwrap();
        for mode in [Mode::Joint, Mode::Pipeline] {
            let model = Model::new(tiny(mode), Vocabularies::build(&corpus)).unwrap();
            let mut steps = Vec::new();
            let mut obs = |r: &StepRecord| steps.push(*r);
            let (_, report) = train_model(model, &corpus, &corpus, &mut obs).unwrap();
            let stages = if mode == Mode::Joint { 1 } else { 2 };
            assert_eq!(report.adam_steps, (stages * 3 * corpus.len()) as u64);
            assert_eq!(steps.len(), stages * 3 * corpus.len());
            for s in &steps {
                assert_eq!(s.l_total, s.l_ner + s.l_rc);
                if s.stage == Stage::Relations {
                    assert_eq!(s.rc_tag_source, Some(TagSource::Gold));
                }
            }
            let best = report.best_epoch().dev_average;
            let stage = report.best_epoch().stage;
            assert!(report.epochs.iter().filter(|e| e.stage == stage).all(|e| e.dev_average <= best));
        }
    }

    #[test]
    fn rejects_unannotated_training_data() {
        let corpus = parse_corpus_str(TEXT).unwrap();
        let raw = parse_corpus_str("0\tHello\n").unwrap();
        let model = Model::new(tiny(Mode::Joint), Vocabularies::build(&corpus)).unwrap();
        assert!(train_joint(model, &raw, &corpus, &mut ()).is_err());
    }

    #[test]
    fn divergence_reports_coordinates() {
        let corpus = parse_corpus_str(TEXT).unwrap();
        let mut model = Model::new(tiny(Mode::Joint), Vocabularies::build(&corpus)).unwrap();
        let id = model.layout.ner.ffnn.b;
        model.params.get_mut(id).values_mut()[0] = f64::NAN;
        match train_joint(model, &corpus, &corpus, &mut ()) {
            Err(Error::Divergence { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("unexpected {:?}", other.map(|r| r.1)),
        }
    }
}
