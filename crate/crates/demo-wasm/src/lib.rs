//! Browser demo. Exported functions take and return JSON strings so the page
//! needs no generated type bindings. Failures come back as
//! `{"error": "..."}`, except from the `Demo` constructor, which throws.

use jointre::config::{Mode, Setup};
use jointre::data::{bilou_to_spans, parse_corpus_str, spans_to_bilou, validate_bilou};
use jointre::ner::{crf_marginals, viterbi_decode};
use jointre::{AnnotatedSentence, Model, RunConfig, Vocabularies, SYNTHETIC_CORPUS};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Repair {
    pub valid: bool,
    pub problem: Option<String>,
    pub spans: Vec<Span>,
    pub repaired: Vec<String>,
}

/// Reads whitespace-separated tags, lenient about invalid sequences, and
/// re-encodes the spans it finds.
pub fn repair(tags: &str) -> Result<Repair, String> {
    let tags: Vec<&str> = tags.split_whitespace().collect();
    let problem = validate_bilou(&tags).err();
    let spans = bilou_to_spans(&tags);
    let repaired = spans_to_bilou(&spans, tags.len()).map_err(|e| e.to_string())?;
    Ok(Repair {
        valid: problem.is_none(),
        problem,
        spans: spans
            .into_iter()
            .map(|s| Span {
                start: s.start,
                end: s.end,
                label: s.label,
            })
            .collect(),
        repaired,
    })
}

#[derive(Debug, Deserialize)]
pub struct CrfRequest {
    /// `n` rows of `T` scores.
    pub emissions: Vec<Vec<f64>>,
    /// `(T + 2)` rows of `T + 2` scores, start and stop last. Zeros if absent.
    #[serde(default)]
    pub transitions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
pub struct CrfResponse {
    pub best_path: Vec<usize>,
    pub best_score: f64,
    pub best_probability: f64,
    pub log_partition: f64,
    /// `n` rows of `T` posterior probabilities.
    pub marginals: Vec<Vec<f64>>,
}

pub fn explore_crf(request: &CrfRequest) -> Result<CrfResponse, String> {
    let n = request.emissions.len();
    let tags = request.emissions.first().map_or(0, Vec::len);
    if n == 0 || tags == 0 {
        return Err("need at least one position and one tag".into());
    }
    if request.emissions.iter().any(|r| r.len() != tags) {
        return Err("every emission row needs the same number of tags".into());
    }
    let size = tags + 2;
    let trans: Vec<f64> = match &request.transitions {
        None => vec![0.0; size * size],
        Some(rows) if rows.len() == size && rows.iter().all(|r| r.len() == size) => rows.concat(),
        Some(_) => return Err(format!("transitions must be {size} × {size}")),
    };
    let em = request.emissions.concat();
    if em.iter().chain(&trans).any(|x| !x.is_finite()) {
        return Err("scores must be finite".into());
    }
    let best = viterbi_decode(&em, tags, &trans, None);
    let m = crf_marginals(&em, tags, &trans, None);
    Ok(CrfResponse {
        best_probability: (best.score - m.log_partition).exp(),
        best_path: best.tags,
        best_score: best.score,
        log_partition: m.log_partition,
        marginals: m.unary.chunks(tags).map(<[f64]>::to_vec).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct Extraction {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub entities: Vec<Span>,
    pub relations: Vec<ExtractedRelation>,
}

#[derive(Debug, Serialize)]
pub struct ExtractedRelation {
    pub head: String,
    pub tail: String,
    pub label: String,
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub parameters: usize,
    pub train_entity_f1: f64,
    pub train_relation_f1: f64,
}

/// A deliberately small joint model trained on the bundled ten-sentence
/// corpus, so training finishes in a few seconds in the browser.
#[wasm_bindgen]
pub struct Demo {
    model: Model,
    summary: TrainSummary,
}

impl Demo {
    pub fn train(epochs: usize, seed: u64) -> Result<Demo, String> {
        let corpus = parse_corpus_str(SYNTHETIC_CORPUS).map_err(|e| e.to_string())?;
        let mut config = RunConfig::default();
        config.setup = Setup::One;
        config.mode = Mode::Joint;
        config.epochs = epochs.max(1);
        config.seed = seed;
        config.dims.word = 16;
        config.dims.char = 8;
        config.dims.label = 8;
        config.dims.ffnn = 16;
        config.dims.lstm_hidden = 16;
        config.dims.lstm_layers = 1;
        let model = Model::new(config, Vocabularies::build(&corpus)).map_err(|e| e.to_string())?;
        let (model, _) = jointre::train_model(model, &corpus, &corpus, &mut ()).map_err(|e| e.to_string())?;
        let scores = model.evaluate(&corpus).map_err(|e| e.to_string())?;
        let summary = TrainSummary {
            epochs: model.config.epochs,
            parameters: model.num_parameters(),
            train_entity_f1: scores.entities.macro_f1,
            train_relation_f1: scores.relations.macro_f1,
        };
        Ok(Demo { model, summary })
    }

    pub fn summary(&self) -> &TrainSummary {
        &self.summary
    }

    /// Tags whitespace-tokenized text and lists the relations found.
    pub fn extract_text(&self, text: &str) -> Result<Extraction, String> {
        let sentence = AnnotatedSentence {
            tokens: text.split_whitespace().map(str::to_string).collect(),
            ..Default::default()
        };
        let p = self.model.predict(&sentence).map_err(|e| e.to_string())?;
        let phrase = |last: usize| {
            let span = p.spans.iter().find(|s| s.end == last).expect("relation ends an entity");
            sentence.tokens[span.start..=span.end].join(" ")
        };
        let relations = p
            .relations
            .iter()
            .map(|r| ExtractedRelation {
                head: phrase(r.head),
                tail: phrase(r.tail),
                label: r.label.clone(),
            })
            .collect();
        Ok(Extraction {
            entities: p
                .spans
                .iter()
                .map(|s| Span {
                    start: s.start,
                    end: s.end,
                    label: s.label.clone(),
                })
                .collect(),
            tokens: sentence.tokens,
            tags: p.tags,
            relations,
        })
    }
}

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).expect("serializable"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen]
impl Demo {
    /// Trains a fresh model; throws the error message on failure.
    #[wasm_bindgen(constructor)]
    pub fn new(epochs: u32, seed: u32) -> Result<Demo, String> {
        Demo::train(epochs as usize, seed as u64)
    }

    pub fn summary_json(&self) -> String {
        to_json(Ok(&self.summary))
    }

    pub fn extract(&self, text: &str) -> String {
        to_json(self.extract_text(text))
    }
}

#[wasm_bindgen]
pub fn repair_tags(tags: &str) -> String {
    to_json(repair(tags))
}

#[wasm_bindgen]
pub fn crf(request_json: &str) -> String {
    to_json(
        serde_json::from_str::<CrfRequest>(request_json)
            .map_err(|e| e.to_string())
            .and_then(|r| explore_crf(&r)),
    )
}

#[wasm_bindgen]
pub fn example_sentences() -> String {
    let corpus = parse_corpus_str(SYNTHETIC_CORPUS).expect("bundled corpus parses");
    let lines: Vec<String> = corpus.iter().map(|s| s.tokens.join(" ")).collect();
    serde_json::to_string(&lines).expect("serializable")
}
