//! Entity tagger: a stacked BiLSTM over the input vectors, a linear map to
//! per-tag scores and a linear-chain CRF (or, ablated, a per-token softmax).
//!
//! CRF transitions form a `(T + 2) × (T + 2)` matrix whose last two indices
//! are virtual start and stop states. A path `y` scores
//! `trans[start, y_0] + Σ_i emit[i, y_i] + Σ_i trans[y_{i-1}, y_i] + trans[y_{n-1}, stop]`.

use std::rc::Rc;

use crate::config::RunConfig;
use crate::data::{parse_tag, Boundary, SymbolTable};
use crate::error::{Error, Result};
use crate::nn::{glorot, Linear, Pass, StackedBiLstm};
use crate::numerics::{argmax, log_sum_exp, ParamId, ParamStore, Tape, Var};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct NerParams {
    pub lstm: StackedBiLstm,
    pub ffnn: Linear,
    pub transitions: Option<ParamId>,
    pub tag_count: usize,
}

/// A decoded tag path and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSequence {
    pub tags: Vec<usize>,
    pub score: f64,
}

impl NerParams {
    pub fn register(
        store: &mut ParamStore,
        config: &RunConfig,
        tag_count: usize,
        input_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let d = &config.dims;
        let lstm = StackedBiLstm::register(store, "ner.lstm", input_dim, d.lstm_hidden, d.lstm_layers, rng);
        let ffnn = Linear::register(store, "ner.ffnn", 2 * d.lstm_hidden, tag_count, rng);
        let transitions = (!config.ablations.no_crf)
            .then(|| store.add("ner.crf.transitions", glorot(vec![tag_count + 2, tag_count + 2], rng)));
        NerParams {
            lstm,
            ffnn,
            transitions,
            tag_count,
        }
    }

    /// `n × T` matrix of unnormalized tag scores.
    pub fn emissions(&self, tape: &mut Tape, inputs: &[Var], pass: &mut Pass) -> Var {
        let hs = self.lstm.run(tape, inputs, pass);
        let rows: Vec<Var> = hs
            .into_iter()
            .map(|h| {
                let h = pass.dropout(tape, h);
                self.ffnn.forward(tape, h)
            })
            .collect();
        tape.stack(&rows)
    }
}

/// Allowed moves between BILOU tags (plus start/stop), row-major over
/// `(T + 2)²` entries.
pub fn strict_transition_mask(tags: &SymbolTable) -> Vec<bool> {
    let t = tags.len();
    let size = t + 2;
    let (start, stop) = (t, t + 1);
    let parsed: Vec<(Boundary, Option<&str>)> = tags
        .symbols()
        .iter()
        .map(|s| parse_tag(s).unwrap_or((Boundary::O, None)))
        .collect();
    let opens = |a: usize| matches!(parsed[a].0, Boundary::B | Boundary::I);
    let mut allowed = vec![false; size * size];
    for a in 0..size {
        for b in 0..size {
            allowed[a * size + b] = if b == start || a == stop || (a == start && b == stop) {
                false
            } else if a == start {
                !opens_continuation(parsed[b].0)
            } else if b == stop {
                !opens(a)
            } else if opens(a) {
                opens_continuation(parsed[b].0) && parsed[b].1 == parsed[a].1
            } else {
                !opens_continuation(parsed[b].0)
            };
        }
    }
    allowed
}

fn opens_continuation(b: Boundary) -> bool {
    matches!(b, Boundary::I | Boundary::L)
}

fn effective_transitions(trans: &[f64], allowed: Option<&[bool]>) -> Vec<f64> {
    match allowed {
        None => trans.to_vec(),
        Some(mask) => trans
            .iter()
            .zip(mask)
            .map(|(&v, &ok)| if ok { v } else { f64::NEG_INFINITY })
            .collect(),
    }
}

/// Score of one path, summed in the same order the Viterbi recursion uses.
pub fn crf_path_score(emissions: &[f64], tags: usize, trans: &[f64], path: &[usize]) -> f64 {
    let size = tags + 2;
    let (start, stop) = (tags, tags + 1);
    let mut score = trans[start * size + path[0]] + emissions[path[0]];
    for i in 1..path.len() {
        score += trans[path[i - 1] * size + path[i]];
        score += emissions[i * tags + path[i]];
    }
    score + trans[path[path.len() - 1] * size + stop]
}

/// Log-space forward recursion; returns `alpha` (`n × T`).
fn forward_scores(emissions: &[f64], tags: usize, trans: &[f64]) -> Vec<f64> {
    let n = emissions.len() / tags;
    let size = tags + 2;
    let start = tags;
    let mut alpha = vec![0.0; n * tags];
    for j in 0..tags {
        alpha[j] = trans[start * size + j] + emissions[j];
    }
    let mut buf = vec![0.0; tags];
    for i in 1..n {
        for j in 0..tags {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = alpha[(i - 1) * tags + k] + trans[k * size + j];
            }
            alpha[i * tags + j] = log_sum_exp(&buf) + emissions[i * tags + j];
        }
    }
    alpha
}

/// `log Σ_y exp(score(y))` over all `T^n` paths.
pub fn crf_log_partition(emissions: &[f64], tags: usize, trans: &[f64], allowed: Option<&[bool]>) -> f64 {
    let trans = effective_transitions(trans, allowed);
    let n = emissions.len() / tags;
    let size = tags + 2;
    let alpha = forward_scores(emissions, tags, &trans);
    let last: Vec<f64> = (0..tags)
        .map(|j| alpha[(n - 1) * tags + j] + trans[j * size + tags + 1])
        .collect();
    log_sum_exp(&last)
}

/// Posterior quantities of the CRF distribution.
#[derive(Debug, Clone)]
pub struct CrfMarginals {
    pub log_partition: f64,
    /// `P(y_i = j)`, `n × T`.
    pub unary: Vec<f64>,
    /// Expected number of uses of each transition, `(T + 2)²`.
    pub transitions: Vec<f64>,
}

pub fn crf_marginals(emissions: &[f64], tags: usize, trans: &[f64], allowed: Option<&[bool]>) -> CrfMarginals {
    let trans = effective_transitions(trans, allowed);
    let n = emissions.len() / tags;
    let size = tags + 2;
    let (start, stop) = (tags, tags + 1);
    let alpha = forward_scores(emissions, tags, &trans);
    let mut beta = vec![0.0; n * tags];
    for j in 0..tags {
        beta[(n - 1) * tags + j] = trans[j * size + stop];
    }
    let mut buf = vec![0.0; tags];
    for i in (0..n - 1).rev() {
        for j in 0..tags {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = trans[j * size + k] + emissions[(i + 1) * tags + k] + beta[(i + 1) * tags + k];
            }
            beta[i * tags + j] = log_sum_exp(&buf);
        }
    }
    let last: Vec<f64> = (0..tags)
        .map(|j| alpha[(n - 1) * tags + j] + trans[j * size + stop])
        .collect();
    let log_z = log_sum_exp(&last);
    let unary: Vec<f64> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_z).exp())
        .collect();
    let mut expected = vec![0.0; size * size];
    for j in 0..tags {
        expected[start * size + j] += unary[j];
        expected[j * size + stop] += unary[(n - 1) * tags + j];
    }
    for i in 1..n {
        for a in 0..tags {
            let left = alpha[(i - 1) * tags + a];
            if left == f64::NEG_INFINITY {
                continue;
            }
            for b in 0..tags {
                let s = left + trans[a * size + b] + emissions[i * tags + b] + beta[i * tags + b] - log_z;
                expected[a * size + b] += s.exp();
            }
        }
    }
    CrfMarginals {
        log_partition: log_z,
        unary,
        transitions: expected,
    }
}

fn check_tags(gold: &[usize], n: usize, tags: usize) -> Result<()> {
    if gold.len() != n {
        return Err(Error::Corpus(format!("{} gold tags for {n} positions", gold.len())));
    }
    if let Some(&bad) = gold.iter().find(|&&g| g >= tags) {
        return Err(Error::Corpus(format!("tag id {bad} out of range for {tags} tags")));
    }
    Ok(())
}

/// `log Z - score(gold)` recorded as one tape node.
pub fn crf_nll(
    tape: &mut Tape,
    emissions: Var,
    transitions: Var,
    gold: &[usize],
    allowed: Option<Rc<[bool]>>,
) -> Result<Var> {
    let shape = tape.shape(emissions).to_vec();
    let (n, tags) = (shape[0], shape[1]);
    check_tags(gold, n, tags)?;
    let size = tags + 2;
    assert!(
        tape.shape(transitions) == [size, size],
        "crf_nll: transition shape {:?} does not conform with emission shape {shape:?}",
        tape.shape(transitions)
    );
    let em = tape.value(emissions);
    let trans = effective_transitions(tape.value(transitions), allowed.as_deref());
    let log_z = crf_log_partition(em, tags, &trans, None);
    let value = log_z - crf_path_score(em, tags, &trans, gold);
    let gold = gold.to_vec();
    let var = tape.custom(&[emissions, transitions], vec![1], vec![value], move |g, inputs| {
        let marg = crf_marginals(inputs[0], tags, inputs[1], allowed.as_deref());
        let mut d_em = marg.unary;
        for (i, &y) in gold.iter().enumerate() {
            d_em[i * tags + y] -= 1.0;
        }
        let mut d_tr = marg.transitions;
        d_tr[tags * size + gold[0]] -= 1.0;
        for w in gold.windows(2) {
            d_tr[w[0] * size + w[1]] -= 1.0;
        }
        d_tr[gold[gold.len() - 1] * size + tags + 1] -= 1.0;
        if let Some(mask) = allowed.as_deref() {
            for (d, &ok) in d_tr.iter_mut().zip(mask) {
                if !ok {
                    *d = 0.0;
                }
            }
        }
        d_em.iter_mut().chain(d_tr.iter_mut()).for_each(|d| *d *= g[0]);
        vec![Some(d_em), Some(d_tr)]
    });
    Ok(var)
}

/// Highest-scoring path. Each backpointer, and the final tag, prefer the
/// lowest tag id among equal scores.
pub fn viterbi_decode(emissions: &[f64], tags: usize, trans: &[f64], allowed: Option<&[bool]>) -> TagSequence {
    let trans = effective_transitions(trans, allowed);
    let n = emissions.len() / tags;
    let size = tags + 2;
    let (start, stop) = (tags, tags + 1);
    let mut delta = vec![0.0; n * tags];
    let mut back = vec![0usize; n * tags];
    for j in 0..tags {
        delta[j] = trans[start * size + j] + emissions[j];
    }
    for i in 1..n {
        for j in 0..tags {
            let mut best = 0;
            let mut best_score = delta[(i - 1) * tags] + trans[j];
            for k in 1..tags {
                let s = delta[(i - 1) * tags + k] + trans[k * size + j];
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            delta[i * tags + j] = best_score + emissions[i * tags + j];
            back[i * tags + j] = best;
        }
    }
    let finals: Vec<f64> = (0..tags)
        .map(|j| delta[(n - 1) * tags + j] + trans[j * size + stop])
        .collect();
    let mut j = argmax(&finals);
    let score = finals[j];
    let mut path = vec![0; n];
    for i in (0..n).rev() {
        path[i] = j;
        j = back[i * tags + j];
    }
    TagSequence { tags: path, score }
}

/// Sum of per-position cross-entropies (the CRF with every transition at 0).
pub fn softmax_nll(tape: &mut Tape, emissions: Var, gold: &[usize]) -> Result<Var> {
    let shape = tape.shape(emissions).to_vec();
    check_tags(gold, shape[0], shape[1])?;
    let terms: Vec<Var> = gold
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = tape.row(emissions, i);
            tape.cross_entropy(row, y)
        })
        .collect();
    let all = tape.concat(&terms);
    Ok(tape.sum(all))
}

/// Independent per-position argmax; the result may be BILOU-invalid.
pub fn softmax_decode(emissions: &[f64], tags: usize) -> TagSequence {
    let mut score = 0.0;
    let path = emissions
        .chunks(tags)
        .map(|row| {
            let j = argmax(row);
            score += row[j];
            j
        })
        .collect();
    TagSequence { tags: path, score }
}
