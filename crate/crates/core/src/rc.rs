//! Relation head. Predicted tags are embedded and joined to the input
//! vectors, a second stacked BiLSTM reads them, and every ordered pair of
//! entity-final tokens is scored by
//!
//! ```text
//! s(j, k) = head_jᵀ U tail_k + W [head_j; tail_k] + b
//! ```
//!
//! with separate head and tail projections so that direction matters.

use std::collections::BTreeMap;

use crate::config::{Reduction, RunConfig};
use crate::data::{EntitySpan, Relation, SymbolTable};
use crate::nn::{embedding, glorot, Linear, Pass, StackedBiLstm};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct RcParams {
    pub labels: Option<ParamId>,
    pub lstm: StackedBiLstm,
    pub head: Linear,
    pub tail: Linear,
    /// `m × l × m`; absent under the no-bilinear ablation.
    pub bilinear: Option<ParamId>,
    /// `W` (`l × 2m`) and `b` (`l`); absent under the no-linear ablation.
    pub linear: Option<Linear>,
    pub relation_count: usize,
}

/// An ordered pair of entity-final tokens with its training target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationCandidate {
    pub head: usize,
    pub tail: usize,
    pub gold_label: usize,
}

impl RcParams {
    pub fn register(
        store: &mut ParamStore,
        config: &RunConfig,
        tag_count: usize,
        relation_count: usize,
        input_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let d = &config.dims;
        let a = &config.ablations;
        let labels = (!a.no_entity_emb).then(|| store.add("rc.label_emb", embedding(tag_count, d.label, rng)));
        let lstm_input = input_dim + if a.no_entity_emb { 0 } else { d.label };
        let lstm = StackedBiLstm::register(store, "rc.lstm", lstm_input, d.lstm_hidden, d.lstm_layers, rng);
        let head = Linear::register(store, "rc.head", 2 * d.lstm_hidden, d.ffnn, rng);
        let tail = Linear::register(store, "rc.tail", 2 * d.lstm_hidden, d.ffnn, rng);
        let m = d.ffnn;
        let bilinear =
            (!a.no_bilinear).then(|| store.add("rc.biaffine.u", glorot(vec![m, relation_count, m], rng)));
        let linear = (!a.no_linear).then(|| Linear {
            w: store.add("rc.biaffine.w", glorot(vec![relation_count, 2 * m], rng)),
            b: store.add("rc.biaffine.b", Tensor::zeros(vec![relation_count])),
        });
        RcParams {
            labels,
            lstm,
            head,
            tail,
            bilinear,
            linear,
            relation_count,
        }
    }

    /// `r_1..r_n` from `x_i = [e(t_i); v_i]`, or `x_i = v_i` when label
    /// embeddings are ablated. `v_i` arrive already dropped out.
    pub fn rc_inputs(&self, tape: &mut Tape, inputs: &[Var], tags: &[usize], pass: &mut Pass) -> Vec<Var> {
        assert_eq!(inputs.len(), tags.len(), "rc_inputs: one tag per input vector");
        let xs: Vec<Var> = match self.labels {
            Some(table) => {
                let table = tape.param(table);
                inputs
                    .iter()
                    .zip(tags)
                    .map(|(&v, &t)| {
                        let e = tape.row(table, t);
                        let e = pass.dropout(tape, e);
                        tape.concat(&[e, v])
                    })
                    .collect()
            }
            None => inputs.to_vec(),
        };
        self.lstm.run(tape, &xs, pass)
    }

    /// Head and tail projections of the given positions.
    pub fn project(
        &self,
        tape: &mut Tape,
        rs: &[Var],
        positions: &[usize],
        pass: &mut Pass,
    ) -> BTreeMap<usize, (Var, Var)> {
        positions
            .iter()
            .map(|&p| {
                let r = pass.dropout(tape, rs[p]);
                (p, (self.head.forward(tape, r), self.tail.forward(tape, r)))
            })
            .collect()
    }

    pub fn bilinear_part(&self, tape: &mut Tape, head: Var, tail: Var) -> Option<Var> {
        self.bilinear.map(|u| {
            let u = tape.param(u);
            tape.bilinear(head, u, tail)
        })
    }

    pub fn linear_part(&self, tape: &mut Tape, head: Var, tail: Var) -> Option<Var> {
        self.linear.map(|lin| {
            let pair = tape.concat(&[head, tail]);
            lin.forward(tape, pair)
        })
    }

    /// Biaffine score vector (length `l`) for projected head and tail vectors.
    pub fn biaffine(&self, tape: &mut Tape, head: Var, tail: Var) -> Var {
        match (self.bilinear_part(tape, head, tail), self.linear_part(tape, head, tail)) {
            (Some(b), Some(l)) => tape.add(b, l),
            (Some(b), None) => b,
            (None, Some(l)) => l,
            (None, None) => unreachable!("configuration validation forbids dropping both terms"),
        }
    }

    /// Scores the ordered pair `(r_j, r_k)` from the BiLSTM outputs.
    pub fn biaffine_scores(&self, tape: &mut Tape, r_head: Var, r_tail: Var, pass: &mut Pass) -> Var {
        let rh = pass.dropout(tape, r_head);
        let rt = pass.dropout(tape, r_tail);
        let h = self.head.forward(tape, rh);
        let t = self.tail.forward(tape, rt);
        self.biaffine(tape, h, t)
    }
}

/// Every ordered pair of distinct entity-final tokens. A pair takes the
/// label of a gold relation with exactly these endpoints, otherwise `NEG`
/// (id 0). Labels missing from `relations` also fall back to `NEG`.
pub fn build_candidates(
    spans: &[EntitySpan],
    gold: &[Relation],
    relations: &SymbolTable,
) -> Vec<RelationCandidate> {
    let mut finals: Vec<usize> = spans.iter().map(|s| s.end).collect();
    finals.sort_unstable();
    finals.dedup();
    let mut out = Vec::with_capacity(finals.len() * finals.len().saturating_sub(1));
    for &head in &finals {
        for &tail in &finals {
            if head == tail {
                continue;
            }
            let gold_label = gold
                .iter()
                .find(|r| r.head == head && r.tail == tail)
                .and_then(|r| relations.id(&r.label))
                .unwrap_or(0);
            out.push(RelationCandidate {
                head,
                tail,
                gold_label,
            });
        }
    }
    out
}

/// Cross-entropy of each candidate's scores against its gold label, averaged
/// or summed. No candidates gives an exact constant zero.
pub fn rc_loss(tape: &mut Tape, candidates: &[RelationCandidate], scores: &[Var], reduction: Reduction) -> Var {
    assert_eq!(candidates.len(), scores.len(), "rc_loss: one score vector per candidate");
    if candidates.is_empty() {
        return tape.input(Tensor::scalar(0.0));
    }
    let terms: Vec<Var> = candidates
        .iter()
        .zip(scores)
        .map(|(c, &s)| tape.cross_entropy(s, c.gold_label))
        .collect();
    let all = tape.concat(&terms);
    let total = tape.sum(all);
    match reduction {
        Reduction::Sum => total,
        Reduction::Mean => tape.scale(total, 1.0 / candidates.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Gradients;
    use crate::rng::{stream, Stream};
    use rand::Rng as _;

    fn small_config() -> RunConfig {
        let mut c = RunConfig::default();
        c.dims.label = 3;
        c.dims.lstm_hidden = 4;
        c.dims.ffnn = 5;
        c
    }

    fn params(config: &RunConfig, store: &mut ParamStore, seed: u64) -> RcParams {
        let mut rng = stream(seed, Stream::Init);
        RcParams::register(store, config, 5, 3, 6, &mut rng)
    }

    #[test]
    fn candidate_walkthrough_example() {
        // "... International ... Paris": Org ends at 2, Loc at 5
        let rels = SymbolTable::from_symbols(["NEG", "OrgBased_In"]);
        let spans = [EntitySpan::new(1, 2, "Org"), EntitySpan::new(5, 5, "Loc")];
        let gold = [Relation::new(2, 5, "OrgBased_In")];
        let c = build_candidates(&spans, &gold, &rels);
        assert_eq!(
            c,
            vec![
                RelationCandidate { head: 2, tail: 5, gold_label: 1 },
                RelationCandidate { head: 5, tail: 2, gold_label: 0 },
            ]
        );
    }

    #[test]
    fn candidate_count_is_k_times_k_minus_one() {
        let rels = SymbolTable::from_symbols(["NEG"]);
        for k in 0..=6 {
            let spans: Vec<EntitySpan> = (0..k).map(|i| EntitySpan::new(2 * i, 2 * i, "X")).collect();
            let c = build_candidates(&spans, &[], &rels);
            assert_eq!(c.len(), k * k.saturating_sub(1));
            assert!(c.iter().all(|c| c.head != c.tail && c.gold_label == 0));
        }
    }

    #[test]
    fn zero_weights_score_the_bias() {
        let c = small_config();
        let mut store = ParamStore::new();
        let rc = params(&c, &mut store, 1);
        let u = rc.bilinear.unwrap();
        let lin = rc.linear.unwrap();
        *store.get_mut(u) = Tensor::zeros(vec![5, 3, 5]);
        *store.get_mut(lin.w) = Tensor::zeros(vec![3, 10]);
        *store.get_mut(lin.b) = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let mut tape = Tape::new(&store);
        let h = tape.input_vec(vec![1.0; 5]);
        let t = tape.input_vec(vec![-2.0; 5]);
        let s = rc.biaffine(&mut tape, h, t);
        assert_eq!(tape.value(s), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn scores_depend_on_direction() {
        let c = small_config();
        let mut differ = 0;
        for seed in 0..100 {
            let mut store = ParamStore::new();
            let rc = params(&c, &mut store, seed);
            let mut rng = stream(seed, Stream::Shuffle);
            let mut tape = Tape::new(&store);
            let a = tape.input_vec((0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
            let b = tape.input_vec((0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
            let mut pass = Pass::eval();
            let ab = rc.biaffine_scores(&mut tape, a, b, &mut pass);
            let ba = rc.biaffine_scores(&mut tape, b, a, &mut pass);
            if tape.value(ab) != tape.value(ba) {
                differ += 1;
            }
        }
        assert!(differ >= 99);
    }

    #[test]
    fn loss_edge_cases() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let zero = rc_loss(&mut tape, &[], &[], Reduction::Mean);
        assert_eq!(tape.scalar(zero), 0.0);
        let cand = [RelationCandidate { head: 0, tail: 1, gold_label: 2 }];
        let uniform = tape.input_vec(vec![0.3; 4]);
        let l = rc_loss(&mut tape, &cand, &[uniform], Reduction::Mean);
        assert!((tape.scalar(l) - 4f64.ln()).abs() < 1e-12);
        let peaked = tape.input_vec(vec![0.0, 0.0, 50.0, 0.0]);
        let l = rc_loss(&mut tape, &cand, &[peaked], Reduction::Mean);
        assert!(tape.scalar(l) < 1e-20);
        let single = tape.input_vec(vec![1.7]);
        let neg = [RelationCandidate { head: 0, tail: 1, gold_label: 0 }];
        let l = rc_loss(&mut tape, &neg, &[single], Reduction::Mean);
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn mean_and_sum_reductions() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let cands = [
            RelationCandidate { head: 0, tail: 1, gold_label: 0 },
            RelationCandidate { head: 1, tail: 0, gold_label: 1 },
        ];
        let s1 = tape.input_vec(vec![1.0, 0.0]);
        let s2 = tape.input_vec(vec![0.0, 3.0]);
        let sum = rc_loss(&mut tape, &cands, &[s1, s2], Reduction::Sum);
        let mean = rc_loss(&mut tape, &cands, &[s1, s2], Reduction::Mean);
        assert!((tape.scalar(sum) - 2.0 * tape.scalar(mean)).abs() < 1e-15);
    }

    #[test]
    fn ablations_cut_gradient_flow() {
        for (no_bilinear, no_linear) in [(true, false), (false, true)] {
            let mut c = small_config();
            c.ablations.no_bilinear = no_bilinear;
            c.ablations.no_linear = no_linear;
            let mut store = ParamStore::new();
            let rc = params(&c, &mut store, 3);
            assert_eq!(rc.bilinear.is_none(), no_bilinear);
            assert_eq!(rc.linear.is_none(), no_linear);
            let mut tape = Tape::new(&store);
            let a = tape.input_vec(vec![0.2; 8]);
            let b = tape.input_vec(vec![-0.4; 8]);
            let s = rc.biaffine_scores(&mut tape, a, b, &mut Pass::eval());
            let loss = tape.cross_entropy(s, 1);
            let mut grads = Gradients::for_params(&store);
            tape.backward(loss, &mut grads);
            if let Some(u) = rc.bilinear {
                assert!(grads.norm(u) > 0.0);
            }
            if let Some(lin) = rc.linear {
                assert!(grads.norm(lin.w) > 0.0);
            }
            assert!(grads.norm(rc.head.w) > 0.0 && grads.norm(rc.tail.w) > 0.0);
        }
    }

    #[test]
    fn input_width_with_and_without_labels() {
        let mut c = small_config();
        let mut store = ParamStore::new();
        let rc = params(&c, &mut store, 1);
        assert_eq!(store.get(rc.lstm.layers[0].forward.w).shape(), &[16, 6 + 3 + 4]);
        c.ablations.no_entity_emb = true;
        let mut store = ParamStore::new();
        let rc = params(&c, &mut store, 1);
        assert!(rc.labels.is_none());
        assert_eq!(store.get(rc.lstm.layers[0].forward.w).shape(), &[16, 6 + 4]);
    }

    #[test]
    fn changing_one_tag_changes_every_position() {
        let c = small_config();
        let mut store = ParamStore::new();
        let rc = params(&c, &mut store, 9);
        let mut tape = Tape::new(&store);
        let vs: Vec<Var> = (0..5).map(|i| tape.input_vec(vec![i as f64 * 0.1; 6])).collect();
        let r1 = rc.rc_inputs(&mut tape, &vs, &[0, 0, 0, 0, 0], &mut Pass::eval());
        let r2 = rc.rc_inputs(&mut tape, &vs, &[0, 0, 4, 0, 0], &mut Pass::eval());
        for (a, b) in r1.iter().zip(&r2) {
            assert_ne!(tape.value(*a), tape.value(*b));
        }
    }
}
