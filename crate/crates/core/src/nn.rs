//! Layers shared by the encoder and both heads: affine maps, LSTMs and
//! stacked BiLSTMs, plus initialization and dropout plumbing.

use rand::Rng as _;

use crate::numerics::{dropout_mask, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::{PassRngs, Rng};

/// Glorot-uniform initialization generalized to any rank:
/// `U(-a, a)` with `a = sqrt(3 · rank / Σ dims)`, i.e. `sqrt(6 / (rows + cols))`
/// for a matrix.
pub fn glorot(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    let limit = (3.0 * shape.len() as f64 / shape.iter().sum::<usize>() as f64).sqrt();
    uniform(shape, limit, rng)
}

/// Embedding rows drawn from `U(-0.5/dim, 0.5/dim)`.
pub fn embedding(rows: usize, dim: usize, rng: &mut Rng) -> Tensor {
    uniform(vec![rows, dim], 0.5 / dim as f64, rng)
}

fn uniform(shape: Vec<usize>, limit: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape, values)
}

/// Per-pass settings: whether the pass trains, and the random streams used
/// by dropout and word dropout.
pub struct Pass {
    pub training: bool,
    pub keep_prob: f64,
    pub rngs: PassRngs,
}

impl Pass {
    pub fn train(keep_prob: f64, seed: u64) -> Self {
        Pass {
            training: true,
            keep_prob,
            rngs: PassRngs::new(seed),
        }
    }

    /// Deterministic pass: no dropout, no word dropout.
    pub fn eval() -> Self {
        Pass {
            training: false,
            keep_prob: 1.0,
            rngs: PassRngs::new(0),
        }
    }

    /// Inverted dropout while training, identity otherwise.
    pub fn dropout(&mut self, tape: &mut Tape, x: Var) -> Var {
        if !self.training || self.keep_prob >= 1.0 {
            return x;
        }
        let mask = dropout_mask(tape.shape(x).to_vec(), self.keep_prob, &mut self.rngs.dropout)
            .expect("keep_prob validated with the configuration");
        tape.mask(x, &mask)
    }
}

/// `y = W x + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn register(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        Linear {
            w: store.add(format!("{name}.w"), glorot(vec![output, input], rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(vec![output])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.affine(w, x, Some(b))
    }
}

/// Single-direction LSTM with gates stacked as `[input, forget, cell, output]`
/// in one `4h × (in + h)` matrix.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn register(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Lstm {
            w: store.add(format!("{name}.w"), glorot(vec![4 * hidden, input + hidden], rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(vec![4 * hidden])),
            hidden,
        }
    }

    pub fn num_values(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden
    }

    /// Hidden states over `inputs`, visited in reverse when `reverse` is set.
    /// Output `k` always belongs to input `k`.
    pub fn run(&self, tape: &mut Tape, inputs: &[Var], reverse: bool) -> Vec<Var> {
        let h = self.hidden;
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let zeros = tape.input_vec(vec![0.0; h]);
        let (mut hs, mut cs) = (zeros, zeros);
        let mut out = vec![zeros; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for k in order {
            let xh = tape.concat(&[inputs[k], hs]);
            let z = tape.affine(w, xh, Some(b));
            let zi = tape.slice(z, 0, h);
            let zf = tape.slice(z, h, h);
            let zg = tape.slice(z, 2 * h, h);
            let zo = tape.slice(z, 3 * h, h);
            let i = tape.sigmoid(zi);
            let f = tape.sigmoid(zf);
            let g = tape.tanh(zg);
            let o = tape.sigmoid(zo);
            let keep = tape.mul(f, cs);
            let write = tape.mul(i, g);
            cs = tape.add(keep, write);
            let squashed = tape.tanh(cs);
            hs = tape.mul(o, squashed);
            out[k] = hs;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn register(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        BiLstm {
            forward: Lstm::register(store, &format!("{name}.fwd"), input, hidden, rng),
            backward: Lstm::register(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    /// Per-position concatenation of forward and backward hidden states.
    pub fn run(&self, tape: &mut Tape, inputs: &[Var]) -> Vec<Var> {
        let f = self.forward.run(tape, inputs, false);
        let b = self.backward.run(tape, inputs, true);
        f.into_iter()
            .zip(b)
            .map(|(f, b)| tape.concat(&[f, b]))
            .collect()
    }
}

/// Stacked BiLSTM; layer `k + 1` reads the `2h` outputs of layer `k`.
#[derive(Debug, Clone)]
pub struct StackedBiLstm {
    pub layers: Vec<BiLstm>,
}

impl StackedBiLstm {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|k| {
                let inp = if k == 0 { input } else { 2 * hidden };
                BiLstm::register(store, &format!("{name}.l{k}"), inp, hidden, rng)
            })
            .collect();
        StackedBiLstm { layers }
    }

    pub fn num_values(input: usize, hidden: usize, layers: usize) -> usize {
        (0..layers)
            .map(|k| {
                let inp = if k == 0 { input } else { 2 * hidden };
                2 * Lstm::num_values(inp, hidden)
            })
            .sum()
    }

    /// Runs every layer. The caller drops out the first layer's inputs;
    /// inputs of deeper layers are dropped out here.
    pub fn run(&self, tape: &mut Tape, inputs: &[Var], pass: &mut Pass) -> Vec<Var> {
        let mut xs = inputs.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            if k > 0 {
                xs = xs.into_iter().map(|x| pass.dropout(tape, x)).collect();
            }
            xs = layer.run(tape, &xs);
        }
        xs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Gradients;
    use crate::rng::{stream, Stream};

    #[test]
    fn glorot_limit_for_matrix() {
        let mut rng = stream(1, Stream::Init);
        let t = glorot(vec![4, 2], &mut rng);
        let limit = 1.0f64; // sqrt(6 / 6)
        assert!(t.values().iter().all(|v| v.abs() <= limit));
        let e = embedding(3, 10, &mut rng);
        assert!(e.values().iter().all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn lstm_parameter_count() {
        let mut store = ParamStore::new();
        let mut rng = stream(1, Stream::Init);
        StackedBiLstm::register(&mut store, "s", 7, 5, 2, &mut rng);
        assert_eq!(store.num_values(), StackedBiLstm::num_values(7, 5, 2));
        assert_eq!(StackedBiLstm::num_values(7, 5, 2), 2 * (20 * 12 + 20) + 2 * (20 * 15 + 20));
    }

    #[test]
    fn zero_weight_lstm_output() {
        // z = 0 → i = f = o = 1/2, g = 0, so c stays 0 and h = 0.
        let mut store = ParamStore::new();
        let lstm = Lstm {
            w: store.add("w", Tensor::zeros(vec![8, 5])),
            b: store.add("b", Tensor::zeros(vec![8])),
            hidden: 2,
        };
        let mut tape = Tape::new(&store);
        let x = tape.input_vec(vec![1.0, -1.0, 2.0]);
        let out = lstm.run(&mut tape, &[x, x], false);
        assert_eq!(tape.value(out[1]), &[0.0, 0.0]);
    }

    #[test]
    fn bilstm_gradients_reach_every_gate_matrix() {
        let mut store = ParamStore::new();
        let mut rng = stream(4, Stream::Init);
        let bi = BiLstm::register(&mut store, "bi", 3, 2, &mut rng);
        let mut tape = Tape::new(&store);
        let xs: Vec<Var> = (0..3)
            .map(|k| tape.input_vec(vec![k as f64, 1.0, -0.5]))
            .collect();
        let hs = bi.run(&mut tape, &xs);
        let cat = tape.concat(&hs);
        let loss = tape.sum(cat);
        let mut grads = Gradients::for_params(&store);
        tape.backward(loss, &mut grads);
        for id in [bi.forward.w, bi.backward.w, bi.forward.b, bi.backward.b] {
            assert!(grads.norm(id) > 0.0);
        }
    }

    #[test]
    fn eval_dropout_is_identity() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input_vec(vec![1.0, 2.0, 3.0]);
        let mut pass = Pass::eval();
        assert_eq!(pass.dropout(&mut tape, x), x);
        let mut pass = Pass::train(0.5, 3);
        let y = pass.dropout(&mut tape, x);
        assert!(tape.value(y).iter().zip([1.0, 2.0, 3.0]).all(|(&v, x)| v == 0.0 || v == 2.0 * x));
    }
}
