use super::tensor::{Gradients, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers mirror the parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        AdamState {
            config,
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of every parameter. Gradients are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.step_filtered(params, grads, |_| true);
    }

    /// One update restricted to the parameters accepted by `update`; the
    /// others keep both their values and their moments.
    pub fn step_filtered(
        &mut self,
        params: &mut ParamStore,
        grads: &Gradients,
        update: impl Fn(ParamId) -> bool,
    ) {
        self.steps += 1;
        let (lr, b1, b2, eps, ib1, ib2) = self.constants();
        for id in params.ids().collect::<Vec<_>>() {
            if !update(id) {
                continue;
            }
            let m = &mut self.first[id.index()];
            let v = &mut self.second[id.index()];
            let p = params.get_mut(id).values_mut();
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grads.get(id)) {
                adam_update(p, m, v, g, lr, b1, b2, eps, ib1, ib2);
            }
        }
    }

    /// [`step_filtered`](Self::step_filtered), then every gradient buffer is
    /// reset to zero, in one pass over memory.
    pub fn step_and_clear(
        &mut self,
        params: &mut ParamStore,
        grads: &mut Gradients,
        update: impl Fn(ParamId) -> bool,
    ) {
        self.steps += 1;
        let (lr, b1, b2, eps, ib1, ib2) = self.constants();
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get_mut(id);
            if update(id) {
                let m = &mut self.first[id.index()];
                let v = &mut self.second[id.index()];
                let p = params.get_mut(id).values_mut();
                for (((p, m), v), g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.iter_mut()) {
                    adam_update(p, m, v, *g, lr, b1, b2, eps, ib1, ib2);
                    *g = 0.0;
                }
            } else {
                g.fill(0.0);
            }
        }
    }

    fn constants(&self) -> (f64, f64, f64, f64, f64, f64) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.steps as i32;
        let inv_bias1 = 1.0 / (1.0 - beta1.powi(t));
        let inv_bias2 = 1.0 / (1.0 - beta2.powi(t));
        (learning_rate, beta1, beta2, epsilon, inv_bias1, inv_bias2)
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn adam_update(
    p: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    inv_bias1: f64,
    inv_bias2: f64,
) {
    *m = beta1 * *m + (1.0 - beta1) * g;
    *v = beta2 * *v + (1.0 - beta2) * g * g;
    let m_hat = *m * inv_bias1;
    let v_hat = *v * inv_bias2;
    *p -= lr * m_hat / (v_hat.sqrt() + eps);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Tape, Tensor};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::scalar(1.0));
        let mut grads = Gradients::for_params(&store);
        grads.get_mut(p)[0] = 1.0;
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&store, config);
        adam.step(&mut store, &grads);
        // m_hat = 1, v_hat = 1 → Δ = 0.1 / (1 + 1e-8)
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((store.get(p).values()[0] - expected).abs() < 1e-15);
        assert!((store.get(p).values()[0] - 0.9).abs() < 1e-8);
        assert_eq!(adam.steps(), 1);
        assert_eq!(grads.get(p), &[1.0]);
    }

    #[test]
    fn first_step_size_ignores_gradient_magnitude() {
        for g in [1e-3, 0.5, 40.0] {
            let mut store = ParamStore::new();
            let p = store.add("p", Tensor::scalar(1.0));
            let mut grads = Gradients::for_params(&store);
            grads.get_mut(p)[0] = g;
            let mut adam = AdamState::new(
                &store,
                AdamConfig {
                    learning_rate: 0.1,
                    ..AdamConfig::default()
                },
            );
            adam.step(&mut store, &grads);
            assert!((store.get(p).values()[0] - 0.9).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![0.3, -2.0]));
        let grads = Gradients::for_params(&store);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut store, &grads);
        }
        assert_eq!(store.get(p).values(), &[0.3, -2.0]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn detached_parameter_stays_put() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![1.0, 2.0]));
        let b = store.add("b", Tensor::vector(vec![1.0, 2.0]));
        let mut grads = Gradients::for_params(&store);
        {
            let mut tape = Tape::new(&store);
            let x = tape.param(a);
            let _unused = tape.param(b);
            let loss = tape.sum(x);
            tape.backward(loss, &mut grads);
        }
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store, &grads);
        assert_ne!(store.get(a).values(), &[1.0, 2.0]);
        assert_eq!(store.get(b).values(), &[1.0, 2.0]);
    }

    #[test]
    fn fused_step_matches_step_then_zero() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![1.0, -2.0, 0.5]));
        let b = store.add("b", Tensor::vector(vec![3.0]));
        let mut fused = store.clone();
        let mut grads = Gradients::for_params(&store);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        let mut adam_fused = adam.clone();
        for step in 0..5 {
            let mut g = Gradients::for_params(&store);
            g.get_mut(a).copy_from_slice(&[0.1 * step as f64, -1.0, 2.0]);
            g.get_mut(b)[0] = 4.0;
            grads.clone_from(&g);
            adam.step_filtered(&mut store, &g, |id| id != b);
            adam_fused.step_and_clear(&mut fused, &mut grads, |id| id != b);
            assert_eq!(store, fused);
            assert!(grads.get(a).iter().chain(grads.get(b)).all(|&x| x == 0.0));
        }
        assert_eq!(fused.get(b).values(), &[3.0]);
    }
}
