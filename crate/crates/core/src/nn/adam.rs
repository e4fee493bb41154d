//! Bias-corrected adaptive-moment optimizer.

use serde::{Deserialize, Serialize};

use super::mlp::{GradTree, ParamTree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: GradTree,
    pub second_moment: GradTree,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(params: &ParamTree, config: AdamConfig) -> Self {
        OptimizerState {
            step: 0,
            first_moment: GradTree::zeros_like(params),
            second_moment: GradTree::zeros_like(params),
            config,
        }
    }
}

/// One update in place. Rejects non-finite gradients without touching state.
pub fn optimizer_step(params: &mut ParamTree, grads: &GradTree, state: &mut OptimizerState) -> Result<()> {
    if !grads.matches(params) || !state.first_moment.matches(params) {
        return Err(Error::Shape("gradient/optimizer state do not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    };

    for (l, layer) in params.layers_mut().iter_mut().enumerate() {
        let m = &mut state.first_moment;
        let v = &mut state.second_moment;
        for (((p, g), mi), vi) in layer
            .weight
            .iter_mut()
            .zip(grads.weights[l].iter())
            .zip(m.weights[l].iter_mut())
            .zip(v.weights[l].iter_mut())
        {
            update(p, *g, mi, vi);
        }
        for (((p, g), mi), vi) in layer
            .bias
            .iter_mut()
            .zip(grads.biases[l].iter())
            .zip(m.biases[l].iter_mut())
            .zip(v.biases[l].iter_mut())
        {
            update(p, *g, mi, vi);
        }
    }
    Ok(())
}

/// Adam on a plain vector (used for free-standing parameters such as a log-std).
#[derive(Debug, Clone)]
pub struct VectorAdam {
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    pub config: AdamConfig,
}

impl VectorAdam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        VectorAdam { step: 0, m: vec![0.0; len], v: vec![0.0; len], config }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("vector optimizer length mismatch".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            params[i] -= learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Layer};
    use ndarray::array;

    fn scalar_net(w: f64) -> ParamTree {
        ParamTree::new(vec![Layer {
            name: "s".into(),
            weight: array![[w]],
            bias: array![0.0],
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_identity_on_params() {
        let mut p = scalar_net(0.7);
        let before = p.clone();
        let mut st = OptimizerState::new(&p, AdamConfig::default());
        let g = GradTree::zeros_like(&p);
        optimizer_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.7, -0.002] {
            let mut p = scalar_net(1.0);
            let cfg = AdamConfig { learning_rate: 0.01, epsilon: 1e-12, ..AdamConfig::default() };
            let mut st = OptimizerState::new(&p, cfg);
            let mut grads = GradTree::zeros_like(&p);
            grads.weights[0][[0, 0]] = g;
            optimizer_step(&mut p, &grads, &mut st).unwrap();
            let moved = p.layers()[0].weight[[0, 0]] - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-9, "moved {moved}");
        }
    }

    #[test]
    fn second_moment_grows_under_constant_gradient() {
        let mut p = scalar_net(0.0);
        let mut st = OptimizerState::new(&p, AdamConfig::default());
        let mut grads = GradTree::zeros_like(&p);
        grads.weights[0][[0, 0]] = 0.5;
        optimizer_step(&mut p, &grads, &mut st).unwrap();
        let v1 = st.second_moment.weights[0][[0, 0]];
        optimizer_step(&mut p, &grads, &mut st).unwrap();
        let v2 = st.second_moment.weights[0][[0, 0]];
        assert!(v2 > v1);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = scalar_net(0.0);
        let mut st = OptimizerState::new(&p, AdamConfig::default());
        let mut grads = GradTree::zeros_like(&p);
        grads.biases[0][0] = f64::NAN;
        assert!(matches!(optimizer_step(&mut p, &grads, &mut st), Err(Error::Numeric(_))));
        assert_eq!(st.step, 0);
    }
}
