use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::layer::{DenseLayer, LayerGrad};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates per layer, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    step: i32,
}

impl AdamState {
    pub fn new(layers: &[DenseLayer]) -> Self {
        let zeros = || {
            layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One bias-corrected Adam update of every layer.
    pub fn step(&mut self, layers: &mut [DenseLayer], grads: &[LayerGrad], p: &AdamParams) {
        assert_eq!(layers.len(), grads.len(), "gradient count must match layer count");
        assert_eq!(layers.len(), self.m.len(), "optimizer state built for another model");
        self.step += 1;
        let c1 = 1.0 - p.beta1.powi(self.step);
        let c2 = 1.0 - p.beta2.powi(self.step);
        let update = |theta: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = p.beta1 * *m + (1.0 - p.beta1) * g;
            *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
        };
        for (k, layer) in layers.iter_mut().enumerate() {
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            Zip::from(&mut layer.weight)
                .and(mw)
                .and(vw)
                .and(&grads[k].weight)
                .for_each(|t, m, v, g| update(t, m, v, g));
            Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(&grads[k].bias)
                .for_each(|t, m, v, g| update(t, m, v, g));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::layer::Activation;
    use ndarray::array;

    fn layer() -> DenseLayer {
        DenseLayer {
            weight: array![[1.0, -2.0]],
            bias: array![0.5],
            activation: Activation::Identity,
        }
    }

    fn grad(w: [f64; 2], b: f64) -> LayerGrad {
        LayerGrad {
            weight: array![[w[0], w[1]]],
            bias: array![b],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut layers = vec![layer()];
        let mut state = AdamState::new(&layers);
        state.step(&mut layers, &[grad([0.0, 0.0], 0.0)], &AdamParams::default());
        assert_eq!(layers[0], layer());
    }

    #[test]
    fn first_steps_move_by_learning_rate() {
        let p = AdamParams::default();
        let mut layers = vec![layer()];
        let mut state = AdamState::new(&layers);
        let g = grad([0.3, -7.0], 2.0);
        state.step(&mut layers, &[g.clone()], &p);
        // m̂ = g, v̂ = g², so the step is lr · g/(|g| + ε).
        let expect = |g: f64| p.learning_rate * g / (g.abs() + p.epsilon);
        assert!((layers[0].weight[[0, 0]] - (1.0 - expect(0.3))).abs() < 1e-15);
        assert!((layers[0].weight[[0, 1]] - (-2.0 - expect(-7.0))).abs() < 1e-15);
        assert!((layers[0].bias[0] - (0.5 - expect(2.0))).abs() < 1e-15);

        let before = layers[0].clone();
        state.step(&mut layers, &[g], &p);
        // Constant gradient: m̂/√v̂ is still sign(g) after bias correction.
        let moved = (before.weight[[0, 0]] - layers[0].weight[[0, 0]]) / p.learning_rate;
        assert!((moved - 0.3 / (0.3 + p.epsilon)).abs() < 1e-12);
        assert_eq!(state.steps(), 2);
    }
}
