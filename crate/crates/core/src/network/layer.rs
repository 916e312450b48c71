use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output. Relu uses 0 at z = 0.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// `y = f(W x + b)` with `W` of shape (outputs, inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    /// Uniform He-style initialization, `W ~ U(-a, a)` with `a = gain * sqrt(3/fan_in)`
    /// and zero bias; the gain is sqrt(2) for relu layers and 1 otherwise.
    pub fn he_uniform(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let gain_sq = if activation == Activation::Relu { 2.0 } else { 1.0 };
        let limit = (3.0 * gain_sq / inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-limit..limit));
        Self {
            weight,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    /// Row-batched forward: `x` is (batch, inputs), result is (batch, outputs).
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        let f = self.activation;
        z.mapv_inplace(|v| f.apply(v));
        z
    }

    /// Back-propagate `d_out` (gradient w.r.t. this layer's output) given the
    /// forward input and output. Returns the parameter gradient and, when
    /// `want_input` is set, the gradient w.r.t. the input.
    pub fn backward(
        &self,
        input: ArrayView2<f64>,
        output: ArrayView2<f64>,
        mut d_out: Array2<f64>,
        want_input: bool,
    ) -> (LayerGrad, Option<Array2<f64>>) {
        let f = self.activation;
        if f != Activation::Identity {
            d_out.zip_mut_with(&output, |g, &y| *g *= f.grad_from_output(y));
        }
        let grad = LayerGrad {
            weight: d_out.t().dot(&input),
            bias: d_out.sum_axis(Axis(0)),
        };
        let d_in = want_input.then(|| d_out.dot(&self.weight));
        (grad, d_in)
    }
}
