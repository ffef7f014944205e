use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matvec, matvec_t_acc, outer_acc, Params, Tensor};

/// Elementwise nonlinearity applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Affine map `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    weight: Tensor,
    bias: Tensor,
}

impl Dense {
    /// Uniform `±1/√fan_in` initialization.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Dense {
            weight: Tensor::uniform(&[output, input], bound, rng),
            bias: Tensor::uniform(&[output], bound, rng),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.data().to_vec();
        let mut wx = vec![0.0; y.len()];
        matvec(self.weight.data(), self.input_size(), x, &mut wx);
        y.iter_mut().zip(&wx).for_each(|(a, b)| *a += b);
        y
    }

    /// Accumulates parameter gradients for upstream `dy` and returns `∂L/∂x`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Dense) -> Vec<f64> {
        outer_acc(grads.weight.data_mut(), dy, x);
        for (b, d) in grads.bias.data_mut().iter_mut().zip(dy) {
            *b += d;
        }
        let mut dx = vec![0.0; x.len()];
        matvec_t_acc(self.weight.data(), self.input_size(), dy, &mut dx);
        dx
    }
}

impl Params for Dense {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}
