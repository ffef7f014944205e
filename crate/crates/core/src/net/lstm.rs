//! A standard LSTM layer with exact backpropagation through time.
//!
//! Gate pre-activations are stacked as `[input, forget, cell, output]`:
//!
//! ```text
//! a_t = W_ih x_t + W_hh h_{t-1} + b
//! i = σ(a_i)   f = σ(a_f)   g = tanh(a_g)   o = σ(a_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! with `h_0 = c_0 = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matvec, matvec_acc, matvec_t_acc, outer_acc, sigmoid, Params, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    input: usize,
    hidden: usize,
    w_ih: Tensor,
    w_hh: Tensor,
    bias: Tensor,
}

/// Activations cached by [`Lstm::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    inputs: Vec<Vec<f64>>,
    /// `h[0]` is the zero initial state; `h[t]` for `t = 1..=T`.
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    /// Post-activation gates per step, stacked `[i, f, g, o]`.
    gates: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    /// Hidden state after step `t` (1-based; `0` is the initial state).
    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.h[t]
    }

    pub fn last_hidden(&self) -> &[f64] {
        self.h.last().expect("trace always holds the initial state")
    }

    /// Hidden states `h_1..h_T`.
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.h[1..]
    }
}

impl Lstm {
    /// Weights uniform in `±1/√hidden`.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Lstm {
            input,
            hidden,
            w_ih: Tensor::uniform(&[4 * hidden, input], bound, rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias: Tensor::uniform(&[4 * hidden], bound, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn forward<S: AsRef<[f64]>>(&self, seq: &[S]) -> LstmTrace {
        let hsz = self.hidden;
        let mut trace = LstmTrace {
            inputs: Vec::with_capacity(seq.len()),
            h: vec![vec![0.0; hsz]],
            c: vec![vec![0.0; hsz]],
            gates: Vec::with_capacity(seq.len()),
        };
        let mut a = vec![0.0; 4 * hsz];
        for x in seq {
            let x = x.as_ref();
            debug_assert_eq!(x.len(), self.input);
            let h_prev = trace.h.last().unwrap();
            let c_prev = trace.c.last().unwrap();
            matvec(self.w_ih.data(), self.input, x, &mut a);
            matvec_acc(self.w_hh.data(), hsz, h_prev, &mut a);
            let mut gates = vec![0.0; 4 * hsz];
            let mut c = vec![0.0; hsz];
            let mut h = vec![0.0; hsz];
            for k in 0..hsz {
                let i = sigmoid(a[k] + self.bias.data()[k]);
                let f = sigmoid(a[hsz + k] + self.bias.data()[hsz + k]);
                let g = (a[2 * hsz + k] + self.bias.data()[2 * hsz + k]).tanh();
                let o = sigmoid(a[3 * hsz + k] + self.bias.data()[3 * hsz + k]);
                gates[k] = i;
                gates[hsz + k] = f;
                gates[2 * hsz + k] = g;
                gates[3 * hsz + k] = o;
                c[k] = f * c_prev[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            trace.inputs.push(x.to_vec());
            trace.gates.push(gates);
            trace.c.push(c);
            trace.h.push(h);
        }
        trace
    }

    /// Backpropagates `dh[t-1] = ∂L/∂h_t` (t = 1..=T) through time.
    ///
    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x_t`.
    pub fn backward(&self, trace: &LstmTrace, dh: &[Vec<f64>], grads: &mut Lstm) -> Vec<Vec<f64>> {
        let hsz = self.hidden;
        let steps = trace.steps();
        debug_assert_eq!(dh.len(), steps);
        let mut dx = vec![vec![0.0; self.input]; steps];
        let mut dh_next = vec![0.0; hsz];
        let mut dc_next = vec![0.0; hsz];
        let mut da = vec![0.0; 4 * hsz];
        for t in (1..=steps).rev() {
            let gates = &trace.gates[t - 1];
            let c = &trace.c[t];
            let c_prev = &trace.c[t - 1];
            for k in 0..hsz {
                let (i, f, g, o) = (gates[k], gates[hsz + k], gates[2 * hsz + k], gates[3 * hsz + k]);
                let tc = c[k].tanh();
                let dhk = dh[t - 1][k] + dh_next[k];
                let d_o = dhk * tc;
                let dc = dc_next[k] + dhk * o * (1.0 - tc * tc);
                da[k] = dc * g * i * (1.0 - i);
                da[hsz + k] = dc * c_prev[k] * f * (1.0 - f);
                da[2 * hsz + k] = dc * i * (1.0 - g * g);
                da[3 * hsz + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            outer_acc(grads.w_ih.data_mut(), &da, &trace.inputs[t - 1]);
            outer_acc(grads.w_hh.data_mut(), &da, &trace.h[t - 1]);
            for (b, d) in grads.bias.data_mut().iter_mut().zip(&da) {
                *b += d;
            }
            matvec_t_acc(self.w_ih.data(), self.input, &da, &mut dx[t - 1]);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(self.w_hh.data(), hsz, &da, &mut dh_next);
        }
        dx
    }
}

impl Params for Lstm {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w_ih, &self.w_hh, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}
