//! Dense layers over a flat parameter buffer.
//!
//! Each layer owns a `inputs × outputs` row-major weight block followed by
//! `outputs` biases. Keeping every network's parameters in one `Vec<f64>`
//! makes the optimizer, checkpoints and finite-difference checks indexable
//! by a single offset.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    fn weight<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        let n = self.inputs * self.outputs;
        ArrayView2::from_shape((self.inputs, self.outputs), &params[self.offset..self.offset + n]).unwrap()
    }

    fn bias<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        let start = self.offset + self.inputs * self.outputs;
        ArrayView1::from(&params[start..start + self.outputs])
    }

    fn split_grads<'a>(&self, grads: &'a mut [f64]) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
        let n = self.inputs * self.outputs;
        let block = &mut grads[self.offset..self.offset + n + self.outputs];
        let (w, b) = block.split_at_mut(n);
        (
            ArrayViewMut2::from_shape((self.inputs, self.outputs), w).unwrap(),
            ArrayViewMut1::from(b),
        )
    }

    /// Pre-activations `input · W + b`.
    pub fn forward(&self, params: &[f64], input: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(input.ncols(), self.inputs);
        let mut out = input.dot(&self.weight(params));
        out += &self.bias(params);
        out
    }

    /// Accumulates `∂L/∂W`, `∂L/∂b` into `grads` and returns `∂L/∂input`
    /// when requested.
    pub fn backward(
        &self,
        params: &[f64],
        input: &Array2<f64>,
        d_out: &Array2<f64>,
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let (mut dw, mut db) = self.split_grads(grads);
        general_mat_mul(1.0, &input.t(), d_out, 1.0, &mut dw);
        db += &d_out.sum_axis(Axis(0));
        want_input_grad.then(|| d_out.dot(&self.weight(params).t()))
    }

    /// Uniform fan-in init, `U(-√(6/fan_in), √(6/fan_in))`, zero bias.
    pub fn init_uniform(&self, params: &mut [f64], rng: &mut impl Rng) {
        let bound = (6.0 / self.inputs as f64).sqrt();
        let n = self.inputs * self.outputs;
        for w in &mut params[self.offset..self.offset + n] {
            *w = rng.gen_range(-bound..bound);
        }
        params[self.offset + n..self.offset + n + self.outputs].fill(0.0);
    }

    pub fn init_zero(&self, params: &mut [f64]) {
        params[self.offset..self.offset + self.param_count()].fill(0.0);
    }
}

/// Allocates consecutive layers for the given `(inputs, outputs)` shapes.
pub(crate) struct LayerAllocator {
    next: usize,
}

impl LayerAllocator {
    pub(crate) fn new() -> Self {
        LayerAllocator { next: 0 }
    }

    pub(crate) fn dense(&mut self, inputs: usize, outputs: usize) -> Dense {
        let d = Dense {
            inputs,
            outputs,
            offset: self.next,
        };
        self.next += d.param_count();
        d
    }

    pub(crate) fn total(&self) -> usize {
        self.next
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Zeroes `grad` where the pre-activation was not positive.
pub fn relu_backward(pre: &Array2<f64>, grad: &mut Array2<f64>) {
    ndarray::Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn concat_cols(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts match")
}

pub(crate) fn leading_cols(a: &Array2<f64>, n: usize) -> Array2<f64> {
    a.slice(s![.., ..n]).to_owned()
}

pub(crate) fn column(a: &Array2<f64>, c: usize) -> Array1<f64> {
    a.column(c).to_owned()
}
