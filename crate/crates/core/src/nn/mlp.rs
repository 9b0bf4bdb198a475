//! Fully connected networks with hand-written backpropagation.
//!
//! All parameters of a network live in one flat vector. Layer `i` occupies a
//! contiguous slice: its `out x in` weight matrix (row-major) followed by its
//! `out` biases. Gradients and optimizer moments share that layout, which keeps
//! Adam, soft target updates and checkpoints to simple loops over one slice.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::matrix::{gemm, Matrix};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Identity,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
        }
    }

    fn num_params(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

/// Layer shapes plus the offset of each layer in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    len: usize,
}

impl Layout {
    pub fn new(layers: Vec<LayerShape>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Precondition(
                "a network needs at least one layer".into(),
            ));
        }
        for l in &layers {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::Precondition(
                    "layer dimensions must be positive".into(),
                ));
            }
        }
        for pair in layers.windows(2) {
            check_dim(
                "Layout: consecutive layers",
                pair[0].outputs,
                pair[1].inputs,
            )?;
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut len = 0;
        for l in &layers {
            offsets.push(len);
            len += l.num_params();
        }
        Ok(Self {
            layers,
            offsets,
            len,
        })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.len
    }

    fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let l = &self.layers[layer];
        let start = self.offsets[layer];
        start..start + l.outputs * l.inputs
    }

    fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let l = &self.layers[layer];
        let start = self.offsets[layer] + l.outputs * l.inputs;
        start..start + l.outputs
    }
}

/// Parameters of a feed-forward network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layout: Layout,
    params: Vec<f64>,
}

/// Accumulated derivatives, laid out exactly like the owning [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    layout: Layout,
    values: Vec<f64>,
}

/// Layer outputs recorded during a batched forward pass.
///
/// `activations[0]` is the input batch and `activations[i + 1]` is the output
/// of layer `i`.
#[derive(Clone, Debug)]
pub struct Trace {
    activations: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.activations
            .last()
            .expect("trace always holds the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

impl Mlp {
    /// A network with every parameter set to zero.
    pub fn zeros(layers: Vec<LayerShape>) -> Result<Self> {
        let layout = Layout::new(layers)?;
        let params = vec![0.0; layout.num_params()];
        Ok(Self { layout, params })
    }

    pub fn from_params(layers: Vec<LayerShape>, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(layers)?;
        check_dim("Mlp::from_params", layout.num_params(), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(Self { layout, params })
    }

    /// Dense stack `sizes[0] -> sizes[1] -> ... -> sizes[n]` with `hidden`
    /// activations on every layer but the last, which uses `output`.
    ///
    /// Weights and biases of each layer are drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; `final_bound` overrides the bound
    /// of the last layer.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        final_bound: Option<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Precondition(
                "need at least input and output sizes".into(),
            ));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                LayerShape::new(sizes[i], sizes[i + 1], act)
            })
            .collect();
        let mut net = Self::zeros(layers)?;
        for i in 0..n {
            let fan_in = sizes[i] as f64;
            let bound = match final_bound {
                Some(b) if i + 1 == n => b,
                _ => 1.0 / fan_in.sqrt(),
            };
            let dist = Uniform::new_inclusive(-bound, bound)
                .map_err(|e| Error::Precondition(format!("init bound: {e}")))?;
            let start = net.layout.offsets[i];
            let end = start + net.layout.layers[i].num_params();
            for p in &mut net.params[start..end] {
                *p = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn layers(&self) -> &[LayerShape] {
        self.layout.layers()
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layout.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layout.weight_range(layer)]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layout.weight_range(layer);
        &mut self.params[r]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.params[self.layout.bias_range(layer)]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layout.bias_range(layer);
        &mut self.params[r]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layout == other.layout
    }

    /// Output for a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("Mlp::forward input", self.input_dim(), input.len())?;
        Ok(self.forward_batch(&Matrix::row_vector(input))?.into_vec())
    }

    /// Outputs for a batch of inputs, one per row.
    pub fn forward_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        check_dim("Mlp::forward_batch input", self.input_dim(), inputs.cols())?;
        let mut x = inputs.clone();
        for i in 0..self.layers().len() {
            x = self.layer_forward(i, &x);
        }
        Ok(x)
    }

    /// Forward pass that keeps every layer output for [`Mlp::backward_batch`].
    pub fn forward_trace(&self, inputs: &Matrix) -> Result<Trace> {
        check_dim("Mlp::forward_trace input", self.input_dim(), inputs.cols())?;
        let mut activations = Vec::with_capacity(self.layers().len() + 1);
        activations.push(inputs.clone());
        for i in 0..self.layers().len() {
            let next = self.layer_forward(i, &activations[i]);
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    fn layer_forward(&self, i: usize, x: &Matrix) -> Matrix {
        let shape = self.layout.layers[i];
        let batch = x.rows();
        let w = self.weights(i);
        let b = self.biases(i);
        let mut out = Matrix::zeros(batch, shape.outputs);
        for r in 0..batch {
            out.row_mut(r).copy_from_slice(b);
        }
        // out += x * W^T ; W is stored out x in, so W^T has strides (1, in).
        gemm(
            batch,
            shape.inputs,
            shape.outputs,
            1.0,
            x.as_slice(),
            (shape.inputs as isize, 1),
            w,
            (1, shape.inputs as isize),
            1.0,
            out.as_mut_slice(),
            (shape.outputs as isize, 1),
        );
        if shape.activation != Activation::Identity {
            for v in out.as_mut_slice() {
                *v = shape.activation.apply(*v);
            }
        }
        out
    }

    /// Gradients of `upstream . output` with respect to the parameters and
    /// the input, for a single sample.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Grads, Vec<f64>)> {
        check_dim("Mlp::backward input", self.input_dim(), input.len())?;
        check_dim("Mlp::backward upstream", self.output_dim(), upstream.len())?;
        let trace = self.forward_trace(&Matrix::row_vector(input))?;
        let mut grads = Grads::zeros_like(self);
        let input_grad =
            self.backward_batch(&trace, &Matrix::row_vector(upstream), Some(&mut grads))?;
        Ok((grads, input_grad.into_vec()))
    }

    /// Backpropagates `upstream` (one row per sample, `d loss / d output`)
    /// through a recorded forward pass.
    ///
    /// Parameter gradients summed over the batch are *added* into `grads`
    /// when given; the returned matrix holds `d loss / d input` per sample.
    pub fn backward_batch(
        &self,
        trace: &Trace,
        upstream: &Matrix,
        mut grads: Option<&mut Grads>,
    ) -> Result<Matrix> {
        check_dim(
            "Mlp::backward_batch upstream cols",
            self.output_dim(),
            upstream.cols(),
        )?;
        check_dim(
            "Mlp::backward_batch upstream rows",
            trace.input().rows(),
            upstream.rows(),
        )?;
        check_dim(
            "Mlp::backward_batch trace depth",
            self.layers().len() + 1,
            trace.activations.len(),
        )?;
        if let Some(g) = grads.as_deref() {
            if g.layout != self.layout {
                return Err(Error::Precondition(
                    "gradient buffer has a different layout".into(),
                ));
            }
        }
        let batch = upstream.rows();
        let mut delta = upstream.clone();
        for i in (0..self.layers().len()).rev() {
            let shape = self.layout.layers[i];
            let out = &trace.activations[i + 1];
            if shape.activation != Activation::Identity {
                for (d, &y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= shape.activation.derivative_from_output(y);
                }
            }
            let x = &trace.activations[i];
            if let Some(g) = grads.as_deref_mut() {
                let wr = self.layout.weight_range(i);
                // dW += delta^T * x  : (out x batch) * (batch x in)
                gemm(
                    shape.outputs,
                    batch,
                    shape.inputs,
                    1.0,
                    delta.as_slice(),
                    (1, shape.outputs as isize),
                    x.as_slice(),
                    (shape.inputs as isize, 1),
                    1.0,
                    &mut g.values[wr],
                    (shape.inputs as isize, 1),
                );
                let br = self.layout.bias_range(i);
                let db = &mut g.values[br];
                for r in 0..batch {
                    for (acc, d) in db.iter_mut().zip(delta.row(r)) {
                        *acc += d;
                    }
                }
            }
            // d input = delta * W : (batch x out) * (out x in)
            let mut prev = Matrix::zeros(batch, shape.inputs);
            gemm(
                batch,
                shape.outputs,
                shape.inputs,
                1.0,
                delta.as_slice(),
                (shape.outputs as isize, 1),
                self.weights(i),
                (shape.inputs as isize, 1),
                0.0,
                prev.as_mut_slice(),
                (shape.inputs as isize, 1),
            );
            delta = prev;
        }
        Ok(delta)
    }
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layout: net.layout.clone(),
            values: vec![0.0; net.num_params()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.values[self.layout.weight_range(layer)]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.values[self.layout.bias_range(layer)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn fits(&self, net: &Mlp) -> bool {
        self.layout == net.layout
    }
}

/// Exponential averaging of a target network toward its online network:
/// `target <- (1 - tau) * target + tau * online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Precondition(format!(
            "tau must lie in (0, 1], got {tau}"
        )));
    }
    if !target.same_shape(online) {
        return Err(Error::Precondition(
            "soft update between differently shaped networks".into(),
        ));
    }
    let keep = 1.0 - tau;
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = keep * *t + tau * *o;
    }
    Ok(())
}
