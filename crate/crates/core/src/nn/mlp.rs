use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

/// Fully connected network: tanh hidden layers, linear output layer.
///
/// All parameters live in one flat buffer. Layer `l` stores its weight
/// matrix row-major as `(out, in)`, followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l]` the tanh output of hidden layer `l`.
    acts: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn zeros(layer_dims: &[usize]) -> Self {
        assert!(layer_dims.len() >= 2, "an MLP needs input and output dims");
        let n = param_count(layer_dims);
        Self {
            layer_dims: layer_dims.to_vec(),
            params: vec![0.0; n],
            activation: Activation::Tanh,
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization; the output
    /// layer is further scaled by `output_scale`.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], output_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(layer_dims);
        let last = net.num_layers() - 1;
        for l in 0..net.num_layers() {
            let bound = 1.0 / (net.layer_dims[l] as f64).sqrt();
            let scale = if l == last { output_scale } else { 1.0 };
            let (w, b) = net.layer_range(l);
            for i in w.start..b.end {
                net.params[i] = rng.random_range(-bound..bound) * scale;
            }
        }
        net
    }

    pub fn from_layers(
        layer_dims: &[usize],
        weights: &[Vec<f64>],
        biases: &[Vec<f64>],
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_dims);
        if weights.len() != net.num_layers() || biases.len() != net.num_layers() {
            return Err(NnError::Shape(format!(
                "expected {} layers of weights and biases, got {} and {}",
                net.num_layers(),
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..net.num_layers() {
            let (w, b) = net.layer_range(l);
            if weights[l].len() != w.len() || biases[l].len() != b.len() {
                return Err(NnError::Shape(format!("layer {l} has inconsistent array lengths")));
            }
            net.params[w].copy_from_slice(&weights[l]);
            net.params[b].copy_from_slice(&biases[l]);
        }
        if net.params.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Shape("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Index ranges of layer `l`'s weights and biases in the flat buffer.
    pub fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut offset = 0;
        for k in 0..l {
            offset += self.layer_dims[k] * self.layer_dims[k + 1] + self.layer_dims[k + 1];
        }
        let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
        (offset..offset + o * i, offset + o * i..offset + o * i + o)
    }

    pub fn layer_weights(&self, l: usize) -> &[f64] {
        &self.params[self.layer_range(l).0]
    }

    pub fn layer_biases(&self, l: usize) -> &[f64] {
        &self.params[self.layer_range(l).1]
    }

    fn weight_view(&self, l: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
        ArrayView2::from_shape((o, i), self.layer_weights(l)).expect("layer shape")
    }

    fn bias_view(&self, l: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.layer_biases(l))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        Ok(self.forward_batch(x)?.0.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a `(batch, input_dim)` matrix.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(x.ncols())?;
        let mut acts = Vec::with_capacity(self.num_layers());
        let mut h = x.to_owned();
        for l in 0..self.num_layers() {
            let mut z = h.dot(&self.weight_view(l).t());
            z += &self.bias_view(l);
            acts.push(h);
            if l + 1 < self.num_layers() {
                z.mapv_inplace(f64::tanh);
            }
            h = z;
        }
        Ok((h, ForwardCache { acts }))
    }

    /// Reverse-mode gradients for a batch. `upstream` is dLoss/dOutput.
    /// Returns the flat parameter gradient and dLoss/dInput.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<(Vec<f64>, Array2<f64>), NnError> {
        let rows = cache.acts[0].nrows();
        if upstream.nrows() != rows || upstream.ncols() != self.output_dim() {
            return Err(NnError::DimensionMismatch {
                what: "upstream gradient",
                expected: self.output_dim(),
                actual: upstream.ncols(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.to_owned();
        for l in (0..self.num_layers()).rev() {
            let input = &cache.acts[l];
            let gw = delta.t().dot(input);
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            let (wr, br) = self.layer_range(l);
            // logical row-major order; the product may not be standard layout
            for (g, v) in grads[wr].iter_mut().zip(gw.iter()) {
                *g = *v;
            }
            for (g, v) in grads[br].iter_mut().zip(gb.iter()) {
                *g = *v;
            }
            let mut back = delta.dot(&self.weight_view(l));
            if l > 0 {
                // input here is tanh output of the previous layer
                back.zip_mut_with(input, |d, &h| *d *= 1.0 - h * h);
            }
            delta = back;
        }
        Ok((grads, delta))
    }

    fn check_input(&self, got: usize) -> Result<(), NnError> {
        if got != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                what: "input",
                expected: self.input_dim(),
                actual: got,
            });
        }
        Ok(())
    }

    /// `self = tau * self + (1 - tau) * other`; used for target networks.
    pub fn polyak_from(&mut self, other: &Mlp, tau: f64) {
        for (t, s) in self.params.iter_mut().zip(&other.params) {
            *t = tau * *t + (1.0 - tau) * s;
        }
    }
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Single-sample forward pass.
pub fn mlp_forward(params: &Mlp, input: &[f64]) -> Result<Vec<f64>, NnError> {
    params.forward(input)
}

/// Single-sample gradients: (dLoss/dParams, dLoss/dInput).
pub fn mlp_grad(params: &Mlp, input: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    params.check_input(input.len())?;
    if upstream.len() != params.output_dim() {
        return Err(NnError::DimensionMismatch {
            what: "upstream gradient",
            expected: params.output_dim(),
            actual: upstream.len(),
        });
    }
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
    let (_, cache) = params.forward_batch(x)?;
    let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row");
    let (g, dx) = params.backward_batch(&cache, up)?;
    Ok((g, dx.into_raw_vec_and_offset().0))
}

/// Converts row-major `rows x cols` data into a matrix.
pub fn to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Array2::from_shape_vec((rows.len(), cols), flat).expect("ragged rows")
}
