//! Dense feed-forward network: sigmoid hidden layers, tanh output layer.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};

/// Hidden layer widths used by default.
pub const HIDDEN_LAYERS: [usize; 4] = [800, 800, 400, 200];

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `inputs x outputs`, so a batch is propagated as `A W + b`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Network mapping a trajectory of length `2N` to the `2d²` raw outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub d: usize,
    pub n: usize,
    pub layers: Vec<Layer>,
}

/// Layer widths from input to output.
pub fn layer_sizes(d: usize, n: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(2 * n);
    sizes.extend_from_slice(hidden);
    sizes.push(2 * d * d);
    sizes
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Layer activations kept for the backward pass; `acts[0]` is the input batch.
pub struct ForwardCache {
    pub acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().unwrap()
    }
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases.
    pub fn new(d: usize, n: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidDimension(format!("network needs d >= 1 and N >= 1, got d={d}, N={n}")));
        }
        let sizes = layer_sizes(d, n, hidden);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    w: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-limit..limit)),
                    b: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { d, n, layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            d: self.d,
            n: self.n,
            layers: self
                .layers
                .iter()
                .map(|l| Layer { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) })
                .collect(),
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_len(&self) -> usize {
        2 * self.n
    }

    pub fn output_len(&self) -> usize {
        2 * self.d * self.d
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// All parameters in checkpoint order: per layer, `W` row-major then `b`.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_len() {
            return Err(Error::DimensionMismatch(format!(
                "network expects inputs of length {}, got {}",
                self.input_len(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Forward pass on a batch (one sample per row), keeping activations.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().unwrap();
            let mut z = Array2::from_shape_fn((prev.nrows(), layer.b.len()), |(_, j)| layer.b[j]);
            general_mat_mul(1.0, prev, &layer.w, 1.0, &mut z);
            if k == last {
                z.mapv_inplace(f64::tanh);
            } else {
                z.mapv_inplace(sigmoid);
            }
            acts.push(z);
        }
        Ok(ForwardCache { acts })
    }

    /// Raw outputs for a batch.
    pub fn forward_raw(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.acts.pop().unwrap())
    }

    /// Accumulates parameter gradients into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>, grad: &mut MlpModel) -> Result<()> {
        let last = self.layers.len() - 1;
        // through tanh
        let mut delta = d_out * &cache.acts[last + 1].mapv(|y| 1.0 - y * y);
        for k in (0..=last).rev() {
            let a_prev = &cache.acts[k];
            general_mat_mul(1.0, &a_prev.t(), &delta, 1.0, &mut grad.layers[k].w);
            grad.layers[k].b += &delta.sum_axis(Axis(0));
            if k > 0 {
                let mut prev_delta = Array2::zeros(a_prev.raw_dim());
                general_mat_mul(1.0, &delta, &self.layers[k].w.t(), 0.0, &mut prev_delta);
                // through sigmoid
                prev_delta.zip_mut_with(a_prev, |g, &s| *g *= s * (1.0 - s));
                delta = prev_delta;
            }
        }
        for (k, l) in grad.layers.iter().enumerate() {
            if !l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient in layer {k}")));
            }
        }
        Ok(())
    }
}
