//! Dense tanh MLP over a flat parameter slice with hand-written backprop.
//!
//! Layer `l` maps `sizes[l]` inputs to `sizes[l+1]` outputs. Its parameters
//! are laid out as the row-major weight matrix (`out x in`) followed by the
//! bias vector. Hidden layers use tanh; the output layer is linear.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l+1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        MlpShape { sizes }
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weights in the flat slice.
    fn offset(&self, l: usize) -> usize {
        self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Orthogonal weights scaled by `hidden_gain` (and `output_gain` for the
    /// last layer), zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, hidden_gain: f64, output_gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let gain = if l + 1 == self.layers() { output_gain } else { hidden_gain };
            let w = orthogonal(n_out, n_in, rng);
            let off = self.offset(l);
            for (dst, src) in params[off..off + n_out * n_in].iter_mut().zip(w) {
                *dst = gain * src;
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in 0..self.layers() {
            cur = self.layer(params, l, &cur);
        }
        cur
    }

    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> MlpCache {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let next = self.layer(params, l, acts.last().expect("non-empty"));
            acts.push(next);
        }
        MlpCache { acts }
    }

    fn layer(&self, params: &[f64], l: usize, x: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        debug_assert_eq!(x.len(), n_in);
        let off = self.offset(l);
        let w = &params[off..off + n_out * n_in];
        let b = &params[off + n_out * n_in..off + n_out * n_in + n_out];
        let hidden = l + 1 < self.layers();
        w.chunks_exact(n_in)
            .zip(b)
            .map(|(row, bias)| {
                let z = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Adds `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) {
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < self.layers() {
                // Undo tanh: d tanh(z) = 1 - tanh(z)^2.
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let off = self.offset(l);
            let x = &cache.acts[l];
            {
                let (gw, gb) = grad[off..off + n_out * n_in + n_out].split_at_mut(n_out * n_in);
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l > 0 {
                let w = &params[off..off + n_out * n_in];
                let mut prev = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// `rows x cols` matrix with orthonormal rows (or columns when rows > cols),
/// from Gram-Schmidt on a Gaussian draw.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    out
}
