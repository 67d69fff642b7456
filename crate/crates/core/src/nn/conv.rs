use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// 3x3 same-padded convolution layer (cross-correlation, zero padding).
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    /// Kernels flattened as `[oc][ic][ky][kx]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub const KERNEL: usize = 3;

impl ConvLayer {
    /// He-initialized layer: weights ~ N(0, 2 / (cin * 9)).
    pub fn new_he<R: Rng>(cin: usize, cout: usize, rng: &mut R) -> Self {
        let std = (2.0 / (cin * KERNEL * KERNEL) as f64).sqrt();
        let weights = (0..cout * cin * KERNEL * KERNEL)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Self { cin, cout, weights, bias: vec![0.0; cout] }
    }

    /// Zero-initialized layer; used for the residual head so an untrained
    /// network emits an exactly-zero residual.
    pub fn new_zero(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            weights: vec![0.0; cout * cin * KERNEL * KERNEL],
            bias: vec![0.0; cout],
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn w(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((oc * self.cin + ic) * KERNEL + ky) * KERNEL + kx]
    }

    /// Same-padded forward pass: input `(cin, h, w)` to output `(cout, h, w)`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let shape = input.shape();
        if shape.len() != 3 || shape[0] != self.cin {
            return Err(Error::DimensionMismatch(format!(
                "conv forward: input shape {shape:?}, expected ({}, h, w)",
                self.cin
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        let mut out = Tensor::zeros(&[self.cout, h, w]);
        let in_data = input.data();
        let out_data = out.data_mut();
        for oc in 0..self.cout {
            let base_out = oc * h * w;
            out_data[base_out..base_out + h * w].fill(self.bias[oc]);
            for ic in 0..self.cin {
                let base_in = ic * h * w;
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let wv = self.w(oc, ic, ky, kx);
                        if wv == 0.0 {
                            continue;
                        }
                        let dy = ky as isize - 1;
                        let dx = kx as isize - 1;
                        let y0 = (-dy).max(0) as usize;
                        let y1 = (h as isize - dy).min(h as isize) as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let orow = base_out + y * w;
                            let irow = base_in + iy * w;
                            for x in x0..x1 {
                                let ix = (x as isize + dx) as usize;
                                out_data[orow + x] += wv * in_data[irow + ix];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradients for one sample: returns `(d_input, d_weights, d_bias)`.
    pub fn backward(&self, input: &Tensor, d_out: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let (h, w) = (input.shape()[1], input.shape()[2]);
        debug_assert_eq!(d_out.shape(), &[self.cout, h, w]);
        let mut d_input = Tensor::zeros(&[self.cin, h, w]);
        let mut d_weights = vec![0.0; self.weights.len()];
        let mut d_bias = vec![0.0; self.cout];
        let in_data = input.data();
        let dout_data = d_out.data();
        let din_data = d_input.data_mut();

        for oc in 0..self.cout {
            let base_out = oc * h * w;
            d_bias[oc] = dout_data[base_out..base_out + h * w].iter().sum();
            for ic in 0..self.cin {
                let base_in = ic * h * w;
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let dy = ky as isize - 1;
                        let dx = kx as isize - 1;
                        let y0 = (-dy).max(0) as usize;
                        let y1 = (h as isize - dy).min(h as isize) as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        let widx = ((oc * self.cin + ic) * KERNEL + ky) * KERNEL + kx;
                        let wv = self.weights[widx];
                        let mut dw = 0.0;
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let orow = base_out + y * w;
                            let irow = base_in + iy * w;
                            for x in x0..x1 {
                                let ix = (x as isize + dx) as usize;
                                let g = dout_data[orow + x];
                                dw += g * in_data[irow + ix];
                                din_data[irow + ix] += g * wv;
                            }
                        }
                        d_weights[widx] = dw;
                    }
                }
            }
        }
        (d_input, d_weights, d_bias)
    }
}

/// In-place ReLU; returns the pre-activation copy for the backward pass.
pub fn relu_forward(t: &mut Tensor) -> Tensor {
    let pre = t.clone();
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    pre
}

/// Masks the upstream gradient by the pre-activation sign.
pub fn relu_backward(pre: &Tensor, d_out: &mut Tensor) {
    for (g, &p) in d_out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}
