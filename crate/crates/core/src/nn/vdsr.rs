use rand::Rng;

use super::conv::{relu_backward, relu_forward, ConvLayer};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// VDSR-style residual generator: a stack of 3x3 same-padded convolutions
/// mapping a 1-channel D×D image to a 1-channel D×D residual. ReLU follows
/// every layer except the last.
///
/// The head layer is zero-initialized so a freshly constructed network emits
/// an exactly-zero residual; composing it with an input genome reproduces the
/// genome bit for bit.
#[derive(Debug, Clone)]
pub struct ResidualNet {
    pub layers: Vec<ConvLayer>,
    hidden_channels: usize,
    trained: bool,
}

struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Tensor>,
    /// Pre-activation output of each layer that feeds a ReLU.
    pre_relu: Vec<Tensor>,
    output: Tensor,
}

impl ResidualNet {
    /// `depth` is the number of conv layers (>= 1); hidden layers carry
    /// `hidden_channels` channels.
    pub fn new<R: Rng>(depth: usize, hidden_channels: usize, rng: &mut R) -> Self {
        assert!(depth >= 1, "residual net needs at least one layer");
        let mut layers = Vec::with_capacity(depth);
        if depth == 1 {
            layers.push(ConvLayer::new_zero(1, 1));
        } else {
            layers.push(ConvLayer::new_he(1, hidden_channels, rng));
            for _ in 1..depth - 1 {
                layers.push(ConvLayer::new_he(hidden_channels, hidden_channels, rng));
            }
            layers.push(ConvLayer::new_zero(hidden_channels, 1));
        }
        Self { layers, hidden_channels, trained: false }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_channels(&self) -> usize {
        self.hidden_channels
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Marks the parameters as ready for use by the residual crossover.
    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::weight_count).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for layer in &mut self.layers {
            let wlen = layer.weights.len();
            layer.weights.copy_from_slice(&flat[at..at + wlen]);
            at += wlen;
            let blen = layer.bias.len();
            layer.bias.copy_from_slice(&flat[at..at + blen]);
            at += blen;
        }
    }

    /// Shape table used by the parameter file format.
    pub fn param_groups(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        let mut groups = Vec::new();
        for layer in &self.layers {
            groups.push((vec![layer.cout, layer.cin, 3, 3], layer.weights.clone()));
            groups.push((vec![layer.cout], layer.bias.clone()));
        }
        groups
    }

    fn forward_cached(&self, image: &Tensor) -> Result<ForwardCache> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_relu = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut current = image.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(current.clone());
            let mut out = layer.forward(&current)?;
            if i + 1 < self.layers.len() {
                pre_relu.push(relu_forward(&mut out));
            }
            current = out;
        }
        Ok(ForwardCache { inputs, pre_relu, output: current })
    }

    /// Runs the conv stack on a 1-channel image, returning the residual.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(image)?.output)
    }

    /// Broadcasts a 1×D genome row-wise into a D×D image, runs the stack and
    /// returns the D×D residual matrix (not yet composed).
    pub fn vdsr_forward(&self, x: &[f64]) -> Result<Tensor> {
        if self.layers.iter().any(|l| {
            l.weights.iter().any(|v| !v.is_finite()) || l.bias.iter().any(|v| !v.is_finite())
        }) {
            return Err(Error::InvalidInput("non-finite network parameter".into()));
        }
        let d = x.len();
        let image = Tensor::broadcast_rows(x, d).reshape(&[1, d, d])?;
        let out = self.forward(&image)?;
        if !out.all_finite() {
            return Err(Error::InvalidInput("non-finite residual output".into()));
        }
        out.reshape(&[d, d])
    }

    /// MSE loss of `broadcast(x) + R` against `target`, with flat gradients.
    ///
    /// The residual composition has unit Jacobian, so the loss gradient flows
    /// into the residual unchanged.
    pub fn loss_and_grads_mse(&self, x: &[f64], target: &Tensor) -> Result<(f64, Vec<f64>)> {
        let d = x.len();
        if target.shape() != [d, d] {
            return Err(Error::DimensionMismatch(format!(
                "target shape {:?}, expected [{d}, {d}]",
                target.shape()
            )));
        }
        let image = Tensor::broadcast_rows(x, d).reshape(&[1, d, d])?;
        let cache = self.forward_cached(&image)?;

        let n = (d * d) as f64;
        let mut loss = 0.0;
        let mut d_out = Tensor::zeros(&[1, d, d]);
        {
            let residual = cache.output.data();
            let grad = d_out.data_mut();
            for i in 0..d * d {
                let pred = x[i % d] + residual[i];
                let diff = pred - target.data()[i];
                loss += diff * diff;
                grad[i] = 2.0 * diff / n;
            }
            loss /= n;
        }

        let grads = self.backward(&cache, d_out);
        Ok((loss, grads))
    }

    /// Backprop through the stack; returns gradients in flat parameter order.
    fn backward(&self, cache: &ForwardCache, mut d_out: Tensor) -> Vec<f64> {
        let n_layers = self.layers.len();
        let mut layer_grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(n_layers);
        layer_grads.resize(n_layers, (Vec::new(), Vec::new()));
        for i in (0..n_layers).rev() {
            if i + 1 < n_layers {
                relu_backward(&cache.pre_relu[i], &mut d_out);
            }
            let (d_in, d_w, d_b) = self.layers[i].backward(&cache.inputs[i], &d_out);
            layer_grads[i] = (d_w, d_b);
            d_out = d_in;
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (d_w, d_b) in layer_grads {
            flat.extend(d_w);
            flat.extend(d_b);
        }
        flat
    }
}

/// Row-wise residual composition: `X_new[i][j] = x[j] + R[i][j]`.
pub fn residual_compose(x: &[f64], residual: &Tensor) -> Result<Tensor> {
    let d = x.len();
    if residual.shape() != [d, d] {
        return Err(Error::DimensionMismatch(format!(
            "residual shape {:?}, expected [{d}, {d}]",
            residual.shape()
        )));
    }
    let mut out = Tensor::zeros(&[d, d]);
    for i in 0..d {
        for j in 0..d {
            *out.at2_mut(i, j) = x[j] + residual.at2(i, j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_means_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ResidualNet::new(4, 8, &mut rng);
        let x = [0.25, 0.5, 0.75, 1.0];
        let r = net.vdsr_forward(&x).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = ResidualNet::new(3, 6, &mut rng);
        // Give the head nonzero weights so the residual is nontrivial.
        let mut params = net.params_flat();
        for p in params.iter_mut() {
            if *p == 0.0 {
                *p = 0.01;
            }
        }
        net.set_params_flat(&params);
        let x = [0.2, 0.4, 0.6, 0.8, 1.0];
        let a = net.vdsr_forward(&x).unwrap();
        let b = net.vdsr_forward(&x).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn single_identity_layer_returns_broadcast() {
        // depth 1 collapses to one 1->1 conv; an identity kernel makes the
        // residual equal the broadcast input.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = ResidualNet::new(1, 1, &mut rng);
        net.layers[0].weights[4] = 1.0; // center tap
        let x = [0.1, 0.9, 0.3, 0.7];
        let r = net.vdsr_forward(&x).unwrap();
        let expected = Tensor::broadcast_rows(&x, 4);
        assert_eq!(r.data(), expected.data());
    }

    #[test]
    fn compose_with_zero_residual_replicates_genome() {
        let x = [0.3, 0.6];
        let r = Tensor::zeros(&[2, 2]);
        let composed = residual_compose(&x, &r).unwrap();
        assert_eq!(composed.row(0), &x);
        assert_eq!(composed.row(1), &x);
    }

    #[test]
    fn compose_with_zero_genome_returns_residual() {
        let r = Tensor::from_vec(&[2, 2], vec![0.5, -0.5, -1.0, 1.0]).unwrap();
        let composed = residual_compose(&[0.0, 0.0], &r).unwrap();
        assert_eq!(composed.data(), r.data());
    }

    #[test]
    fn compose_element_arithmetic() {
        let r = Tensor::from_vec(&[2, 2], vec![0.5, -0.5, -1.0, 1.0]).unwrap();
        let composed = residual_compose(&[1.0, 2.0], &r).unwrap();
        assert_eq!(composed.data(), &[1.5, 1.5, 0.0, 3.0]);
    }

    #[test]
    fn compose_shape_mismatch_errors() {
        let r = Tensor::zeros(&[3, 3]);
        assert!(residual_compose(&[0.0, 0.0], &r).is_err());
    }

    #[test]
    fn nan_parameters_are_a_numeric_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = ResidualNet::new(2, 4, &mut rng);
        net.layers[0].weights[0] = f64::NAN;
        assert!(net.vdsr_forward(&[0.5; 4]).is_err());
    }
}
