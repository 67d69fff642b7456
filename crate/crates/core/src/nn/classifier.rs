use rand::Rng;

use super::conv::{relu_backward, relu_forward, ConvLayer};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Identity-skip residual block: `y = relu(x + conv2(relu(conv1(x))))`.
/// The skip path carries no parameters, so both convs keep the channel count.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
}

/// ResNet-style skill-factor classifier: stem conv, identity residual
/// blocks, global average pooling and a linear head to one logit per task.
///
/// Inputs are composed unified-space matrices with entries near `[0,1]`;
/// the stem sees them centered to the interval midpoint so that clusters on
/// either side of it activate disjoint ReLU channels.
#[derive(Debug, Clone)]
pub struct SkillClassifier {
    pub stem: ConvLayer,
    pub blocks: Vec<ResidualBlock>,
    /// Head weights flattened as `[task][channel]`.
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
    channels: usize,
    n_tasks: usize,
    trained: bool,
}

struct BlockCache {
    input: Tensor,
    pre1: Tensor,
    act1: Tensor,
    pre_out: Tensor,
}

struct ForwardCache {
    stem_in: Tensor,
    stem_pre: Tensor,
    blocks: Vec<BlockCache>,
    pooled_in: Tensor,
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

impl SkillClassifier {
    /// Convolutional layers are He-initialized; the linear head starts at
    /// zero so the first gradient step already points along the class-mean
    /// direction of the pooled features.
    pub fn new<R: Rng>(n_blocks: usize, channels: usize, n_tasks: usize, rng: &mut R) -> Self {
        let stem = ConvLayer::new_he(1, channels, rng);
        let blocks = (0..n_blocks)
            .map(|_| ResidualBlock {
                conv1: ConvLayer::new_he(channels, channels, rng),
                conv2: ConvLayer::new_he(channels, channels, rng),
            })
            .collect();
        Self {
            stem,
            blocks,
            head_weights: vec![0.0; n_tasks * channels],
            head_bias: vec![0.0; n_tasks],
            channels,
            n_tasks,
            trained: false,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn param_count(&self) -> usize {
        self.stem.weight_count()
            + self
                .blocks
                .iter()
                .map(|b| b.conv1.weight_count() + b.conv2.weight_count())
                .sum::<usize>()
            + self.head_weights.len()
            + self.head_bias.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.stem.weights);
        out.extend_from_slice(&self.stem.bias);
        for block in &self.blocks {
            out.extend_from_slice(&block.conv1.weights);
            out.extend_from_slice(&block.conv1.bias);
            out.extend_from_slice(&block.conv2.weights);
            out.extend_from_slice(&block.conv2.bias);
        }
        out.extend_from_slice(&self.head_weights);
        out.extend_from_slice(&self.head_bias);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        let take = |dst: &mut [f64], at: &mut usize| {
            dst.copy_from_slice(&flat[*at..*at + dst.len()]);
            *at += dst.len();
        };
        take(&mut self.stem.weights, &mut at);
        take(&mut self.stem.bias, &mut at);
        for block in &mut self.blocks {
            take(&mut block.conv1.weights, &mut at);
            take(&mut block.conv1.bias, &mut at);
            take(&mut block.conv2.weights, &mut at);
            take(&mut block.conv2.bias, &mut at);
        }
        take(&mut self.head_weights, &mut at);
        take(&mut self.head_bias, &mut at);
    }

    pub fn param_groups(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        let mut groups = Vec::new();
        let conv = |l: &ConvLayer, groups: &mut Vec<(Vec<usize>, Vec<f64>)>| {
            groups.push((vec![l.cout, l.cin, 3, 3], l.weights.clone()));
            groups.push((vec![l.cout], l.bias.clone()));
        };
        conv(&self.stem, &mut groups);
        for block in &self.blocks {
            conv(&block.conv1, &mut groups);
            conv(&block.conv2, &mut groups);
        }
        groups.push((vec![self.n_tasks, self.channels], self.head_weights.clone()));
        groups.push((vec![self.n_tasks], self.head_bias.clone()));
        groups
    }

    fn forward_cached(&self, image: &Tensor) -> Result<ForwardCache> {
        let shape = image.shape();
        if shape.len() != 3 || shape[0] != 1 {
            return Err(Error::DimensionMismatch(format!(
                "classifier input shape {shape:?}, expected (1, d, d)"
            )));
        }
        let mut stem_in = image.clone();
        for v in stem_in.data_mut() {
            *v -= 0.5;
        }
        let mut current = self.stem.forward(&stem_in)?;
        let stem_pre = relu_forward(&mut current);

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let input = current.clone();
            let mut h = block.conv1.forward(&input)?;
            let pre1 = relu_forward(&mut h);
            let act1 = h.clone();
            let f = block.conv2.forward(&h)?;
            let mut sum = f;
            for (s, &x) in sum.data_mut().iter_mut().zip(input.data()) {
                *s += x;
            }
            let pre_out = relu_forward(&mut sum);
            block_caches.push(BlockCache { input, pre1, act1, pre_out });
            current = sum;
        }

        let pooled_in = current.clone();
        let (c, h, w) = (current.shape()[0], current.shape()[1], current.shape()[2]);
        let hw = (h * w) as f64;
        let pooled: Vec<f64> = (0..c)
            .map(|ch| {
                let base = ch * h * w;
                current.data()[base..base + h * w].iter().sum::<f64>() / hw
            })
            .collect();

        let logits: Vec<f64> = (0..self.n_tasks)
            .map(|t| {
                self.head_bias[t]
                    + self.head_weights[t * self.channels..(t + 1) * self.channels]
                        .iter()
                        .zip(&pooled)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
            })
            .collect();

        Ok(ForwardCache { stem_in, stem_pre, blocks: block_caches, pooled_in, pooled, logits })
    }

    /// Task logits for a D×D matrix input.
    pub fn logits(&self, matrix: &Tensor) -> Result<Vec<f64>> {
        let d = matrix.shape()[0];
        let image = matrix.clone().reshape(&[1, d, d])?;
        let cache = self.forward_cached(&image)?;
        if cache.logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite logits".into()));
        }
        Ok(cache.logits)
    }

    /// Cross-entropy loss against `label` with flat parameter gradients.
    pub fn loss_and_grads_ce(&self, matrix: &Tensor, label: usize) -> Result<(f64, Vec<f64>)> {
        let d = matrix.shape()[0];
        let image = matrix.clone().reshape(&[1, d, d])?;
        let cache = self.forward_cached(&image)?;
        let (loss, d_logits) = softmax_cross_entropy(&cache.logits, label);
        let grads = self.backward(&cache, &d_logits);
        Ok((loss, grads))
    }

    fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Vec<f64> {
        let c = self.channels;
        // Head.
        let mut d_head_w = vec![0.0; self.head_weights.len()];
        let mut d_head_b = vec![0.0; self.n_tasks];
        let mut d_pooled = vec![0.0; c];
        for t in 0..self.n_tasks {
            let g = d_logits[t];
            d_head_b[t] = g;
            for ch in 0..c {
                d_head_w[t * c + ch] = g * cache.pooled[ch];
                d_pooled[ch] += g * self.head_weights[t * c + ch];
            }
        }

        // Global average pooling.
        let shape = cache.pooled_in.shape();
        let (h, w) = (shape[1], shape[2]);
        let hw = (h * w) as f64;
        let mut d_current = Tensor::zeros(shape);
        for ch in 0..c {
            let g = d_pooled[ch] / hw;
            let base = ch * h * w;
            d_current.data_mut()[base..base + h * w].fill(g);
        }

        // Blocks, in reverse. Per block: (d_w1, d_b1, d_w2, d_b2).
        type BlockGrads = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);
        let mut block_grads: Vec<BlockGrads> = vec![Default::default(); self.blocks.len()];
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[i];
            relu_backward(&bc.pre_out, &mut d_current);
            // d_current is now the gradient of the pre-activation sum; it
            // feeds both the conv path and the identity skip.
            let (d_act1, d_w2, d_b2) = block.conv2.backward(&bc.act1, &d_current);
            let mut d_pre1 = d_act1;
            relu_backward(&bc.pre1, &mut d_pre1);
            let (d_block_in, d_w1, d_b1) = block.conv1.backward(&bc.input, &d_pre1);
            for (dst, &skip) in d_current.data_mut().iter_mut().zip(d_block_in.data()) {
                *dst += skip;
            }
            block_grads[i] = (d_w1, d_b1, d_w2, d_b2);
        }

        // Stem.
        relu_backward(&cache.stem_pre, &mut d_current);
        let (_, d_stem_w, d_stem_b) = self.stem.backward(&cache.stem_in, &d_current);

        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend(d_stem_w);
        flat.extend(d_stem_b);
        for (d_w1, d_b1, d_w2, d_b2) in block_grads {
            flat.extend(d_w1);
            flat.extend(d_b1);
            flat.extend(d_w2);
            flat.extend(d_b2);
        }
        flat.extend(d_head_w);
        flat.extend(d_head_b);
        flat
    }
}

/// Numerically stable softmax cross-entropy; returns the loss and the logit
/// gradient `softmax - onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut d = exps.iter().map(|&e| e / sum).collect::<Vec<f64>>();
    d[label] -= 1.0;
    (loss, d)
}

/// Argmax with ties resolved toward the lower index.
pub fn argmax_tie_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
