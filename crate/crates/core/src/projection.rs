//! Empirical verification of distance preservation under random mappings.
//!
//! Two separate claims are checked because they have different strengths:
//! a scaled Gaussian projection satisfies the Johnson-Lindenstrauss distance
//! bound with target dimension `k = O(ln n / eps^2)`, while the crossover's
//! row selector is only an unbiased estimator of the mean squared row
//! distance (`E_s[D * |row_s(A) - row_s(B)|^2] = |A - B|_F^2`), without the
//! JL concentration guarantee.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone)]
pub struct JlConfig {
    /// Number of points.
    pub n: usize,
    /// Source dimension (D*D for flattened composed matrices).
    pub ambient_dim: usize,
    /// Target dimension.
    pub k: usize,
    /// Distortion tolerance in (0, 1).
    pub epsilon: f64,
    pub trials: usize,
}

impl JlConfig {
    /// `k = ceil(8 ln n / eps^2)`, the desk-scale JL target dimension.
    pub fn jl_dimension(n: usize, epsilon: f64) -> usize {
        (8.0 * (n as f64).ln() / (epsilon * epsilon)).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.epsilon && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0,1), got {}",
                self.epsilon
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidInput("target dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// Projects each point through a seeded Gaussian matrix scaled by `1/sqrt(k)`
/// so squared norms are preserved in expectation.
pub fn gaussian_projection<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let ambient = points[0].len();
    let scale = 1.0 / (k as f64).sqrt();
    let matrix: Vec<f64> = (0..k * ambient)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect();
    points
        .iter()
        .map(|p| {
            (0..k)
                .map(|r| {
                    matrix[r * ambient..(r + 1) * ambient]
                        .iter()
                        .zip(p)
                        .map(|(m, x)| m * x)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Distortion of one point pair.
#[derive(Debug, Clone)]
pub struct PairDistortion {
    pub pair_id: usize,
    pub original_sq_dist: f64,
    pub projected_sq_dist: f64,
    /// `projected / original`; duplicate points (0/0) are excluded upstream.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct DistortionReport {
    pub pairs: Vec<PairDistortion>,
    /// Largest `|ratio - 1|` over all pairs.
    pub max_deviation: f64,
    /// Fraction of pairs with ratio in `[1 - eps, 1 + eps]`.
    pub fraction_within_epsilon: f64,
    pub epsilon: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared-distance ratios between original and projected points.
pub fn distortion_report(
    original: &[Vec<f64>],
    projected: &[Vec<f64>],
    epsilon: f64,
) -> Result<DistortionReport> {
    if original.len() != projected.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} original vs {} projected points",
            original.len(),
            projected.len()
        )));
    }
    if original.len() < 2 {
        return Err(Error::InvalidInput("need at least two points".into()));
    }
    let mut pairs = Vec::new();
    let mut pair_id = 0;
    let mut within = 0usize;
    let mut max_deviation = 0.0f64;
    for i in 0..original.len() {
        for j in i + 1..original.len() {
            let orig = sq_dist(&original[i], &original[j]);
            let proj = sq_dist(&projected[i], &projected[j]);
            pair_id += 1;
            if orig == 0.0 {
                // Identical points project identically; excluded from ratios.
                continue;
            }
            let ratio = proj / orig;
            if (ratio - 1.0).abs() <= epsilon {
                within += 1;
            }
            max_deviation = max_deviation.max((ratio - 1.0).abs());
            pairs.push(PairDistortion {
                pair_id,
                original_sq_dist: orig,
                projected_sq_dist: proj,
                ratio,
            });
        }
    }
    let fraction = if pairs.is_empty() { 1.0 } else { within as f64 / pairs.len() as f64 };
    Ok(DistortionReport { pairs, max_deviation, fraction_within_epsilon: fraction, epsilon })
}

/// CSV emission: `pair_id, original_sq_dist, projected_sq_dist, ratio`.
pub fn write_distortion_csv<W: Write>(report: &DistortionReport, mut w: W) -> Result<()> {
    writeln!(w, "pair_id,original_sq_dist,projected_sq_dist,ratio")?;
    for pair in &report.pairs {
        writeln!(
            w,
            "{},{},{},{}",
            pair.pair_id, pair.original_sq_dist, pair.projected_sq_dist, pair.ratio
        )?;
    }
    Ok(())
}

/// Monte-Carlo statistics for the row-selection mapping.
#[derive(Debug, Clone)]
pub struct RowMapStats {
    /// Mean of `D * |row_s(A) - row_s(B)|^2 / |A - B|_F^2` over the draws.
    pub mean_ratio: f64,
    pub variance: f64,
    pub trials: usize,
}

/// Samples matrix pairs and row indices, comparing the scaled row distance
/// against the Frobenius distance. Unbiasedness means the mean ratio tends
/// to one; the variance is reported, not bounded.
pub fn row_map_distortion<R: Rng>(
    matrices: &[Tensor],
    rng: &mut R,
    trials: usize,
) -> Result<RowMapStats> {
    if matrices.len() < 2 {
        return Err(Error::InvalidInput("need at least two matrices".into()));
    }
    let d = matrices[0].shape()[0];
    for m in matrices {
        if m.shape() != [d, d] {
            return Err(Error::DimensionMismatch("matrices must share a square shape".into()));
        }
    }
    let mut ratios = Vec::with_capacity(trials);
    while ratios.len() < trials {
        let i = rng.random_range(0..matrices.len());
        let mut j = rng.random_range(0..matrices.len() - 1);
        if j >= i {
            j += 1;
        }
        let frob = matrices[i].sq_distance(&matrices[j]);
        let s = rng.random_range(0..d);
        if frob == 0.0 {
            // Identical matrices: every row ratio is 1 by convention.
            ratios.push(1.0);
            continue;
        }
        let row_sq = sq_dist(matrices[i].row(s), matrices[j].row(s));
        ratios.push(d as f64 * row_sq / frob);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let variance =
        ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / ratios.len() as f64;
    Ok(RowMapStats { mean_ratio: mean, variance, trials })
}
