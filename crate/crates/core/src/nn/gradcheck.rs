//! Finite-difference verification of the analytic gradients. Central
//! differences with `h = 1e-5` in double precision; intended for small nets.

use super::classifier::SkillClassifier;
use super::tensor::Tensor;
use super::vdsr::ResidualNet;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-8 {
        // Both effectively zero; no signal to compare against.
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn max_rel_error<F>(params: &mut [f64], analytic: &[f64], mut loss_at: F, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + h;
        let plus = loss_at(params);
        params[i] = orig - h;
        let minus = loss_at(params);
        params[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Max relative error between analytic and central-difference gradients of
/// the composed-MSE loss, over every parameter.
pub fn gradient_check_vdsr(
    net: &ResidualNet,
    x: &[f64],
    target: &Tensor,
    h: f64,
) -> Result<f64> {
    let (_, analytic) = net.loss_and_grads_mse(x, target)?;
    let mut probe = net.clone();
    let mut params = probe.params_flat();
    Ok(max_rel_error(
        &mut params,
        &analytic,
        |p| {
            probe.set_params_flat(p);
            probe.loss_and_grads_mse(x, target).map(|(l, _)| l).unwrap_or(f64::NAN)
        },
        h,
    ))
}

/// Max relative error for the classifier's cross-entropy gradients.
pub fn gradient_check_classifier(
    net: &SkillClassifier,
    matrix: &Tensor,
    label: usize,
    h: f64,
) -> Result<f64> {
    let (_, analytic) = net.loss_and_grads_ce(matrix, label)?;
    let mut probe = net.clone();
    let mut params = probe.params_flat();
    Ok(max_rel_error(
        &mut params,
        &analytic,
        |p| {
            probe.set_params_flat(p);
            probe.loss_and_grads_ce(matrix, label).map(|(l, _)| l).unwrap_or(f64::NAN)
        },
        h,
    ))
}
