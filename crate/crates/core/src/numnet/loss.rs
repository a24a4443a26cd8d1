//! Training losses. Each returns the scalar loss and its gradient with
//! respect to the prediction it consumes.

use super::special::{digamma, ln_gamma, trigamma};
use crate::{Error, Result};

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean squared error with gradient `2(pred − target)/n`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Categorical cross-entropy on raw logits.
pub fn cce_loss(logits: &[f64], target_class: usize) -> Result<(f64, Vec<f64>)> {
    if target_class >= logits.len() {
        return Err(Error::Input(format!(
            "class {target_class} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[target_class];
    let mut grad = softmax(logits);
    grad[target_class] -= 1.0;
    Ok((loss, grad))
}

/// Evidential classification loss on nonnegative evidence.
///
/// With α = e + 1 and S = Σα the data term is the expected cross-entropy
/// under Dir(α), `ψ(S) − ψ(α_y)`. The regularizer is `anneal · KL(Dir(α̃) ‖
/// Dir(1))`, where α̃ replaces the target entry of α with 1 so that only
/// misleading evidence is penalized.
pub fn edl_loss(evidence: &[f64], target_class: usize, anneal: f64) -> Result<(f64, Vec<f64>)> {
    let k = evidence.len();
    if target_class >= k {
        return Err(Error::Input(format!(
            "class {target_class} out of range for {k} evidence values"
        )));
    }
    if let Some(bad) = evidence.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::Contract(format!(
            "evidence must be finite and >= 0, got {bad}"
        )));
    }
    let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
    let strength: f64 = alpha.iter().sum();
    let data_loss = digamma(strength) - digamma(alpha[target_class]);
    let tg_s = trigamma(strength);
    let mut grad: Vec<f64> = vec![tg_s; k];
    grad[target_class] -= trigamma(alpha[target_class]);

    let mut loss = data_loss;
    if anneal > 0.0 {
        let tilde: Vec<f64> = alpha
            .iter()
            .enumerate()
            .map(|(i, a)| if i == target_class { 1.0 } else { *a })
            .collect();
        let s_tilde: f64 = tilde.iter().sum();
        let kf = k as f64;
        let dg_s = digamma(s_tilde);
        let kl = ln_gamma(s_tilde) - ln_gamma(kf) - tilde.iter().map(|a| ln_gamma(*a)).sum::<f64>()
            + tilde
                .iter()
                .map(|a| (a - 1.0) * (digamma(*a) - dg_s))
                .sum::<f64>();
        loss += anneal * kl;
        let tg_st = trigamma(s_tilde);
        for (i, a) in tilde.iter().enumerate() {
            if i != target_class {
                grad[i] += anneal * ((a - 1.0) * trigamma(*a) - (s_tilde - kf) * tg_st);
            }
        }
    }
    Ok((loss, grad))
}
