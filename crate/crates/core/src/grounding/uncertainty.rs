use serde::{Deserialize, Serialize};

use crate::numnet::{argmax, softmax};
use crate::sim::NUM_PHASES;
use crate::{Error, Result};

/// A grounded phase together with the inverse model's uncertainty in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainAction {
    pub grounded_action: usize,
    /// Always in [0, 1].
    pub uncertainty: f64,
}

/// Subjective-logic uncertainty and belief masses of an evidence vector.
///
/// With S = Σ(e_k + 1): b_k = e_k/S and u = K/S. The returned u is computed
/// as `1 − Σb` (summed in index order), which equals K/S up to rounding and
/// makes `u + b.iter().sum::<f64>() == 1.0` hold exactly in floating point.
pub fn edl_uncertainty(evidence: &[f64]) -> Result<(f64, Vec<f64>)> {
    if evidence.is_empty() {
        return Err(Error::Input("evidence vector is empty".into()));
    }
    if let Some(bad) = evidence.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::Contract(format!(
            "evidence must be finite and >= 0, got {bad}"
        )));
    }
    let k = evidence.len() as f64;
    let strength: f64 = evidence.iter().sum::<f64>() + k;
    let beliefs: Vec<f64> = evidence.iter().map(|e| e / strength).collect();
    let closed = 1.0 - beliefs.iter().sum::<f64>();
    // Only astronomically large evidence can round the belief mass up to 1.
    let u = if closed > 0.0 { closed } else { k / strength };
    Ok((u, beliefs))
}

/// Decision of an evidential head: the class with most evidence and u = K/S.
pub fn edl_decision(evidence: &[f64]) -> Result<UncertainAction> {
    let (u, _) = edl_uncertainty(evidence)?;
    Ok(UncertainAction {
        grounded_action: argmax(evidence),
        uncertainty: u,
    })
}

/// Shannon entropy of `p` divided by ln K, clamped to [0, 1].
pub fn normalized_entropy(p: &[f64]) -> f64 {
    if p.len() < 2 {
        return 0.0;
    }
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    (h / (p.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Decision from an averaged class distribution.
pub fn entropy_decision(mean_probs: &[f64]) -> UncertainAction {
    UncertainAction {
        grounded_action: argmax(mean_probs),
        uncertainty: normalized_entropy(mean_probs),
    }
}

/// Componentwise mean of the softmax of each logit vector.
pub fn mean_softmax<'a>(logit_sets: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc = vec![0.0; NUM_PHASES];
    let mut n = 0usize;
    for logits in logit_sets {
        let p = softmax(logits);
        if acc.len() != p.len() {
            acc = vec![0.0; p.len()];
        }
        acc.iter_mut().zip(&p).for_each(|(a, x)| *a += x);
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}
