use serde::{Deserialize, Serialize};

use super::uncertainty::UncertainAction;

/// The uncertainty threshold α and this iteration's uncertainty log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRate {
    /// `f64::INFINITY` until the first update.
    pub alpha: f64,
    logged: Vec<f64>,
}

impl Default for GroundingRate {
    fn default() -> Self {
        Self::new()
    }
}

impl GroundingRate {
    pub fn new() -> Self {
        Self::with_alpha(f64::INFINITY)
    }

    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            logged: Vec::new(),
        }
    }

    pub fn logged(&self) -> &[f64] {
        &self.logged
    }

    pub fn log(&mut self, uncertainty: f64) {
        self.logged.push(uncertainty);
    }

    pub fn reset_log(&mut self) {
        self.logged.clear();
    }

    /// Set α to the mean of the logged uncertainties and clear the log. An
    /// empty log leaves α unchanged.
    pub fn update_alpha(&mut self) -> f64 {
        if self.logged.is_empty() {
            log::warn!(
                "grounding-rate update with an empty uncertainty log; alpha stays {}",
                self.alpha
            );
            return self.alpha;
        }
        // Averaging deviations from the first entry keeps a constant log exact.
        let pivot = self.logged[0];
        let shift = self.logged.iter().map(|u| u - pivot).sum::<f64>() / self.logged.len() as f64;
        self.alpha = pivot + shift;
        self.logged.clear();
        self.alpha
    }
}

/// Execute the grounded action unless its uncertainty reaches α.
/// Returns the executed phase and whether the grounded action was accepted.
/// The uncertainty is logged either way.
pub fn gate(original: usize, grounded: UncertainAction, rate: &mut GroundingRate) -> (usize, bool) {
    rate.log(grounded.uncertainty);
    if grounded.uncertainty >= rate.alpha {
        (original, false)
    } else {
        (grounded.grounded_action, true)
    }
}
