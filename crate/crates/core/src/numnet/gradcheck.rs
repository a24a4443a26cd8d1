use super::mlp::{MlpModel, Mode};
use crate::Result;

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    /// Parameter index where the worst disagreement occurred.
    pub worst_param: usize,
    pub params_checked: usize,
    /// A pre-activation sat within one step of a relu kink, so the
    /// finite difference may straddle a non-differentiable point.
    pub near_kink: bool,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// Relative error with an absolute floor of 1e-6 on the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Check every parameter's analytic gradient against a central difference
/// of step `step`. `loss_fn` maps the model output to `(loss, dloss/doutput)`.
pub fn gradcheck<F>(
    model: &MlpModel,
    loss_fn: F,
    input: &[f64],
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    gradcheck_with(model, loss_fn, input, step, tolerance, |_| {})
}

/// As [`gradcheck`], with a hook that may tamper with the analytic gradient
/// (used to verify the checker detects faults).
pub fn gradcheck_with<F, H>(
    model: &MlpModel,
    loss_fn: F,
    input: &[f64],
    step: f64,
    tolerance: f64,
    tamper: H,
) -> Result<GradcheckReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    H: FnOnce(&mut Vec<f64>),
{
    let mut no_rng = crate::rng::stream(0, "gradcheck", 0);
    let (out, cache) = model.forward(input, Mode::Infer, &mut no_rng)?;
    let (_, dout) = loss_fn(&out)?;
    let mut analytic = model.backward(&cache, &dout)?.flat();
    tamper(&mut analytic);

    let near_kink = cache
        .pre_activations()
        .iter()
        .flatten()
        .any(|z| z.abs() < 10.0 * step * (1.0 + input.iter().map(|x| x.abs()).sum::<f64>()));

    let base = model.params_flat();
    let mut probe = model.clone();
    let eval = |probe: &mut MlpModel, idx: usize, value: f64| -> Result<f64> {
        probe.set_param(idx, value);
        let y = probe.predict(input)?;
        Ok(loss_fn(&y)?.0)
    };
    let mut worst = (0.0, 0);
    for (i, &p) in base.iter().enumerate() {
        let plus = eval(&mut probe, i, p + step)?;
        let minus = eval(&mut probe, i, p - step)?;
        probe.set_param(i, p);
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(GradcheckReport {
        max_relative_error: worst.0,
        worst_param: worst.1,
        params_checked: base.len(),
        near_kink,
        tolerance,
    })
}
