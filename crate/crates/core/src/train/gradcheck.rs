use crate::error::{Error, Result};
use crate::model::{backward, forward_loss, ForwardOptions, ModelGrads, ModelParams};
use crate::preprocess::PreparedEpisode;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub eps: f64,
    pub tolerance: f64,
    /// Below this magnitude both gradients are compared absolutely.
    /// Rounding of an O(0.1) loss alone puts ~1e-12 of noise on each
    /// central difference at eps = 1e-5, so entries just above 1e-8 can
    /// miss a 1e-4 tolerance without any error in the derivative.
    pub abs_floor: f64,
    /// Skip the embedding layers, as training does when they are frozen.
    pub freeze_dense: bool,
    pub forward: ForwardOptions,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-8,
            freeze_dense: false,
            forward: ForwardOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_error: f64,
    /// `block[index]` of the worst entry.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|)`, or `|a - n|` when both are below `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        diff
    } else {
        diff / scale
    }
}

/// Compares the analytic gradient of `model` on `ep` with central
/// differences over every trainable entry.
pub fn grad_check(model: &ModelParams, ep: &PreparedEpisode, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (_, cache) = forward_loss(model, ep, cfg.forward)?;
    let grads = backward(model, &cache, cfg.freeze_dense)?;
    grad_check_against(model, ep, &grads, cfg)
}

/// As [`grad_check`], with caller-supplied analytic gradients.
pub fn grad_check_against(
    model: &ModelParams,
    ep: &PreparedEpisode,
    analytic: &ModelGrads,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let GradCheckConfig {
        eps,
        tolerance,
        abs_floor,
        freeze_dense,
        forward: opts,
    } = *cfg;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    if analytic.config != model.config {
        return Err(Error::shape("gradient and model configurations differ"));
    }
    let names: Vec<(String, bool)> = model.blocks().iter().map(|b| (b.name.clone(), b.dense)).collect();
    let analytic_blocks: Vec<Vec<f64>> = analytic.blocks().iter().map(|b| b.data.to_vec()).collect();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        tolerance,
        passed: true,
    };
    for (b, (name, dense)) in names.iter().enumerate() {
        if *dense && freeze_dense {
            continue;
        }
        for i in 0..analytic_blocks[b].len() {
            let original = probe.blocks_mut()[b][i];
            probe.blocks_mut()[b][i] = original + eps;
            let plus = forward_loss(&probe, ep, opts)?.0;
            probe.blocks_mut()[b][i] = original - eps;
            let minus = forward_loss(&probe, ep, opts)?.0;
            probe.blocks_mut()[b][i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic_blocks[b][i];
            let err = relative_error(a, numeric, abs_floor);
            report.checked += 1;
            if !(err <= report.max_error) || report.worst.is_empty() {
                report.max_error = err;
                report.worst = format!("{name}[{i}]");
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.max_error < tolerance;
    Ok(report)
}
