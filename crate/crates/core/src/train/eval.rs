use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{predict, ModelParams};
use crate::preprocess::PreparedEpisode;

/// Anything that can forecast the target frames of an episode.
pub trait FramePredictor {
    /// Predicted target frames and the reconstruction MSE of the episode.
    fn predict_episode(&self, ep: &PreparedEpisode) -> Result<(Vec<Vec<f64>>, f64)>;
}

impl FramePredictor for ModelParams {
    fn predict_episode(&self, ep: &PreparedEpisode) -> Result<(Vec<Vec<f64>>, f64)> {
        let cache = predict(self, ep)?;
        Ok((cache.prediction().to_vec(), cache.recon_mse))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub episodes: usize,
    /// Model prediction MSE at horizons `1..=t_out`.
    pub horizon_mse: Vec<f64>,
    pub recon_mse: f64,
    /// Repeating the last observed frame.
    pub copy_baseline: Vec<f64>,
    /// Extrapolating the last two observed frames, clamped to `[0, 1]`.
    pub linear_baseline: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn frame_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

impl Metrics {
    pub fn mean_prediction(&self) -> f64 {
        mean(&self.horizon_mse)
    }

    pub fn mean_copy(&self) -> f64 {
        mean(&self.copy_baseline)
    }

    pub fn mean_linear(&self) -> f64 {
        mean(&self.linear_baseline)
    }

    pub fn table(&self) -> String {
        let mut s = format!("episodes {}\n", self.episodes);
        let _ = writeln!(
            s,
            "{:<8} {:>12} {:>12} {:>12} {:>8}",
            "horizon", "model", "copy", "linear", "ratio"
        );
        let rows = self
            .horizon_mse
            .iter()
            .zip(&self.copy_baseline)
            .zip(&self.linear_baseline)
            .enumerate()
            .map(|(h, ((m, c), l))| ((h + 1).to_string(), *m, *c, *l));
        let all = std::iter::once((
            "mean".to_string(),
            self.mean_prediction(),
            self.mean_copy(),
            self.mean_linear(),
        ));
        for (label, m, c, l) in rows.chain(all) {
            let ratio = if c > 0.0 { format!("{:.3}", m / c) } else { "-".into() };
            let _ = writeln!(s, "{label:<8} {m:>12.6e} {c:>12.6e} {l:>12.6e} {ratio:>8}");
        }
        let _ = writeln!(s, "reconstruction {:.6e}", self.recon_mse);
        s
    }
}

/// Per-horizon prediction MSE of `model` and of the two baselines.
pub fn evaluate<P: FramePredictor + ?Sized>(model: &P, data: &[PreparedEpisode]) -> Result<Metrics> {
    let first = data
        .first()
        .ok_or_else(|| Error::invalid("cannot evaluate an empty dataset"))?;
    let t_out = first.targets.len();
    let mut pred = vec![0.0; t_out];
    let mut copy = vec![0.0; t_out];
    let mut linear = vec![0.0; t_out];
    let mut recon = 0.0;
    for ep in data {
        if ep.targets.len() != t_out || ep.inputs.is_empty() {
            return Err(Error::shape("episodes of different lengths in one evaluation"));
        }
        let (frames, r) = model.predict_episode(ep)?;
        if frames.len() != t_out {
            return Err(Error::shape(format!(
                "{} predicted frames for {} targets",
                frames.len(),
                t_out
            )));
        }
        recon += r;
        let last = &ep.inputs[ep.inputs.len() - 1];
        let prev = ep.inputs.len().checked_sub(2).map_or(last, |i| &ep.inputs[i]);
        for (h, target) in ep.targets.iter().enumerate() {
            pred[h] += frame_mse(&frames[h], target);
            copy[h] += frame_mse(last, target);
            let step = (h + 1) as f64;
            let extrapolated: Vec<f64> = last
                .iter()
                .zip(prev)
                .map(|(x, p)| (x + step * (x - p)).clamp(0.0, 1.0))
                .collect();
            linear[h] += frame_mse(&extrapolated, target);
        }
    }
    let n = data.len() as f64;
    for v in [&mut pred, &mut copy, &mut linear] {
        v.iter_mut().for_each(|x| *x /= n);
    }
    Ok(Metrics {
        episodes: data.len(),
        horizon_mse: pred,
        recon_mse: recon / n,
        copy_baseline: copy,
        linear_baseline: linear,
    })
}
