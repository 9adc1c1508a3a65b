//! Dense pretraining, the sequence training loop, gradient checking and
//! evaluation.

mod eval;
mod gradcheck;
mod optim;

pub use eval::{evaluate, FramePredictor, Metrics};
pub use gradcheck::{grad_check, grad_check_against, relative_error, GradCheckConfig, GradCheckReport};
pub use optim::{clip_global_norm, Algorithm, OptimConfig, Optimizer};

use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::dataset::validation_split;
use crate::error::{Error, Result};
use crate::model::{backward, forward_loss, Dense, ForwardOptions, InitConfig, ModelGrads, ModelParams};
use crate::numerics::{add_assign, rand_uniform, sigmoid_in_place, tanh_in_place, Rng};
use crate::preprocess::PreparedEpisode;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the dataset is too small to hold out any episode.
    pub val_recon: Option<f64>,
    pub val_pred: Option<f64>,
    pub seconds: f64,
}

impl EpochStats {
    pub fn val_loss(&self) -> Option<f64> {
        Some(0.5 * (self.val_recon? + self.val_pred?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Prediction MSE per horizon on the held-out split (training split if
    /// nothing is held out).
    pub horizon_mse: Vec<f64>,
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.9e}"))
}

impl TrainReport {
    /// Whitespace-separated lines: `epoch train_loss val_loss seconds`,
    /// followed by `horizon <h> <mse>` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# epoch train_loss val_loss seconds\n");
        for e in &self.epochs {
            let val = e.val_loss().map_or_else(|| "-".to_string(), |v| format!("{v:.9e}"));
            let _ = writeln!(s, "{} {:.9e} {} {:.3}", e.epoch, e.train_loss, val, e.seconds);
        }
        for (h, m) in self.horizon_mse.iter().enumerate() {
            let _ = writeln!(s, "horizon {} {:.9e}", h + 1, m);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_recon,val_pred,val_loss,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.9e},{},{},{},{:.3}",
                e.epoch,
                e.train_loss,
                opt_num(e.val_recon),
                opt_num(e.val_pred),
                opt_num(e.val_loss()),
                e.seconds
            );
        }
        s
    }

    /// The report without wall-clock times, for reproducibility checks.
    pub fn without_timing(&self) -> TrainReport {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        r
    }
}

fn worker_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))
}

/// Mean loss and mean gradient over `batch`. Per-episode gradients are
/// reduced in batch order, so the result does not depend on `pool`.
fn batch_gradient(
    model: &ModelParams,
    batch: &[&PreparedEpisode],
    opts: ForwardOptions,
    freeze_dense: bool,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, ModelGrads)> {
    let one = |ep: &&PreparedEpisode| -> Result<(f64, ModelGrads)> {
        let (loss, cache) = forward_loss(model, ep, opts)?;
        Ok((loss, backward(model, &cache, freeze_dense)?))
    };
    let mut total = model.zeros_like();
    let mut loss = 0.0;
    match pool {
        Some(pool) => {
            let parts: Vec<(f64, ModelGrads)> = pool.install(|| batch.par_iter().map(one).collect::<Result<_>>())?;
            for (l, g) in parts {
                loss += l;
                total.axpy(1.0, &g);
            }
        }
        None => {
            for ep in batch {
                let (l, g) = one(ep)?;
                loss += l;
                total.axpy(1.0, &g);
            }
        }
    }
    let n = batch.len() as f64;
    for b in total.blocks_mut() {
        b.iter_mut().for_each(|g| *g /= n);
    }
    Ok((loss / n, total))
}

/// Mean reconstruction and prediction MSE over `data`.
pub fn branch_losses(model: &ModelParams, data: &[PreparedEpisode]) -> Result<(f64, f64)> {
    let mut r = 0.0;
    let mut p = 0.0;
    for ep in data {
        let (_, cache) = forward_loss(model, ep, ForwardOptions::default())?;
        r += cache.recon_mse;
        p += cache.pred_mse;
    }
    let n = data.len() as f64;
    Ok((r / n, p / n))
}

/// Mini-batch training with global-norm clipping. The last tenth of `data`
/// (by index) is held out for validation. Deterministic for a given seed.
pub fn train(model: &ModelParams, data: &[PreparedEpisode], cfg: &OptimConfig) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training needs at least one episode"));
    }
    let (train_range, val_range) = validation_split(data.len());
    let train_set = &data[train_range];
    let val_set = &data[val_range];
    let opts = ForwardOptions {
        teacher_forcing: cfg.teacher_forcing,
    };
    let pool = worker_pool(cfg.workers)?;

    let mut params = model.clone();
    let trainable: Vec<bool> = params.blocks().iter().map(|b| !(b.dense && cfg.freeze_dense)).collect();
    let lens: Vec<usize> = params.blocks().iter().map(|b| b.data.len()).collect();
    let mut optimizer = Optimizer::new(cfg, &lens);
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        horizon_mse: Vec::new(),
    };

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedEpisode> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grads) = batch_gradient(&params, &batch, opts, cfg.freeze_dense, pool.as_ref())?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numeric(format!(
                    "epoch {epoch}, batch {b} (training episodes {chunk:?}): loss {loss}, gradient finite: {}",
                    grads.is_finite()
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            clip_global_norm(grads.blocks_mut(), cfg.clip_norm);
            let g: Vec<&[f64]> = grads.blocks().into_iter().map(|b| b.data).collect();
            optimizer.step(params.blocks_mut(), &g, &trainable)?;
        }
        let (val_recon, val_pred) = if val_set.is_empty() {
            (None, None)
        } else {
            let (r, p) = branch_losses(&params, val_set)?;
            (Some(r), Some(p))
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_recon,
            val_pred,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: train {:.6e} val {} ({:.1}s)",
            stats.train_loss,
            opt_num(stats.val_loss()),
            stats.seconds
        );
        report.epochs.push(stats);
    }

    let scored = if val_set.is_empty() { train_set } else { val_set };
    report.horizon_mse = evaluate(&params, scored)?.horizon_mse;
    Ok((params, report))
}

/// The embedding pair `enc_dense` / `dec_dense` trained as a per-frame
/// autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseAutoencoder {
    pub encoder: Dense,
    pub decoder: Dense,
    /// Mean per-frame MSE of each epoch, measured before that epoch's updates.
    pub losses: Vec<f64>,
}

impl DenseAutoencoder {
    /// `sigmoid(W_d tanh(W_e x + b_e) + b_d)`.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut e = self.encoder.apply(x)?;
        tanh_in_place(&mut e);
        let mut y = self.decoder.apply(&e)?;
        sigmoid_in_place(&mut y);
        Ok(y)
    }

    /// Installs the pair into `model`.
    pub fn install(&self, model: &mut ModelParams) -> Result<()> {
        let mut donor = model.clone();
        donor.enc_dense = self.encoder.clone();
        donor.dec_dense = self.decoder.clone();
        model.adopt_dense(&donor)
    }
}

fn frame_ae_grad(ae: &DenseAutoencoder, x: &[f64], g_enc: &mut Dense, g_dec: &mut Dense) -> Result<f64> {
    let mut e = ae.encoder.apply(x)?;
    tanh_in_place(&mut e);
    let mut y = ae.decoder.apply(&e)?;
    sigmoid_in_place(&mut y);
    let n = x.len() as f64;
    let mut loss = 0.0;
    let dpre: Vec<f64> = y
        .iter()
        .zip(x)
        .map(|(&y, &t)| {
            loss += (y - t) * (y - t);
            2.0 * (y - t) / n * y * (1.0 - y)
        })
        .collect();
    g_dec.w.add_outer(&dpre, &e)?;
    add_assign(&mut g_dec.b, &dpre)?;
    let mut de = vec![0.0; e.len()];
    ae.decoder.w.t_mul_vec_acc(&dpre, &mut de)?;
    let da: Vec<f64> = de.iter().zip(&e).map(|(d, e)| d * (1.0 - e * e)).collect();
    g_enc.w.add_outer(&da, x)?;
    add_assign(&mut g_enc.b, &da)?;
    Ok(loss / n)
}

/// Trains the embedding layers as a frame autoencoder under MSE.
pub fn pretrain_dense(
    frames: &[Vec<f64>],
    feature_dim: usize,
    init: InitConfig,
    cfg: &OptimConfig,
) -> Result<DenseAutoencoder> {
    cfg.validate()?;
    let pixels = frames
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::invalid("pretraining needs at least one frame"))?;
    if let Some(f) = frames.iter().find(|f| f.len() != pixels) {
        return Err(Error::shape(format!(
            "frames of {} and {} pixels mixed",
            pixels,
            f.len()
        )));
    }
    if feature_dim == 0 {
        return Err(Error::Config("feature_dim must be at least 1".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut ae = DenseAutoencoder {
        encoder: Dense {
            w: rand_uniform(&mut rng, feature_dim, pixels, -init.scale, init.scale)?,
            b: vec![0.0; feature_dim],
        },
        decoder: Dense {
            w: rand_uniform(&mut rng, pixels, feature_dim, -init.scale, init.scale)?,
            b: vec![0.0; pixels],
        },
        losses: Vec::with_capacity(cfg.epochs),
    };
    let mut optimizer = Optimizer::new(cfg, &[feature_dim * pixels, feature_dim, pixels * feature_dim, pixels]);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut g_enc = Dense::zeros(pixels, feature_dim);
            let mut g_dec = Dense::zeros(feature_dim, pixels);
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += frame_ae_grad(&ae, &frames[i], &mut g_enc, &mut g_dec)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "pretraining epoch {epoch}, batch {b} (frames {chunk:?}): loss {batch_loss}"
                )));
            }
            loss_sum += batch_loss;
            let n = chunk.len() as f64;
            let mut blocks = [
                g_enc.w.as_mut_slice(),
                &mut g_enc.b,
                g_dec.w.as_mut_slice(),
                &mut g_dec.b,
            ];
            blocks.iter_mut().for_each(|b| b.iter_mut().for_each(|g| *g /= n));
            clip_global_norm(blocks.into_iter().collect(), cfg.clip_norm);
            let grads = [g_enc.w.as_slice(), &g_enc.b, g_dec.w.as_slice(), &g_dec.b];
            let params = vec![
                ae.encoder.w.as_mut_slice(),
                &mut ae.encoder.b,
                ae.decoder.w.as_mut_slice(),
                &mut ae.decoder.b,
            ];
            optimizer.step(params, &grads, &[true; 4])?;
        }
        let mean = loss_sum / frames.len() as f64;
        info!("pretrain epoch {epoch}: frame mse {mean:.6e}");
        ae.losses.push(mean);
    }
    Ok(ae)
}

/// All frames (inputs and targets) of `episodes`, flattened.
pub fn all_frames(episodes: &[PreparedEpisode]) -> Vec<Vec<f64>> {
    episodes
        .iter()
        .flat_map(|ep| ep.inputs.iter().chain(&ep.targets).cloned())
        .collect()
}
