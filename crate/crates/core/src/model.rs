//! Encoder-decoder frame predictor.
//!
//! ```text
//! frame x_k --enc_dense(tanh)--> e_k --encoder LSTM--> (c, h)
//!   (c, h) --recon decoder--> z_k --dec_dense(sigmoid)--> reconstructed frames
//!   (c, h) --pred decoder---> z_k --dec_dense(sigmoid)--> future frames
//! ```
//!
//! Both decoders start from the encoder's final state. Each decoder step maps
//! its hidden output through a linear `head` to a feature vector `z_k`, which
//! becomes the next step's input (closed loop). The reconstruction decoder's
//! first input is zero; the prediction decoder's is the embedding of the last
//! input frame. When the model is conditioned, every prediction step input is
//! extended with `[a_k ; s_k]`.

use crate::error::{Error, Result};
use crate::lstm::{
    lstm_backward, lstm_forward, lstm_step, lstm_step_backward, LstmParams, LstmState, StepTape, LSTM_FIELD_NAMES,
};
use crate::numerics::{add_assign, rand_uniform, sigmoid_in_place, tanh_in_place, Rng, Tensor2};
use crate::preprocess::PreparedEpisode;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub frame_rows: usize,
    pub frame_cols: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub action_dim: usize,
    pub state_dim: usize,
    pub conditioned: bool,
    /// Reconstruction targets run last input frame first.
    pub recon_reversed: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frame_rows: 64,
            frame_cols: 64,
            feature_dim: 128,
            hidden_dim: 128,
            t_in: 5,
            t_out: 5,
            action_dim: crate::dataset::ACTION_DIM,
            state_dim: crate::dataset::STATE_DIM,
            conditioned: false,
            recon_reversed: true,
        }
    }
}

impl ModelConfig {
    pub fn pixels(&self) -> usize {
        self.frame_rows * self.frame_cols
    }

    /// Width of a prediction decoder input.
    pub fn pred_input_dim(&self) -> usize {
        if self.conditioned {
            self.feature_dim + self.action_dim + self.state_dim
        } else {
            self.feature_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("frame_rows", self.frame_rows),
            ("frame_cols", self.frame_cols),
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("t_in", self.t_in),
            ("t_out", self.t_out),
            ("action_dim", self.action_dim),
            ("state_dim", self.state_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Fully connected layer `W x + b`, `W` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Tensor2,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            w: Tensor2::zeros(output, input),
            b: vec![0.0; output],
        }
    }

    fn init(rng: &mut Rng, input: usize, output: usize, scale: f64) -> Result<Self> {
        Ok(Dense {
            w: rand_uniform(rng, output, input, -scale, scale)?,
            b: vec![0.0; output],
        })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.b.clone();
        self.w.mul_vec_acc(x, &mut out)?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitConfig {
    pub scale: f64,
    pub forget_bias: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            scale: 0.08,
            forget_bias: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Pixels to features, tanh.
    pub enc_dense: Dense,
    /// Features to pixels, sigmoid.
    pub dec_dense: Dense,
    pub encoder: LstmParams,
    pub recon_decoder: LstmParams,
    pub pred_decoder: LstmParams,
    /// Hidden state to feature vector, linear.
    pub head: Dense,
}

/// Gradients share the parameter layout.
pub type ModelGrads = ModelParams;

/// A named, shaped view of one parameter tensor.
#[derive(Debug)]
pub struct Block<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [f64],
    /// Part of the pretrained dense embedding (freezable).
    pub dense: bool,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (f, h) = (config.feature_dim, config.hidden_dim);
        Ok(ModelParams {
            config: config.clone(),
            enc_dense: Dense::zeros(config.pixels(), f),
            dec_dense: Dense::zeros(f, config.pixels()),
            encoder: LstmParams::zeros(f, h),
            recon_decoder: LstmParams::zeros(f, h),
            pred_decoder: LstmParams::zeros(config.pred_input_dim(), h),
            head: Dense::zeros(h, f),
        })
    }

    pub fn init(config: &ModelConfig, init: InitConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (f, h, s) = (config.feature_dim, config.hidden_dim, init.scale);
        Ok(ModelParams {
            config: config.clone(),
            enc_dense: Dense::init(rng, config.pixels(), f, s)?,
            dec_dense: Dense::init(rng, f, config.pixels(), s)?,
            encoder: LstmParams::init(rng, f, h, s, init.forget_bias)?,
            recon_decoder: LstmParams::init(rng, f, h, s, init.forget_bias)?,
            pred_decoder: LstmParams::init(rng, config.pred_input_dim(), h, s, init.forget_bias)?,
            head: Dense::init(rng, h, f, s)?,
        })
    }

    /// Zeroed copy with the same shapes.
    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(&self.config).expect("config was validated on construction")
    }

    /// Every tensor in checkpoint order.
    pub fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = Vec::with_capacity(49);
        fn push_dense<'a>(out: &mut Vec<Block<'a>>, name: &str, d: &'a Dense, dense: bool) {
            out.push(Block {
                name: format!("{name}.W"),
                shape: d.w.shape(),
                data: d.w.as_slice(),
                dense,
            });
            out.push(Block {
                name: format!("{name}.b"),
                shape: (d.b.len(), 1),
                data: &d.b,
                dense,
            });
        }
        fn push_lstm<'a>(out: &mut Vec<Block<'a>>, name: &str, p: &'a LstmParams) {
            for ((field, data), shape) in LSTM_FIELD_NAMES.iter().zip(p.fields()).zip(p.field_shapes()) {
                out.push(Block {
                    name: format!("{name}.{field}"),
                    shape,
                    data,
                    dense: false,
                });
            }
        }
        push_dense(&mut out, "enc_dense", &self.enc_dense, true);
        push_dense(&mut out, "dec_dense", &self.dec_dense, true);
        push_lstm(&mut out, "encoder", &self.encoder);
        push_lstm(&mut out, "recon_decoder", &self.recon_decoder);
        push_lstm(&mut out, "pred_decoder", &self.pred_decoder);
        push_dense(&mut out, "head", &self.head, false);
        out
    }

    /// Mutable slices in the same order as [`ModelParams::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(49);
        out.push(self.enc_dense.w.as_mut_slice());
        out.push(&mut self.enc_dense.b);
        out.push(self.dec_dense.w.as_mut_slice());
        out.push(&mut self.dec_dense.b);
        out.extend(self.encoder.fields_mut());
        out.extend(self.recon_decoder.fields_mut());
        out.extend(self.pred_decoder.fields_mut());
        out.push(self.head.w.as_mut_slice());
        out.push(&mut self.head.b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn validate(&self) -> Result<()> {
        let reference = ModelParams::zeros(&self.config)?;
        for (mine, want) in self.blocks().iter().zip(reference.blocks()) {
            if mine.shape != want.shape || mine.data.len() != want.data.len() {
                return Err(Error::shape(format!(
                    "{} is {}x{}, config needs {}x{}",
                    mine.name, mine.shape.0, mine.shape.1, want.shape.0, want.shape.1
                )));
            }
        }
        Ok(())
    }

    /// Adds `scale * other` to every parameter.
    pub fn axpy(&mut self, scale: f64, other: &ModelParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }

    /// Copies the dense embedding layers from `other`.
    pub fn adopt_dense(&mut self, other: &ModelParams) -> Result<()> {
        if other.enc_dense.w.shape() != self.enc_dense.w.shape()
            || other.dec_dense.w.shape() != self.dec_dense.w.shape()
        {
            return Err(Error::shape(format!(
                "dense layers {:?}/{:?} do not fit {:?}/{:?}",
                other.enc_dense.w.shape(),
                other.dec_dense.w.shape(),
                self.enc_dense.w.shape(),
                self.dec_dense.w.shape()
            )));
        }
        self.enc_dense = other.enc_dense.clone();
        self.dec_dense = other.dec_dense.clone();
        Ok(())
    }
}

/// Exogenous decoder inputs, one vector per prediction step.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub actions: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
}

impl Conditioning {
    fn step_vectors(&self, cfg: &ModelConfig) -> Result<Vec<Vec<f64>>> {
        if self.actions.len() != cfg.t_out || self.states.len() != cfg.t_out {
            return Err(Error::shape(format!(
                "conditioning has {} actions and {} states, model predicts {} steps",
                self.actions.len(),
                self.states.len(),
                cfg.t_out
            )));
        }
        self.actions
            .iter()
            .zip(&self.states)
            .map(|(a, s)| {
                if a.len() != cfg.action_dim || s.len() != cfg.state_dim {
                    return Err(Error::shape(format!(
                        "action/state of length {}/{}, model expects {}/{}",
                        a.len(),
                        s.len(),
                        cfg.action_dim,
                        cfg.state_dim
                    )));
                }
                if a.iter().chain(s).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("non-finite conditioning value"));
                }
                Ok([a.as_slice(), s.as_slice()].concat())
            })
            .collect()
    }
}

/// Runtime switches for the forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Feed ground-truth embeddings, not the model's own features, to the
    /// decoders after their first step.
    pub teacher_forcing: bool,
}

fn check_frames(cfg: &ModelConfig, frames: &[Vec<f64>], what: &str) -> Result<()> {
    if let Some(f) = frames.iter().find(|f| f.len() != cfg.pixels()) {
        return Err(Error::shape(format!(
            "{what} frame has {} pixels, model expects {}x{}",
            f.len(),
            cfg.frame_rows,
            cfg.frame_cols
        )));
    }
    Ok(())
}

/// `tanh(W vec(frame) + b)` per frame.
pub fn embed_frames(p: &ModelParams, frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_frames(&p.config, frames, "input")?;
    frames
        .iter()
        .map(|x| {
            let mut e = p.enc_dense.apply(x)?;
            tanh_in_place(&mut e);
            Ok(e)
        })
        .collect()
}

fn encode_traced(p: &ModelParams, features: &[Vec<f64>]) -> Result<(LstmState, Vec<StepTape>)> {
    if features.len() != p.config.t_in {
        return Err(Error::shape(format!(
            "encoder takes {} feature vectors, got {}",
            p.config.t_in,
            features.len()
        )));
    }
    let (states, tapes) = lstm_forward(&p.encoder, features, &LstmState::zeros(p.config.hidden_dim))?;
    Ok((states.last().cloned().expect("t_in >= 1"), tapes))
}

/// Final encoder state after reading `t_in` feature vectors from zero.
pub fn encode(p: &ModelParams, features: &[Vec<f64>]) -> Result<LstmState> {
    Ok(encode_traced(p, features)?.0)
}

/// Where a decoder step input came from, for routing its gradient.
#[derive(Clone, Copy, Debug)]
enum FeatureSource {
    Zero,
    Input(usize),
    Target(usize),
    /// The decoder's own previous output.
    Feedback,
}

#[derive(Clone, Debug)]
struct DecoderTrace {
    sources: Vec<FeatureSource>,
    tapes: Vec<StepTape>,
    hs: Vec<Vec<f64>>,
    feats: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

/// Runs one decoder branch for `steps` steps from `ctx`. `first` is the
/// first step's feature input; `teacher`, when given, supplies the feature
/// input of steps `1..`; `extra` is appended to every step input.
#[allow(clippy::too_many_arguments)]
fn run_decoder(
    p: &ModelParams,
    lstm: &LstmParams,
    ctx: &LstmState,
    steps: usize,
    first: (Vec<f64>, FeatureSource),
    teacher: Option<&[(Vec<f64>, FeatureSource)]>,
    extra: Option<&[Vec<f64>]>,
) -> Result<DecoderTrace> {
    let mut trace = DecoderTrace {
        sources: Vec::with_capacity(steps),
        tapes: Vec::with_capacity(steps),
        hs: Vec::with_capacity(steps),
        feats: Vec::with_capacity(steps),
        outputs: Vec::with_capacity(steps),
    };
    let mut state = ctx.clone();
    let (mut feature, mut source) = first;
    for k in 0..steps {
        let input = match extra {
            Some(extra) => [feature.as_slice(), extra[k].as_slice()].concat(),
            None => feature.clone(),
        };
        let (next, tape) = lstm_step(lstm, &input, &state)?;
        let z = p.head.apply(&next.h)?;
        let mut y = p.dec_dense.apply(&z)?;
        sigmoid_in_place(&mut y);
        trace.sources.push(source);
        trace.tapes.push(tape);
        trace.hs.push(next.h.clone());
        trace.outputs.push(y);
        (feature, source) = match teacher {
            Some(t) if k + 1 < steps => t[k].clone(),
            _ => (z.clone(), FeatureSource::Feedback),
        };
        trace.feats.push(z);
        state = next;
    }
    Ok(trace)
}

fn check_ctx(p: &ModelParams, ctx: &LstmState) -> Result<()> {
    let h = p.config.hidden_dim;
    if ctx.c.len() != h || ctx.h.len() != h {
        return Err(Error::shape(format!(
            "context has lengths ({}, {}), hidden size is {h}",
            ctx.c.len(),
            ctx.h.len()
        )));
    }
    Ok(())
}

fn as_frames(cfg: &ModelConfig, outputs: Vec<Vec<f64>>) -> Vec<Tensor2> {
    outputs
        .into_iter()
        .map(|o| Tensor2::from_vec(cfg.frame_rows, cfg.frame_cols, o).expect("decoder output is finite and sized"))
        .collect()
}

/// `t_in` reconstructed frames, ordered like the reconstruction targets.
pub fn decode_reconstruction(p: &ModelParams, ctx: &LstmState) -> Result<Vec<Tensor2>> {
    check_ctx(p, ctx)?;
    let zero = (vec![0.0; p.config.feature_dim], FeatureSource::Zero);
    let trace = run_decoder(p, &p.recon_decoder, ctx, p.config.t_in, zero, None, None)?;
    Ok(as_frames(&p.config, trace.outputs))
}

fn conditioning_vectors(p: &ModelParams, cond: Option<&Conditioning>) -> Result<Option<Vec<Vec<f64>>>> {
    match (p.config.conditioned, cond) {
        (true, Some(c)) => Ok(Some(c.step_vectors(&p.config)?)),
        (false, None) => Ok(None),
        (true, None) => Err(Error::invalid("conditioned model needs actions and states")),
        (false, Some(_)) => Err(Error::invalid("unconditioned model does not take actions or states")),
    }
}

/// `t_out` future frames in forward time order. `last_feature` is the
/// embedding of the last input frame.
pub fn decode_prediction(
    p: &ModelParams,
    ctx: &LstmState,
    last_feature: &[f64],
    cond: Option<&Conditioning>,
) -> Result<Vec<Tensor2>> {
    check_ctx(p, ctx)?;
    if last_feature.len() != p.config.feature_dim {
        return Err(Error::shape(format!(
            "last feature has length {}, feature_dim is {}",
            last_feature.len(),
            p.config.feature_dim
        )));
    }
    let extra = conditioning_vectors(p, cond)?;
    let first = (last_feature.to_vec(), FeatureSource::Input(p.config.t_in - 1));
    let trace = run_decoder(p, &p.pred_decoder, ctx, p.config.t_out, first, None, extra.as_deref())?;
    Ok(as_frames(&p.config, trace.outputs))
}

/// Everything the reverse pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    embeddings: Vec<Vec<f64>>,
    target_embeddings: Vec<Vec<f64>>,
    encoder_tapes: Vec<StepTape>,
    recon: DecoderTrace,
    pred: DecoderTrace,
    /// Reconstruction target `k` is input frame `recon_order[k]`.
    recon_order: Vec<usize>,
    pub recon_mse: f64,
    pub pred_mse: f64,
}

impl ForwardCache {
    pub fn reconstruction(&self) -> &[Vec<f64>] {
        &self.recon.outputs
    }

    pub fn prediction(&self) -> &[Vec<f64>] {
        &self.pred.outputs
    }

    /// Index of the input frame each reconstruction output is scored against.
    pub fn recon_order(&self) -> &[usize] {
        &self.recon_order
    }
}

fn mse(outputs: &[Vec<f64>], targets: impl Iterator<Item = impl AsRef<[f64]>>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (y, t) in outputs.iter().zip(targets) {
        for (a, b) in y.iter().zip(t.as_ref()) {
            sum += (a - b) * (a - b);
        }
        n += y.len();
    }
    sum / n as f64
}

/// Scores one episode. The loss is the mean of the two branch MSEs, each
/// averaged over frames and pixels.
pub fn forward_loss(p: &ModelParams, ep: &PreparedEpisode, opts: ForwardOptions) -> Result<(f64, ForwardCache)> {
    let cfg = &p.config;
    if ep.inputs.len() != cfg.t_in || ep.targets.len() != cfg.t_out {
        return Err(Error::shape(format!(
            "episode has {}+{} frames, model is {}+{}",
            ep.inputs.len(),
            ep.targets.len(),
            cfg.t_in,
            cfg.t_out
        )));
    }
    check_frames(cfg, &ep.targets, "target")?;
    let cond = if cfg.conditioned {
        Some(Conditioning {
            actions: ep.actions.clone(),
            states: ep.states.clone(),
        })
    } else {
        None
    };
    let extra = conditioning_vectors(p, cond.as_ref())?;

    let embeddings = embed_frames(p, &ep.inputs)?;
    let (ctx, encoder_tapes) = encode_traced(p, &embeddings)?;
    let recon_order: Vec<usize> = if cfg.recon_reversed {
        (0..cfg.t_in).rev().collect()
    } else {
        (0..cfg.t_in).collect()
    };

    let (recon_teacher, target_embeddings, pred_teacher) = if opts.teacher_forcing {
        let rt: Vec<_> = recon_order
            .iter()
            .map(|&j| (embeddings[j].clone(), FeatureSource::Input(j)))
            .collect();
        let te = embed_frames(p, &ep.targets[..cfg.t_out - 1])?;
        let pt: Vec<_> = te
            .iter()
            .enumerate()
            .map(|(j, e)| (e.clone(), FeatureSource::Target(j)))
            .collect();
        (Some(rt), te, Some(pt))
    } else {
        (None, Vec::new(), None)
    };

    let zero = (vec![0.0; cfg.feature_dim], FeatureSource::Zero);
    let recon = run_decoder(
        p,
        &p.recon_decoder,
        &ctx,
        cfg.t_in,
        zero,
        recon_teacher.as_deref(),
        None,
    )?;
    let first = (embeddings[cfg.t_in - 1].clone(), FeatureSource::Input(cfg.t_in - 1));
    let pred = run_decoder(
        p,
        &p.pred_decoder,
        &ctx,
        cfg.t_out,
        first,
        pred_teacher.as_deref(),
        extra.as_deref(),
    )?;

    let recon_mse = mse(&recon.outputs, recon_order.iter().map(|&j| &ep.inputs[j]));
    let pred_mse = mse(&pred.outputs, ep.targets.iter());
    let loss = 0.5 * (recon_mse + pred_mse);
    Ok((
        loss,
        ForwardCache {
            inputs: ep.inputs.clone(),
            targets: ep.targets.clone(),
            embeddings,
            target_embeddings,
            encoder_tapes,
            recon,
            pred,
            recon_order,
            recon_mse,
            pred_mse,
        },
    ))
}

struct DecoderGrads {
    dh0: Vec<f64>,
    dc0: Vec<f64>,
    /// Gradient on each step's full input vector.
    dinputs: Vec<Vec<f64>>,
}

/// Reverse pass through one decoder branch scored against `targets` with
/// loss weight `scale` on the sum of squared errors.
#[allow(clippy::too_many_arguments)]
fn decoder_backward(
    p: &ModelParams,
    lstm: &LstmParams,
    lstm_grads: &mut LstmParams,
    head_grads: &mut Dense,
    dec_grads: Option<&mut Dense>,
    trace: &DecoderTrace,
    targets: &[&[f64]],
    scale: f64,
) -> Result<DecoderGrads> {
    let steps = trace.outputs.len();
    let hid = lstm.hidden_dim();
    let feat = p.config.feature_dim;
    let mut dec_grads = dec_grads;
    let mut dinputs = vec![Vec::new(); steps];
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    for k in (0..steps).rev() {
        let y = &trace.outputs[k];
        let dpre: Vec<f64> = y
            .iter()
            .zip(targets[k])
            .map(|(&y, &t)| scale * 2.0 * (y - t) * y * (1.0 - y))
            .collect();
        if let Some(g) = dec_grads.as_deref_mut() {
            g.w.add_outer(&dpre, &trace.feats[k])?;
            add_assign(&mut g.b, &dpre)?;
        }
        let mut dz = vec![0.0; feat];
        p.dec_dense.w.t_mul_vec_acc(&dpre, &mut dz)?;
        if k + 1 < steps && matches!(trace.sources[k + 1], FeatureSource::Feedback) {
            add_assign(&mut dz, &dinputs[k + 1][..feat])?;
        }
        head_grads.w.add_outer(&dz, &trace.hs[k])?;
        add_assign(&mut head_grads.b, &dz)?;
        let mut dh = dh_next;
        p.head.w.t_mul_vec_acc(&dz, &mut dh)?;
        let step = lstm_step_backward(lstm, &trace.tapes[k], &dh, &dc_next, lstm_grads)?;
        dinputs[k] = step.dx;
        dh_next = step.dh_prev;
        dc_next = step.dc_prev;
    }
    Ok(DecoderGrads {
        dh0: dh_next,
        dc0: dc_next,
        dinputs,
    })
}

/// Gradient of the [`forward_loss`] value with respect to every parameter.
/// With `freeze_dense`, the embedding layers get no gradient (their blocks
/// stay zero); all other gradients are unaffected.
pub fn backward(p: &ModelParams, cache: &ForwardCache, freeze_dense: bool) -> Result<ModelGrads> {
    let cfg = &p.config;
    let feat = cfg.feature_dim;
    let mut g = p.zeros_like();
    let npix = cfg.pixels() as f64;

    let recon_targets: Vec<&[f64]> = cache.recon_order.iter().map(|&j| cache.inputs[j].as_slice()).collect();
    let pred_targets: Vec<&[f64]> = cache.targets.iter().map(|t| t.as_slice()).collect();
    let recon_scale = 0.5 / (cfg.t_in as f64 * npix);
    let pred_scale = 0.5 / (cfg.t_out as f64 * npix);

    let mut dec_dense_grads = if freeze_dense { None } else { Some(g.dec_dense.clone()) };
    let r = decoder_backward(
        p,
        &p.recon_decoder,
        &mut g.recon_decoder,
        &mut g.head,
        dec_dense_grads.as_mut(),
        &cache.recon,
        &recon_targets,
        recon_scale,
    )?;
    let q = decoder_backward(
        p,
        &p.pred_decoder,
        &mut g.pred_decoder,
        &mut g.head,
        dec_dense_grads.as_mut(),
        &cache.pred,
        &pred_targets,
        pred_scale,
    )?;
    if let Some(d) = dec_dense_grads {
        g.dec_dense = d;
    }

    let mut de_inputs = vec![vec![0.0; feat]; cfg.t_in];
    let mut de_targets = vec![vec![0.0; feat]; cache.target_embeddings.len()];
    for (trace, grads) in [(&cache.recon, &r), (&cache.pred, &q)] {
        for (source, d) in trace.sources.iter().zip(&grads.dinputs) {
            match *source {
                FeatureSource::Input(j) => add_assign(&mut de_inputs[j], &d[..feat])?,
                FeatureSource::Target(j) => add_assign(&mut de_targets[j], &d[..feat])?,
                FeatureSource::Zero | FeatureSource::Feedback => {}
            }
        }
    }

    let mut dh = vec![vec![0.0; cfg.hidden_dim]; cfg.t_in];
    let mut dctx_h = r.dh0;
    add_assign(&mut dctx_h, &q.dh0)?;
    dh[cfg.t_in - 1] = dctx_h;
    let mut dctx_c = r.dc0;
    add_assign(&mut dctx_c, &q.dc0)?;
    let enc = lstm_backward(&p.encoder, &cache.encoder_tapes, &dh, &dctx_c)?;
    g.encoder = enc.grads;

    if !freeze_dense {
        for (j, dx) in enc.dx.iter().enumerate() {
            add_assign(&mut de_inputs[j], dx)?;
        }
        let frames = cache
            .inputs
            .iter()
            .zip(&cache.embeddings)
            .zip(&de_inputs)
            .chain(cache.targets.iter().zip(&cache.target_embeddings).zip(&de_targets));
        for ((x, e), de) in frames {
            let dpre: Vec<f64> = de.iter().zip(e).map(|(d, e)| d * (1.0 - e * e)).collect();
            g.enc_dense.w.add_outer(&dpre, x)?;
            add_assign(&mut g.enc_dense.b, &dpre)?;
        }
    }
    Ok(g)
}

/// Reconstruction and prediction for one episode, without gradients.
pub fn predict(p: &ModelParams, ep: &PreparedEpisode) -> Result<ForwardCache> {
    Ok(forward_loss(p, ep, ForwardOptions::default())?.1)
}
