//! Adam and SGD-with-momentum over block-structured parameters, plus
//! global-norm clipping.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Adam,
    Sgd,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Algorithm::Adam),
            "sgd" => Ok(Algorithm::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?} (adam | sgd)"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Adam => "adam",
            Algorithm::Sgd => "sgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub teacher_forcing: bool,
    /// Keep the pretrained embedding layers fixed.
    pub freeze_dense: bool,
    /// Threads for per-episode gradient fan-out; results do not depend on it.
    pub workers: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            algorithm: Algorithm::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.9,
            clip_norm: 5.0,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            teacher_forcing: false,
            freeze_dense: true,
            workers: 1,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be > 0, got {}", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.batch_size == 0 || self.workers == 0 {
            return bad("batch_size and workers must be at least 1".into());
        }
        Ok(())
    }
}

/// Scales all blocks together so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(blocks: Vec<&mut [f64]>, max_norm: f64) -> f64 {
    let norm = blocks
        .iter()
        .map(|b| b.iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for b in blocks {
            b.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Per-parameter optimizer state. Block `k` of `params` and `grads` must
/// keep the same length for the optimizer's lifetime.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: &OptimConfig, block_lens: &[usize]) -> Self {
        let zeros = || block_lens.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Optimizer {
            cfg: cfg.clone(),
            first: zeros(),
            second: match cfg.algorithm {
                Algorithm::Adam => zeros(),
                Algorithm::Sgd => Vec::new(),
            },
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every block whose `trainable` flag is set.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], trainable: &[bool]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() || trainable.len() != params.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} blocks, got {} params, {} grads, {} flags",
                self.first.len(),
                params.len(),
                grads.len(),
                trainable.len()
            )));
        }
        self.steps += 1;
        let lr = self.cfg.learning_rate;
        let t = self.steps as i32;
        let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if !trainable[k] {
                continue;
            }
            if p.len() != g.len() || p.len() != self.first[k].len() {
                return Err(Error::shape(format!("block {k} changed length")));
            }
            match self.cfg.algorithm {
                Algorithm::Adam => {
                    let (m, v) = (&mut self.first[k], &mut self.second[k]);
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                Algorithm::Sgd => {
                    let vel = &mut self.first[k];
                    for i in 0..p.len() {
                        vel[i] = self.cfg.momentum * vel[i] + g[i];
                        p[i] -= lr * vel[i];
                    }
                }
            }
        }
        Ok(())
    }
}
