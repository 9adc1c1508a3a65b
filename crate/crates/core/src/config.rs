//! Flat `key = value` pipeline configuration.
//!
//! One file configures generation, preprocessing, the model and both
//! training stages. Blank lines and `#` comments are ignored; unknown keys
//! are errors. Lists use `x,y;x,y` for points and `lo,hi` for ranges.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{InitConfig, ModelConfig};
use crate::preprocess::PreprocessConfig;
use crate::scene::{Point, WorldSpec};
use crate::train::OptimConfig;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "FRAMECAST_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub init: InitConfig,
    pub optim: OptimConfig,
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub world: WorldSpec,
    pub episodes: usize,
    pub preprocess: PreprocessConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: ModelConfig::default(),
            init: InitConfig::default(),
            optim: OptimConfig::default(),
            pretrain_epochs: 20,
            pretrain_learning_rate: 3e-3,
            world: WorldSpec::default(),
            episodes: 1000,
            preprocess: PreprocessConfig::default(),
        }
    }
}

/// Every accepted key, in dump order.
pub const KEYS: &[&str] = &[
    "seed",
    "rows",
    "cols",
    "t_in",
    "t_out",
    "episodes",
    "radius",
    "starts",
    "goals",
    "kp",
    "ki",
    "kd",
    "dt",
    "steps_per_frame",
    "max_speed",
    "max_frames",
    "noise_sigma",
    "moving_observer",
    "ego_max_speed",
    "ego_range",
    "gaussian_sigma",
    "invert",
    "scale_to_unit",
    "feature_dim",
    "hidden_dim",
    "conditioned",
    "recon_reversed",
    "init_scale",
    "forget_bias",
    "pretrain_epochs",
    "pretrain_learning_rate",
    "optimizer",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "momentum",
    "clip_norm",
    "epochs",
    "batch_size",
    "teacher_forcing",
    "freeze_dense",
    "workers",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64)> {
    match value.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [a, b] => Ok((parse(key, a)?, parse(key, b)?)),
        _ => Err(Error::Config(format!(
            "{key}: expected two comma-separated numbers, got {value:?}"
        ))),
    }
}

fn parse_points(key: &str, value: &str) -> Result<Vec<Point>> {
    value
        .split(';')
        .map(|p| parse_pair(key, p).map(|(x, y)| [x, y]))
        .collect()
}

fn show_points(points: &[Point]) -> String {
    points
        .iter()
        .map(|[x, y]| format!("{x},{y}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl PipelineConfig {
    /// Sets one key. The seed, resolution and window lengths are shared by
    /// every stage that uses them.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => {
                let s: u64 = parse(key, v)?;
                self.world.seed = s;
                self.optim.seed = s;
            }
            "rows" => {
                self.world.rows = parse(key, v)?;
                self.model.frame_rows = self.world.rows;
            }
            "cols" => {
                self.world.cols = parse(key, v)?;
                self.model.frame_cols = self.world.cols;
            }
            "t_in" => self.model.t_in = parse(key, v)?,
            "t_out" => self.model.t_out = parse(key, v)?,
            "episodes" => self.episodes = parse(key, v)?,
            "radius" => self.world.radius = parse(key, v)?,
            "starts" => self.world.starts = parse_points(key, v)?,
            "goals" => self.world.goals = parse_points(key, v)?,
            "kp" => self.world.kp = parse_pair(key, v)?,
            "ki" => self.world.ki = parse_pair(key, v)?,
            "kd" => self.world.kd = parse_pair(key, v)?,
            "dt" => self.world.dt = parse(key, v)?,
            "steps_per_frame" => self.world.steps_per_frame = parse(key, v)?,
            "max_speed" => self.world.max_speed = parse(key, v)?,
            "max_frames" => self.world.max_frames = parse(key, v)?,
            "noise_sigma" => self.world.noise_sigma = parse(key, v)?,
            "moving_observer" => self.world.moving_observer = parse_bool(key, v)?,
            "ego_max_speed" => self.world.ego_max_speed = parse(key, v)?,
            "ego_range" => self.world.ego_range = parse(key, v)?,
            "gaussian_sigma" => self.preprocess.gaussian_sigma = parse(key, v)?,
            "invert" => self.preprocess.invert = parse_bool(key, v)?,
            "scale_to_unit" => self.preprocess.scale_to_unit = parse_bool(key, v)?,
            "feature_dim" => self.model.feature_dim = parse(key, v)?,
            "hidden_dim" => self.model.hidden_dim = parse(key, v)?,
            "conditioned" => self.model.conditioned = parse_bool(key, v)?,
            "recon_reversed" => self.model.recon_reversed = parse_bool(key, v)?,
            "init_scale" => self.init.scale = parse(key, v)?,
            "forget_bias" => self.init.forget_bias = parse(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, v)?,
            "pretrain_learning_rate" => self.pretrain_learning_rate = parse(key, v)?,
            "optimizer" => self.optim.algorithm = v.parse()?,
            "learning_rate" => self.optim.learning_rate = parse(key, v)?,
            "beta1" => self.optim.beta1 = parse(key, v)?,
            "beta2" => self.optim.beta2 = parse(key, v)?,
            "epsilon" => self.optim.epsilon = parse(key, v)?,
            "momentum" => self.optim.momentum = parse(key, v)?,
            "clip_norm" => self.optim.clip_norm = parse(key, v)?,
            "epochs" => self.optim.epochs = parse(key, v)?,
            "batch_size" => self.optim.batch_size = parse(key, v)?,
            "teacher_forcing" => self.optim.teacher_forcing = parse_bool(key, v)?,
            "freeze_dense" => self.optim.freeze_dense = parse_bool(key, v)?,
            "workers" => self.optim.workers = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// The current value of `key` in the form `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let w = &self.world;
        let m = &self.model;
        let o = &self.optim;
        let pair = |(a, b): (f64, f64)| format!("{a},{b}");
        Ok(match key {
            "seed" => o.seed.to_string(),
            "rows" => w.rows.to_string(),
            "cols" => w.cols.to_string(),
            "t_in" => m.t_in.to_string(),
            "t_out" => m.t_out.to_string(),
            "episodes" => self.episodes.to_string(),
            "radius" => w.radius.to_string(),
            "starts" => show_points(&w.starts),
            "goals" => show_points(&w.goals),
            "kp" => pair(w.kp),
            "ki" => pair(w.ki),
            "kd" => pair(w.kd),
            "dt" => w.dt.to_string(),
            "steps_per_frame" => w.steps_per_frame.to_string(),
            "max_speed" => w.max_speed.to_string(),
            "max_frames" => w.max_frames.to_string(),
            "noise_sigma" => w.noise_sigma.to_string(),
            "moving_observer" => w.moving_observer.to_string(),
            "ego_max_speed" => w.ego_max_speed.to_string(),
            "ego_range" => w.ego_range.to_string(),
            "gaussian_sigma" => self.preprocess.gaussian_sigma.to_string(),
            "invert" => self.preprocess.invert.to_string(),
            "scale_to_unit" => self.preprocess.scale_to_unit.to_string(),
            "feature_dim" => m.feature_dim.to_string(),
            "hidden_dim" => m.hidden_dim.to_string(),
            "conditioned" => m.conditioned.to_string(),
            "recon_reversed" => m.recon_reversed.to_string(),
            "init_scale" => self.init.scale.to_string(),
            "forget_bias" => self.init.forget_bias.to_string(),
            "pretrain_epochs" => self.pretrain_epochs.to_string(),
            "pretrain_learning_rate" => self.pretrain_learning_rate.to_string(),
            "optimizer" => o.algorithm.to_string(),
            "learning_rate" => o.learning_rate.to_string(),
            "beta1" => o.beta1.to_string(),
            "beta2" => o.beta2.to_string(),
            "epsilon" => o.epsilon.to_string(),
            "momentum" => o.momentum.to_string(),
            "clip_norm" => o.clip_norm.to_string(),
            "epochs" => o.epochs.to_string(),
            "batch_size" => o.batch_size.to_string(),
            "teacher_forcing" => o.teacher_forcing.to_string(),
            "freeze_dense" => o.freeze_dense.to_string(),
            "workers" => o.workers.to_string(),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        })
    }

    /// Parses `key=value` items of the form accepted on the command line.
    pub fn set_assignment(&mut self, item: &str) -> Result<()> {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {item:?}")))?;
        self.set(k.trim(), v)
    }

    /// Applies a config file's text over the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_assignment(line).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    n + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = crate::io::read_file(path)?;
        let text =
            String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8 text", path.display())))?;
        Self::from_text(&text)
    }

    /// Applies `FRAMECAST_SEED` if it is set to a non-empty value.
    pub fn apply_env(&mut self) -> Result<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) if !v.trim().is_empty() => self
                .set("seed", &v)
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            _ => Ok(()),
        }
    }

    /// The fully resolved configuration in loadable form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("listed key"));
        }
        s
    }

    pub fn pretrain_optim(&self) -> OptimConfig {
        OptimConfig {
            epochs: self.pretrain_epochs,
            learning_rate: self.pretrain_learning_rate,
            ..self.optim.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.world.validate()?;
        self.optim.validate()?;
        self.pretrain_optim().validate()?;
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if !(self.preprocess.gaussian_sigma >= 0.0) {
            return Err(Error::Config("gaussian_sigma must be non-negative".into()));
        }
        if !(self.init.scale > 0.0 && self.init.scale.is_finite()) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}
