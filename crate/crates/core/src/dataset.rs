//! Episodes, datasets and the `FCD1` container.
//!
//! Layout (all integers little-endian `u32`, reals little-endian `f64`):
//!
//! ```text
//! "FCD1"
//! rows cols t_in t_out action_dim state_dim episode_count
//! per episode:
//!     trial window start goal          (u32 x 4)
//!     kp ki kd                         (f64 x 3)
//!     (t_in + t_out) * rows * cols     raw u8 pixels, inputs then targets
//!     t_out * action_dim               f64 actions
//!     t_out * state_dim                f64 states
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::io::{write_atomic, Reader, Writer};
use crate::scene::PidGains;

pub const DATASET_MAGIC: &[u8; 4] = b"FCD1";
/// Commanded ego velocity `(vx, vy)`.
pub const ACTION_DIM: usize = 2;
/// Ego pose and velocity `(x, y, vx, vy)`.
pub const STATE_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeMeta {
    pub trial: u32,
    /// Index of the window within its trial.
    pub window: u32,
    pub start: u32,
    pub goal: u32,
    pub gains: PidGains,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub input_frames: Vec<Frame>,
    pub target_frames: Vec<Frame>,
    pub actions: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub meta: EpisodeMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub action_dim: usize,
    pub state_dim: usize,
    pub episodes: Vec<Episode>,
}

/// Deterministic split: the last `floor(n / 10)` episodes are held out.
pub fn validation_split(n: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let val = n / 10;
    (0..n - val, n - val..n)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Copy holding only the episodes in `range`.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            episodes: self.episodes[range].to_vec(),
            ..self.header_only()
        }
    }

    pub fn header_only(&self) -> Dataset {
        Dataset {
            rows: self.rows,
            cols: self.cols,
            t_in: self.t_in,
            t_out: self.t_out,
            action_dim: self.action_dim,
            state_dim: self.state_dim,
            episodes: Vec::new(),
        }
    }

    pub fn train_split(&self) -> Dataset {
        self.subset(validation_split(self.len()).0)
    }

    pub fn validation(&self) -> Dataset {
        self.subset(validation_split(self.len()).1)
    }

    /// Checks every episode against the header.
    pub fn validate(&self) -> Result<()> {
        for (k, ep) in self.episodes.iter().enumerate() {
            if ep.input_frames.len() != self.t_in || ep.target_frames.len() != self.t_out {
                return Err(Error::shape(format!(
                    "episode {k} has {}+{} frames, dataset is {}+{}",
                    ep.input_frames.len(),
                    ep.target_frames.len(),
                    self.t_in,
                    self.t_out
                )));
            }
            if let Some(f) = ep
                .input_frames
                .iter()
                .chain(&ep.target_frames)
                .find(|f| (f.rows(), f.cols()) != (self.rows, self.cols))
            {
                return Err(Error::shape(format!(
                    "episode {k} holds a {}x{} frame, dataset is {}x{}",
                    f.rows(),
                    f.cols(),
                    self.rows,
                    self.cols
                )));
            }
            if ep.actions.len() != self.t_out
                || ep.states.len() != self.t_out
                || ep.actions.iter().any(|a| a.len() != self.action_dim)
                || ep.states.iter().any(|s| s.len() != self.state_dim)
            {
                return Err(Error::shape(format!("episode {k} has malformed actions/states")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut w = Writer::new(DATASET_MAGIC);
        for v in [
            self.rows,
            self.cols,
            self.t_in,
            self.t_out,
            self.action_dim,
            self.state_dim,
            self.len(),
        ] {
            w.u32(v)?;
        }
        for ep in &self.episodes {
            let m = &ep.meta;
            for v in [m.trial, m.window, m.start, m.goal] {
                w.u32(v as usize)?;
            }
            for v in [m.gains.kp, m.gains.ki, m.gains.kd] {
                w.f64(v);
            }
            for f in ep.input_frames.iter().chain(&ep.target_frames) {
                w.bytes(f.pixels());
            }
            for v in ep.actions.iter().chain(&ep.states).flatten() {
                w.f64(*v);
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
        let mut r = Reader::new(bytes, DATASET_MAGIC)?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        let t_in = r.u32()?;
        let t_out = r.u32()?;
        let action_dim = r.u32()?;
        let state_dim = r.u32()?;
        let count = r.u32()?;
        if rows == 0 || cols == 0 || t_in == 0 || t_out == 0 {
            return Err(Error::format(format!(
                "dataset header has zero dimension: {rows}x{cols}, t_in {t_in}, t_out {t_out}"
            )));
        }
        let frame_len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format("frame size overflows"))?;
        let mut episodes = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let trial = r.u32()? as u32;
            let window = r.u32()? as u32;
            let start = r.u32()? as u32;
            let goal = r.u32()? as u32;
            let gains = PidGains {
                kp: r.f64()?,
                ki: r.f64()?,
                kd: r.f64()?,
            };
            let mut frames = Vec::with_capacity(t_in + t_out);
            for _ in 0..t_in + t_out {
                frames.push(Frame::new(rows, cols, r.bytes(frame_len)?.to_vec())?);
            }
            let target_frames = frames.split_off(t_in);
            let mut vecs = |dim: usize| -> Result<Vec<Vec<f64>>> {
                (0..t_out).map(|_| (0..dim).map(|_| r.f64()).collect()).collect()
            };
            let actions = vecs(action_dim)?;
            let states = vecs(state_dim)?;
            episodes.push(Episode {
                input_frames: frames,
                target_frames,
                actions,
                states,
                meta: EpisodeMeta {
                    trial,
                    window,
                    start,
                    goal,
                    gains,
                },
            });
        }
        r.finish()?;
        Ok(Dataset {
            rows,
            cols,
            t_in,
            t_out,
            action_dim,
            state_dim,
            episodes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        Dataset::from_bytes(&crate::io::read_file(path)?)
    }
}
