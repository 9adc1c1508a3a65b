//! Synthetic dynamic scene: a PID-driven disk watched by a fixed or moving
//! camera, rendered to grayscale frames and cut into training episodes.

mod pid;
mod render;

pub use pid::{pid_step, PidGains, PidState, Point, ARENA_SIZE, INTEGRAL_LIMIT};
pub use render::{disk_coverage, render, BACKGROUND, FOREGROUND};

use log::warn;
use rayon::prelude::*;

use crate::dataset::{Dataset, Episode, EpisodeMeta, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    pub rows: usize,
    pub cols: usize,
    /// Disk radius as a fraction of the arena side.
    pub radius: f64,
    pub starts: Vec<Point>,
    pub goals: Vec<Point>,
    pub kp: (f64, f64),
    pub ki: (f64, f64),
    pub kd: (f64, f64),
    pub dt: f64,
    /// Controller steps between consecutive frames.
    pub steps_per_frame: usize,
    pub max_speed: f64,
    /// Trials stop after this many frames even if the object has not settled.
    pub max_frames: usize,
    /// Gaussian pixel noise, in intensity units.
    pub noise_sigma: f64,
    /// Camera translates by a commanded ego velocity, recorded as actions.
    pub moving_observer: bool,
    pub ego_max_speed: f64,
    /// The ego position stays within `[-ego_range, ego_range]` per axis.
    pub ego_range: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            rows: 64,
            cols: 64,
            radius: 0.1,
            starts: vec![[0.15, 0.2], [0.15, 0.5], [0.15, 0.8]],
            goals: vec![[0.85, 0.15], [0.85, 0.38], [0.85, 0.62], [0.85, 0.85]],
            kp: (1.5, 4.0),
            ki: (0.0, 0.3),
            kd: (1.0, 3.0),
            dt: 0.1,
            steps_per_frame: 2,
            max_speed: 0.6,
            max_frames: 20,
            noise_sigma: 0.0,
            moving_observer: false,
            ego_max_speed: 0.3,
            ego_range: 0.3,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("frame size {}x{}", self.rows, self.cols));
        }
        if !(self.radius > 0.0) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.steps_per_frame == 0 {
            return bad("steps_per_frame must be at least 1".into());
        }
        if !(self.max_speed > 0.0) {
            return bad(format!("max_speed must be positive, got {}", self.max_speed));
        }
        if self.starts.is_empty() || self.goals.is_empty() {
            return bad("at least one start and one goal are required".into());
        }
        let inside = |p: &Point| (0.0..=ARENA_SIZE).contains(&p[0]) && (0.0..=ARENA_SIZE).contains(&p[1]);
        if !self.starts.iter().chain(&self.goals).all(inside) {
            return bad("start and goal points must lie in the unit square".into());
        }
        for (name, (lo, hi)) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(lo <= hi) || lo < 0.0 {
                return bad(format!("{name} range [{lo}, {hi}] is invalid"));
            }
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.moving_observer && !(self.ego_max_speed >= 0.0 && self.ego_range > 0.0) {
            return bad("moving observer needs ego_max_speed >= 0 and ego_range > 0".into());
        }
        Ok(())
    }

    /// Radius actually rendered: never smaller than 0.6 pixel, so the disk
    /// always covers at least one pixel of area.
    pub fn effective_radius(&self) -> f64 {
        let pixel = (ARENA_SIZE / self.cols as f64).max(ARENA_SIZE / self.rows as f64);
        self.radius.max(0.6 * pixel)
    }

    /// Largest object displacement between frames, in pixels.
    pub fn max_pixel_step(&self) -> f64 {
        let arena = self.max_speed * self.dt * self.steps_per_frame as f64;
        arena * (self.rows.max(self.cols) as f64) / ARENA_SIZE
    }
}

/// Camera pose and velocity: `(x, y, vx, vy)`.
pub type EgoState = [f64; 4];

/// Everything simulated in one trial, one entry per frame.
#[derive(Clone, Debug)]
pub struct Trial {
    pub meta: EpisodeMeta,
    pub object: Vec<Point>,
    pub ego: Vec<EgoState>,
    /// `commands[k]` moves the camera from frame `k` to frame `k + 1`.
    pub commands: Vec<Point>,
    pub frames: Vec<crate::frame::Frame>,
}

/// Runs trial `id`: samples start, goal and gains from the trial's own RNG
/// stream, drives the object until it settles (or `max_frames`), renders.
pub fn simulate_trial(spec: &WorldSpec, id: u32) -> Trial {
    let mut rng = Rng::stream(spec.seed, id as u64);
    let start_idx = rng.index(spec.starts.len());
    let goal_idx = rng.index(spec.goals.len());
    let gains = PidGains {
        kp: rng.uniform(spec.kp.0, spec.kp.1),
        ki: rng.uniform(spec.ki.0, spec.ki.1),
        kd: rng.uniform(spec.kd.0, spec.kd.1),
    };
    let start = spec.starts[start_idx];
    let goal = spec.goals[goal_idx];

    let mut state = PidState::at_rest(start, goal);
    let mut object = vec![state.pos];
    let mut ego = vec![[0.0; 4]];
    let mut commands = Vec::new();
    let frame_dt = spec.dt * spec.steps_per_frame as f64;
    let mut command = [0.0, 0.0];
    while object.len() < spec.max_frames {
        for _ in 0..spec.steps_per_frame {
            state = pid_step(gains, &state, goal, spec.dt, spec.max_speed).1;
        }
        let cur = *ego.last().unwrap();
        if spec.moving_observer {
            if commands.is_empty() || rng.chance(0.3) {
                let speed = rng.uniform(0.0, spec.ego_max_speed);
                let angle = rng.uniform(0.0, std::f64::consts::TAU);
                command = [speed * angle.cos(), speed * angle.sin()];
            }
            for k in 0..2 {
                if (cur[k] + command[k] * frame_dt).abs() > spec.ego_range {
                    command[k] = -command[k];
                }
            }
        }
        commands.push(command);
        ego.push([
            cur[0] + command[0] * frame_dt,
            cur[1] + command[1] * frame_dt,
            command[0],
            command[1],
        ]);
        object.push(state.pos);
        let settled =
            (state.pos[0] - goal[0]).hypot(state.pos[1] - goal[1]) < 5e-3 && state.vel[0].hypot(state.vel[1]) < 5e-3;
        if settled {
            break;
        }
    }

    let noise = spec.noise_sigma > 0.0;
    let frames = object
        .iter()
        .zip(&ego)
        .map(|(p, e)| {
            let view = [p[0] - e[0], p[1] - e[1]];
            render(view, spec, if noise { Some(&mut rng) } else { None })
        })
        .collect();
    Trial {
        meta: EpisodeMeta {
            trial: id,
            window: 0,
            start: start_idx as u32,
            goal: goal_idx as u32,
            gains,
        },
        object,
        ego,
        commands,
        frames,
    }
}

impl Trial {
    /// Cuts the trial into non-overlapping `t_in + t_out` windows.
    pub fn episodes(&self, t_in: usize, t_out: usize) -> Vec<Episode> {
        let len = t_in + t_out;
        (0..self.frames.len() / len)
            .map(|w| {
                let s = w * len;
                // target k is reached by the command issued at frame s + t_in + k - 1
                let before = |k: usize| s + t_in + k - 1;
                Episode {
                    input_frames: self.frames[s..s + t_in].to_vec(),
                    target_frames: self.frames[s + t_in..s + len].to_vec(),
                    actions: (0..t_out).map(|k| self.commands[before(k)].to_vec()).collect(),
                    states: (0..t_out).map(|k| self.ego[before(k)].to_vec()).collect(),
                    meta: EpisodeMeta {
                        window: w as u32,
                        ..self.meta
                    },
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenStats {
    pub trials: usize,
    /// Trials too short to fill a single window.
    pub skipped: usize,
}

fn empty_dataset(spec: &WorldSpec, t_in: usize, t_out: usize) -> Dataset {
    Dataset {
        rows: spec.rows,
        cols: spec.cols,
        t_in,
        t_out,
        action_dim: ACTION_DIM,
        state_dim: STATE_DIM,
        episodes: Vec::new(),
    }
}

fn check_window(t_in: usize, t_out: usize) -> Result<()> {
    if t_in == 0 || t_out == 0 {
        return Err(Error::invalid(format!("t_in={t_in}, t_out={t_out}; both must be >= 1")));
    }
    Ok(())
}

fn run_trials(
    spec: &WorldSpec,
    ids: std::ops::Range<u32>,
    t_in: usize,
    t_out: usize,
    out: &mut Dataset,
    stats: &mut GenStats,
) {
    let batches: Vec<Vec<Episode>> = ids
        .into_par_iter()
        .map(|id| simulate_trial(spec, id).episodes(t_in, t_out))
        .collect();
    for eps in batches {
        stats.trials += 1;
        if eps.is_empty() {
            stats.skipped += 1;
        }
        out.episodes.extend(eps);
    }
}

/// Simulates trials `0..trials` and keeps every full window.
pub fn generate_dataset(spec: &WorldSpec, trials: usize, t_in: usize, t_out: usize) -> Result<(Dataset, GenStats)> {
    spec.validate()?;
    check_window(t_in, t_out)?;
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let mut data = empty_dataset(spec, t_in, t_out);
    let mut stats = GenStats::default();
    run_trials(spec, 0..trials as u32, t_in, t_out, &mut data, &mut stats);
    if stats.skipped > 0 {
        warn!(
            "{} of {} trials were shorter than one window",
            stats.skipped, stats.trials
        );
    }
    Ok((data, stats))
}

/// Simulates trials in order until `episodes` windows exist, then truncates.
pub fn generate_episodes(spec: &WorldSpec, episodes: usize, t_in: usize, t_out: usize) -> Result<(Dataset, GenStats)> {
    spec.validate()?;
    check_window(t_in, t_out)?;
    if episodes == 0 {
        return Err(Error::invalid("at least one episode is required"));
    }
    let mut data = empty_dataset(spec, t_in, t_out);
    let mut stats = GenStats::default();
    let mut next = 0u32;
    const BATCH: u32 = 64;
    while data.episodes.len() < episodes {
        if stats.trials >= 1000 && stats.skipped == stats.trials {
            return Err(Error::invalid(format!(
                "no trial lasts {} frames; raise max_frames or lower the speed",
                t_in + t_out
            )));
        }
        run_trials(spec, next..next + BATCH, t_in, t_out, &mut data, &mut stats);
        next += BATCH;
    }
    data.episodes.truncate(episodes);
    if stats.skipped > 0 {
        warn!(
            "{} of {} trials were shorter than one window",
            stats.skipped, stats.trials
        );
    }
    Ok((data, stats))
}
