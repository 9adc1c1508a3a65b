//! Per-axis PID law driving a point mass in the unit-square arena.

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

/// Object kinematics plus controller memory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidState {
    pub pos: Point,
    pub vel: Point,
    pub integral: Point,
    pub prev_error: Point,
}

impl PidState {
    /// At rest at `pos`; the previous error is primed so the first
    /// derivative term does not kick.
    pub fn at_rest(pos: Point, goal: Point) -> Self {
        PidState {
            pos,
            vel: [0.0, 0.0],
            integral: [0.0, 0.0],
            prev_error: [goal[0] - pos[0], goal[1] - pos[1]],
        }
    }
}

/// Arena side length; the integral term is clamped to `10 x` this.
pub const ARENA_SIZE: f64 = 1.0;
pub const INTEGRAL_LIMIT: f64 = 10.0 * ARENA_SIZE;

/// One control step: `u = Kp e + Ki \int e + Kd (e - e_prev) / dt` per axis,
/// then `v += u dt` (speed clamped to `max_speed`) and `p += v dt` (clamped
/// to the arena). Returns the acceleration command and the new state.
pub fn pid_step(gains: PidGains, state: &PidState, goal: Point, dt: f64, max_speed: f64) -> (Point, PidState) {
    debug_assert!(dt > 0.0);
    let mut next = *state;
    let mut u = [0.0; 2];
    for k in 0..2 {
        let e = goal[k] - state.pos[k];
        next.integral[k] = (state.integral[k] + e * dt).clamp(-INTEGRAL_LIMIT, INTEGRAL_LIMIT);
        let deriv = (e - state.prev_error[k]) / dt;
        u[k] = gains.kp * e + gains.ki * next.integral[k] + gains.kd * deriv;
        next.vel[k] = state.vel[k] + u[k] * dt;
        next.prev_error[k] = e;
    }
    let speed = next.vel[0].hypot(next.vel[1]);
    if speed > max_speed {
        let s = max_speed / speed;
        next.vel = [next.vel[0] * s, next.vel[1] * s];
    }
    for k in 0..2 {
        let p = state.pos[k] + next.vel[k] * dt;
        if !(0.0..=ARENA_SIZE).contains(&p) {
            next.vel[k] = 0.0;
        }
        next.pos[k] = p.clamp(0.0, ARENA_SIZE);
    }
    (u, next)
}
