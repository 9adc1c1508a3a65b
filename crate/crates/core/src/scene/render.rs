use crate::frame::Frame;
use crate::numerics::Rng;

use super::{Point, WorldSpec};

pub const BACKGROUND: u8 = 220;
pub const FOREGROUND: u8 = 40;

const SUBSAMPLES: usize = 8;

/// Fraction of the pixel `[x0, x0 + w) x [y0, y0 + h)` inside the disk,
/// estimated on an 8x8 subgrid for pixels straddling the edge.
pub fn disk_coverage(center: Point, radius: f64, x0: f64, y0: f64, w: f64, h: f64) -> f64 {
    let (cx, cy) = (x0 + 0.5 * w, y0 + 0.5 * h);
    let d = (cx - center[0]).hypot(cy - center[1]);
    let half_diag = 0.5 * w.hypot(h);
    if d <= radius - half_diag {
        return 1.0;
    }
    if d >= radius + half_diag {
        return 0.0;
    }
    let r2 = radius * radius;
    let mut inside = 0;
    for a in 0..SUBSAMPLES {
        let y = y0 + (a as f64 + 0.5) * h / SUBSAMPLES as f64 - center[1];
        for b in 0..SUBSAMPLES {
            let x = x0 + (b as f64 + 0.5) * w / SUBSAMPLES as f64 - center[0];
            if x * x + y * y <= r2 {
                inside += 1;
            }
        }
    }
    inside as f64 / (SUBSAMPLES * SUBSAMPLES) as f64
}

/// Dark anti-aliased disk at `pos` over a light background. Row `i` spans
/// `y in [i/rows, (i+1)/rows)`, column `j` spans `x in [j/cols, (j+1)/cols)`.
/// Positions outside the arena are allowed; the disk is simply clipped.
/// With `noise`, adds `N(0, noise_sigma)` before rounding.
pub fn render(pos: Point, spec: &WorldSpec, mut noise: Option<&mut Rng>) -> Frame {
    let (rows, cols) = (spec.rows, spec.cols);
    let (pw, ph) = (1.0 / cols as f64, 1.0 / rows as f64);
    let radius = spec.effective_radius();
    let (bg, fg) = (BACKGROUND as f64, FOREGROUND as f64);
    let mut pixels = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let cov = disk_coverage(pos, radius, j as f64 * pw, i as f64 * ph, pw, ph);
            let mut v = bg + (fg - bg) * cov;
            if let Some(rng) = noise.as_deref_mut() {
                v += rng.normal(0.0, spec.noise_sigma);
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame::new(rows, cols, pixels).expect("render dimensions are validated")
}
