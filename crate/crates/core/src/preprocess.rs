//! Frame preprocessing: Gaussian smoothing, inversion, scaling.

use crate::dataset::{Dataset, Episode};
use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    /// Standard deviation in pixels; 0 disables the blur.
    pub gaussian_sigma: f64,
    /// `I <- 255 - I`.
    pub invert: bool,
    /// Divide by 255.
    pub scale_to_unit: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            gaussian_sigma: 1.0,
            invert: true,
            scale_to_unit: true,
        }
    }
}

/// Normalized Gaussian kernel truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(p: i64, n: usize) -> usize {
    let n = n as i64;
    let m = p.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Separable blur of a row-major `rows x cols` image with reflect padding.
pub fn gaussian_blur(values: &[f64], rows: usize, cols: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("gaussian sigma must be >= 0, got {sigma}")));
    }
    if values.len() != rows * cols {
        return Err(Error::shape(format!(
            "{} values for a {rows}x{cols} image",
            values.len()
        )));
    }
    if sigma == 0.0 {
        return Ok(values.to_vec());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; values.len()];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[r * cols + reflect(c as i64 + k as i64 - radius, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(r as i64 + k as i64 - radius, rows) * cols + c])
                .sum();
        }
    }
    Ok(out)
}

/// Blur, then invert, then scale; returns the flattened real image.
pub fn preprocess(frame: &Frame, cfg: &PreprocessConfig) -> Result<Vec<f64>> {
    let raw: Vec<f64> = frame.pixels().iter().map(|&p| p as f64).collect();
    let mut v = gaussian_blur(&raw, frame.rows(), frame.cols(), cfg.gaussian_sigma)?;
    if cfg.invert {
        v.iter_mut().for_each(|x| *x = 255.0 - *x);
    }
    if cfg.scale_to_unit {
        v.iter_mut().for_each(|x| *x /= 255.0);
    }
    Ok(v)
}

/// An episode in model space: flattened preprocessed frames plus
/// conditioning vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedEpisode {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
}

pub fn prepare_episode(ep: &Episode, cfg: &PreprocessConfig) -> Result<PreparedEpisode> {
    let run = |frames: &[Frame]| frames.iter().map(|f| preprocess(f, cfg)).collect::<Result<Vec<_>>>();
    Ok(PreparedEpisode {
        inputs: run(&ep.input_frames)?,
        targets: run(&ep.target_frames)?,
        actions: ep.actions.clone(),
        states: ep.states.clone(),
    })
}

pub fn prepare_dataset(data: &Dataset, cfg: &PreprocessConfig) -> Result<Vec<PreparedEpisode>> {
    data.episodes.iter().map(|ep| prepare_episode(ep, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rand_uniform, Rng};

    fn raw(cfg_invert: bool) -> PreprocessConfig {
        PreprocessConfig {
            gaussian_sigma: 0.0,
            invert: cfg_invert,
            scale_to_unit: true,
        }
    }

    fn noise_frame(seed: u64, rows: usize, cols: usize) -> Frame {
        let v = rand_uniform(&mut Rng::new(seed), rows, cols, 0.0, 256.0).unwrap();
        Frame::new(rows, cols, v.as_slice().iter().map(|&x| x as u8).collect()).unwrap()
    }

    #[test]
    fn white_frame_inverts_to_zero() {
        let f = Frame::filled(4, 5, 255);
        assert!(preprocess(&f, &raw(true)).unwrap().iter().all(|&v| v == 0.0));
        assert!(preprocess(&f, &raw(false)).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn inversion_complements_in_unit_space() {
        let f = noise_frame(1, 6, 7);
        let on = preprocess(&f, &raw(true)).unwrap();
        let off = preprocess(&f, &raw(false)).unwrap();
        for (a, b) in on.iter().zip(&off) {
            assert!((a + b - 1.0).abs() < 1e-15);
        }
        assert_eq!(f.inverted().inverted(), f);
    }

    #[test]
    fn kernel_is_normalized_and_truncated() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kernel(1.2).len(), 2 * 4 + 1);
    }

    #[test]
    fn blur_preserves_mean() {
        for (seed, rows, cols, sigma) in [(2, 16, 16, 1.0), (3, 9, 13, 1.0), (4, 5, 4, 2.5)] {
            let f = noise_frame(seed, rows, cols);
            let v: Vec<f64> = f.pixels().iter().map(|&p| p as f64).collect();
            let b = gaussian_blur(&v, rows, cols, sigma).unwrap();
            let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
            assert!((mean(&v) - mean(&b)).abs() < 1e-9, "{} vs {}", mean(&v), mean(&b));
        }
    }

    #[test]
    fn blur_keeps_constant_images() {
        let v = vec![0.3; 20];
        let b = gaussian_blur(&v, 4, 5, 1.7).unwrap();
        assert!(b.iter().all(|x| (x - 0.3).abs() < 1e-15));
    }

    #[test]
    fn negative_sigma_rejected() {
        let cfg = PreprocessConfig {
            gaussian_sigma: -1.0,
            ..PreprocessConfig::default()
        };
        assert!(preprocess(&Frame::filled(2, 2, 0), &cfg).is_err());
    }

    #[test]
    fn preprocessing_is_pure() {
        let f = noise_frame(9, 8, 8);
        let cfg = PreprocessConfig::default();
        assert_eq!(preprocess(&f, &cfg).unwrap(), preprocess(&f, &cfg).unwrap());
        assert!(preprocess(&f, &cfg).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
