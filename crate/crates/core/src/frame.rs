//! 8-bit grayscale frames and binary PGM (P5) export.

use crate::error::{Error, Result};

/// `rows x cols` grayscale image, row-major, intensities `0..=255`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("empty frame {rows}x{cols}")));
        }
        if pixels.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} pixels cannot fill a {rows}x{cols} frame",
                pixels.len()
            )));
        }
        Ok(Frame { rows, cols, pixels })
    }

    pub fn filled(rows: usize, cols: usize, value: u8) -> Self {
        Frame {
            rows,
            cols,
            pixels: vec![value; rows * cols],
        }
    }

    /// Quantizes values in `[0, 1]` with `round(255 v)`, clamping outliers.
    pub fn from_unit(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        let pixels = values
            .iter()
            .map(|v| (255.0 * v).round().clamp(0.0, 255.0) as u8)
            .collect();
        Frame::new(rows, cols, pixels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.pixels[r * self.cols + c]
    }

    /// `I <- 255 - I` on every pixel.
    pub fn inverted(&self) -> Frame {
        Frame {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels.iter().map(|p| 255 - p).collect(),
        }
    }

    /// Places frames left to right, separated by `gap` columns of `fill`.
    pub fn hstack(frames: &[Frame], gap: usize, fill: u8) -> Result<Frame> {
        let first = frames.first().ok_or_else(|| Error::invalid("nothing to stack"))?;
        let rows = first.rows;
        if frames.iter().any(|f| f.rows != rows) {
            return Err(Error::shape("frames of different heights"));
        }
        let cols = frames.iter().map(|f| f.cols).sum::<usize>() + gap * (frames.len() - 1);
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for (k, f) in frames.iter().enumerate() {
                if k > 0 {
                    pixels.extend(std::iter::repeat_n(fill, gap));
                }
                pixels.extend_from_slice(&f.pixels[r * f.cols..(r + 1) * f.cols]);
            }
        }
        Frame::new(rows, cols, pixels)
    }

    /// Places frames top to bottom, separated by `gap` rows of `fill`.
    pub fn vstack(frames: &[Frame], gap: usize, fill: u8) -> Result<Frame> {
        let first = frames.first().ok_or_else(|| Error::invalid("nothing to stack"))?;
        let cols = first.cols;
        if frames.iter().any(|f| f.cols != cols) {
            return Err(Error::shape("frames of different widths"));
        }
        let mut pixels = Vec::new();
        for (k, f) in frames.iter().enumerate() {
            if k > 0 {
                pixels.extend(std::iter::repeat_n(fill, gap * cols));
            }
            pixels.extend_from_slice(&f.pixels);
        }
        let rows = pixels.len() / cols;
        Frame::new(rows, cols, pixels)
    }

    /// Binary PGM: `P5\n<cols> <rows>\n255\n` followed by raw bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses a binary PGM with `maxval` 255. Header comments are allowed.
    pub fn from_pgm(bytes: &[u8]) -> Result<Frame> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format("truncated PGM header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::format("PGM header is not ASCII"))?);
        }
        if fields[0] != "P5" {
            return Err(Error::format(format!("PGM magic {:?}, expected P5", fields[0])));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(format!("bad PGM header field {s:?}")))
        };
        let (cols, rows, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(Error::format(format!("PGM maxval {maxval}, only 255 is supported")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes.get(pos..).unwrap_or(&[]);
        if raster.len() != rows * cols {
            return Err(Error::format(format!(
                "PGM raster has {} bytes, header says {cols}x{rows}",
                raster.len()
            )));
        }
        Frame::new(rows, cols, raster.to_vec())
    }
}
