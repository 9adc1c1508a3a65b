//! `FCM1` model checkpoints.
//!
//! ```text
//! "FCM1"
//! frame_rows frame_cols feature_dim hidden_dim t_in t_out action_dim state_dim   (u32 LE)
//! conditioned recon_reversed                                                     (u8, 0 or 1)
//! per tensor, in ModelParams::blocks order:
//!     rows cols (u32 LE), rows * cols f64 LE, row-major
//! ```
//!
//! Tensor order: `enc_dense.{W,b}`, `dec_dense.{W,b}`, then for `encoder`,
//! `recon_decoder` and `pred_decoder` the fifteen LSTM fields
//! `W_xi W_xf W_xc W_xo W_hi W_hf W_hc W_ho w_ci w_cf w_co b_i b_f b_c b_o`,
//! then `head.{W,b}`. Vectors are stored as `len x 1`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader, Writer};
use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FCM1";

impl ModelParams {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut w = Writer::new(CHECKPOINT_MAGIC);
        for v in [
            c.frame_rows,
            c.frame_cols,
            c.feature_dim,
            c.hidden_dim,
            c.t_in,
            c.t_out,
            c.action_dim,
            c.state_dim,
        ] {
            w.u32(v)?;
        }
        w.u8(c.conditioned as u8);
        w.u8(c.recon_reversed as u8);
        for block in self.blocks() {
            w.u32(block.shape.0)?;
            w.u32(block.shape.1)?;
            for v in block.data {
                w.f64(*v);
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
        let mut r = Reader::new(bytes, CHECKPOINT_MAGIC)?;
        let mut dims = [0usize; 8];
        for d in &mut dims {
            *d = r.u32()?;
        }
        let flag = |v: u8, name: &str| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::format(format!("{name} flag is {v}, expected 0 or 1"))),
        };
        let conditioned = flag(r.u8()?, "conditioned")?;
        let recon_reversed = flag(r.u8()?, "recon_reversed")?;
        let config = ModelConfig {
            frame_rows: dims[0],
            frame_cols: dims[1],
            feature_dim: dims[2],
            hidden_dim: dims[3],
            t_in: dims[4],
            t_out: dims[5],
            action_dim: dims[6],
            state_dim: dims[7],
            conditioned,
            recon_reversed,
        };
        config
            .validate()
            .map_err(|e| Error::format(format!("checkpoint header: {e}")))?;
        let mut params = ModelParams::zeros(&config)?;
        let meta: Vec<(String, (usize, usize))> = params.blocks().iter().map(|b| (b.name.clone(), b.shape)).collect();
        for ((name, shape), dst) in meta.into_iter().zip(params.blocks_mut()) {
            let stored = (r.u32()?, r.u32()?);
            if stored != shape {
                return Err(Error::format(format!(
                    "tensor {name} stored as {}x{}, header implies {}x{}",
                    stored.0, stored.1, shape.0, shape.1
                )));
            }
            for v in dst.iter_mut() {
                *v = r.f64()?;
            }
        }
        r.finish()?;
        if !params.is_finite() {
            return Err(Error::format("checkpoint holds non-finite parameters"));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        ModelParams::from_bytes(&crate::io::read_file(path)?)
    }
}
