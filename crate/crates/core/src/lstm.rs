//! Single peephole LSTM layer: forward step, unroll, and backpropagation
//! through time.
//!
//! ```text
//! i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + w_ci . c_{t-1} + b_i)
//! f_t = sigmoid(W_xf x_t + W_hf h_{t-1} + w_cf . c_{t-1} + b_f)
//! c_t = f_t . c_{t-1} + i_t . tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! o_t = sigmoid(W_xo x_t + W_ho h_{t-1} + w_co . c_t + b_o)
//! h_t = o_t . tanh(c_t)
//! ```
//!
//! `.` is the elementwise product: the peephole weights are diagonal and are
//! stored as vectors. The output gate looks at the updated cell `c_t`.

use crate::error::{Error, Result};
use crate::numerics::{rand_uniform, sigmoid_scalar, Rng, Tensor2};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_xi: Tensor2,
    pub w_xf: Tensor2,
    pub w_xc: Tensor2,
    pub w_xo: Tensor2,
    pub w_hi: Tensor2,
    pub w_hf: Tensor2,
    pub w_hc: Tensor2,
    pub w_ho: Tensor2,
    pub w_ci: Vec<f64>,
    pub w_cf: Vec<f64>,
    pub w_co: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type LstmGrads = LstmParams;

pub const LSTM_FIELD_NAMES: [&str; 15] = [
    "W_xi", "W_xf", "W_xc", "W_xo", "W_hi", "W_hf", "W_hc", "W_ho", "w_ci", "w_cf", "w_co", "b_i", "b_f", "b_c", "b_o",
];

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wx = || Tensor2::zeros(hidden, input);
        let wh = || Tensor2::zeros(hidden, hidden);
        let v = || vec![0.0; hidden];
        LstmParams {
            w_xi: wx(),
            w_xf: wx(),
            w_xc: wx(),
            w_xo: wx(),
            w_hi: wh(),
            w_hf: wh(),
            w_hc: wh(),
            w_ho: wh(),
            w_ci: v(),
            w_cf: v(),
            w_co: v(),
            b_i: v(),
            b_f: v(),
            b_c: v(),
            b_o: v(),
        }
    }

    /// Weights (peepholes included) uniform on `[-scale, scale)`, biases zero
    /// except the forget bias.
    pub fn init(rng: &mut Rng, input: usize, hidden: usize, scale: f64, forget_bias: f64) -> Result<Self> {
        let mut p = LstmParams::zeros(input, hidden);
        for t in [&mut p.w_xi, &mut p.w_xf, &mut p.w_xc, &mut p.w_xo] {
            *t = rand_uniform(rng, hidden, input, -scale, scale)?;
        }
        for t in [&mut p.w_hi, &mut p.w_hf, &mut p.w_hc, &mut p.w_ho] {
            *t = rand_uniform(rng, hidden, hidden, -scale, scale)?;
        }
        for v in [&mut p.w_ci, &mut p.w_cf, &mut p.w_co] {
            *v = rand_uniform(rng, 1, hidden, -scale, scale)?.into_vec();
        }
        p.b_f = vec![forget_bias; hidden];
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hi.rows()
    }

    /// All fields in [`LSTM_FIELD_NAMES`] order.
    pub fn fields(&self) -> [&[f64]; 15] {
        [
            self.w_xi.as_slice(),
            self.w_xf.as_slice(),
            self.w_xc.as_slice(),
            self.w_xo.as_slice(),
            self.w_hi.as_slice(),
            self.w_hf.as_slice(),
            self.w_hc.as_slice(),
            self.w_ho.as_slice(),
            &self.w_ci,
            &self.w_cf,
            &self.w_co,
            &self.b_i,
            &self.b_f,
            &self.b_c,
            &self.b_o,
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut [f64]; 15] {
        [
            self.w_xi.as_mut_slice(),
            self.w_xf.as_mut_slice(),
            self.w_xc.as_mut_slice(),
            self.w_xo.as_mut_slice(),
            self.w_hi.as_mut_slice(),
            self.w_hf.as_mut_slice(),
            self.w_hc.as_mut_slice(),
            self.w_ho.as_mut_slice(),
            &mut self.w_ci,
            &mut self.w_cf,
            &mut self.w_co,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    /// Shape of each field as `(rows, cols)`; vectors are `(hidden, 1)`.
    pub fn field_shapes(&self) -> [(usize, usize); 15] {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        let mut shapes = [(h, 1); 15];
        for s in &mut shapes[..4] {
            *s = (h, i);
        }
        for s in &mut shapes[4..8] {
            *s = (h, h);
        }
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        let expected = self.field_shapes();
        let actual = [
            self.w_xi.shape(),
            self.w_xf.shape(),
            self.w_xc.shape(),
            self.w_xo.shape(),
            self.w_hi.shape(),
            self.w_hf.shape(),
            self.w_hc.shape(),
            self.w_ho.shape(),
            (self.w_ci.len(), 1),
            (self.w_cf.len(), 1),
            (self.w_co.len(), 1),
            (self.b_i.len(), 1),
            (self.b_f.len(), 1),
            (self.b_c.len(), 1),
            (self.b_o.len(), 1),
        ];
        for ((name, e), a) in LSTM_FIELD_NAMES.iter().zip(expected).zip(actual) {
            if e != a {
                return Err(Error::shape(format!(
                    "LSTM field {name} is {}x{}, expected {}x{} (input {i}, hidden {h})",
                    a.0, a.1, e.0, e.1
                )));
            }
        }
        if self.fields().iter().any(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("non-finite LSTM parameter"));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.fields().iter().map(|f| f.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

/// Everything one step needs to be differentiated.
#[derive(Clone, Debug)]
pub struct StepTape {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    /// Candidate `tanh(W_xc x + W_hc h_prev + b_c)`.
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

fn gate_pre(wx: &Tensor2, wh: &Tensor2, b: &[f64], x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let mut a = b.to_vec();
    wx.mul_vec_acc(x, &mut a)?;
    wh.mul_vec_acc(h, &mut a)?;
    Ok(a)
}

pub fn lstm_step(p: &LstmParams, x: &[f64], prev: &LstmState) -> Result<(LstmState, StepTape)> {
    let hid = p.hidden_dim();
    if x.len() != p.input_dim() {
        return Err(Error::shape(format!(
            "LSTM input has length {}, layer expects {}",
            x.len(),
            p.input_dim()
        )));
    }
    if prev.c.len() != hid || prev.h.len() != hid {
        return Err(Error::shape(format!(
            "LSTM state has lengths (c {}, h {}), layer hidden size is {hid}",
            prev.c.len(),
            prev.h.len()
        )));
    }
    let mut i = gate_pre(&p.w_xi, &p.w_hi, &p.b_i, x, &prev.h)?;
    let mut f = gate_pre(&p.w_xf, &p.w_hf, &p.b_f, x, &prev.h)?;
    let mut g = gate_pre(&p.w_xc, &p.w_hc, &p.b_c, x, &prev.h)?;
    let mut o = gate_pre(&p.w_xo, &p.w_ho, &p.b_o, x, &prev.h)?;
    let mut c = vec![0.0; hid];
    let mut tanh_c = vec![0.0; hid];
    let mut h = vec![0.0; hid];
    for k in 0..hid {
        i[k] = sigmoid_scalar(i[k] + p.w_ci[k] * prev.c[k]);
        f[k] = sigmoid_scalar(f[k] + p.w_cf[k] * prev.c[k]);
        g[k] = g[k].tanh();
        c[k] = f[k] * prev.c[k] + i[k] * g[k];
        o[k] = sigmoid_scalar(o[k] + p.w_co[k] * c[k]);
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
    let tape = StepTape {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        o,
        g,
        c: c.clone(),
        tanh_c,
    };
    Ok((LstmState { c, h }, tape))
}

/// Runs `lstm_step` over `xs` from `init`; returns every state and tape.
pub fn lstm_forward(p: &LstmParams, xs: &[Vec<f64>], init: &LstmState) -> Result<(Vec<LstmState>, Vec<StepTape>)> {
    if xs.is_empty() {
        return Err(Error::invalid("LSTM forward over an empty sequence"));
    }
    let mut states = Vec::with_capacity(xs.len());
    let mut tapes = Vec::with_capacity(xs.len());
    let mut state = init.clone();
    for x in xs {
        let (next, tape) = lstm_step(p, x, &state)?;
        state = next.clone();
        states.push(next);
        tapes.push(tape);
    }
    Ok((states, tapes))
}

/// Gradients flowing out of one step.
#[derive(Clone, Debug)]
pub struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Backpropagates one step. `dh` is the total gradient on `h_t`, `dc` the
/// gradient on `c_t` arriving from later steps. Parameter gradients are
/// accumulated into `grads`.
pub fn lstm_step_backward(
    p: &LstmParams,
    tape: &StepTape,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmGrads,
) -> Result<StepGrads> {
    let hid = p.hidden_dim();
    if dh.len() != hid || dc.len() != hid || tape.c.len() != hid || tape.x.len() != p.input_dim() {
        return Err(Error::shape(format!(
            "LSTM backward: dh {}, dc {}, tape hidden {}, tape input {}; layer is {}x{}",
            dh.len(),
            dc.len(),
            tape.c.len(),
            tape.x.len(),
            hid,
            p.input_dim()
        )));
    }
    let mut da_i = vec![0.0; hid];
    let mut da_f = vec![0.0; hid];
    let mut da_g = vec![0.0; hid];
    let mut da_o = vec![0.0; hid];
    let mut dc_prev = vec![0.0; hid];
    for k in 0..hid {
        let (i, f, o, g) = (tape.i[k], tape.f[k], tape.o[k], tape.g[k]);
        let tc = tape.tanh_c[k];
        da_o[k] = dh[k] * tc * o * (1.0 - o);
        let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc) + da_o[k] * p.w_co[k];
        da_i[k] = dc_total * g * i * (1.0 - i);
        da_f[k] = dc_total * tape.c_prev[k] * f * (1.0 - f);
        da_g[k] = dc_total * i * (1.0 - g * g);
        dc_prev[k] = dc_total * f + da_i[k] * p.w_ci[k] + da_f[k] * p.w_cf[k];

        grads.w_ci[k] += da_i[k] * tape.c_prev[k];
        grads.w_cf[k] += da_f[k] * tape.c_prev[k];
        grads.w_co[k] += da_o[k] * tape.c[k];
        grads.b_i[k] += da_i[k];
        grads.b_f[k] += da_f[k];
        grads.b_c[k] += da_g[k];
        grads.b_o[k] += da_o[k];
    }
    grads.w_xi.add_outer(&da_i, &tape.x)?;
    grads.w_xf.add_outer(&da_f, &tape.x)?;
    grads.w_xc.add_outer(&da_g, &tape.x)?;
    grads.w_xo.add_outer(&da_o, &tape.x)?;
    grads.w_hi.add_outer(&da_i, &tape.h_prev)?;
    grads.w_hf.add_outer(&da_f, &tape.h_prev)?;
    grads.w_hc.add_outer(&da_g, &tape.h_prev)?;
    grads.w_ho.add_outer(&da_o, &tape.h_prev)?;

    let mut dx = vec![0.0; p.input_dim()];
    let mut dh_prev = vec![0.0; hid];
    for (wx, wh, da) in [
        (&p.w_xi, &p.w_hi, &da_i),
        (&p.w_xf, &p.w_hf, &da_f),
        (&p.w_xc, &p.w_hc, &da_g),
        (&p.w_xo, &p.w_ho, &da_o),
    ] {
        wx.t_mul_vec_acc(da, &mut dx)?;
        wh.t_mul_vec_acc(da, &mut dh_prev)?;
    }
    Ok(StepGrads { dx, dh_prev, dc_prev })
}

#[derive(Clone, Debug)]
pub struct LstmBackward {
    pub grads: LstmGrads,
    pub dx: Vec<Vec<f64>>,
    /// Gradient on the initial state.
    pub dh0: Vec<f64>,
    pub dc0: Vec<f64>,
}

/// Backpropagation through time. `dh[t]` is the upstream gradient on `h_t`,
/// `dc_final` the gradient on the last cell state.
pub fn lstm_backward(p: &LstmParams, tapes: &[StepTape], dh: &[Vec<f64>], dc_final: &[f64]) -> Result<LstmBackward> {
    if tapes.is_empty() {
        return Err(Error::invalid("LSTM backward over an empty tape"));
    }
    if dh.len() != tapes.len() {
        return Err(Error::shape(format!(
            "{} upstream gradients for {} steps",
            dh.len(),
            tapes.len()
        )));
    }
    let hid = p.hidden_dim();
    if dc_final.len() != hid {
        return Err(Error::shape(format!(
            "dc_final has length {}, hidden is {hid}",
            dc_final.len()
        )));
    }
    let mut grads = LstmParams::zeros(p.input_dim(), hid);
    let mut dx = vec![Vec::new(); tapes.len()];
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = dc_final.to_vec();
    for t in (0..tapes.len()).rev() {
        if dh[t].len() != hid {
            return Err(Error::shape(format!(
                "dh[{t}] has length {}, hidden is {hid}",
                dh[t].len()
            )));
        }
        let dh_total: Vec<f64> = dh[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let step = lstm_step_backward(p, &tapes[t], &dh_total, &dc_next, &mut grads)?;
        dx[t] = step.dx;
        dh_next = step.dh_prev;
        dc_next = step.dc_prev;
    }
    Ok(LstmBackward {
        grads,
        dx,
        dh0: dh_next,
        dc0: dc_next,
    })
}
