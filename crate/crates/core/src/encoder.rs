//! Bidirectional GRU encoder.
//!
//! Cell:
//! `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
//! `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
//! Gate blocks are stacked `[z; r; h̃]` in `w`, `u` and `b`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, gemv_rows_add, gemv_t_rows_add, outer_rows_add, sigmoid, Mat};
use crate::nn::{dropout_mask, glorot_uniform};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    /// `[3H × d_in]`
    pub w: Mat,
    /// `[3H × H]`
    pub u: Mat,
    /// `[1 × 3H]`
    pub b: Mat,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Mat::zeros(3 * hidden, input_dim),
            u: Mat::zeros(3 * hidden, hidden),
            b: Mat::zeros(1, 3 * hidden),
        }
    }

    /// Glorot-uniform per gate block, zero biases.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let mut block = Mat::zeros(hidden, input_dim);
        for g in 0..3 {
            glorot_uniform(&mut block, input_dim, hidden, rng);
            for r in 0..hidden {
                p.w.row_mut(g * hidden + r).copy_from_slice(block.row(r));
            }
        }
        let mut block = Mat::zeros(hidden, hidden);
        for g in 0..3 {
            glorot_uniform(&mut block, hidden, hidden, rng);
            for r in 0..hidden {
                p.u.row_mut(g * hidden + r).copy_from_slice(block.row(r));
            }
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden())
    }

    pub fn tensors(&self) -> [(&'static str, &Mat); 3] {
        [("w", &self.w), ("u", &self.u), ("b", &self.b)]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Mat); 3] {
        [("w", &mut self.w), ("u", &mut self.u), ("b", &mut self.b)]
    }
}

/// Values of one step needed by the backward pass.
#[derive(Debug, Clone)]
struct StepTrace {
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

fn step(x_proj: &[f64], h_prev: &[f64], p: &GruParams) -> (Vec<f64>, StepTrace) {
    let hd = p.hidden();
    let mut zr = x_proj[..2 * hd].to_vec();
    gemv_rows_add(&p.u, 0, h_prev, &mut zr);
    let z: Vec<f64> = zr[..hd].iter().map(|&v| sigmoid(v)).collect();
    let r: Vec<f64> = zr[hd..].iter().map(|&v| sigmoid(v)).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut a = x_proj[2 * hd..].to_vec();
    gemv_rows_add(&p.u, 2 * hd, &rh, &mut a);
    let cand: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
    let h = (0..hd)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
        .collect();
    (h, StepTrace { z, r, cand })
}

fn project(x: &[f64], p: &GruParams) -> Vec<f64> {
    let mut out = p.b.row(0).to_vec();
    gemv_rows_add(&p.w, 0, x, &mut out);
    out
}

/// One GRU step.
pub fn gru_step(x: &[f64], h_prev: &[f64], p: &GruParams) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() || h_prev.len() != p.hidden() {
        return Err(Error::Shape(format!(
            "gru_step expects x[{}], h[{}]; got x[{}], h[{}]",
            p.input_dim(),
            p.hidden(),
            x.len(),
            h_prev.len()
        )));
    }
    if !x.iter().chain(h_prev).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("gru_step input"));
    }
    Ok(step(&project(x, p), h_prev, p).0)
}

/// Concatenated forward ⊕ backward states, `[n × 2H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub h: Mat,
}

impl EncoderOutput {
    pub fn forward_part(&self, t: usize) -> &[f64] {
        let hd = self.h.cols() / 2;
        &self.h.row(t)[..hd]
    }

    pub fn backward_part(&self, t: usize) -> &[f64] {
        let hd = self.h.cols() / 2;
        &self.h.row(t)[hd..]
    }
}

/// Per-direction values kept for backpropagation.
#[derive(Debug, Clone)]
struct DirectionTrace {
    /// States before each step, in processing order.
    h_prev: Vec<Vec<f64>>,
    steps: Vec<StepTrace>,
    masks: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    len: usize,
    fwd: DirectionTrace,
    bwd: DirectionTrace,
}

fn run_direction(
    x: &Mat,
    len: usize,
    p: &GruParams,
    reverse: bool,
    dropout: f64,
    training: bool,
    rng: &mut impl Rng,
    out: &mut Mat,
    col0: usize,
) -> DirectionTrace {
    let hd = p.hidden();
    let mut h = vec![0.0; hd];
    let mut trace = DirectionTrace {
        h_prev: Vec::with_capacity(len),
        steps: Vec::with_capacity(len),
        masks: (training && dropout > 0.0).then(Vec::new),
    };
    for s in 0..len {
        let t = if reverse { len - 1 - s } else { s };
        let (h_new, st) = step(&project(x.row(t), p), &h, p);
        trace.h_prev.push(std::mem::replace(&mut h, h_new));
        trace.steps.push(st);
        let dst = &mut out.row_mut(t)[col0..col0 + hd];
        dst.copy_from_slice(&h);
        if let Some(masks) = trace.masks.as_mut() {
            let m = dropout_mask(hd, dropout, rng);
            dst.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            masks.push(m);
        }
    }
    trace
}

/// Runs both directions over the first `len` rows of `x`; later rows are
/// padding and come out as zeros.
pub fn bigru_forward_masked(
    x: &Mat,
    len: usize,
    fwd: &GruParams,
    bwd: &GruParams,
    dropout: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(EncoderOutput, EncoderTrace)> {
    if len == 0 || len > x.rows() {
        return Err(Error::EmptyInput);
    }
    if x.cols() != fwd.input_dim() || x.cols() != bwd.input_dim() || fwd.hidden() != bwd.hidden() {
        return Err(Error::Shape("encoder input does not match GRU parameters".into()));
    }
    let hd = fwd.hidden();
    let mut out = Mat::zeros(x.rows(), 2 * hd);
    let f = run_direction(x, len, fwd, false, dropout, training, rng, &mut out, 0);
    let b = run_direction(x, len, bwd, true, dropout, training, rng, &mut out, hd);
    Ok((EncoderOutput { h: out }, EncoderTrace { len, fwd: f, bwd: b }))
}

pub fn bigru_forward(
    x: &Mat,
    fwd: &GruParams,
    bwd: &GruParams,
    dropout: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<EncoderOutput> {
    Ok(bigru_forward_masked(x, x.rows(), fwd, bwd, dropout, training, rng)?.0)
}

fn backprop_direction(
    x: &Mat,
    len: usize,
    p: &GruParams,
    trace: &DirectionTrace,
    reverse: bool,
    d_out: &Mat,
    col0: usize,
    grads: &mut GruParams,
    d_x: &mut Mat,
) {
    let hd = p.hidden();
    let mut dh = vec![0.0; hd];
    for s in (0..len).rev() {
        let t = if reverse { len - 1 - s } else { s };
        let src = &d_out.row(t)[col0..col0 + hd];
        match &trace.masks {
            Some(m) => dh.iter_mut().zip(src).zip(&m[s]).for_each(|((d, g), k)| *d += g * k),
            None => axpy(&mut dh, 1.0, src),
        }
        let st = &trace.steps[s];
        let h_prev = &trace.h_prev[s];

        let mut d_gates = vec![0.0; 3 * hd];
        let mut dh_prev: Vec<f64> = (0..hd).map(|i| dh[i] * (1.0 - st.z[i])).collect();
        for i in 0..hd {
            let dz = dh[i] * (st.cand[i] - h_prev[i]);
            d_gates[i] = dz * st.z[i] * (1.0 - st.z[i]);
            let dc = dh[i] * st.z[i];
            d_gates[2 * hd + i] = dc * (1.0 - st.cand[i] * st.cand[i]);
        }
        let da = &d_gates[2 * hd..];
        let rh: Vec<f64> = st.r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        outer_rows_add(&mut grads.u, 2 * hd, da, &rh);
        let mut d_rh = vec![0.0; hd];
        gemv_t_rows_add(&p.u, 2 * hd, da, &mut d_rh);
        for i in 0..hd {
            dh_prev[i] += d_rh[i] * st.r[i];
            let dr = d_rh[i] * h_prev[i];
            d_gates[hd + i] = dr * st.r[i] * (1.0 - st.r[i]);
        }
        let d_zr = &d_gates[..2 * hd];
        outer_rows_add(&mut grads.u, 0, d_zr, h_prev);
        gemv_t_rows_add(&p.u, 0, d_zr, &mut dh_prev);

        outer_rows_add(&mut grads.w, 0, &d_gates, x.row(t));
        axpy(grads.b.row_mut(0), 1.0, &d_gates);
        gemv_t_rows_add(&p.w, 0, &d_gates, d_x.row_mut(t));
        dh = dh_prev;
    }
}

/// Accumulates parameter gradients and returns `∂L/∂x` given
/// `d_out = ∂L/∂H`.
pub fn bigru_backward(
    x: &Mat,
    fwd: &GruParams,
    bwd: &GruParams,
    trace: &EncoderTrace,
    d_out: &Mat,
    g_fwd: &mut GruParams,
    g_bwd: &mut GruParams,
) -> Mat {
    let hd = fwd.hidden();
    let mut d_x = Mat::zeros(x.rows(), x.cols());
    backprop_direction(x, trace.len, fwd, &trace.fwd, false, d_out, 0, g_fwd, &mut d_x);
    backprop_direction(x, trace.len, bwd, &trace.bwd, true, d_out, hd, g_bwd, &mut d_x);
    d_x
}
