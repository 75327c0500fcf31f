//! First-order linear-chain CRF over combinatory labels.
//!
//! A path `y` scores `start[y₀] + Σᵢ S[i, yᵢ] + Σᵢ T[yᵢ₋₁, yᵢ] + end[yₙ₋₁]`.
//! Every routine optionally takes a [`TransitionMask`]; disallowed
//! transitions, starts and ends are treated as scoring `-∞`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::labelspace::TransitionMask;
use crate::linalg::{axpy, dot, gemv_t_rows_add, logsumexp, Mat};
use crate::nn::glorot_uniform;

/// Emission and transition scores for one sentence. Rows of `s` past
/// `len` are padding and ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLattice {
    pub s: Mat,
    pub t: Mat,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    len: usize,
}

impl ScoreLattice {
    pub fn new(s: Mat, t: Mat, start: Vec<f64>, end: Vec<f64>) -> Result<Self> {
        let len = s.rows();
        Self::with_len(s, t, start, end, len)
    }

    /// A padded lattice whose first `len` rows are real positions.
    pub fn with_len(s: Mat, t: Mat, start: Vec<f64>, end: Vec<f64>, len: usize) -> Result<Self> {
        let k = s.cols();
        if len == 0 || len > s.rows() || k == 0 {
            return Err(Error::EmptyInput);
        }
        if t.shape() != (k, k) || start.len() != k || end.len() != k {
            return Err(Error::Shape(format!(
                "lattice with k={k} needs T[{k}x{k}], start[{k}], end[{k}]"
            )));
        }
        let lat = Self { s, t, start, end, len };
        if !lat.s.is_finite() || !lat.t.is_finite() || !lat.start.iter().chain(&lat.end).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("score lattice"));
        }
        Ok(lat)
    }

    /// Lattice without boundary scores.
    pub fn without_boundaries(s: Mat, t: Mat) -> Result<Self> {
        let k = s.cols();
        Self::new(s, t, vec![0.0; k], vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn k(&self) -> usize {
        self.s.cols()
    }

    /// Validity of each stored row.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.s.rows()).map(|i| i < self.len).collect()
    }

    /// Score of `path`, `-∞` if it violates `mask`.
    pub fn path_score(&self, path: &[usize], mask: Option<&TransitionMask>) -> f64 {
        debug_assert_eq!(path.len(), self.len);
        let mut score = self.start[path[0]] + self.s.get(0, path[0]) + self.end[path[self.len - 1]];
        for i in 1..self.len {
            score += self.t.get(path[i - 1], path[i]) + self.s.get(i, path[i]);
        }
        if let Some(m) = mask {
            let ok = m.can_start(path[0])
                && m.can_end(path[self.len - 1])
                && path.windows(2).all(|w| m.allows(w[0], w[1]));
            if !ok {
                return f64::NEG_INFINITY;
            }
        }
        score
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    /// Emission projection `[k × 2H]`.
    pub w: Mat,
    pub b: Mat,
    pub trans: Mat,
    pub start: Mat,
    pub end: Mat,
}

impl CrfParams {
    pub fn zeros(input_dim: usize, k: usize) -> Self {
        Self {
            w: Mat::zeros(k, input_dim),
            b: Mat::zeros(1, k),
            trans: Mat::zeros(k, k),
            start: Mat::zeros(1, k),
            end: Mat::zeros(1, k),
        }
    }

    /// Glorot-uniform projection and transitions; zero bias and boundaries.
    pub fn init(input_dim: usize, k: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, k);
        glorot_uniform(&mut p.w, input_dim, k, rng);
        glorot_uniform(&mut p.trans, k, k, rng);
        p
    }

    pub fn k(&self) -> usize {
        self.w.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w.cols(), self.k())
    }

    pub fn tensors(&self) -> [(&'static str, &Mat); 5] {
        [
            ("w", &self.w),
            ("b", &self.b),
            ("trans", &self.trans),
            ("start", &self.start),
            ("end", &self.end),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Mat); 5] {
        [
            ("w", &mut self.w),
            ("b", &mut self.b),
            ("trans", &mut self.trans),
            ("start", &mut self.start),
            ("end", &mut self.end),
        ]
    }

    /// Lattice for encoder states `h` whose first `len` rows are real.
    pub fn lattice(&self, h: &Mat, len: usize) -> Result<ScoreLattice> {
        let s = emissions(h, self)?;
        ScoreLattice::with_len(
            s,
            self.trans.clone(),
            self.start.row(0).to_vec(),
            self.end.row(0).to_vec(),
            len,
        )
    }
}

/// `S = H·W + b`, one row per position.
pub fn emissions(h: &Mat, p: &CrfParams) -> Result<Mat> {
    if h.cols() != p.w.cols() {
        return Err(Error::Shape(format!(
            "emission projection expects {} inputs, got {}",
            p.w.cols(),
            h.cols()
        )));
    }
    let k = p.k();
    let mut s = Mat::zeros(h.rows(), k);
    for t in 0..h.rows() {
        let row = h.row(t);
        let out = s.row_mut(t);
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(p.w.row(j), row) + p.b.get(0, j);
        }
    }
    Ok(s)
}

/// Accumulates projection gradients for `d_s` and returns `∂L/∂H`.
pub fn emissions_backward(h: &Mat, p: &CrfParams, d_s: &Mat, grads: &mut CrfParams) -> Mat {
    let mut d_h = Mat::zeros(h.rows(), h.cols());
    for t in 0..h.rows() {
        let g = d_s.row(t);
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (j, &gj) in g.iter().enumerate() {
            if gj != 0.0 {
                axpy(grads.w.row_mut(j), gj, h.row(t));
            }
        }
        axpy(grads.b.row_mut(0), 1.0, g);
        gemv_t_rows_add(&p.w, 0, g, d_h.row_mut(t));
    }
    d_h
}

#[inline]
fn trans_ok(mask: Option<&TransitionMask>, p: usize, j: usize) -> bool {
    mask.is_none_or(|m| m.allows(p, j))
}

/// Forward log-scores `α[i][j]`.
fn alphas(lat: &ScoreLattice, mask: Option<&TransitionMask>) -> Vec<Vec<f64>> {
    let (n, k) = (lat.len(), lat.k());
    let mut alpha = vec![vec![f64::NEG_INFINITY; k]; n];
    for j in 0..k {
        if mask.is_none_or(|m| m.can_start(j)) {
            alpha[0][j] = lat.start[j] + lat.s.get(0, j);
        }
    }
    let mut buf = Vec::with_capacity(k);
    for i in 1..n {
        for j in 0..k {
            buf.clear();
            buf.extend((0..k).filter(|&p| trans_ok(mask, p, j)).map(|p| alpha[i - 1][p] + lat.t.get(p, j)));
            alpha[i][j] = logsumexp(&buf) + lat.s.get(i, j);
        }
    }
    alpha
}

/// Backward log-scores `β[i][j]` (excluding position `i`'s emission).
fn betas(lat: &ScoreLattice, mask: Option<&TransitionMask>) -> Vec<Vec<f64>> {
    let (n, k) = (lat.len(), lat.k());
    let mut beta = vec![vec![f64::NEG_INFINITY; k]; n];
    for j in 0..k {
        if mask.is_none_or(|m| m.can_end(j)) {
            beta[n - 1][j] = lat.end[j];
        }
    }
    let mut buf = Vec::with_capacity(k);
    for i in (0..n - 1).rev() {
        for p in 0..k {
            buf.clear();
            buf.extend(
                (0..k)
                    .filter(|&j| trans_ok(mask, p, j))
                    .map(|j| lat.t.get(p, j) + lat.s.get(i + 1, j) + beta[i + 1][j]),
            );
            beta[i][p] = logsumexp(&buf);
        }
    }
    beta
}

fn final_logz(lat: &ScoreLattice, alpha: &[Vec<f64>], mask: Option<&TransitionMask>) -> f64 {
    let last = &alpha[lat.len() - 1];
    let terms: Vec<f64> = (0..lat.k())
        .filter(|&j| mask.is_none_or(|m| m.can_end(j)))
        .map(|j| last[j] + lat.end[j])
        .collect();
    logsumexp(&terms)
}

/// `log Σ_y exp(score(y))` by the forward algorithm.
pub fn log_partition(lat: &ScoreLattice, mask: Option<&TransitionMask>) -> f64 {
    final_logz(lat, &alphas(lat, mask), mask)
}

/// Loss and gradients of the negative log-likelihood of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGrad {
    pub loss: f64,
    /// `[rows × k]`; padded rows are zero.
    pub d_s: Mat,
    pub d_t: Mat,
    pub d_start: Vec<f64>,
    pub d_end: Vec<f64>,
}

/// `loss = log Z − score(gold)` with gradients from forward-backward
/// marginals.
pub fn nll_and_grad(lat: &ScoreLattice, gold: &[usize], mask: Option<&TransitionMask>) -> Result<CrfGrad> {
    let (n, k) = (lat.len(), lat.k());
    if gold.len() != n {
        return Err(Error::LengthMismatch {
            what: "gold labels vs lattice positions",
            left: gold.len(),
            right: n,
        });
    }
    if let Some(&bad) = gold.iter().find(|&&g| g >= k) {
        return Err(Error::InvalidId { id: bad, size: k });
    }
    let gold_score = lat.path_score(gold, mask);
    if gold_score == f64::NEG_INFINITY {
        return Err(Error::Config("gold label sequence violates the transition mask".into()));
    }
    let alpha = alphas(lat, mask);
    let beta = betas(lat, mask);
    let logz = final_logz(lat, &alpha, mask);

    let mut d_s = Mat::zeros(lat.s.rows(), k);
    let mut d_t = Mat::zeros(k, k);
    let mut d_start = vec![0.0; k];
    let mut d_end = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            let m = (alpha[i][j] + beta[i][j] - logz).exp();
            d_s.set(i, j, m);
            if i == 0 {
                d_start[j] = m;
            }
            if i == n - 1 {
                d_end[j] = m;
            }
        }
        d_s.add_at(i, gold[i], -1.0);
    }
    d_start[gold[0]] -= 1.0;
    d_end[gold[n - 1]] -= 1.0;
    for i in 0..n - 1 {
        for p in 0..k {
            if alpha[i][p] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..k {
                if !trans_ok(mask, p, j) {
                    continue;
                }
                let w = alpha[i][p] + lat.t.get(p, j) + lat.s.get(i + 1, j) + beta[i + 1][j] - logz;
                d_t.add_at(p, j, w.exp());
            }
        }
        d_t.add_at(gold[i], gold[i + 1], -1.0);
    }
    Ok(CrfGrad {
        loss: (logz - gold_score).max(0.0),
        d_s,
        d_t,
        d_start,
        d_end,
    })
}

/// Highest-scoring label sequence. Ties go to the lower label index. If the
/// mask admits no path at all the unmasked optimum is returned.
pub fn viterbi(lat: &ScoreLattice, mask: Option<&TransitionMask>) -> Vec<usize> {
    viterbi_inner(lat, mask).unwrap_or_else(|| viterbi_inner(lat, None).expect("unmasked lattice has a path"))
}

fn viterbi_inner(lat: &ScoreLattice, mask: Option<&TransitionMask>) -> Option<Vec<usize>> {
    let (n, k) = (lat.len(), lat.k());
    let mut delta = vec![f64::NEG_INFINITY; k];
    for (j, d) in delta.iter_mut().enumerate() {
        if mask.is_none_or(|m| m.can_start(j)) {
            *d = lat.start[j] + lat.s.get(0, j);
        }
    }
    let mut back = vec![0usize; n * k];
    let mut next = vec![f64::NEG_INFINITY; k];
    for i in 1..n {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for p in 0..k {
                if !trans_ok(mask, p, j) {
                    continue;
                }
                let v = delta[p] + lat.t.get(p, j);
                if v > best {
                    best = v;
                    arg = p;
                }
            }
            next[j] = best + lat.s.get(i, j);
            back[i * k + j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = None;
    for j in 0..k {
        if !mask.is_none_or(|m| m.can_end(j)) {
            continue;
        }
        let v = delta[j] + lat.end[j];
        if v > best {
            best = v;
            last = Some(j);
        }
    }
    let mut cur = last?;
    let mut path = vec![0; n];
    path[n - 1] = cur;
    for i in (1..n).rev() {
        cur = back[i * k + cur];
        path[i - 1] = cur;
    }
    Some(path)
}

/// Element-wise mean of lattices sharing `k` and length.
pub fn average_lattices(lats: &[ScoreLattice]) -> Result<ScoreLattice> {
    let first = lats.first().ok_or(Error::EmptyInput)?;
    if lats.len() == 1 {
        return Ok(first.clone());
    }
    let (n, k, rows) = (first.len(), first.k(), first.s.rows());
    if lats.iter().any(|l| l.k() != k || l.len() != n || l.s.rows() != rows) {
        return Err(Error::LabelSpaceMismatch);
    }
    let scale = 1.0 / lats.len() as f64;
    let mut s = Mat::zeros(rows, k);
    let mut t = Mat::zeros(k, k);
    let mut start = vec![0.0; k];
    let mut end = vec![0.0; k];
    for l in lats {
        axpy(s.as_mut_slice(), 1.0, l.s.as_slice());
        axpy(t.as_mut_slice(), 1.0, l.t.as_slice());
        axpy(&mut start, 1.0, &l.start);
        axpy(&mut end, 1.0, &l.end);
    }
    s.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    t.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    start.iter_mut().chain(end.iter_mut()).for_each(|v| *v *= scale);
    ScoreLattice::with_len(s, t, start, end, n)
}
