//! Glyph bitmaps and the convolutional feature extractor run over them.
//!
//! Shapes: 30×30×1 → conv 5×5/32 → pool 2×2 → 15×15×32 → conv 5×5/32 →
//! pool 2×2 (ceil) → 8×8×32 → dense 100. Convolutions use same padding and
//! ReLU. Feature maps are stored channel-major.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use super::radical::parse_codepoint;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Mat};
use crate::nn::{dropout_mask, glorot_uniform};

pub const GLYPH_SIDE: usize = 30;
pub const GLYPH_PIXELS: usize = GLYPH_SIDE * GLYPH_SIDE;
pub const CONV_FILTERS: usize = 32;
pub const KERNEL: usize = 5;
pub const FC_SIZE: usize = 100;

const PAD: usize = KERNEL / 2;
const SIDE1: usize = GLYPH_SIDE;
const SIDE2: usize = SIDE1.div_ceil(2);
const SIDE3: usize = SIDE2.div_ceil(2);
const FLAT: usize = CONV_FILTERS * SIDE3 * SIDE3;

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphBitmap {
    pixels: Vec<f64>,
}

impl GlyphBitmap {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if rows != GLYPH_SIDE || cols != GLYPH_SIDE || pixels.len() != GLYPH_PIXELS {
            return Err(Error::Shape(format!(
                "glyph bitmap must be {GLYPH_SIDE}x{GLYPH_SIDE}, got {rows}x{cols} with {} pixels",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("glyph bitmap"));
        }
        Ok(Self { pixels })
    }

    pub fn blank() -> Self {
        Self {
            pixels: vec![0.0; GLYPH_PIXELS],
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Bitmaps keyed by character. Id 0 is a blank bitmap used for characters
/// the set does not cover.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphSet {
    chars: Vec<char>,
    index: HashMap<char, usize>,
    bitmaps: Vec<GlyphBitmap>,
}

impl Default for GlyphSet {
    fn default() -> Self {
        Self {
            chars: Vec::new(),
            index: HashMap::new(),
            bitmaps: vec![GlyphBitmap::blank()],
        }
    }
}

impl GlyphSet {
    pub fn insert(&mut self, ch: char, bitmap: GlyphBitmap) {
        match self.index.get(&ch) {
            Some(&id) => self.bitmaps[id] = bitmap,
            None => {
                self.chars.push(ch);
                self.bitmaps.push(bitmap);
                self.index.insert(ch, self.bitmaps.len() - 1);
            }
        }
    }

    pub fn glyph_id(&self, ch: char) -> usize {
        self.index.get(&ch).copied().unwrap_or(0)
    }

    pub fn bitmap(&self, id: usize) -> Option<&GlyphBitmap> {
        self.bitmaps.get(id)
    }

    /// Number of ids including the blank one.
    pub fn len(&self) -> usize {
        self.bitmaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Pixel rows for the non-blank bitmaps, in id order.
    pub fn to_matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.chars.len(), GLYPH_PIXELS);
        for (i, b) in self.bitmaps[1..].iter().enumerate() {
            m.row_mut(i).copy_from_slice(&b.pixels);
        }
        m
    }

    pub fn from_matrix(chars: &[char], pixels: &Mat) -> Result<Self> {
        if pixels.rows() != chars.len() || pixels.cols() != GLYPH_PIXELS {
            return Err(Error::Shape("glyph matrix does not match its character list".into()));
        }
        let mut set = GlyphSet::default();
        for (i, &ch) in chars.iter().enumerate() {
            set.insert(ch, GlyphBitmap::new(GLYPH_SIDE, GLYPH_SIDE, pixels.row(i).to_vec())?);
        }
        Ok(set)
    }

    /// Reads `U+XXXX` followed by 900 row-major pixel values per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut set = GlyphSet::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::parse(origin, lineno + 1, msg);
            let mut fields = line.split_whitespace();
            let cp = fields.next().unwrap_or_default();
            let ch = parse_codepoint(cp)
                .and_then(char::from_u32)
                .ok_or_else(|| err(format!("bad codepoint {cp:?}")))?;
            let pixels = fields
                .map(|f| f.parse::<f64>().map_err(|_| err(format!("bad pixel value {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if pixels.len() != GLYPH_PIXELS {
                return Err(err(format!("expected {GLYPH_PIXELS} pixels, found {}", pixels.len())));
            }
            if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(err("pixel values must lie in [0, 1]".into()));
            }
            set.insert(ch, GlyphBitmap::new(GLYPH_SIDE, GLYPH_SIDE, pixels)?);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphCnn {
    /// `[32 × 25]`
    pub conv1_w: Mat,
    pub conv1_b: Mat,
    /// `[32 × 32·25]`, input-channel major then kernel row/column.
    pub conv2_w: Mat,
    pub conv2_b: Mat,
    /// `[100 × 2048]`
    pub fc_w: Mat,
    pub fc_b: Mat,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GlyphTrace {
    pre1: Vec<f64>,
    pool1: Vec<f64>,
    arg1: Vec<usize>,
    pre2: Vec<f64>,
    pool2: Vec<f64>,
    arg2: Vec<usize>,
    fc_pre: Vec<f64>,
    pub output: Vec<f64>,
}

impl GlyphCnn {
    pub fn zeros() -> Self {
        Self {
            conv1_w: Mat::zeros(CONV_FILTERS, KERNEL * KERNEL),
            conv1_b: Mat::zeros(1, CONV_FILTERS),
            conv2_w: Mat::zeros(CONV_FILTERS, CONV_FILTERS * KERNEL * KERNEL),
            conv2_b: Mat::zeros(1, CONV_FILTERS),
            fc_w: Mat::zeros(FC_SIZE, FLAT),
            fc_b: Mat::zeros(1, FC_SIZE),
        }
    }

    /// Glorot-uniform weights (receptive-field fan in/out), zero biases.
    pub fn init(rng: &mut impl Rng) -> Self {
        let k2 = KERNEL * KERNEL;
        let mut p = Self::zeros();
        glorot_uniform(&mut p.conv1_w, k2, k2 * CONV_FILTERS, rng);
        glorot_uniform(&mut p.conv2_w, k2 * CONV_FILTERS, k2 * CONV_FILTERS, rng);
        glorot_uniform(&mut p.fc_w, FLAT, FC_SIZE, rng);
        p
    }

    pub fn tensors(&self) -> [(&'static str, &Mat); 6] {
        [
            ("conv1.w", &self.conv1_w),
            ("conv1.b", &self.conv1_b),
            ("conv2.w", &self.conv2_w),
            ("conv2.b", &self.conv2_b),
            ("fc.w", &self.fc_w),
            ("fc.b", &self.fc_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Mat); 6] {
        [
            ("conv1.w", &mut self.conv1_w),
            ("conv1.b", &mut self.conv1_b),
            ("conv2.w", &mut self.conv2_w),
            ("conv2.b", &mut self.conv2_b),
            ("fc.w", &mut self.fc_w),
            ("fc.b", &mut self.fc_b),
        ]
    }

    /// Deterministic forward pass without dropout.
    pub fn forward(&self, bitmap: &GlyphBitmap) -> GlyphTrace {
        let patches1 = im2col(&bitmap.pixels, 1, SIDE1);
        let pre1 = conv(&patches1, &self.conv1_w, &self.conv1_b);
        let act1: Vec<f64> = pre1.iter().map(|&v| v.max(0.0)).collect();
        let (pool1, arg1) = max_pool(&act1, CONV_FILTERS, SIDE1);

        let patches2 = im2col(&pool1, CONV_FILTERS, SIDE2);
        let pre2 = conv(&patches2, &self.conv2_w, &self.conv2_b);
        let act2: Vec<f64> = pre2.iter().map(|&v| v.max(0.0)).collect();
        let (pool2, arg2) = max_pool(&act2, CONV_FILTERS, SIDE2);

        let fc_pre: Vec<f64> = (0..FC_SIZE)
            .map(|o| dot(self.fc_w.row(o), &pool2) + self.fc_b.get(0, o))
            .collect();
        let output = fc_pre.iter().map(|&v| v.max(0.0)).collect();
        GlyphTrace {
            pre1,
            pool1,
            arg1,
            pre2,
            pool2,
            arg2,
            fc_pre,
            output,
        }
    }

    /// Accumulates parameter gradients for `d_out = ∂L/∂output`.
    pub fn backward(&self, bitmap: &GlyphBitmap, trace: &GlyphTrace, d_out: &[f64], grads: &mut GlyphCnn) {
        // dense layer
        let mut d_pool2 = vec![0.0; FLAT];
        for o in 0..FC_SIZE {
            if trace.fc_pre[o] <= 0.0 {
                continue;
            }
            let g = d_out[o];
            if g == 0.0 {
                continue;
            }
            grads.fc_b.add_at(0, o, g);
            axpy(grads.fc_w.row_mut(o), g, &trace.pool2);
            axpy(&mut d_pool2, g, self.fc_w.row(o));
        }

        // second conv block
        let mut d_pre2 = vec![0.0; CONV_FILTERS * SIDE2 * SIDE2];
        for (i, &src) in trace.arg2.iter().enumerate() {
            if trace.pre2[src] > 0.0 {
                d_pre2[src] += d_pool2[i];
            }
        }
        let patches2 = im2col(&trace.pool1, CONV_FILTERS, SIDE2);
        let d_patches2 = conv_backward(&patches2, &self.conv2_w, &d_pre2, &mut grads.conv2_w, &mut grads.conv2_b, true);
        let d_pool1 = col2im(&d_patches2.expect("input gradient requested"), CONV_FILTERS, SIDE2);

        // first conv block
        let mut d_pre1 = vec![0.0; CONV_FILTERS * SIDE1 * SIDE1];
        for (i, &src) in trace.arg1.iter().enumerate() {
            if trace.pre1[src] > 0.0 {
                d_pre1[src] += d_pool1[i];
            }
        }
        let patches1 = im2col(&bitmap.pixels, 1, SIDE1);
        conv_backward(&patches1, &self.conv1_w, &d_pre1, &mut grads.conv1_w, &mut grads.conv1_b, false);
    }
}

/// `glyph_forward` with optional dropout on the dense output.
pub fn glyph_forward(
    bitmap: &GlyphBitmap,
    cnn: &GlyphCnn,
    dropout: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut out = cnn.forward(bitmap).output;
    if training && dropout > 0.0 {
        let mask = dropout_mask(out.len(), dropout, rng);
        out.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    }
    out
}

/// Patch matrix `[side² × channels·25]` with zero padding.
fn im2col(input: &[f64], channels: usize, side: usize) -> Mat {
    let k2 = KERNEL * KERNEL;
    let mut m = Mat::zeros(side * side, channels * k2);
    for y in 0..side {
        for x in 0..side {
            let row = m.row_mut(y * side + x);
            for c in 0..channels {
                let plane = &input[c * side * side..(c + 1) * side * side];
                for ky in 0..KERNEL {
                    let iy = y + ky;
                    if iy < PAD || iy - PAD >= side {
                        continue;
                    }
                    let iy = iy - PAD;
                    for kx in 0..KERNEL {
                        let ix = x + kx;
                        if ix < PAD || ix - PAD >= side {
                            continue;
                        }
                        row[c * k2 + ky * KERNEL + kx] = plane[iy * side + ix - PAD];
                    }
                }
            }
        }
    }
    m
}

fn col2im(patches: &Mat, channels: usize, side: usize) -> Vec<f64> {
    let k2 = KERNEL * KERNEL;
    let mut out = vec![0.0; channels * side * side];
    for y in 0..side {
        for x in 0..side {
            let row = patches.row(y * side + x);
            for c in 0..channels {
                for ky in 0..KERNEL {
                    let iy = y + ky;
                    if iy < PAD || iy - PAD >= side {
                        continue;
                    }
                    let iy = iy - PAD;
                    for kx in 0..KERNEL {
                        let ix = x + kx;
                        if ix < PAD || ix - PAD >= side {
                            continue;
                        }
                        out[c * side * side + iy * side + ix - PAD] += row[c * k2 + ky * KERNEL + kx];
                    }
                }
            }
        }
    }
    out
}

/// Pre-activations `[filters × positions]`, flattened channel-major.
fn conv(patches: &Mat, w: &Mat, b: &Mat) -> Vec<f64> {
    let positions = patches.rows();
    let mut out = vec![0.0; w.rows() * positions];
    for f in 0..w.rows() {
        let bias = b.get(0, f);
        let wf = w.row(f);
        for p in 0..positions {
            out[f * positions + p] = dot(wf, patches.row(p)) + bias;
        }
    }
    out
}

fn conv_backward(
    patches: &Mat,
    w: &Mat,
    d_pre: &[f64],
    d_w: &mut Mat,
    d_b: &mut Mat,
    want_input: bool,
) -> Option<Mat> {
    let positions = patches.rows();
    let mut d_patches = want_input.then(|| Mat::zeros(positions, patches.cols()));
    for f in 0..w.rows() {
        let grads = &d_pre[f * positions..(f + 1) * positions];
        let mut bias = 0.0;
        for (p, &g) in grads.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            bias += g;
            axpy(d_w.row_mut(f), g, patches.row(p));
            if let Some(dp) = d_patches.as_mut() {
                axpy(dp.row_mut(p), g, w.row(f));
            }
        }
        d_b.add_at(0, f, bias);
    }
    d_patches
}

/// 2×2 max pooling with stride 2; odd sides keep a partial last window.
fn max_pool(input: &[f64], channels: usize, side: usize) -> (Vec<f64>, Vec<usize>) {
    let out_side = side.div_ceil(2);
    let mut out = vec![0.0; channels * out_side * out_side];
    let mut arg = vec![0usize; out.len()];
    for c in 0..channels {
        let base = c * side * side;
        for oy in 0..out_side {
            for ox in 0..out_side {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for y in 2 * oy..(2 * oy + 2).min(side) {
                    for x in 2 * ox..(2 * ox + 2).min(side) {
                        let idx = base + y * side + x;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = c * out_side * out_side + oy * out_side + ox;
                out[o] = best;
                arg[o] = best_idx;
            }
        }
    }
    (out, arg)
}
