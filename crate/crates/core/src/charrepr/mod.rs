//! Per-character input vectors.
//!
//! A character's vector is the concatenation of its n-gram embeddings for
//! orders `1..=max_order`, then optionally a radical embedding and the glyph
//! CNN output.

pub mod glyph;
pub mod ngram;
pub mod radical;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, Mat};
use crate::nn::{dropout_mask, glorot_uniform};

pub use glyph::{glyph_forward, GlyphBitmap, GlyphCnn, GlyphSet, GlyphTrace};
pub use ngram::{build_vocab, ngram_at, ngram_span, NgramVocab, PAD_CHAR, PAD_ID, UNK_ID};
pub use radical::{radical_of, RadicalTable, RADICAL_ROWS};

/// Rows are vocabulary ids, columns embedding dimensions.
pub type EmbeddingTable = Mat;

/// Lookup ids for one character position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharContext {
    /// One id per order, lowest order first.
    pub ngrams: Vec<usize>,
    pub radical: Option<usize>,
    pub glyph: Option<usize>,
}

/// Contexts for every position of `chars`.
pub fn char_contexts(
    chars: &[char],
    vocab: &NgramVocab,
    radicals: Option<&RadicalTable>,
    glyphs: Option<&GlyphSet>,
) -> Vec<CharContext> {
    vocab
        .ids_for(chars)
        .into_iter()
        .zip(chars)
        .map(|(ngrams, &ch)| CharContext {
            ngrams,
            radical: radicals.map(|t| t.radical_of(ch)),
            glyph: glyphs.map(|g| g.glyph_id(ch)),
        })
        .collect()
}

/// Trainable tables of the representation layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CharTables {
    pub ngram: Vec<EmbeddingTable>,
    pub radical: Option<EmbeddingTable>,
    pub glyph: Option<GlyphCnn>,
}

impl CharTables {
    /// Glorot-initialised tables sized for `vocab`.
    pub fn init(
        vocab: &NgramVocab,
        char_dim: usize,
        radical_dim: Option<usize>,
        glyph: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let ngram = (1..=vocab.max_order())
            .map(|o| {
                let mut m = Mat::zeros(vocab.size(o), char_dim);
                glorot_uniform(&mut m, vocab.size(o), char_dim, rng);
                m
            })
            .collect();
        let radical = radical_dim.map(|d| {
            let mut m = Mat::zeros(RADICAL_ROWS, d);
            glorot_uniform(&mut m, RADICAL_ROWS, d, rng);
            m
        });
        let glyph = glyph.then(|| GlyphCnn::init(rng));
        Self { ngram, radical, glyph }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            ngram: self.ngram.iter().map(|m| Mat::zeros(m.rows(), m.cols())).collect(),
            radical: self.radical.as_ref().map(|m| Mat::zeros(m.rows(), m.cols())),
            glyph: self.glyph.as_ref().map(|_| GlyphCnn::zeros()),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.ngram.iter().map(Mat::cols).sum::<usize>()
            + self.radical.as_ref().map_or(0, Mat::cols)
            + if self.glyph.is_some() { glyph::FC_SIZE } else { 0 }
    }

    fn check(&self, ctx: &CharContext, glyphs: Option<&GlyphSet>) -> Result<()> {
        if ctx.ngrams.len() != self.ngram.len() {
            return Err(Error::Shape(format!(
                "context has {} n-gram orders, tables have {}",
                ctx.ngrams.len(),
                self.ngram.len()
            )));
        }
        for (&id, t) in ctx.ngrams.iter().zip(&self.ngram) {
            if id >= t.rows() {
                return Err(Error::InvalidId { id, size: t.rows() });
            }
        }
        match (ctx.radical, &self.radical) {
            (Some(id), Some(t)) if id >= t.rows() => return Err(Error::InvalidId { id, size: t.rows() }),
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Shape("radical id and radical table must both be present".into()))
            }
            _ => {}
        }
        match (ctx.glyph, &self.glyph) {
            (Some(id), Some(_)) => {
                let size = glyphs.map_or(0, GlyphSet::len);
                if id >= size {
                    return Err(Error::InvalidId { id, size });
                }
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Shape("glyph id and glyph CNN must both be present".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

/// The representation of a single character.
pub fn embed_char(
    ctx: &CharContext,
    tables: &CharTables,
    glyphs: Option<&GlyphSet>,
    dropout: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    tables.check(ctx, glyphs)?;
    let mut out = Vec::with_capacity(tables.output_dim());
    for (&id, t) in ctx.ngrams.iter().zip(&tables.ngram) {
        out.extend_from_slice(t.row(id));
    }
    if let (Some(id), Some(t)) = (ctx.radical, &tables.radical) {
        out.extend_from_slice(t.row(id));
    }
    if let (Some(id), Some(cnn), Some(set)) = (ctx.glyph, &tables.glyph, glyphs) {
        let bitmap = set.bitmap(id).expect("checked above");
        out.extend(glyph_forward(bitmap, cnn, dropout, training, rng));
    }
    Ok(out)
}

/// Values kept from [`embed_sentence`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct EmbedTrace {
    glyph_traces: BTreeMap<usize, GlyphTrace>,
    glyph_masks: Vec<Option<Vec<f64>>>,
}

/// Row `t` of the result is the representation of position `t`. The glyph
/// CNN runs once per distinct glyph; dropout masks are drawn per position.
pub fn embed_sentence(
    ctxs: &[CharContext],
    tables: &CharTables,
    glyphs: Option<&GlyphSet>,
    dropout: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(Mat, EmbedTrace)> {
    let dim = tables.output_dim();
    let mut x = Mat::zeros(ctxs.len(), dim);
    let mut trace = EmbedTrace::default();
    for (t, ctx) in ctxs.iter().enumerate() {
        tables.check(ctx, glyphs)?;
        let row = x.row_mut(t);
        let mut off = 0;
        for (&id, table) in ctx.ngrams.iter().zip(&tables.ngram) {
            row[off..off + table.cols()].copy_from_slice(table.row(id));
            off += table.cols();
        }
        if let (Some(id), Some(table)) = (ctx.radical, &tables.radical) {
            row[off..off + table.cols()].copy_from_slice(table.row(id));
            off += table.cols();
        }
        let mut mask = None;
        if let (Some(id), Some(cnn), Some(set)) = (ctx.glyph, &tables.glyph, glyphs) {
            let g = trace
                .glyph_traces
                .entry(id)
                .or_insert_with(|| cnn.forward(set.bitmap(id).expect("checked above")));
            let dst = &mut row[off..off + glyph::FC_SIZE];
            dst.copy_from_slice(&g.output);
            if training && dropout > 0.0 {
                let m = dropout_mask(glyph::FC_SIZE, dropout, rng);
                dst.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
                mask = Some(m);
            }
        }
        trace.glyph_masks.push(mask);
    }
    Ok((x, trace))
}

/// Accumulates table gradients given `d_x = ∂L/∂x` for the rows produced by
/// [`embed_sentence`].
pub fn embed_backward(
    ctxs: &[CharContext],
    tables: &CharTables,
    glyphs: Option<&GlyphSet>,
    trace: &EmbedTrace,
    d_x: &Mat,
    grads: &mut CharTables,
) {
    let mut d_glyph: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (t, ctx) in ctxs.iter().enumerate() {
        let row = d_x.row(t);
        let mut off = 0;
        for ((&id, table), g) in ctx.ngrams.iter().zip(&tables.ngram).zip(&mut grads.ngram) {
            axpy(g.row_mut(id), 1.0, &row[off..off + table.cols()]);
            off += table.cols();
        }
        if let (Some(id), Some(table), Some(g)) = (ctx.radical, &tables.radical, grads.radical.as_mut()) {
            axpy(g.row_mut(id), 1.0, &row[off..off + table.cols()]);
            off += table.cols();
        }
        if let Some(id) = ctx.glyph {
            let src = &row[off..off + glyph::FC_SIZE];
            let acc = d_glyph.entry(id).or_insert_with(|| vec![0.0; glyph::FC_SIZE]);
            match &trace.glyph_masks[t] {
                Some(m) => acc.iter_mut().zip(src).zip(m).for_each(|((a, s), k)| *a += s * k),
                None => axpy(acc, 1.0, src),
            }
        }
    }
    if let (Some(cnn), Some(g), Some(set)) = (&tables.glyph, grads.glyph.as_mut(), glyphs) {
        for (id, d_out) in &d_glyph {
            let bitmap = set.bitmap(*id).expect("glyph id valid");
            cnn.backward(bitmap, &trace.glyph_traces[id], d_out, g);
        }
    }
}

/// Outcome of [`load_pretrained`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub covered: usize,
    pub total: usize,
}

/// Overwrites unigram rows whose character appears in a text embedding file
/// (`token v1 … vdim` per line). Rows not covered keep their values.
pub fn load_pretrained(path: impl AsRef<Path>, vocab: &NgramVocab, table: &mut EmbeddingTable) -> Result<Coverage> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    apply_pretrained(&text, path, vocab, table)
}

pub fn apply_pretrained(text: &str, origin: &Path, vocab: &NgramVocab, table: &mut EmbeddingTable) -> Result<Coverage> {
    if table.rows() != vocab.size(1) {
        return Err(Error::Shape("unigram table does not match the vocabulary".into()));
    }
    let dim = table.cols();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(origin, lineno + 1, format!("bad value {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: values.len(),
                line: lineno + 1,
            });
        }
        let mut chars = token.chars();
        let (Some(ch), None) = (chars.next(), chars.next()) else {
            continue;
        };
        let id = vocab.id(1, ch.encode_utf8(&mut [0; 4]));
        if id > PAD_ID {
            rows.push((id, values));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for (id, values) in rows {
        table.row_mut(id).copy_from_slice(&values);
        seen.insert(id);
    }
    Ok(Coverage {
        covered: seen.len(),
        total: vocab.size(1) - 2,
    })
}
