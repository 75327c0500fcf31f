//! Single-file model archives.
//!
//! Layout:
//!
//! ```text
//! JOINTSEG-MODEL 1\n
//! <header byte length>\n
//! <JSON header>\n
//! <tensor data: f64 little-endian, tensors in header order, row-major>
//! ```
//!
//! The header holds the training configuration, label space, n-gram
//! vocabulary, radical table, glyph character list and the name and shape of
//! every tensor. A glyph set, when present, is stored as the tensor
//! `glyphset` (one 900-pixel row per listed character).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::charrepr::{CharTables, GlyphCnn, GlyphSet, NgramVocab, RadicalTable};
use crate::crf::CrfParams;
use crate::encoder::GruParams;
use crate::error::{Error, Result};
use crate::labelspace::LabelSpace;
use crate::linalg::Mat;
use crate::model::{Model, ModelParams};
use crate::trainer::TrainConfig;

pub const MAGIC: &str = "JOINTSEG-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    labels: LabelSpace,
    vocab: NgramVocab,
    radicals: Option<RadicalTable>,
    glyph_chars: Option<Vec<char>>,
    tensors: Vec<TensorInfo>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Archive(msg.into())
}

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let glyph_matrix = model.glyphs.as_ref().map(GlyphSet::to_matrix);
    let mut tensors: Vec<(String, &Mat)> = model.params.tensors();
    if let Some(m) = &glyph_matrix {
        tensors.push(("glyphset".into(), m));
    }
    let header = Header {
        config: model.config.clone(),
        labels: model.labels.clone(),
        vocab: model.vocab.clone(),
        radicals: model.radicals.clone(),
        glyph_chars: model.glyphs.as_ref().map(|g| g.chars().to_vec()),
        tensors: tensors
            .iter()
            .map(|(name, m)| TensorInfo {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&header).map_err(|e| bad(e.to_string()))?;
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\n{}\n{json}\n", json.len()).into_bytes();
    let floats: usize = tensors.iter().map(|(_, m)| m.as_slice().len()).sum();
    out.reserve(floats * 8);
    for (_, m) in &tensors {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
    *pos += nl + 1;
    std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not UTF-8"))
}

/// Parameter skeleton with the shapes recorded in the header.
fn skeleton(h: &Header) -> Result<ModelParams> {
    let find = |name: &str| h.tensors.iter().find(|t| t.name == name);
    let ngram = (1..=h.vocab.max_order())
        .map(|o| {
            find(&format!("ngram.{o}"))
                .map(|t| Mat::zeros(t.rows, t.cols))
                .ok_or_else(|| bad(format!("missing tensor ngram.{o}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let radical = find("radical").map(|t| Mat::zeros(t.rows, t.cols));
    let glyph = h.tensors.iter().any(|t| t.name.starts_with("glyph.")).then(GlyphCnn::zeros);
    let gru = |dir: &str| -> Result<GruParams> {
        let w = find(&format!("gru.{dir}.w")).ok_or_else(|| bad(format!("missing tensor gru.{dir}.w")))?;
        if w.rows % 3 != 0 {
            return Err(bad("GRU input weights must have 3·hidden rows"));
        }
        Ok(GruParams::zeros(w.cols, w.rows / 3))
    };
    let fwd = gru("fwd")?;
    let bwd = gru("bwd")?;
    let crf_w = find("crf.w").ok_or_else(|| bad("missing tensor crf.w"))?;
    Ok(ModelParams {
        chars: CharTables { ngram, radical, glyph },
        fwd,
        bwd,
        crf: CrfParams::zeros(crf_w.cols, crf_w.rows),
    })
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut pos = 0;
    let magic = take_line(bytes, &mut pos)?;
    let version = magic
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad("not a model archive"))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(bad(format!("unsupported archive version {version} (expected {FORMAT_VERSION})")));
    }
    let len: usize = take_line(bytes, &mut pos)?
        .parse()
        .map_err(|_| bad("bad header length"))?;
    if bytes.len() < pos + len + 1 || bytes[pos + len] != b'\n' {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[pos..pos + len]).map_err(|e| bad(format!("bad header: {e}")))?;
    pos += len + 1;

    let mut params = skeleton(&header)?;
    let expected: Vec<TensorInfo> = params
        .tensors()
        .into_iter()
        .map(|(name, m)| TensorInfo {
            name,
            rows: m.rows(),
            cols: m.cols(),
        })
        .collect();
    let n_params = expected.len();
    let glyph_info = header.glyph_chars.as_ref().map(|chars| TensorInfo {
        name: "glyphset".into(),
        rows: chars.len(),
        cols: crate::charrepr::glyph::GLYPH_PIXELS,
    });
    let all: Vec<TensorInfo> = expected.into_iter().chain(glyph_info).collect();
    if all != header.tensors {
        return Err(bad("tensor list does not match the model layout"));
    }
    let total: usize = all.iter().map(|t| t.rows * t.cols).sum();
    let data = &bytes[pos..];
    if data.len() != total * 8 {
        return Err(bad(format!("expected {} bytes of tensor data, found {}", total * 8, data.len())));
    }
    let mut floats = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for m in params.tensors_mut() {
        m.as_mut_slice().iter_mut().for_each(|v| *v = floats.next().expect("length checked"));
    }
    let glyphs = match &header.glyph_chars {
        Some(chars) => {
            let mut m = Mat::zeros(chars.len(), crate::charrepr::glyph::GLYPH_PIXELS);
            m.as_mut_slice().iter_mut().for_each(|v| *v = floats.next().expect("length checked"));
            Some(GlyphSet::from_matrix(chars, &m)?)
        }
        None => None,
    };
    debug_assert!(floats.next().is_none() && n_params > 0);
    Model::from_parts(header.config, header.labels, header.vocab, header.radicals, glyphs, params)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Archive(msg) => Error::Archive(format!("{}: {msg}", path.display())),
        other => other,
    })
}
