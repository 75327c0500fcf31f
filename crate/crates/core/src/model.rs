//! The full tagger network: character representation → BiGRU → CRF.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::charrepr::{
    apply_pretrained, build_vocab, char_contexts, embed_backward, embed_char, embed_sentence, CharContext, CharTables,
    Coverage, EmbedTrace, GlyphSet, NgramVocab, RadicalTable, PAD_ID,
};
use crate::crf::{average_lattices, emissions_backward, nll_and_grad, viterbi, CrfParams, ScoreLattice};
use crate::encoder::{bigru_backward, bigru_forward_masked, GruParams};
use crate::error::{Error, Result};
use crate::labelspace::{build_label_space, LabelSpace, TaggedSentence, TransitionMask};
use crate::linalg::{axpy, Mat};
use crate::trainer::{make_buckets, TrainConfig};

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub chars: CharTables,
    pub fwd: GruParams,
    pub bwd: GruParams,
    pub crf: CrfParams,
}

impl ModelParams {
    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (o, m) in self.chars.ngram.iter().enumerate() {
            out.push((format!("ngram.{}", o + 1), m));
        }
        if let Some(m) = &self.chars.radical {
            out.push(("radical".into(), m));
        }
        if let Some(g) = &self.chars.glyph {
            out.extend(g.tensors().into_iter().map(|(n, m)| (format!("glyph.{n}"), m)));
        }
        out.extend(self.fwd.tensors().into_iter().map(|(n, m)| (format!("gru.fwd.{n}"), m)));
        out.extend(self.bwd.tensors().into_iter().map(|(n, m)| (format!("gru.bwd.{n}"), m)));
        out.extend(self.crf.tensors().into_iter().map(|(n, m)| (format!("crf.{n}"), m)));
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out: Vec<&mut Mat> = self.chars.ngram.iter_mut().collect();
        if let Some(m) = self.chars.radical.as_mut() {
            out.push(m);
        }
        if let Some(g) = self.chars.glyph.as_mut() {
            out.extend(g.tensors_mut().into_iter().map(|(_, m)| m));
        }
        out.extend(self.fwd.tensors_mut().into_iter().map(|(_, m)| m));
        out.extend(self.bwd.tensors_mut().into_iter().map(|(_, m)| m));
        out.extend(self.crf.tensors_mut().into_iter().map(|(_, m)| m));
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, m)| m.as_slice()).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut().into_iter().map(Mat::as_mut_slice).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            chars: self.chars.zeros_like(),
            fwd: self.fwd.zeros_like(),
            bwd: self.bwd.zeros_like(),
            crf: self.crf.zeros_like(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.tensors_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }
}

/// A trained (or freshly initialised) tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub labels: LabelSpace,
    pub vocab: NgramVocab,
    pub radicals: Option<RadicalTable>,
    pub glyphs: Option<GlyphSet>,
    pub params: ModelParams,
    mask: TransitionMask,
}

impl Model {
    /// Assembles a model from its parts; the transition mask is derived from
    /// the label space.
    pub fn from_parts(
        config: TrainConfig,
        labels: LabelSpace,
        vocab: NgramVocab,
        radicals: Option<RadicalTable>,
        glyphs: Option<GlyphSet>,
        params: ModelParams,
    ) -> Result<Self> {
        if params.crf.k() != labels.k() {
            return Err(Error::Shape("CRF size does not match the label space".into()));
        }
        if params.chars.ngram.len() != vocab.max_order()
            || params.chars.radical.is_some() != radicals.is_some()
            || params.chars.glyph.is_some() != glyphs.is_some()
        {
            return Err(Error::Shape("representation tables do not match the feature set".into()));
        }
        if params.fwd.input_dim() != params.chars.output_dim() || params.crf.w.cols() != 2 * params.fwd.hidden() {
            return Err(Error::Shape("layer sizes do not chain".into()));
        }
        let mask = labels.transition_mask();
        Ok(Self {
            config,
            labels,
            vocab,
            radicals,
            glyphs,
            params,
            mask,
        })
    }

    /// Label space and vocabulary from `train`, Glorot-initialised weights.
    /// Radicals fall back to the builtin table when enabled without one;
    /// glyph features need a glyph set.
    pub fn build(
        train: &[TaggedSentence],
        cfg: &TrainConfig,
        radicals: Option<RadicalTable>,
        glyphs: Option<GlyphSet>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let labels = build_label_space(train)?;
        let chars: Vec<Vec<char>> = train.iter().map(TaggedSentence::chars).collect();
        let vocab = build_vocab(&chars, cfg.max_order)?;
        let radicals = cfg
            .radicals
            .then(|| radicals.unwrap_or_else(|| RadicalTable::builtin().clone()));
        let glyphs = if cfg.glyphs {
            Some(glyphs.ok_or_else(|| Error::Config("glyph features need a glyph bitmap file".into()))?)
        } else {
            None
        };
        let tables = CharTables::init(
            &vocab,
            cfg.char_dim,
            cfg.radicals.then_some(cfg.radical_dim),
            cfg.glyphs,
            rng,
        );
        let d_in = tables.output_dim();
        let params = ModelParams {
            chars: tables,
            fwd: GruParams::init(d_in, cfg.hidden_size, rng),
            bwd: GruParams::init(d_in, cfg.hidden_size, rng),
            crf: CrfParams::init(2 * cfg.hidden_size, labels.k(), rng),
        };
        Self::from_parts(cfg.clone(), labels, vocab, radicals, glyphs, params)
    }

    pub fn transition_mask(&self) -> &TransitionMask {
        &self.mask
    }

    /// Overwrites unigram rows from embedding file text.
    pub fn apply_pretrained(&mut self, text: &str, origin: &Path) -> Result<Coverage> {
        apply_pretrained(text, origin, &self.vocab, &mut self.params.chars.ngram[0])
    }

    fn pad_context(&self) -> CharContext {
        CharContext {
            ngrams: vec![PAD_ID; self.vocab.max_order()],
            radical: self.radicals.as_ref().map(|_| 0),
            glyph: self.glyphs.as_ref().map(|_| 0),
        }
    }

    /// Contexts for `chars`, padded to `padded_len` with padding n-grams.
    pub fn contexts(&self, chars: &[char], padded_len: usize) -> Vec<CharContext> {
        let mut ctxs = char_contexts(chars, &self.vocab, self.radicals.as_ref(), self.glyphs.as_ref());
        ctxs.resize(padded_len.max(chars.len()), self.pad_context());
        ctxs
    }

    /// Training-mode representations of the real positions followed by
    /// dropout-free padding rows, so padding never consumes random draws.
    fn embed_training(
        &self,
        chars: &[char],
        padded_len: usize,
        rng: &mut impl Rng,
    ) -> Result<(Vec<CharContext>, Mat, EmbedTrace)> {
        let p = &self.params;
        let ctxs = self.contexts(chars, chars.len());
        let (real, trace) = embed_sentence(&ctxs, &p.chars, self.glyphs.as_ref(), self.config.dropout, true, rng)?;
        if padded_len <= chars.len() {
            return Ok((ctxs, real, trace));
        }
        let mut pad_rng = ChaCha8Rng::seed_from_u64(0);
        let pad = embed_char(&self.pad_context(), &p.chars, self.glyphs.as_ref(), 0.0, false, &mut pad_rng)?;
        let mut data = real.into_vec();
        for _ in chars.len()..padded_len {
            data.extend_from_slice(&pad);
        }
        Ok((ctxs, Mat::from_vec(padded_len, pad.len(), data), trace))
    }

    /// Inference-mode lattice for a sentence padded to `padded_len`.
    pub fn lattice(&self, chars: &[char], padded_len: usize) -> Result<ScoreLattice> {
        if chars.is_empty() {
            return Err(Error::EmptyInput);
        }
        let ctxs = self.contexts(chars, padded_len);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = &self.params;
        let (x, _) = embed_sentence(&ctxs, &p.chars, self.glyphs.as_ref(), 0.0, false, &mut rng)?;
        let (enc, _) = bigru_forward_masked(&x, chars.len(), &p.fwd, &p.bwd, 0.0, false, &mut rng)?;
        p.crf.lattice(&enc.h, chars.len())
    }

    /// Decodes one lattice into a sentence over `chars`.
    pub fn decode_lattice(&self, chars: &[char], lat: &ScoreLattice) -> Result<TaggedSentence> {
        let path = viterbi(lat, Some(&self.mask));
        self.labels.decode_indices(chars, &path)
    }

    pub fn tag(&self, chars: &[char]) -> Result<TaggedSentence> {
        if chars.is_empty() {
            return Ok(TaggedSentence::default());
        }
        self.decode_lattice(chars, &self.lattice(chars, chars.len())?)
    }

    /// Tags sentences bucket by bucket; output order follows input order.
    pub fn tag_batch(&self, sentences: &[Vec<char>], batch_size: usize, bucket_width: usize) -> Result<Vec<TaggedSentence>> {
        Ensemble::single(self).tag_batch(sentences, batch_size, bucket_width)
    }

    /// Forward and backward pass with dropout for one sentence; adds the
    /// gradients into `grads` and returns the loss.
    pub fn sentence_gradient(
        &self,
        chars: &[char],
        gold: &[usize],
        padded_len: usize,
        grads: &mut ModelParams,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let p = &self.params;
        let rate = self.config.dropout;
        let (ctxs, x, etrace) = self.embed_training(chars, padded_len, rng)?;
        let (enc, gtrace) = bigru_forward_masked(&x, chars.len(), &p.fwd, &p.bwd, rate, true, rng)?;
        let lat = p.crf.lattice(&enc.h, chars.len())?;
        let g = nll_and_grad(&lat, gold, Some(&self.mask))?;

        axpy(grads.crf.trans.as_mut_slice(), 1.0, g.d_t.as_slice());
        axpy(grads.crf.start.row_mut(0), 1.0, &g.d_start);
        axpy(grads.crf.end.row_mut(0), 1.0, &g.d_end);
        let d_h = emissions_backward(&enc.h, &p.crf, &g.d_s, &mut grads.crf);
        let d_x = bigru_backward(&x, &p.fwd, &p.bwd, &gtrace, &d_h, &mut grads.fwd, &mut grads.bwd);
        let d_real = Mat::from_vec(chars.len(), d_x.cols(), d_x.as_slice()[..chars.len() * d_x.cols()].to_vec());
        embed_backward(&ctxs, &p.chars, self.glyphs.as_ref(), &etrace, &d_real, &mut grads.chars);
        Ok(g.loss)
    }

    /// Negative log-likelihood of `sentence` without dropout.
    pub fn nll(&self, sentence: &TaggedSentence) -> Result<f64> {
        let chars = sentence.chars();
        let gold = self.labels.encode_indices(sentence)?;
        let lat = self.lattice(&chars, chars.len())?;
        Ok(nll_and_grad(&lat, &gold, Some(&self.mask))?.loss)
    }

    /// Training-mode loss only, with the same random draws as
    /// [`Model::sentence_gradient`] for an identically seeded `rng`.
    pub fn sentence_loss(&self, chars: &[char], gold: &[usize], padded_len: usize, rng: &mut impl Rng) -> Result<f64> {
        let p = &self.params;
        let rate = self.config.dropout;
        let (_, x, _) = self.embed_training(chars, padded_len, rng)?;
        let (enc, _) = bigru_forward_masked(&x, chars.len(), &p.fwd, &p.bwd, rate, true, rng)?;
        let lat = p.crf.lattice(&enc.h, chars.len())?;
        Ok(nll_and_grad(&lat, gold, Some(&self.mask))?.loss)
    }
}

/// One or more models decoded together by averaging their scores.
#[derive(Debug, Clone)]
pub struct Ensemble<'a> {
    members: Vec<&'a Model>,
}

impl<'a> Ensemble<'a> {
    pub fn single(model: &'a Model) -> Self {
        Self { members: vec![model] }
    }

    /// Fails unless every member has the same label space.
    pub fn new(members: Vec<&'a Model>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyInput)?;
        if members.iter().any(|m| m.labels != first.labels) {
            return Err(Error::LabelSpaceMismatch);
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Averaged emission and transition scores of all members.
    pub fn ensemble_scores(&self, chars: &[char], padded_len: usize) -> Result<ScoreLattice> {
        let lats = self
            .members
            .iter()
            .map(|m| m.lattice(chars, padded_len))
            .collect::<Result<Vec<_>>>()?;
        average_lattices(&lats)
    }

    pub fn tag(&self, chars: &[char]) -> Result<TaggedSentence> {
        if chars.is_empty() {
            return Ok(TaggedSentence::default());
        }
        let lat = self.ensemble_scores(chars, chars.len())?;
        self.members[0].decode_lattice(chars, &lat)
    }

    /// Buckets sentences by length and decodes each batch in parallel.
    pub fn tag_batch(&self, sentences: &[Vec<char>], batch_size: usize, bucket_width: usize) -> Result<Vec<TaggedSentence>> {
        let lengths: Vec<usize> = sentences.iter().map(Vec::len).collect();
        let buckets = make_buckets(&lengths, bucket_width, batch_size)?;
        let mut out = vec![TaggedSentence::default(); sentences.len()];
        for bucket in &buckets {
            let tagged = bucket
                .members
                .par_iter()
                .map(|&i| {
                    let chars = &sentences[i];
                    let lat = self.ensemble_scores(chars, bucket.max_len)?;
                    self.members[0].decode_lattice(chars, &lat)
                })
                .collect::<Result<Vec<_>>>()?;
            for (&i, s) in bucket.members.iter().zip(tagged) {
                out[i] = s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthetic_corpus, SynthSpec};

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden_size: 8,
            char_dim: 6,
            radical_dim: 4,
            max_order: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn tensor_listing_is_consistent() {
        let corpus = synthetic_corpus(&SynthSpec::default(), 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Model::build(&corpus, &small_config(), None, None, &mut rng).unwrap();
        let names: Vec<String> = m.params.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "ngram.1");
        assert_eq!(names[2], "radical");
        assert!(names.iter().any(|n| n == "crf.trans"));
        let shapes: Vec<_> = m.params.tensors().iter().map(|(_, t)| t.shape()).collect();
        let shapes_mut: Vec<_> = m.params.tensors_mut().iter().map(|t| t.shape()).collect();
        assert_eq!(shapes, shapes_mut);
    }

    #[test]
    fn padding_and_ensembles_do_not_change_output() {
        let corpus = synthetic_corpus(&SynthSpec::default(), 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Model::build(&corpus, &small_config(), None, None, &mut rng).unwrap();
        let raw: Vec<Vec<char>> = corpus.iter().map(TaggedSentence::chars).collect();
        let plain: Vec<TaggedSentence> = raw.iter().map(|c| m.tag(c).unwrap()).collect();
        assert_eq!(m.tag_batch(&raw, 1, 1).unwrap(), plain);
        assert_eq!(m.tag_batch(&raw, 500, 7).unwrap(), plain);
        let four = Ensemble::new(vec![&m, &m, &m, &m]).unwrap();
        assert_eq!(four.tag_batch(&raw, 3, 10).unwrap(), plain);
    }

    #[test]
    fn ensemble_rejects_different_label_spaces() {
        let a_corpus = synthetic_corpus(&SynthSpec::default(), 5, 3);
        let b_corpus = vec![TaggedSentence::from_pairs(&[("天", "X")]).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Model::build(&a_corpus, &small_config(), None, None, &mut rng).unwrap();
        let b = Model::build(&b_corpus, &small_config(), None, None, &mut rng).unwrap();
        assert!(matches!(Ensemble::new(vec![&a, &b]), Err(Error::LabelSpaceMismatch)));
    }

    #[test]
    fn glyph_features_need_bitmaps() {
        let corpus = synthetic_corpus(&SynthSpec::default(), 2, 4);
        let cfg = TrainConfig {
            glyphs: true,
            ..small_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(Model::build(&corpus, &cfg, None, None, &mut rng), Err(Error::Config(_))));
    }
}
