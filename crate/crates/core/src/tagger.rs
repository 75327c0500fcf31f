//! Loading models for inference, tagging raw text and timing it.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::archive;
use crate::crf::ScoreLattice;
use crate::error::Result;
use crate::labelspace::TaggedSentence;
use crate::model::{Ensemble, Model};
use crate::trainer::make_buckets;

/// One model or an ensemble of models sharing a label space.
#[derive(Debug, Clone)]
pub struct Tagger {
    models: Vec<Model>,
}

impl Tagger {
    pub fn new(models: Vec<Model>) -> Result<Self> {
        Ensemble::new(models.iter().collect())?;
        Ok(Self { models })
    }

    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        Self::new(paths.iter().map(archive::load).collect::<Result<_>>()?)
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn ensemble(&self) -> Ensemble<'_> {
        Ensemble::new(self.models.iter().collect()).expect("checked in new")
    }

    /// Empty sentences come back as empty sentences.
    pub fn tag(&self, sentences: &[Vec<char>], batch_size: usize, bucket_width: usize) -> Result<Vec<TaggedSentence>> {
        self.ensemble().tag_batch(sentences, batch_size, bucket_width)
    }

    /// Tags like [`Tagger::tag`] while timing score computation and
    /// decoding separately.
    pub fn tag_timed(
        &self,
        sentences: &[Vec<char>],
        batch_size: usize,
        bucket_width: usize,
    ) -> Result<(Vec<TaggedSentence>, Timing)> {
        let ens = self.ensemble();
        let lengths: Vec<usize> = sentences.iter().map(Vec::len).collect();
        let buckets = make_buckets(&lengths, bucket_width, batch_size)?;
        let mut out = vec![TaggedSentence::default(); sentences.len()];
        let mut timing = Timing::default();
        for bucket in &buckets {
            let t0 = Instant::now();
            let lats: Vec<ScoreLattice> = bucket
                .members
                .par_iter()
                .map(|&i| ens.ensemble_scores(&sentences[i], bucket.max_len))
                .collect::<Result<_>>()?;
            let t1 = Instant::now();
            let tagged: Vec<TaggedSentence> = bucket
                .members
                .par_iter()
                .zip(&lats)
                .map(|(&i, lat)| self.models[0].decode_lattice(&sentences[i], lat))
                .collect::<Result<_>>()?;
            let t2 = Instant::now();
            timing.scoring_secs += (t1 - t0).as_secs_f64();
            timing.decoding_secs += (t2 - t1).as_secs_f64();
            for (&i, s) in bucket.members.iter().zip(tagged) {
                out[i] = s;
            }
        }
        Ok((out, timing))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timing {
    /// Representation, encoder and emission scores.
    pub scoring_secs: f64,
    /// Viterbi decoding.
    pub decoding_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub models: usize,
    pub labels: usize,
    pub sentences: usize,
    pub chars: usize,
    pub init_secs: f64,
    pub tag_secs: f64,
    pub timing: Timing,
}

impl BenchReport {
    pub fn sentences_per_sec(&self) -> f64 {
        self.sentences as f64 / self.tag_secs.max(f64::MIN_POSITIVE)
    }

    pub fn chars_per_sec(&self) -> f64 {
        self.chars as f64 / self.tag_secs.max(f64::MIN_POSITIVE)
    }

    pub fn to_text(&self) -> String {
        format!(
            "models={}\nlabels={}\nsentences={}\nchars={}\ninit_secs={:.6}\ntag_secs={:.6}\nscoring_secs={:.6}\ndecoding_secs={:.6}\nsentences_per_sec={:.2}\nchars_per_sec={:.2}\n",
            self.models,
            self.labels,
            self.sentences,
            self.chars,
            self.init_secs,
            self.tag_secs,
            self.timing.scoring_secs,
            self.timing.decoding_secs,
            self.sentences_per_sec(),
            self.chars_per_sec(),
        )
    }
}

/// Loads the models (timed as initialisation) and tags `sentences`.
pub fn bench<P: AsRef<Path>>(
    paths: &[P],
    sentences: &[Vec<char>],
    batch_size: usize,
    bucket_width: usize,
) -> Result<(Vec<TaggedSentence>, BenchReport)> {
    let t0 = Instant::now();
    let tagger = Tagger::load(paths)?;
    let init_secs = t0.elapsed().as_secs_f64();
    let (out, report) = bench_loaded(&tagger, sentences, batch_size, bucket_width)?;
    Ok((out, BenchReport { init_secs, ..report }))
}

/// Throughput of an already loaded tagger; `init_secs` is zero.
pub fn bench_loaded(
    tagger: &Tagger,
    sentences: &[Vec<char>],
    batch_size: usize,
    bucket_width: usize,
) -> Result<(Vec<TaggedSentence>, BenchReport)> {
    let t0 = Instant::now();
    let (out, timing) = tagger.tag_timed(sentences, batch_size, bucket_width)?;
    let tag_secs = t0.elapsed().as_secs_f64();
    Ok((
        out,
        BenchReport {
            models: tagger.models.len(),
            labels: tagger.models[0].labels.k(),
            sentences: sentences.len(),
            chars: sentences.iter().map(Vec::len).sum(),
            init_secs: 0.0,
            tag_secs,
            timing,
        },
    ))
}
