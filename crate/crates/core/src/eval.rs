//! Word-level scoring and paired significance testing.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::labelspace::TaggedSentence;

/// A word as a character span `[start, end)` with its tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub pos: String,
}

/// Spans of a sentence in order.
pub fn spans(sentence: &TaggedSentence) -> Vec<Span> {
    let mut start = 0;
    sentence
        .words()
        .iter()
        .map(|w| {
            let end = start + w.char_len();
            let s = Span {
                start,
                end,
                pos: w.pos.clone(),
            };
            start = end;
            s
        })
        .collect()
}

fn key(s: &Span, joint: bool) -> (usize, usize, Option<&str>) {
    (s.start, s.end, joint.then_some(s.pos.as_str()))
}

/// Precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, pred: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(correct, pred);
        let r = ratio(correct, gold);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Self { p, r, f }
    }
}

fn check_aligned(gold: &[TaggedSentence], pred: &[TaggedSentence]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            what: "sentence count",
            left: gold.len(),
            right: pred.len(),
        });
    }
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.raw() != p.raw() {
            return Err(Error::Alignment {
                index: index + 1,
                msg: format!("character sequences differ ({:?} vs {:?})", g.raw(), p.raw()),
            });
        }
    }
    Ok(())
}

/// For every gold word, whether `pred` contains the same span (and tag when
/// `joint`).
fn gold_hits(gold: &TaggedSentence, pred: &TaggedSentence, joint: bool) -> Vec<(Span, bool)> {
    let predicted: HashSet<_> = spans(pred).into_iter().map(|s| (s.start, s.end, s.pos)).collect();
    spans(gold)
        .into_iter()
        .map(|s| {
            let hit = if joint {
                predicted.contains(&(s.start, s.end, s.pos.clone()))
            } else {
                predicted.iter().any(|p| p.0 == s.start && p.1 == s.end)
            };
            (s, hit)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WordCounts {
    pub gold: usize,
    pub pred: usize,
    pub correct: usize,
}

pub fn word_counts(gold: &[TaggedSentence], pred: &[TaggedSentence], joint: bool) -> Result<WordCounts> {
    check_aligned(gold, pred)?;
    let mut c = WordCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        let gs = spans(g);
        let ps = spans(p);
        let gold_keys: HashSet<_> = gs.iter().map(|s| key(s, joint)).collect();
        c.gold += gs.len();
        c.pred += ps.len();
        c.correct += ps.iter().filter(|s| gold_keys.contains(&key(s, joint))).count();
    }
    Ok(c)
}

/// Word-level P/R/F; a predicted word counts when its span (and tag when
/// `joint`) matches a gold word.
pub fn word_f1(gold: &[TaggedSentence], pred: &[TaggedSentence], joint: bool) -> Result<Prf> {
    let c = word_counts(gold, pred, joint)?;
    Ok(Prf::from_counts(c.correct, c.pred, c.gold))
}

/// Surfaces of every word in a corpus.
pub fn vocabulary(corpus: &[TaggedSentence]) -> BTreeSet<String> {
    corpus
        .iter()
        .flat_map(|s| s.words().iter().map(|w| w.surface.clone()))
        .collect()
}

/// Recall over gold words whose surface is not in `train_vocab`; `None`
/// when there are no such words.
pub fn oov_recall(
    gold: &[TaggedSentence],
    pred: &[TaggedSentence],
    train_vocab: &BTreeSet<String>,
    joint: bool,
) -> Result<Option<f64>> {
    check_aligned(gold, pred)?;
    let (mut total, mut hit) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        for ((_, h), w) in gold_hits(g, p, joint).into_iter().zip(g.words()) {
            if !train_vocab.contains(&w.surface) {
                total += 1;
                hit += usize::from(h);
            }
        }
    }
    Ok((total > 0).then(|| hit as f64 / total as f64))
}

fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    for i in 0..=n {
        row.push(c.clone());
        if i < n {
            c = c * (n - i) / (i + 1);
        }
    }
    row
}

/// `num / 2^n` as f64 without overflowing the intermediate values.
fn ratio_pow2(num: &BigUint, n: u64) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let bits = num.bits();
    let shift = bits.saturating_sub(64);
    let mantissa = (num >> shift).to_f64().expect("fits in 64 bits");
    let mut exp = shift as i64 - n as i64;
    let mut v = mantissa;
    while exp < -1000 {
        v *= 2f64.powi(-1000);
        exp += 1000;
    }
    while exp > 1000 {
        v *= 2f64.powi(1000);
        exp -= 1000;
    }
    v * 2f64.powi(exp as i32)
}

fn check_discordant(b: u64, c: u64) -> Result<(u64, u64)> {
    let n = b.checked_add(c).ok_or_else(|| Error::Config("discordant counts overflow".into()))?;
    if n == 0 {
        return Err(Error::NoDiscordantPairs);
    }
    Ok((n, b.min(c)))
}

/// Mid-p McNemar test on discordant counts `b` and `c`:
/// `2·P(X ≤ m) − P(X = m)` for `X ~ Binomial(b + c, ½)`, `m = min(b, c)`,
/// computed with exact integer arithmetic.
pub fn mcnemar_midp(b: u64, c: u64) -> Result<f64> {
    let (n, m) = check_discordant(b, c)?;
    let row = binomial_row(n);
    let tail: BigUint = row[..=m as usize].iter().sum();
    let num = tail * 2u32 - &row[m as usize];
    Ok(ratio_pow2(&num, n).clamp(0.0, 1.0))
}

/// Exact two-sided binomial p-value `min(1, 2·P(X ≤ m))`.
pub fn mcnemar_exact(b: u64, c: u64) -> Result<f64> {
    let (n, m) = check_discordant(b, c)?;
    let row = binomial_row(n);
    let tail: BigUint = row[..=m as usize].iter().sum();
    Ok(ratio_pow2(&(tail * 2u32), n).clamp(0.0, 1.0))
}

/// Outcomes of two systems paired on gold words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairedCounts {
    pub both: u64,
    /// Only system A correct.
    pub only_a: u64,
    /// Only system B correct.
    pub only_b: u64,
    pub neither: u64,
}

pub fn paired_counts(
    gold: &[TaggedSentence],
    a: &[TaggedSentence],
    b: &[TaggedSentence],
    joint: bool,
) -> Result<PairedCounts> {
    check_aligned(gold, a)?;
    check_aligned(gold, b)?;
    let mut out = PairedCounts::default();
    for ((g, pa), pb) in gold.iter().zip(a).zip(b) {
        for ((_, ha), (_, hb)) in gold_hits(g, pa, joint).into_iter().zip(gold_hits(g, pb, joint)) {
            match (ha, hb) {
                (true, true) => out.both += 1,
                (true, false) => out.only_a += 1,
                (false, true) => out.only_b += 1,
                (false, false) => out.neither += 1,
            }
        }
    }
    Ok(out)
}

/// Everything reported by the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sentences: usize,
    pub seg: Prf,
    pub seg_tag: Prf,
    pub seg_counts: WordCounts,
    pub seg_tag_counts: WordCounts,
    pub oov_words: Option<usize>,
    pub oov_recall_seg: Option<f64>,
    pub oov_recall_seg_tag: Option<f64>,
}

pub fn evaluate(gold: &[TaggedSentence], pred: &[TaggedSentence], train_vocab: Option<&BTreeSet<String>>) -> Result<EvalReport> {
    let seg_counts = word_counts(gold, pred, false)?;
    let seg_tag_counts = word_counts(gold, pred, true)?;
    let (oov_words, oov_recall_seg, oov_recall_seg_tag) = match train_vocab {
        Some(v) => {
            let n = gold
                .iter()
                .flat_map(|s| s.words())
                .filter(|w| !v.contains(&w.surface))
                .count();
            (Some(n), oov_recall(gold, pred, v, false)?, oov_recall(gold, pred, v, true)?)
        }
        None => (None, None, None),
    };
    Ok(EvalReport {
        sentences: gold.len(),
        seg: Prf::from_counts(seg_counts.correct, seg_counts.pred, seg_counts.gold),
        seg_tag: Prf::from_counts(seg_tag_counts.correct, seg_tag_counts.pred, seg_tag_counts.gold),
        seg_counts,
        seg_tag_counts,
        oov_words,
        oov_recall_seg,
        oov_recall_seg_tag,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sentences      {}", self.sentences);
        let _ = writeln!(s, "               P         R         F");
        for (name, m) in [("seg", &self.seg), ("seg&tag", &self.seg_tag)] {
            let _ = writeln!(s, "{name:<14} {:.6}  {:.6}  {:.6}", m.p, m.r, m.f);
        }
        let _ = writeln!(
            s,
            "oov words      {}",
            self.oov_words.map_or_else(|| "n/a".into(), |n| n.to_string())
        );
        let _ = writeln!(s, "oov recall     seg {}  seg&tag {}", opt(self.oov_recall_seg), opt(self.oov_recall_seg_tag));
        s
    }

    /// One `key=value` pair per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sentences={}", self.sentences);
        for (name, m, c) in [
            ("seg", &self.seg, &self.seg_counts),
            ("seg_tag", &self.seg_tag, &self.seg_tag_counts),
        ] {
            let _ = writeln!(s, "{name}_p={}", m.p);
            let _ = writeln!(s, "{name}_r={}", m.r);
            let _ = writeln!(s, "{name}_f={}", m.f);
            let _ = writeln!(s, "{name}_gold_words={}", c.gold);
            let _ = writeln!(s, "{name}_pred_words={}", c.pred);
            let _ = writeln!(s, "{name}_correct={}", c.correct);
        }
        let _ = writeln!(
            s,
            "oov_words={}",
            self.oov_words.map_or_else(|| "n/a".into(), |n| n.to_string())
        );
        let kv = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
        let _ = writeln!(s, "oov_recall_seg={}", kv(self.oov_recall_seg));
        let _ = writeln!(s, "oov_recall_seg_tag={}", kv(self.oov_recall_seg_tag));
        s
    }
}
