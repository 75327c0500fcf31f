//! Combinatory boundary × POS labels.
//!
//! Joint segmentation and tagging is cast as character tagging over labels
//! such as `B-NT` or `S-AD`. A [`LabelSpace`] holds the labels that are
//! realizable given the word lengths observed per POS tag in training data,
//! together with the transition structure that keeps decoded sequences
//! well-formed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A word with its POS tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub surface: String,
    pub pos: String,
}

impl Word {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            pos: pos.into(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.surface.chars().count()
    }
}

/// A segmented, POS-tagged sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedSentence {
    words: Vec<Word>,
}

impl TaggedSentence {
    /// Fails if any surface is empty.
    pub fn new(words: Vec<Word>) -> Result<Self> {
        if words.iter().any(|w| w.surface.is_empty()) {
            return Err(Error::EmptyInput);
        }
        Ok(Self { words })
    }

    pub fn from_pairs<S: AsRef<str>, P: AsRef<str>>(pairs: &[(S, P)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(s, p)| Word::new(s.as_ref(), p.as_ref()))
                .collect(),
        )
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn chars(&self) -> Vec<char> {
        self.words.iter().flat_map(|w| w.surface.chars()).collect()
    }

    pub fn raw(&self) -> String {
        self.words.iter().map(|w| w.surface.as_str()).collect()
    }

    pub fn char_len(&self) -> usize {
        self.words.iter().map(Word::char_len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    B,
    I,
    E,
    S,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [BoundaryTag::B, BoundaryTag::I, BoundaryTag::E, BoundaryTag::S];

    pub fn as_char(self) -> char {
        match self {
            BoundaryTag::B => 'B',
            BoundaryTag::I => 'I',
            BoundaryTag::E => 'E',
            BoundaryTag::S => 'S',
        }
    }

    /// True for tags that leave a word open (B and I).
    pub fn is_open(self) -> bool {
        matches!(self, BoundaryTag::B | BoundaryTag::I)
    }

    /// True for tags that begin a word (B and S).
    pub fn starts_word(self) -> bool {
        matches!(self, BoundaryTag::B | BoundaryTag::S)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComboLabel {
    pub boundary: BoundaryTag,
    pub pos: String,
}

impl ComboLabel {
    pub fn new(boundary: BoundaryTag, pos: impl Into<String>) -> Self {
        Self {
            boundary,
            pos: pos.into(),
        }
    }
}

impl fmt::Display for ComboLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.boundary.as_char(), self.pos)
    }
}

impl FromStr for ComboLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad label {s:?}"));
        let (b, pos) = s.split_once('-').ok_or_else(bad)?;
        let boundary = match b {
            "B" => BoundaryTag::B,
            "I" => BoundaryTag::I,
            "E" => BoundaryTag::E,
            "S" => BoundaryTag::S,
            _ => return Err(bad()),
        };
        if pos.is_empty() {
            return Err(bad());
        }
        Ok(ComboLabel::new(boundary, pos))
    }
}

/// One label per character of `sentence`.
pub fn encode_labels(sentence: &TaggedSentence) -> Result<Vec<ComboLabel>> {
    if sentence.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = Vec::with_capacity(sentence.char_len());
    for w in sentence.words() {
        let len = w.char_len();
        if len == 1 {
            out.push(ComboLabel::new(BoundaryTag::S, &w.pos));
            continue;
        }
        out.push(ComboLabel::new(BoundaryTag::B, &w.pos));
        for _ in 0..len - 2 {
            out.push(ComboLabel::new(BoundaryTag::I, &w.pos));
        }
        out.push(ComboLabel::new(BoundaryTag::E, &w.pos));
    }
    Ok(out)
}

/// Rebuilds words from a character label sequence.
///
/// Total on ill-formed input: a word opens at `B` or `S`, `I`/`E` extend the
/// open word or open a new one if none is open, and a word takes the POS of
/// its first character.
pub fn decode_labels(chars: &[char], labels: &[ComboLabel]) -> Result<TaggedSentence> {
    if chars.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "characters vs labels",
            left: chars.len(),
            right: labels.len(),
        });
    }
    let mut words = Vec::new();
    let mut open: Option<Word> = None;
    for (&ch, label) in chars.iter().zip(labels) {
        match label.boundary {
            BoundaryTag::B | BoundaryTag::S => {
                if let Some(w) = open.take() {
                    words.push(w);
                }
                let w = Word::new(ch.to_string(), &label.pos);
                if label.boundary == BoundaryTag::S {
                    words.push(w);
                } else {
                    open = Some(w);
                }
            }
            BoundaryTag::I | BoundaryTag::E => {
                let mut w = open
                    .take()
                    .unwrap_or_else(|| Word::new(String::new(), &label.pos));
                w.surface.push(ch);
                if label.boundary == BoundaryTag::E {
                    words.push(w);
                } else {
                    open = Some(w);
                }
            }
        }
    }
    if let Some(w) = open {
        words.push(w);
    }
    TaggedSentence::new(words)
}

/// True if `labels` is a well-formed BIES sequence with consistent POS tags.
pub fn is_well_formed(labels: &[ComboLabel]) -> bool {
    let Some(first) = labels.first() else {
        return true;
    };
    if !first.boundary.starts_word() || labels.last().is_some_and(|l| l.boundary.is_open()) {
        return false;
    }
    labels.windows(2).all(|w| transition_ok(&w[0], &w[1]))
}

fn transition_ok(prev: &ComboLabel, next: &ComboLabel) -> bool {
    if prev.boundary.is_open() {
        matches!(next.boundary, BoundaryTag::I | BoundaryTag::E) && next.pos == prev.pos
    } else {
        next.boundary.starts_word()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct LengthStats {
    max_len: usize,
    has_single: bool,
}

/// The pruned label universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "LabelSpaceRepr", into = "LabelSpaceRepr")]
pub struct LabelSpace {
    labels: Vec<ComboLabel>,
    index_of: HashMap<ComboLabel, usize>,
    stats: BTreeMap<String, LengthStats>,
}

#[derive(Serialize, Deserialize)]
struct LabelSpaceRepr {
    labels: Vec<ComboLabel>,
    stats: BTreeMap<String, LengthStats>,
}

impl From<LabelSpaceRepr> for LabelSpace {
    fn from(r: LabelSpaceRepr) -> Self {
        Self::from_parts(r.labels, r.stats)
    }
}

impl From<LabelSpace> for LabelSpaceRepr {
    fn from(s: LabelSpace) -> Self {
        LabelSpaceRepr {
            labels: s.labels,
            stats: s.stats,
        }
    }
}

impl LabelSpace {
    fn from_parts(labels: Vec<ComboLabel>, stats: BTreeMap<String, LengthStats>) -> Self {
        let index_of = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Self {
            labels,
            index_of,
            stats,
        }
    }

    /// Builds a space from an explicit label list, keeping the given order.
    pub fn from_labels(labels: Vec<ComboLabel>) -> Self {
        let mut stats: BTreeMap<String, LengthStats> = BTreeMap::new();
        for l in &labels {
            let e = stats.entry(l.pos.clone()).or_default();
            let len = match l.boundary {
                BoundaryTag::S => {
                    e.has_single = true;
                    1
                }
                BoundaryTag::B | BoundaryTag::E => 2,
                BoundaryTag::I => 3,
            };
            e.max_len = e.max_len.max(len);
        }
        Self::from_parts(labels, stats)
    }

    pub fn labels(&self) -> &[ComboLabel] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, idx: usize) -> &ComboLabel {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &ComboLabel) -> Option<usize> {
        self.index_of.get(label).copied()
    }

    pub fn contains(&self, label: &ComboLabel) -> bool {
        self.index_of.contains_key(label)
    }

    /// Longest observed word per POS tag.
    pub fn pos_max_len(&self) -> BTreeMap<&str, usize> {
        self.stats
            .iter()
            .map(|(p, s)| (p.as_str(), s.max_len))
            .collect()
    }

    pub fn pos_tags(&self) -> impl Iterator<Item = &str> {
        self.stats.keys().map(String::as_str)
    }

    /// Label indices for `sentence`; fails on labels outside the space.
    pub fn encode_indices(&self, sentence: &TaggedSentence) -> Result<Vec<usize>> {
        encode_labels(sentence)?
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::Config(format!("label {l} is not in the label space")))
            })
            .collect()
    }

    pub fn decode_indices(&self, chars: &[char], idx: &[usize]) -> Result<TaggedSentence> {
        let labels: Vec<ComboLabel> = idx.iter().map(|&i| self.labels[i].clone()).collect();
        decode_labels(chars, &labels)
    }

    /// BIES well-formedness over this space's indices.
    pub fn transition_mask(&self) -> TransitionMask {
        let k = self.k();
        let mut allowed = vec![false; k * k];
        for (i, a) in self.labels.iter().enumerate() {
            for (j, b) in self.labels.iter().enumerate() {
                allowed[i * k + j] = transition_ok(a, b);
            }
        }
        TransitionMask {
            k,
            allowed,
            start: self.labels.iter().map(|l| l.boundary.starts_word()).collect(),
            end: self.labels.iter().map(|l| !l.boundary.is_open()).collect(),
        }
    }
}

/// Keeps `(boundary, pos)` combos that are realizable under the word lengths
/// observed per POS tag: `S` needs a one-character word, `B`/`E` a word of
/// length ≥ 2 and `I` one of length ≥ 3.
pub fn build_label_space(corpus: &[TaggedSentence]) -> Result<LabelSpace> {
    let mut stats: BTreeMap<String, LengthStats> = BTreeMap::new();
    for w in corpus.iter().flat_map(|s| s.words()) {
        let e = stats.entry(w.pos.clone()).or_default();
        let len = w.char_len();
        e.max_len = e.max_len.max(len);
        e.has_single |= len == 1;
    }
    if stats.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut labels = Vec::new();
    for (pos, s) in &stats {
        for b in BoundaryTag::ALL {
            let keep = match b {
                BoundaryTag::S => s.has_single,
                BoundaryTag::B | BoundaryTag::E => s.max_len >= 2,
                BoundaryTag::I => s.max_len >= 3,
            };
            if keep {
                labels.push(ComboLabel::new(b, pos));
            }
        }
    }
    Ok(LabelSpace::from_parts(labels, stats))
}

/// Allowed transitions, starts and ends over label indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    k: usize,
    allowed: Vec<bool>,
    start: Vec<bool>,
    end: Vec<bool>,
}

impl TransitionMask {
    /// A mask that permits everything.
    pub fn open(k: usize) -> Self {
        Self {
            k,
            allowed: vec![true; k * k],
            start: vec![true; k],
            end: vec![true; k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn allows(&self, prev: usize, next: usize) -> bool {
        self.allowed[prev * self.k + next]
    }

    #[inline]
    pub fn can_start(&self, label: usize) -> bool {
        self.start[label]
    }

    #[inline]
    pub fn can_end(&self, label: usize) -> bool {
        self.end[label]
    }
}
