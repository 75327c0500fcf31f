//! Character n-gram vocabularies.
//!
//! The order-`o` n-gram of position `i` covers
//! `[i − ⌈(o−1)/2⌉, i + ⌊(o−1)/2⌋]`, so even orders extend one character
//! further to the left. Positions past either sentence edge read as
//! [`PAD_CHAR`].

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stands in for characters beyond the sentence edges.
pub const PAD_CHAR: char = '\u{E000}';

pub const UNK_ID: usize = 0;
pub const PAD_ID: usize = 1;

/// Inclusive span `(start, end)`; may extend outside `0..n`.
pub fn ngram_span(i: usize, order: usize) -> (isize, isize) {
    debug_assert!(order >= 1);
    let i = i as isize;
    let left = (order as isize - 1 + 1) / 2;
    let right = (order as isize - 1) / 2;
    (i - left, i + right)
}

/// The order-`o` n-gram string at position `i` of `chars`.
pub fn ngram_at(chars: &[char], i: usize, order: usize) -> String {
    let (start, end) = ngram_span(i, order);
    (start..=end)
        .map(|p| {
            if p < 0 || p as usize >= chars.len() {
                PAD_CHAR
            } else {
                chars[p as usize]
            }
        })
        .collect()
}

/// Dense per-order ids; id 0 of every order is UNK and id 1 the all-padding
/// n-gram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct NgramVocab {
    entries: Vec<Vec<String>>,
    index: Vec<HashMap<String, usize>>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    /// Entries from id 2 upward, per order.
    orders: Vec<Vec<String>>,
}

impl From<VocabRepr> for NgramVocab {
    fn from(r: VocabRepr) -> Self {
        Self::from_entries(r.orders)
    }
}

impl From<NgramVocab> for VocabRepr {
    fn from(v: NgramVocab) -> Self {
        VocabRepr {
            orders: v.entries.into_iter().map(|e| e[2..].to_vec()).collect(),
        }
    }
}

impl NgramVocab {
    fn from_entries(orders: Vec<Vec<String>>) -> Self {
        let mut entries = Vec::with_capacity(orders.len());
        let mut index = Vec::with_capacity(orders.len());
        for (o, grams) in orders.into_iter().enumerate() {
            let mut e = vec![String::new(), std::iter::repeat_n(PAD_CHAR, o + 1).collect()];
            e.extend(grams);
            let idx = e
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, g)| (g.clone(), i))
                .collect();
            entries.push(e);
            index.push(idx);
        }
        Self { entries, index }
    }

    pub fn max_order(&self) -> usize {
        self.entries.len()
    }

    /// Ids of `order` (1-based), including UNK and PAD.
    pub fn size(&self, order: usize) -> usize {
        self.entries[order - 1].len()
    }

    pub fn id(&self, order: usize, gram: &str) -> usize {
        self.index[order - 1].get(gram).copied().unwrap_or(UNK_ID)
    }

    /// `None` for the UNK id.
    pub fn gram(&self, order: usize, id: usize) -> Option<&str> {
        (id != UNK_ID).then(|| self.entries[order - 1].get(id).map(String::as_str)).flatten()
    }

    /// Ids of every order at every position, `[position][order-1]`.
    pub fn ids_for(&self, chars: &[char]) -> Vec<Vec<usize>> {
        (0..chars.len())
            .map(|i| {
                (1..=self.max_order())
                    .map(|o| self.id(o, &ngram_at(chars, i, o)))
                    .collect()
            })
            .collect()
    }
}

/// Collects every n-gram of orders `1..=max_order` occurring in `sentences`.
pub fn build_vocab<S: AsRef<[char]>>(sentences: &[S], max_order: usize) -> Result<NgramVocab> {
    if max_order == 0 {
        return Err(Error::Config("max_order must be at least 1".into()));
    }
    let mut sets = vec![BTreeSet::new(); max_order];
    for chars in sentences {
        let chars = chars.as_ref();
        for i in 0..chars.len() {
            for (o, set) in sets.iter_mut().enumerate() {
                set.insert(ngram_at(chars, i, o + 1));
            }
        }
    }
    let orders = sets
        .into_iter()
        .enumerate()
        .map(|(o, set)| {
            let pad: String = std::iter::repeat_n(PAD_CHAR, o + 1).collect();
            set.into_iter().filter(|g| *g != pad).collect()
        })
        .collect();
    Ok(NgramVocab::from_entries(orders))
}
