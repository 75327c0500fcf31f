//! Synthetic tagged corpora for tests and benchmarks.
//!
//! A lexicon is drawn first: every word gets one tag, and no character is
//! shared between words, so the gold analysis of any sentence is a function
//! of its characters. Sentences are random word sequences over the lexicon.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::labelspace::{TaggedSentence, Word};

const CONTENT_TAGS: [&str; 16] = [
    "NN", "VV", "AD", "NR", "VA", "P", "CD", "LC", "JJ", "PN", "M", "NT", "CC", "DT", "OD", "AS",
];
/// The function-word tag used when `single_char_tag` is set.
pub const FUNCTION_TAG: &str = "DEG";
pub const FUNCTION_WORD: char = '的';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    /// Total number of tags, including the function tag when enabled.
    pub tags: usize,
    pub words_per_tag: usize,
    pub max_word_len: usize,
    /// Sentences stop growing once they reach this many characters.
    pub sentence_chars: usize,
    /// Reserve one tag for the single-character word `的`.
    pub single_char_tag: bool,
    pub lexicon_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            tags: 4,
            words_per_tag: 8,
            max_word_len: 3,
            sentence_chars: 30,
            single_char_tag: true,
            lexicon_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn tag_names(&self) -> Vec<String> {
        let content = self.tags - usize::from(self.single_char_tag);
        assert!(content <= CONTENT_TAGS.len(), "at most {} content tags", CONTENT_TAGS.len());
        let mut names: Vec<String> = CONTENT_TAGS[..content].iter().map(|s| s.to_string()).collect();
        if self.single_char_tag {
            names.push(FUNCTION_TAG.to_string());
        }
        names
    }
}

/// Words of the lexicon; characters are never shared between entries.
pub fn lexicon(spec: &SynthSpec) -> Vec<Word> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.lexicon_seed);
    let names = spec.tag_names();
    let content = names.len() - usize::from(spec.single_char_tag);
    let lens: Vec<usize> = (0..content * spec.words_per_tag)
        .map(|_| rng.gen_range(1..=spec.max_word_len.max(1)))
        .collect();
    let needed: usize = lens.iter().sum();
    let excluded = FUNCTION_WORD as u32 - 0x4E00;
    let pool: Vec<char> = sample(&mut rng, 0x9FA6 - 0x4E00 - 1, needed)
        .into_iter()
        .map(|i| {
            let off = if i as u32 >= excluded { i as u32 + 1 } else { i as u32 };
            char::from_u32(0x4E00 + off).expect("CJK codepoint")
        })
        .collect();
    let mut chars = pool.into_iter();
    let mut words: Vec<Word> = lens
        .iter()
        .enumerate()
        .map(|(i, &len)| Word::new(chars.by_ref().take(len).collect::<String>(), names[i / spec.words_per_tag].clone()))
        .collect();
    if spec.single_char_tag {
        words.push(Word::new(FUNCTION_WORD.to_string(), FUNCTION_TAG));
    }
    words
}

/// `n` sentences over the lexicon of `spec`.
pub fn synthetic_corpus(spec: &SynthSpec, n: usize, seed: u64) -> Vec<TaggedSentence> {
    let lex = lexicon(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut words = Vec::new();
            let mut len = 0;
            while len < spec.sentence_chars.max(1) {
                let w = lex[rng.gen_range(0..lex.len())].clone();
                len += w.char_len();
                words.push(w);
            }
            TaggedSentence::new(words).expect("lexicon words are non-empty")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn characters_determine_tags() {
        let spec = SynthSpec::default();
        let lex = lexicon(&spec);
        assert_eq!(lex.len(), 3 * 8 + 1);
        let mut owner: HashMap<char, &str> = HashMap::new();
        for w in &lex {
            for c in w.surface.chars() {
                assert!(owner.insert(c, &w.surface).is_none(), "{c} shared");
            }
        }
        let corpus = synthetic_corpus(&spec, 20, 3);
        assert_eq!(corpus.len(), 20);
        assert!(corpus.iter().all(|s| (30..30 + 3).contains(&s.char_len())));
        assert_eq!(corpus, synthetic_corpus(&spec, 20, 3));
        let deg: Vec<&Word> = corpus
            .iter()
            .flat_map(|s| s.words())
            .filter(|w| w.pos == FUNCTION_TAG)
            .collect();
        assert!(deg.iter().all(|w| w.surface == "的"));
    }
}
