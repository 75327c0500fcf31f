//! Corpus files: one sentence per line, space-separated `surface_POS`
//! tokens split at the last underscore.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labelspace::{TaggedSentence, Word};

pub fn parse_token(token: &str) -> Option<Word> {
    let (surface, pos) = token.rsplit_once('_')?;
    if surface.is_empty() || pos.is_empty() {
        return None;
    }
    Some(Word::new(surface, pos))
}

/// Parses corpus text; blank lines are skipped. `origin` names the source in
/// error messages.
pub fn parse_corpus(text: &str, origin: &Path) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let words = line
            .split_whitespace()
            .map(|tok| {
                parse_token(tok).ok_or_else(|| {
                    Error::parse(origin, lineno + 1, format!("malformed token {tok:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(TaggedSentence::new(words)?);
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<TaggedSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

pub fn format_sentence(sentence: &TaggedSentence) -> String {
    let mut out = String::new();
    for (i, w) in sentence.words().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&w.surface);
        out.push('_');
        out.push_str(&w.pos);
    }
    out
}

pub fn format_corpus(corpus: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in corpus {
        out.push_str(&format_sentence(s));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &[TaggedSentence]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_corpus(corpus)).map_err(|e| Error::io(path, e))
}

/// Raw text for tagging: one sentence per line with whitespace removed.
/// Empty lines are kept as empty sentences.
pub fn read_raw(path: impl AsRef<Path>) -> Result<Vec<Vec<char>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.chars().filter(|c| !c.is_whitespace()).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_underscore_splits() {
        let w = parse_token("a_b_NN").unwrap();
        assert_eq!(w.surface, "a_b");
        assert_eq!(w.pos, "NN");
        assert!(parse_token("noseparator").is_none());
        assert!(parse_token("_NN").is_none());
        assert!(parse_token("word_").is_none());
    }

    #[test]
    fn parse_skips_blank_lines_and_reports_line() {
        let text = "夏天_NT 太_AD 热_VA\n\n  \n我_PN\n";
        let c = parse_corpus(text, Path::new("x.txt")).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(format_sentence(&c[0]), "夏天_NT 太_AD 热_VA");

        let err = parse_corpus("a_N\nbad\n", Path::new("x.txt")).unwrap_err();
        assert_eq!(err.to_string(), "x.txt:2: malformed token \"bad\"");
    }
}
