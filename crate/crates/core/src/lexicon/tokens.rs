use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Lexicon;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
const RESERVED: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

fn is_split_punct(c: char) -> bool {
    c.is_ascii_punctuation() && c != '-' && c != '_' && c != '\''
}

/// Lowercases and splits on whitespace and punctuation, without joining
/// multiword terms.
pub fn split_words(caption: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in caption.to_lowercase().split_whitespace() {
        let mut cur = String::new();
        for c in chunk.chars() {
            if is_split_punct(c) {
                if !cur.is_empty() {
                    words.push(std::mem::take(&mut cur));
                }
                words.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words
}

pub(super) fn tokenize(lex: &Lexicon, caption: &str) -> Vec<String> {
    let words = split_words(caption);
    let mut out = Vec::with_capacity(words.len());
    let mut i = 0;
    'outer: while i < words.len() {
        for mw in lex.multiword() {
            if words[i..].starts_with(mw) {
                out.push(mw.join("_"));
                i += mw.len();
                continue 'outer;
            }
        }
        out.push(words[i].clone());
        i += 1;
    }
    out
}

/// Joins tokens back into text. Inverse of tokenization up to case.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let punct = t.chars().count() == 1 && t.chars().all(is_split_punct);
        if !out.is_empty() && !punct {
            out.push(' ');
        }
        out.push_str(&t.replace('_', " "));
    }
    out
}

/// Token ↔ id map with `<pad>`, `<start>`, `<end>`, `<unk>` at ids 0..3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved tokens first, then by frequency (descending) and
    /// lexicographically within equal frequency.
    pub fn build<I, C, S>(captions: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for caption in captions {
            for t in caption {
                let t = t.as_ref();
                if !RESERVED.contains(&t) {
                    *freq.entry(t.to_string()).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(Error::CheckpointCorrupt(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::CheckpointCorrupt(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of `token`, or `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::VocabOverflow {
                id,
                size: self.tokens.len(),
            })
    }

    /// `<start> tokens… <end>`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        std::iter::once(START)
            .chain(tokens.iter().map(|t| self.id(t.as_ref())))
            .chain(std::iter::once(END))
            .collect()
    }

    /// Drops `<pad>`/`<start>` and stops at the first `<end>`.
    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for &id in ids {
            match id {
                END => break,
                PAD | START => {}
                _ => out.push(self.token(id)?.to_string()),
            }
        }
        Ok(out)
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}
