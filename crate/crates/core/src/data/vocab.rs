use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token ↔ id bijection. Specials occupy ids 0–3; the rest are assigned by
/// descending corpus frequency, then lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    min_count: usize,
    tokens: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_tokens(r.tokens, r.min_count)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            min_count: v.min_count,
            tokens: v.tokens,
        }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::build(std::iter::empty::<&str>(), 1)
    }
}

impl Vocabulary {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for tok in corpus {
            *counts.entry(tok).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && !SPECIALS.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens, min_count).expect("constructed tokens are unique")
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Format("vocabulary must start with the special tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == SPECIALS.len()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Renders ids as text, dropping EOS/BOS/PAD.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD | BOS | EOS))
            .map(|&id| self.token(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Lowercases and splits into word runs and single punctuation marks.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() || ch == '\'' {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Token ids of `text` followed by EOS; unknown words map to UNK.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    split_words(text)
        .iter()
        .map(|w| vocab.id(w))
        .chain(std::iter::once(EOS))
        .collect()
}
