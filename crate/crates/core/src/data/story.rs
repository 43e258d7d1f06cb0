use serde::{Deserialize, Serialize};

use crate::data::vocab::EOS;
use crate::error::{Error, Result};

/// Number of summary steps, and so of sentences per story.
pub const STORY_SENTENCES: usize = 5;

/// Five token-id sentences, each terminated by EOS.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Story {
    sentences: Vec<Vec<usize>>,
}

impl Story {
    pub fn new(sentences: Vec<Vec<usize>>, vocab_size: usize) -> Result<Self> {
        if sentences.len() != STORY_SENTENCES {
            return Err(Error::Data(format!(
                "a story has {STORY_SENTENCES} sentences, got {}",
                sentences.len()
            )));
        }
        for (t, s) in sentences.iter().enumerate() {
            if s.last() != Some(&EOS) {
                return Err(Error::Data(format!("sentence {t} does not end in EOS")));
            }
            if let Some(&bad) = s.iter().find(|&&id| id >= vocab_size) {
                return Err(Error::Data(format!(
                    "sentence {t} has token id {bad} outside a vocabulary of {vocab_size}"
                )));
            }
        }
        Ok(Story { sentences })
    }

    pub fn sentences(&self) -> &[Vec<usize>] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Vec<usize>> {
        self.sentences
    }

    /// Token count including every EOS.
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// The story with its sentences reordered: sentence `t` of the result is
    /// sentence `order[t]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Story {
        Story {
            sentences: order.iter().map(|&i| self.sentences[i].clone()).collect(),
        }
    }

    /// All tokens in order with EOS markers removed.
    pub fn words(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .flat_map(|s| s.iter().copied().filter(|&id| id != EOS))
            .collect()
    }
}
