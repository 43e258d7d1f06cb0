use serde::{Deserialize, Serialize};

use crate::data::Story;
use crate::error::{Error, Result};
use crate::model::{Model, SelectionMode};
use crate::numerics::Tensor;

/// log p(story | album) for every album of the pool, soft-train selection.
/// With `per_word` the totals are divided by the story's token count.
pub fn album_scores(model: &Model, story: &Story, pool: &[Tensor], per_word: bool) -> Result<Vec<f64>> {
    let tokens = story.token_count() as f64;
    pool.iter()
        .map(|f| {
            let lp = model.story_log_prob(f, story, &SelectionMode::SoftTrain)?;
            Ok(if per_word { lp / tokens } else { lp })
        })
        .collect()
}

/// 1-based rank of `target` under descending score; equal scores rank the
/// lower index first.
pub fn rank_of(scores: &[f64], target: usize) -> Result<usize> {
    let s = *scores
        .get(target)
        .ok_or_else(|| Error::Index(format!("album {target} of a pool of {}", scores.len())))?;
    if scores.iter().any(|x| x.is_nan()) {
        return Err(Error::NumericDomain("NaN retrieval score".into()));
    }
    let above = scores
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > s || (x == s && j < target))
        .count();
    Ok(above + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalEntry {
    pub scores: Vec<f64>,
    pub rank: usize,
}

/// Scores `story` against the pool and ranks album `target`.
pub fn retrieve(model: &Model, story: &Story, pool: &[Tensor], target: usize, per_word: bool) -> Result<RetrievalEntry> {
    let scores = album_scores(model, story, pool, per_word)?;
    let rank = rank_of(&scores, target)?;
    Ok(RetrievalEntry { scores, rank })
}

fn nonempty(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        Err(Error::Contract("no retrieval ranks".into()))
    } else {
        Ok(())
    }
}

/// Fraction of ranks ≤ k.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    nonempty(ranks)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Middle sorted rank; the mean of the two middles for even counts.
pub fn median_rank(ranks: &[usize]) -> Result<f64> {
    nonempty(ranks)?;
    let mut r = ranks.to_vec();
    r.sort_unstable();
    let m = r.len() / 2;
    Ok(if r.len() % 2 == 1 {
        r[m] as f64
    } else {
        (r[m - 1] + r[m]) as f64 / 2.0
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ranks: Vec<usize>,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub median_rank: f64,
}

impl RetrievalResult {
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        Ok(RetrievalResult {
            recall_at_1: recall_at_k(&ranks, 1)?,
            recall_at_5: recall_at_k(&ranks, 5)?,
            recall_at_10: recall_at_k(&ranks, 10)?,
            median_rank: median_rank(&ranks)?,
            ranks,
        })
    }
}

/// Queries each album of the pool with its own story; `stories[i]` belongs
/// to `pool[i]`.
pub fn retrieval_eval(model: &Model, stories: &[Story], pool: &[Tensor], per_word: bool) -> Result<RetrievalResult> {
    if stories.len() != pool.len() {
        return Err(Error::Contract(format!("{} queries for {} albums", stories.len(), pool.len())));
    }
    let ranks = stories
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(retrieve(model, s, pool, i, per_word)?.rank))
        .collect::<Result<Vec<_>>>()?;
    RetrievalResult::from_ranks(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(recall_at_k(&[1, 3, 7], 5).unwrap(), 2.0 / 3.0);
        assert_eq!(median_rank(&[1, 3, 7]).unwrap(), 3.0);
        assert_eq!(median_rank(&[2, 4]).unwrap(), 3.0);
        assert_eq!(recall_at_k(&[1, 1], 1).unwrap(), 1.0);
        assert!(median_rank(&[]).is_err());
        assert!(recall_at_k(&[], 1).is_err());
    }

    #[test]
    fn ties_rank_lower_index_first() {
        let s = [-3.0, -1.0, -1.0, -5.0];
        assert_eq!(rank_of(&s, 1).unwrap(), 1);
        assert_eq!(rank_of(&s, 2).unwrap(), 2);
        assert_eq!(rank_of(&s, 0).unwrap(), 3);
        assert_eq!(rank_of(&s, 3).unwrap(), 4);
        assert_eq!(rank_of(&[-2.0], 0).unwrap(), 1);
    }
}
