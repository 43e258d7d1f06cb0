//! Corpus BLEU-n and CIDEr over token sequences.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::{Error, Result};

/// Counts of every n-gram of `tokens`.
pub fn ngram_counts<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-n with uniform weights.
///
/// Clipped n-gram matches and candidate n-gram totals are summed over the
/// corpus before dividing. With several references per item, clipping uses
/// the maximum count over references and the effective reference length is
/// the one closest to the hypothesis (shorter wins ties). The brevity
/// penalty exp(1 − r/c) applies when c ≤ r; any zero precision gives 0.
pub fn bleu_n<T: Eq + Hash + Clone>(hypotheses: &[Vec<T>], references: &[Vec<Vec<T>>], n: usize) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::Contract("BLEU of an empty corpus".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Contract(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    if n == 0 {
        return Err(Error::Contract("BLEU order must be positive".into()));
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut c, mut r) = (0usize, 0usize);
    for (hyp, refs) in hypotheses.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Contract("hypothesis without references".into()));
        }
        c += hyp.len();
        r += refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .expect("non-empty");
        for order in 1..=n {
            let mut max_ref: HashMap<Vec<T>, usize> = HashMap::new();
            for rf in refs {
                for (g, k) in ngram_counts(rf, order) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in ngram_counts(hyp, order) {
                matched[order - 1] += k.min(max_ref.get(&g).copied().unwrap_or(0));
                total[order - 1] += k;
            }
        }
    }
    if matched.iter().any(|&m| m == 0) {
        return Ok(0.0);
    }
    let log_mean = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n as f64;
    let bp = if c <= r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * log_mean.exp())
}

const CIDER_N: usize = 4;

/// CIDEr (n = 1..4, no length penalty or count clipping), as in the COCO
/// caption toolkit: term-frequency × log IDF vectors with document
/// frequencies taken over the reference sets, cosine similarity per order
/// averaged over references and orders, scaled by 10, mean over items.
///
/// The IDF of an n-gram present in every item's references is 0, so a
/// one-item corpus always scores 0.
pub fn cider<T: Eq + Hash + Clone>(hypotheses: &[Vec<T>], references: &[Vec<Vec<T>>]) -> Result<f64> {
    Ok(cider_per_item(hypotheses, references)?.iter().sum::<f64>() / hypotheses.len() as f64)
}

/// Per-item CIDEr scores; [`cider`] is their mean.
pub fn cider_per_item<T: Eq + Hash + Clone>(
    hypotheses: &[Vec<T>],
    references: &[Vec<Vec<T>>],
) -> Result<Vec<f64>> {
    if hypotheses.len() != references.len() {
        return Err(Error::Contract(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    if references.is_empty() || references.iter().any(Vec::is_empty) {
        return Err(Error::Contract("CIDEr needs at least one reference per item".into()));
    }
    let mut df: HashMap<Vec<T>, usize> = HashMap::new();
    for refs in references {
        let mut seen = HashSet::new();
        for rf in refs {
            for order in 1..=CIDER_N {
                seen.extend(ngram_counts(rf, order).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_docs = (references.len() as f64).ln();
    let vectorize = |tokens: &[T]| -> Vec<(HashMap<Vec<T>, f64>, f64)> {
        (1..=CIDER_N)
            .map(|order| {
                let v: HashMap<Vec<T>, f64> = ngram_counts(tokens, order)
                    .into_iter()
                    .map(|(g, tf)| {
                        let d = df.get(&g).copied().unwrap_or(0).max(1) as f64;
                        let w = tf as f64 * (log_docs - d.ln());
                        (g, w)
                    })
                    .collect();
                let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
                (v, norm)
            })
            .collect()
    };
    Ok(hypotheses
        .iter()
        .zip(references)
        .map(|(hyp, refs)| {
            let h = vectorize(hyp);
            let mut score = 0.0;
            for rf in refs {
                let r = vectorize(rf);
                for ((hv, hn), (rv, rn)) in h.iter().zip(&r) {
                    if *hn > 0.0 && *rn > 0.0 {
                        let dot: f64 = hv.iter().map(|(g, x)| x * rv.get(g).copied().unwrap_or(0.0)).sum();
                        score += dot / (hn * rn);
                    }
                }
            }
            10.0 * score / (CIDER_N * refs.len()) as f64
        })
        .collect())
}
