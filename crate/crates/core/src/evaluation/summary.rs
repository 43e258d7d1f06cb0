use std::collections::BTreeSet;

use crate::data::STORY_SENTENCES;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Precision and recall of a predicted summary against the union G of the
/// ground-truth sets: |pred ∩ G| / |pred| and |pred ∩ G| / |G|.
pub fn summary_precision_recall<S: AsRef<str>>(pred: &[S], gt_sets: &[Vec<S>]) -> Result<(f64, f64)> {
    let p: BTreeSet<&str> = pred.iter().map(AsRef::as_ref).collect();
    if p.len() != pred.len() {
        return Err(Error::Contract("predicted summary repeats a photo".into()));
    }
    if pred.is_empty() {
        return Err(Error::Contract("empty predicted summary".into()));
    }
    let g: BTreeSet<&str> = gt_sets.iter().flatten().map(AsRef::as_ref).collect();
    if g.is_empty() {
        return Err(Error::Contract("no ground-truth summary photos".into()));
    }
    let hits = p.intersection(&g).count() as f64;
    Ok((hits / p.len() as f64, hits / g.len() as f64))
}

/// The `k` photos with the largest accumulated attention (column sums of
/// the T×n matrix), in descending order of mass; ties go to the lower index.
pub fn attention_aggregate_topk(attn: &Tensor, k: usize) -> Result<Vec<usize>> {
    if attn.rank() != 2 || attn.rows() == 0 {
        return Err(Error::Contract(format!("attention must be T×n, got {:?}", attn.shape())));
    }
    let n = attn.cols();
    if n < k {
        return Err(Error::Contract(format!("cannot pick {k} photos from {n}")));
    }
    let mut mass = vec![0.0; n];
    for row in attn.data().chunks(n) {
        for (m, a) in mass.iter_mut().zip(row) {
            *m += a;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// [`attention_aggregate_topk`] with the story length as `k`.
pub fn attention_aggregate_summary(attn: &Tensor) -> Result<Vec<usize>> {
    attention_aggregate_topk(attn, STORY_SENTENCES)
}
