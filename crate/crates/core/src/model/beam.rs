//! Length-capped beam search over [`decode_word_step`].
//!
//! Candidates at each step are ranked by accumulated log-probability, then by
//! the rank of their parent hypothesis, then by token id. An EOS candidate is
//! completed only when it ranks within the top `beam` candidates of its step
//! (so `beam = 1` is exactly greedy decoding); the best `beam` non-EOS
//! candidates stay active. Hypotheses that reach `max_len` tokens without EOS
//! are completed as they are. Search stops once the best completed hypothesis
//! scores at least as well as every active one, since scores never increase.

use std::cmp::Ordering;

use crate::data::{BOS, EOS};
use crate::error::{Error, Result};
use crate::model::{decode_word_step, Bound};
use crate::numerics::{softmax_along, Tape, Var};

#[derive(Clone, Debug)]
pub struct Hypothesis {
    /// Generated ids, ending in EOS unless truncated at `max_len`.
    pub tokens: Vec<usize>,
    /// Sum of per-step log p(token) along `tokens`.
    pub log_prob: f64,
    /// Decoder state after the step that produced the last token.
    pub state: Var,
}

impl Hypothesis {
    pub fn is_complete(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }
}

struct Candidate {
    log_prob: f64,
    parent: usize,
    token: usize,
    state: Var,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(a.parent.cmp(&b.parent))
        .then(a.token.cmp(&b.token))
}

pub fn beam_decode(
    tape: &mut Tape,
    m: &Bound<'_>,
    g: Var,
    h0: Var,
    beam: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    if beam == 0 || max_len == 0 {
        return Err(Error::Contract(format!(
            "beam ({beam}) and max_len ({max_len}) must be positive"
        )));
    }
    let mut active = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: h0,
    }];
    // Completed hypotheses in completion order.
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..max_len {
        let mut candidates = Vec::new();
        for (parent, hyp) in active.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let (logits, state) = decode_word_step(tape, m, prev, g, hyp.state)?;
            let logp = softmax_along(tape.value(logits), 0, true)?;
            for (token, &lp) in logp.data().iter().enumerate() {
                candidates.push(Candidate {
                    log_prob: hyp.log_prob + lp,
                    parent,
                    token,
                    state,
                });
            }
        }
        candidates.sort_by(rank);

        let last_step = step + 1 == max_len;
        let mut next = Vec::with_capacity(beam);
        let mut kept = 0;
        for (r, c) in candidates.into_iter().enumerate() {
            if kept == beam {
                break;
            }
            let mut tokens = active[c.parent].tokens.clone();
            tokens.push(c.token);
            let hyp = Hypothesis {
                tokens,
                log_prob: c.log_prob,
                state: c.state,
            };
            if c.token == EOS {
                if r < beam {
                    finished.push(hyp);
                }
                continue;
            }
            kept += 1;
            if last_step {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        active = next;
        if active.is_empty() {
            break;
        }
        let best_active = active[0].log_prob;
        if finished.iter().any(|f| f.log_prob >= best_active) {
            break;
        }
    }

    finished
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.log_prob.total_cmp(&b.log_prob).then(ib.cmp(ia)))
        .map(|(_, h)| h)
        .ok_or_else(|| Error::State("beam search finished without a hypothesis".into()))
}

/// Picks the most likely token at every step (lowest id on ties) until EOS
/// or `max_len`.
pub fn greedy_decode(
    tape: &mut Tape,
    m: &Bound<'_>,
    g: Var,
    h0: Var,
    max_len: usize,
) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::Contract("max_len must be positive".into()));
    }
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: h0,
    };
    while hyp.tokens.len() < max_len && !hyp.is_complete() {
        let prev = hyp.tokens.last().copied().unwrap_or(BOS);
        let (logits, state) = decode_word_step(tape, m, prev, g, hyp.state)?;
        let logp = softmax_along(tape.value(logits), 0, true)?;
        let mut best = 0;
        for (i, &lp) in logp.data().iter().enumerate() {
            if lp > logp.data()[best] {
                best = i;
            }
        }
        hyp.tokens.push(best);
        hyp.log_prob += logp.data()[best];
        hyp.state = state;
    }
    Ok(hyp)
}
