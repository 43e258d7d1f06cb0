use crate::data::{Story, BOS};
use crate::error::{Error, Result};
use crate::model::{Bound, Selection};
use crate::numerics::{Tape, Tensor, Var};
use crate::recurrent::{embed, gru_step, linear, mlp};

/// Where each sentence's visual input comes from.
#[derive(Clone, Debug)]
pub enum VisualSource {
    /// One fixed vector per sentence (g_t from the selector).
    PerSentence(Vec<Var>),
    /// The same vector for every sentence (enc-dec).
    Constant(Var),
    /// Soft attention over photo rows of `v`, driven by the decoder state
    /// at the start of each sentence (enc-attn-dec).
    Attention { v: Var, n: usize },
}

impl VisualSource {
    /// Visual vector for sentence `t` given decoder state `h`, plus the
    /// attention weights when the source is attentive.
    pub fn visual(
        &self,
        tape: &mut Tape,
        m: &Bound<'_>,
        t: usize,
        h: Var,
    ) -> Result<(Var, Option<Var>)> {
        match self {
            VisualSource::PerSentence(gs) => gs
                .get(t)
                .map(|&g| (g, None))
                .ok_or_else(|| Error::Contract(format!("no summary vector for sentence {t}"))),
            VisualSource::Constant(c) => Ok((*c, None)),
            &VisualSource::Attention { v, n } => {
                let alpha = attention_weights(tape, m, v, n, h)?;
                Ok((tape.matmul(alpha, v)?, Some(alpha)))
            }
        }
    }
}

/// softmax_i(MLP([h, v_i])) over the n photos.
pub fn attention_weights(tape: &mut Tape, m: &Bound<'_>, v: Var, n: usize, h: Var) -> Result<Var> {
    let rep = tape.repeat_rows(h, n)?;
    let joint = tape.concat(&[rep, v], 1)?;
    let scores = mlp(tape, &m.p.attn_mlp, joint)?;
    let scores = tape.reshape(scores, &[n])?;
    tape.softmax(scores, 0)
}

/// One generator step: GRU over [embed(prev), g], then the vocabulary
/// projection. Returns (logits, new state).
pub fn decode_word_step(
    tape: &mut Tape,
    m: &Bound<'_>,
    prev_word: usize,
    g: Var,
    h: Var,
) -> Result<(Var, Var)> {
    let w = embed(tape, &m.p.embedding, prev_word)?;
    let x = tape.concat(&[w, g], 0)?;
    let h_next = gru_step(tape, &m.p.gen_gru, x, h)?;
    let logits = linear(tape, &m.p.vocab_proj, h_next)?;
    Ok((logits, h_next))
}

pub fn initial_state(tape: &mut Tape, m: &Bound<'_>) -> Var {
    tape.constant(Tensor::zeros(&[m.config.d_g]))
}

/// Teacher-forced log-likelihood of `sentences`.
///
/// Sentence t starts from BOS and conditions on the visual input for t. The
/// decoder state carries over sentence boundaries unless the model resets it.
/// Returns the total log-probability and, for attentive sources, the
/// per-sentence attention weights.
pub fn teacher_forced_log_prob(
    tape: &mut Tape,
    m: &Bound<'_>,
    source: &VisualSource,
    sentences: &[Vec<usize>],
) -> Result<(Var, Vec<Var>)> {
    let vocab = m.config.vocab;
    let mut h = initial_state(tape, m);
    let mut terms = Vec::new();
    let mut attention = Vec::new();
    for (t, sentence) in sentences.iter().enumerate() {
        if t > 0 && !m.config.carry_state {
            h = initial_state(tape, m);
        }
        let (g, alpha) = source.visual(tape, m, t, h)?;
        attention.extend(alpha);
        let mut prev = BOS;
        for &tok in sentence {
            if tok >= vocab {
                return Err(Error::Index(format!(
                    "token id {tok} with vocabulary size {vocab}"
                )));
            }
            let (logits, next) = decode_word_step(tape, m, prev, g, h)?;
            h = next;
            let logp = tape.log_softmax(logits, 0)?;
            terms.push(tape.pick(logp, tok)?);
            prev = tok;
        }
    }
    let total = match terms.is_empty() {
        true => tape.constant(Tensor::scalar(0.0)),
        false => tape.add_all(&terms)?,
    };
    Ok((total, attention))
}

/// log p(S) under the summaries in `sel`.
pub fn story_log_prob(
    tape: &mut Tape,
    m: &Bound<'_>,
    sel: &Selection,
    story: &Story,
) -> Result<Var> {
    let source = VisualSource::PerSentence(sel.summaries.clone());
    Ok(teacher_forced_log_prob(tape, m, &source, story.sentences())?.0)
}
