use crate::data::{Story, STORY_SENTENCES};
use crate::error::Result;
use crate::model::{log_prob, Bound, Prepared};
use crate::numerics::{Rng, Tape, Var};
use crate::training::{RankLossForm, TrainConfig};

/// Draws a uniformly random non-identity reordering of the story's
/// sentences. After 100 identity draws in a row the first two sentences are
/// swapped instead.
pub fn make_negative(story: &Story, rng: &mut Rng) -> Story {
    for _ in 0..100 {
        let order = rng.permutation(STORY_SENTENCES);
        if order.iter().enumerate().any(|(i, &j)| i != j) {
            return story.permuted(&order);
        }
    }
    let mut order: Vec<usize> = (0..STORY_SENTENCES).collect();
    order.swap(0, 1);
    story.permuted(&order)
}

/// Hinge on a pair of log-likelihoods, as a plain number.
pub fn ranking_loss(log_p_pos: f64, log_p_neg: f64, margin: f64, form: RankLossForm) -> f64 {
    match form {
        RankLossForm::Intended => (margin + log_p_neg - log_p_pos).max(0.0),
        RankLossForm::Printed => (margin - log_p_neg + log_p_pos).max(0.0),
    }
}

/// [`ranking_loss`] on the tape.
pub fn ranking_loss_var(
    tape: &mut Tape,
    log_p_pos: Var,
    log_p_neg: Var,
    margin: f64,
    form: RankLossForm,
) -> Result<Var> {
    let diff = match form {
        RankLossForm::Intended => tape.sub(log_p_neg, log_p_pos)?,
        RankLossForm::Printed => tape.sub(log_p_pos, log_p_neg)?,
    };
    let shifted = tape.shift(diff, margin)?;
    tape.relu(shifted)
}

/// L_gen = −log p(S) under whatever visual source `prep` holds (soft-train
/// selection during training).
pub fn generation_loss(tape: &mut Tape, m: &Bound<'_>, prep: &Prepared, story: &Story) -> Result<Var> {
    let lp = log_prob(tape, m, prep, story)?;
    tape.neg(lp)
}

/// Loss terms of one (album, story) item.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub gen: Var,
    /// Absent when λ = 0.
    pub rank: Option<Var>,
}

/// L = L_gen + λ·L_rank with one fresh shuffled negative. With λ = 0 no
/// negative is drawn and the total is the generation loss node itself.
pub fn total_loss(
    tape: &mut Tape,
    m: &Bound<'_>,
    prep: &Prepared,
    story: &Story,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<LossParts> {
    let lp = log_prob(tape, m, prep, story)?;
    let gen = tape.neg(lp)?;
    if cfg.lambda == 0.0 {
        return Ok(LossParts { total: gen, gen, rank: None });
    }
    let negative = make_negative(story, rng);
    let lp_neg = log_prob(tape, m, prep, &negative)?;
    let rank = ranking_loss_var(tape, lp, lp_neg, cfg.margin, cfg.rank_loss_form)?;
    let weighted = tape.scale(rank, cfg.lambda)?;
    let total = tape.add(gen, weighted)?;
    Ok(LossParts { total, gen, rank: Some(rank) })
}
