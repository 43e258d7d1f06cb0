//! Album encoder, photo selector, story generator, the enc-dec and
//! enc-attn-dec baselines, and decoding.

mod beam;
mod encoder;
mod generator;
mod params;
mod selector;

pub use beam::{beam_decode, greedy_decode, Hypothesis};
pub use encoder::{encode_album, AlbumEncoding};
pub use generator::{
    attention_weights, decode_word_step, initial_state, story_log_prob, teacher_forced_log_prob,
    VisualSource,
};
pub use params::{module_of, Architecture, Bound, Model, ModelConfig, ModelParams};
pub use selector::{
    masked_argmax, select_step, select_summary, Selection, SelectionMode, SelectionResult,
};

use crate::data::{Story, EOS};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::recurrent::linear;

/// Per-album state shared by every story scored against the album.
pub struct Prepared {
    pub enc: AlbumEncoding,
    pub source: VisualSource,
    /// Present for the hierarchical model only.
    pub selection: Option<Selection>,
}

/// Encodes an album and builds the visual source the model's architecture
/// uses. `mode` only affects the hierarchical model.
pub fn prepare(
    tape: &mut Tape,
    m: &Bound<'_>,
    features: &Tensor,
    mode: &SelectionMode,
) -> Result<Prepared> {
    let enc = encode_album(tape, m, features)?;
    let (source, selection) = match m.config.architecture {
        Architecture::HAttn => {
            let sel = select_summary(tape, m, &enc, mode)?;
            (VisualSource::PerSentence(sel.summaries.clone()), Some(sel))
        }
        Architecture::EncDec => {
            let c = linear(tape, &m.p.encdec_proj, enc.final_state)?;
            (VisualSource::Constant(c), None)
        }
        Architecture::EncAttnDec => (VisualSource::Attention { v: enc.v, n: enc.n }, None),
    };
    Ok(Prepared {
        enc,
        source,
        selection,
    })
}

/// log p(S | album) for whatever architecture `m` is.
pub fn log_prob(tape: &mut Tape, m: &Bound<'_>, prep: &Prepared, story: &Story) -> Result<Var> {
    Ok(teacher_forced_log_prob(tape, m, &prep.source, story.sentences())?.0)
}

/// enc-dec baseline likelihood: the projected final encoder state is the
/// visual input of every sentence.
pub fn baseline_enc_dec_log_prob(
    tape: &mut Tape,
    m: &Bound<'_>,
    enc: &AlbumEncoding,
    story: &Story,
) -> Result<Var> {
    let c = linear(tape, &m.p.encdec_proj, enc.final_state)?;
    Ok(teacher_forced_log_prob(tape, m, &VisualSource::Constant(c), story.sentences())?.0)
}

/// enc-attn-dec baseline likelihood plus the attention row of each sentence.
pub fn baseline_enc_attn_dec_log_prob(
    tape: &mut Tape,
    m: &Bound<'_>,
    enc: &AlbumEncoding,
    story: &Story,
) -> Result<(Var, Vec<Var>)> {
    let source = VisualSource::Attention { v: enc.v, n: enc.n };
    teacher_forced_log_prob(tape, m, &source, story.sentences())
}

/// A decoded story with the photo attention that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedStory {
    pub story: Story,
    /// Sum of the winning hypotheses' log-probabilities.
    pub log_prob: f64,
    /// T×n attention: selector probabilities (h-attn) or decoder attention
    /// (enc-attn-dec). `None` for enc-dec.
    pub attention: Option<Tensor>,
    /// Selected photo per step (h-attn only).
    pub selected: Option<Vec<usize>>,
}

/// Decodes one sentence per summary step with `beam_decode`, carrying the
/// winning hypothesis' decoder state into the next sentence.
pub fn decode_story(
    tape: &mut Tape,
    m: &Bound<'_>,
    prep: &Prepared,
    beam: usize,
    max_len: usize,
) -> Result<GeneratedStory> {
    let mut h = initial_state(tape, m);
    let mut sentences = Vec::with_capacity(m.config.steps);
    let mut attention = Vec::new();
    let mut total = 0.0;
    for t in 0..m.config.steps {
        if t > 0 && !m.config.carry_state {
            h = initial_state(tape, m);
        }
        let (g, alpha) = prep.source.visual(tape, m, t, h)?;
        if let Some(a) = alpha {
            attention.push(tape.value(a).data().to_vec());
        }
        let hyp = beam_decode(tape, m, g, h, beam, max_len)?;
        h = hyp.state;
        total += hyp.log_prob;
        let mut tokens = hyp.tokens;
        if tokens.last() != Some(&EOS) {
            tokens.push(EOS);
        }
        sentences.push(tokens);
    }
    let (attention, selected) = match &prep.selection {
        Some(sel) => {
            let r = sel.result(tape)?;
            (Some(r.probs), Some(r.indices))
        }
        None if attention.is_empty() => (None, None),
        None => (Some(Tensor::from_rows(&attention)?), None),
    };
    Ok(GeneratedStory {
        story: Story::new(sentences, m.config.vocab)?,
        log_prob: total,
        attention,
        selected,
    })
}

impl Model {
    /// log p(S | album), without recording gradients.
    pub fn story_log_prob(&self, features: &Tensor, story: &Story, mode: &SelectionMode) -> Result<f64> {
        let mut tape = Tape::new();
        let m = self.bind(&mut tape, false);
        let prep = prepare(&mut tape, &m, features, mode)?;
        let lp = log_prob(&mut tape, &m, &prep, story)?;
        Ok(tape.scalar(lp))
    }

    /// Generates a story. The hierarchical model selects photos with `mode`
    /// (normally [`SelectionMode::HardTest`]).
    pub fn generate(
        &self,
        features: &Tensor,
        mode: &SelectionMode,
        beam: usize,
        max_len: usize,
    ) -> Result<GeneratedStory> {
        if matches!(mode, SelectionMode::SoftTrain) && self.config.architecture == Architecture::HAttn {
            return Err(Error::Contract(
                "generation selects photos in hard-test or oracle mode".into(),
            ));
        }
        let mut tape = Tape::new();
        let m = self.bind(&mut tape, false);
        let prep = prepare(&mut tape, &m, features, mode)?;
        decode_story(&mut tape, &m, &prep, beam, max_len)
    }

    /// encode → hard-test selection → beam decoding per summary step.
    pub fn generate_story(&self, features: &Tensor, beam: usize, max_len: usize) -> Result<Story> {
        Ok(self.generate(features, &SelectionMode::HardTest, beam, max_len)?.story)
    }

    /// Hard-test selection result for an album.
    pub fn select(&self, features: &Tensor, mode: &SelectionMode) -> Result<SelectionResult> {
        let mut tape = Tape::new();
        let m = self.bind(&mut tape, false);
        let enc = encode_album(&mut tape, &m, features)?;
        select_summary(&mut tape, &m, &enc, mode)?.result(&tape)
    }

    /// Photo representations V (n×k).
    pub fn encode(&self, features: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let m = self.bind(&mut tape, false);
        let enc = encode_album(&mut tape, &m, features)?;
        Ok(tape.value(enc.v).clone())
    }
}
