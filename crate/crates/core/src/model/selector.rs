//! Pointer-style summary-photo selection.
//!
//! At step t a GRU advances the selector state from the previous attended
//! summary g_{t-1}; each photo is scored by σ(MLP([state, v_i])) and the
//! scores are renormalized to a distribution p_t. The summary vector is
//! g_t = p_tᵀV.

use crate::error::{Error, Result};
use crate::model::{AlbumEncoding, Bound};
use crate::numerics::{Tape, Tensor, Var};
use crate::recurrent::{gru_step, mlp};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    /// Soft attention with no masking; used for training and likelihoods.
    SoftTrain,
    /// Masks photos picked at earlier steps; picks the argmax per step.
    HardTest,
    /// One-hot attention on the given photo indices.
    Oracle(Vec<usize>),
}

/// Tape-resident selection output.
#[derive(Clone, Debug)]
pub struct Selection {
    /// p_t, each of length n.
    pub probs: Vec<Var>,
    /// g_t = p_tᵀV, each of width k.
    pub summaries: Vec<Var>,
    /// Argmax photo per step (distinct in hard-test and oracle modes).
    pub indices: Vec<usize>,
}

/// Plain-value copy of a [`Selection`].
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    /// T×n
    pub probs: Tensor,
    pub indices: Vec<usize>,
    /// T×k
    pub summaries: Tensor,
}

impl Selection {
    pub fn result(&self, tape: &Tape) -> Result<SelectionResult> {
        let rows = |vs: &[Var]| {
            Tensor::from_rows(
                &vs.iter()
                    .map(|&v| tape.value(v).data().to_vec())
                    .collect::<Vec<_>>(),
            )
        };
        Ok(SelectionResult {
            probs: rows(&self.probs)?,
            indices: self.indices.clone(),
            summaries: rows(&self.summaries)?,
        })
    }
}

/// Index of the largest unmasked entry; ties go to the lower index.
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if mask.get(i).copied().unwrap_or(false) {
            continue;
        }
        if best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// One selector step. `mask[i] == true` excludes photo i.
pub fn select_step(
    tape: &mut Tape,
    m: &Bound<'_>,
    v: Var,
    prev_g: Var,
    state: Var,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let n = tape.shape(v)[0];
    if mask.len() != n {
        return Err(Error::Dimension(format!("mask of {} for {n} photos", mask.len())));
    }
    if mask.iter().all(|&masked| masked) {
        return Err(Error::Contract("every photo is masked".into()));
    }
    let new_state = gru_step(tape, &m.p.sel_gru, prev_g, state)?;
    let rep = tape.repeat_rows(new_state, n)?;
    let joint = tape.concat(&[rep, v], 1)?;
    let scores = mlp(tape, &m.p.sel_mlp, joint)?;
    let scores = tape.reshape(scores, &[n])?;
    let mut raw = tape.sigmoid(scores)?;
    if mask.iter().any(|&masked| masked) {
        let keep = Tensor::vector(mask.iter().map(|&x| if x { 0.0 } else { 1.0 }).collect());
        let keep = tape.constant(keep);
        raw = tape.mul(raw, keep)?;
    }
    let total = tape.sum(raw)?;
    let p = tape.div(raw, total)?;
    Ok((p, new_state))
}

/// Runs the selector for `steps` summary steps.
pub fn select_summary(
    tape: &mut Tape,
    m: &Bound<'_>,
    enc: &AlbumEncoding,
    mode: &SelectionMode,
) -> Result<Selection> {
    let (n, steps) = (enc.n, m.config.steps);
    let mut sel = Selection {
        probs: Vec::with_capacity(steps),
        summaries: Vec::with_capacity(steps),
        indices: Vec::with_capacity(steps),
    };

    if let SelectionMode::Oracle(indices) = mode {
        if indices.len() != steps {
            return Err(Error::Contract(format!(
                "oracle selection needs {steps} indices, got {}",
                indices.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::Index(format!("oracle photo {i} in an album of {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Contract(format!("oracle photo {i} repeated")));
            }
            let mut onehot = vec![0.0; n];
            onehot[i] = 1.0;
            let p = tape.constant(Tensor::vector(onehot));
            sel.summaries.push(tape.matmul(p, enc.v)?);
            sel.probs.push(p);
            sel.indices.push(i);
        }
        return Ok(sel);
    }

    let hard = *mode == SelectionMode::HardTest;
    if hard && n < steps {
        return Err(Error::Contract(format!(
            "hard selection of {steps} photos from an album of {n}"
        )));
    }
    let uniform = tape.constant(Tensor::full(&[n], 1.0 / n as f64));
    let mut prev_g = tape.matmul(uniform, enc.v)?;
    let mut state = tape.constant(Tensor::zeros(&[m.config.d_s]));
    let mut mask = vec![false; n];
    for _ in 0..steps {
        let (p, next) = select_step(tape, m, enc.v, prev_g, state, &mask)?;
        state = next;
        let pick = masked_argmax(tape.value(p).data(), &mask)
            .ok_or_else(|| Error::Contract("no photo left to select".into()))?;
        if hard {
            mask[pick] = true;
        }
        let g = tape.matmul(p, enc.v)?;
        sel.probs.push(p);
        sel.summaries.push(g);
        sel.indices.push(pick);
        prev_g = g;
    }
    Ok(sel)
}
