use crate::error::{Error, Result};
use crate::model::Bound;
use crate::numerics::{Tape, Tensor, Var};
use crate::recurrent::bi_gru;

/// Photo representations v_i = ReLU([h→_i, h←_i] + f_i), stacked as an n×k matrix.
#[derive(Clone, Debug)]
pub struct AlbumEncoding {
    pub v: Var,
    pub n: usize,
    /// [h→_n, h←_1]: the last state of each direction, width k.
    pub final_state: Var,
}

pub fn encode_album(tape: &mut Tape, m: &Bound<'_>, features: &Tensor) -> Result<AlbumEncoding> {
    let k = m.config.k;
    if features.rank() != 2 || features.cols() != k {
        return Err(Error::Dimension(format!(
            "album features {:?} do not have width k = {k}",
            features.shape()
        )));
    }
    let n = features.rows();
    let f = tape.constant(features.clone());
    let xs: Vec<Var> = (0..n).map(|i| tape.row(f, i)).collect::<Result<_>>()?;
    let hs = bi_gru(tape, &m.p.enc_fwd, &m.p.enc_bwd, &xs)?;
    let mut rows = Vec::with_capacity(n);
    for (&h, &x) in hs.iter().zip(&xs) {
        let fused = tape.add(h, x)?;
        let v = tape.relu(fused)?;
        rows.push(tape.reshape(v, &[1, k])?);
    }
    let v = tape.concat(&rows, 0)?;

    let half = k / 2;
    let fwd_last = tape.slice(hs[n - 1], 0, half)?;
    let bwd_first = tape.slice(hs[0], half, half)?;
    let final_state = tape.concat(&[fwd_last, bwd_first], 0)?;
    Ok(AlbumEncoding { v, n, final_state })
}
