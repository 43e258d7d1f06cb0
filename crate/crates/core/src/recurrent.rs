//! GRU cells, bidirectional sequence runners, MLPs and embedding tables.
//!
//! Parameter structs are generic over their leaf type: `T = Tensor` for
//! storage, `T = Var` once bound onto a [`Tape`] for a forward pass.

use crate::error::{Error, Result};
use crate::numerics::{seeded_init, Init, Rng, Tape, Tensor, Var};

pub(crate) fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

/// Generates `visit`, `visit_mut` and `try_map` for a struct whose fields are
/// all leaves of type `T`.
macro_rules! leaf_params {
    ($name:ident { $($field:ident),+ $(,)? }) => {
        impl<T> $name<T> {
            pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
                $( f($crate::recurrent::join(prefix, stringify!($field)), &self.$field); )+
            }

            pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
                $( f($crate::recurrent::join(prefix, stringify!($field)), &mut self.$field); )+
            }

            pub fn try_map<U, E>(
                &self,
                prefix: &str,
                f: &mut dyn FnMut(&str, &T) -> std::result::Result<U, E>,
            ) -> std::result::Result<$name<U>, E> {
                Ok($name {
                    $( $field: f(&$crate::recurrent::join(prefix, stringify!($field)), &self.$field)?, )+
                })
            }
        }
    };
}

/// Weights of one GRU cell. `w_*` are d_in×d_h, `u_*` are d_h×d_h.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<T = Tensor> {
    pub w_z: T,
    pub w_r: T,
    pub w_h: T,
    pub u_z: T,
    pub u_r: T,
    pub u_h: T,
    pub b_z: T,
    pub b_r: T,
    pub b_h: T,
}

leaf_params!(GruParams { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h });

impl GruParams<Tensor> {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        GruParams {
            w_z: Tensor::zeros(&[d_in, d_h]),
            w_r: Tensor::zeros(&[d_in, d_h]),
            w_h: Tensor::zeros(&[d_in, d_h]),
            u_z: Tensor::zeros(&[d_h, d_h]),
            u_r: Tensor::zeros(&[d_h, d_h]),
            u_h: Tensor::zeros(&[d_h, d_h]),
            b_z: Tensor::zeros(&[d_h]),
            b_r: Tensor::zeros(&[d_h]),
            b_h: Tensor::zeros(&[d_h]),
        }
    }

    /// Xavier weights, zero biases.
    pub fn init(rng: &mut Rng, d_in: usize, d_h: usize) -> Result<Self> {
        let mut p = Self::zeros(d_in, d_h);
        for w in [&mut p.w_z, &mut p.w_r, &mut p.w_h, &mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *w = seeded_init(rng, &w.shape().to_vec(), Init::Xavier)?;
        }
        Ok(p)
    }

    /// (d_in, d_h), after checking every shape against them.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let ws = self.w_z.shape();
        if ws.len() != 2 {
            return Err(Error::Dimension(format!("GRU w_z shape {ws:?}")));
        }
        let (d_in, d_h) = (ws[0], ws[1]);
        let expect = |t: &Tensor, shape: &[usize], name: &str| {
            if t.shape() == shape {
                Ok(())
            } else {
                Err(Error::Dimension(format!(
                    "GRU {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )))
            }
        };
        expect(&self.w_r, &[d_in, d_h], "w_r")?;
        expect(&self.w_h, &[d_in, d_h], "w_h")?;
        for (t, name) in [(&self.u_z, "u_z"), (&self.u_r, "u_r"), (&self.u_h, "u_h")] {
            expect(t, &[d_h, d_h], name)?;
        }
        for (t, name) in [(&self.b_z, "b_z"), (&self.b_r, "b_r"), (&self.b_h, "b_h")] {
            expect(t, &[d_h], name)?;
        }
        Ok((d_in, d_h))
    }
}

/// Affine layer `x·W + b`, W: d_in×d_out.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T = Tensor> {
    pub weight: T,
    pub bias: T,
}

leaf_params!(Linear { weight, bias });

impl Linear<Tensor> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[d_in, d_out]),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn init(rng: &mut Rng, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Linear {
            weight: seeded_init(rng, &[d_in, d_out], Init::Xavier)?,
            bias: Tensor::zeros(&[d_out]),
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Stack of affine layers with tanh between them and no output activation.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T = Tensor> {
    pub layers: Vec<Linear<T>>,
}

impl<T> MlpParams<T> {
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layer{i}")), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &format!("layer{i}")), f);
        }
    }

    pub fn try_map<U, E>(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &T) -> std::result::Result<U, E>,
    ) -> std::result::Result<MlpParams<U>, E> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| l.try_map(&join(prefix, &format!("layer{i}")), f))
            .collect::<std::result::Result<_, E>>()?;
        Ok(MlpParams { layers })
    }
}

impl MlpParams<Tensor> {
    /// `widths` = [d_in, hidden..., d_out].
    pub fn init(rng: &mut Rng, widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        let layers = widths
            .windows(2)
            .map(|w| Linear::init(rng, w[0], w[1]))
            .collect::<Result<_>>()?;
        Ok(MlpParams { layers })
    }

    pub fn zeros(widths: &[usize]) -> Self {
        MlpParams {
            layers: widths.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        }
    }

    /// Checks that consecutive layers chain; returns (d_in, d_out).
    pub fn dims(&self) -> Result<(usize, usize)> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Dimension("MLP without layers".into()))?;
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].d_out() != pair[1].d_in() {
                return Err(Error::Dimension(format!(
                    "MLP layer {i} outputs {} but layer {} takes {}",
                    pair[0].d_out(),
                    i + 1,
                    pair[1].d_in()
                )));
            }
        }
        for l in &self.layers {
            if l.bias.shape() != [l.d_out()] {
                return Err(Error::Dimension(format!(
                    "MLP bias {:?} does not match width {}",
                    l.bias.shape(),
                    l.d_out()
                )));
            }
        }
        Ok((first.d_in(), self.layers.last().map(Linear::d_out).unwrap_or(0)))
    }
}

/// Word embedding matrix, one row per vocabulary id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T = Tensor> {
    pub table: T,
}

leaf_params!(EmbeddingTable { table });

impl EmbeddingTable<Tensor> {
    pub fn init(rng: &mut Rng, vocab: usize, width: usize) -> Result<Self> {
        Ok(EmbeddingTable {
            table: seeded_init(rng, &[vocab, width], Init::Uniform(-0.1, 0.1))?,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }
}

/// One GRU update:
/// z = σ(x·W_z + h·U_z + b_z), r = σ(x·W_r + h·U_r + b_r),
/// h̃ = tanh(x·W_h + (r⊙h)·U_h + b_h), h′ = (1 − z)⊙h + z⊙h̃.
pub fn gru_step(tape: &mut Tape, p: &GruParams<Var>, x: Var, h: Var) -> Result<Var> {
    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, hin: Var| -> Result<Var> {
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(hin, u)?;
        let s = tape.add(xw, hu)?;
        tape.add(s, b)
    };
    let z_pre = gate(tape, p.w_z, p.u_z, p.b_z, h)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = gate(tape, p.w_r, p.u_r, p.b_r, h)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul(r, h)?;
    let c_pre = gate(tape, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = tape.tanh(c_pre)?;
    let one_minus_z = {
        let nz = tape.neg(z)?;
        tape.shift(nz, 1.0)?
    };
    let keep = tape.mul(one_minus_z, h)?;
    let take = tape.mul(z, cand)?;
    tape.add(keep, take)
}

/// Runs a GRU over `xs` from a zero state, returning every hidden state.
pub fn gru_sequence(tape: &mut Tape, p: &GruParams<Var>, xs: &[Var]) -> Result<Vec<Var>> {
    let d_h = tape.shape(p.b_z)[0];
    let mut h = tape.constant(Tensor::zeros(&[d_h]));
    xs.iter()
        .map(|&x| {
            h = gru_step(tape, p, x, h)?;
            Ok(h)
        })
        .collect()
}

/// Bidirectional GRU: output i is concat(forward_i, backward_i), both
/// directions starting from zero.
pub fn bi_gru(
    tape: &mut Tape,
    fwd: &GruParams<Var>,
    bwd: &GruParams<Var>,
    xs: &[Var],
) -> Result<Vec<Var>> {
    if xs.is_empty() {
        return Err(Error::Contract("bi_gru over an empty sequence".into()));
    }
    let forward = gru_sequence(tape, fwd, xs)?;
    let reversed: Vec<Var> = xs.iter().rev().copied().collect();
    let mut backward = gru_sequence(tape, bwd, &reversed)?;
    backward.reverse();
    forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat(&[f, b], 0))
        .collect()
}

/// `x·W + b` for a vector x, or row-wise for a matrix x.
pub fn linear(tape: &mut Tape, p: &Linear<Var>, x: Var) -> Result<Var> {
    let xw = tape.matmul(x, p.weight)?;
    if tape.shape(xw).len() == 2 {
        tape.add_row(xw, p.bias)
    } else {
        tape.add(xw, p.bias)
    }
}

pub fn mlp(tape: &mut Tape, p: &MlpParams<Var>, x: Var) -> Result<Var> {
    let last = p.layers.len().saturating_sub(1);
    let mut h = x;
    for (i, layer) in p.layers.iter().enumerate() {
        h = linear(tape, layer, h)?;
        if i < last {
            h = tape.tanh(h)?;
        }
    }
    Ok(h)
}

pub fn embed(tape: &mut Tape, table: &EmbeddingTable<Var>, id: usize) -> Result<Var> {
    let rows = tape.shape(table.table)[0];
    if id >= rows {
        return Err(Error::Index(format!("token id {id} with vocabulary size {rows}")));
    }
    tape.row(table.table, id)
}

/// Binds every leaf onto `tape` as a trainable input.
pub fn bind_gru(tape: &mut Tape, p: &GruParams<Tensor>) -> GruParams<Var> {
    p.try_map::<_, std::convert::Infallible>("", &mut |_, t| Ok(tape.leaf(t.clone())))
        .unwrap_or_else(|e| match e {})
}

pub fn bind_mlp(tape: &mut Tape, p: &MlpParams<Tensor>) -> MlpParams<Var> {
    p.try_map::<_, std::convert::Infallible>("", &mut |_, t| Ok(tape.leaf(t.clone())))
        .unwrap_or_else(|e| match e {})
}
