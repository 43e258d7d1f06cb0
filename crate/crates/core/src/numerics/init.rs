use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Uniform(f64, f64),
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Xavier,
    Zeros,
}

/// Fan-in/fan-out of a weight shape. Vectors count as a single row.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [r, c, ..] => (*r, *c),
    }
}

pub fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = fans(shape);
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn seeded_init(rng: &mut Rng, shape: &[usize], scheme: Init) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    let data = match scheme {
        Init::Uniform(a, b) => {
            if a >= b {
                return Err(Error::Contract(format!("uniform({a}, {b}) needs a < b")));
            }
            (0..numel).map(|_| rng.uniform_in(a, b)).collect()
        }
        Init::Xavier => {
            let bound = xavier_bound(shape);
            (0..numel).map(|_| rng.uniform_in(-bound, bound)).collect()
        }
        Init::Zeros => vec![0.0; numel],
    };
    Tensor::new(shape.to_vec(), data)
}
