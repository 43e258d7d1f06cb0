//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat coordinate (across all checked tensors) with the largest relative error.
    pub worst: usize,
    pub checked: usize,
    pub pass: bool,
}

/// Denominator floor of [`relative_error`]. Central differences at step
/// 1e-5 carry ~1e-10 of round-off, which would swamp the relative error of
/// gradients much smaller than this.
pub const REL_ERR_FLOOR: f64 = 1e-5;

/// |a - n| / max(REL_ERR_FLOOR, |a| + |n|)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERR_FLOOR)
}

pub fn compare(analytic: &[f64], numeric: &[f64], tol: f64) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len());
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: 0,
        checked: analytic.len(),
        pass: true,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = relative_error(a, n);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = i;
        }
        report.max_abs_err = report.max_abs_err.max((a - n).abs());
    }
    report.pass = report.max_rel_err <= tol;
    report
}

fn evaluate<F>(f: &F, points: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).is_scalar() {
        return Err(Error::Contract("checked function must be scalar-valued".into()));
    }
    Ok(tape.scalar(out))
}

/// Tape gradients of `f` at `points`, concatenated in point order.
pub fn analytic_gradient<F>(f: &F, points: &[Tensor]) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let mut grads = Vec::new();
    for v in vars {
        grads.extend_from_slice(tape.grad(v)?.data());
    }
    Ok(grads)
}

/// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of every point.
pub fn numeric_gradient<F>(f: &F, points: &[Tensor], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Contract(format!("finite-difference step {step} must be > 0")));
    }
    let mut work = points.to_vec();
    let mut grads = Vec::new();
    for p in 0..work.len() {
        for i in 0..work[p].numel() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + step;
            let plus = evaluate(f, &work)?;
            work[p].data_mut()[i] = orig - step;
            let minus = evaluate(f, &work)?;
            work[p].data_mut()[i] = orig;
            grads.push((plus - minus) / (2.0 * step));
        }
    }
    Ok(grads)
}

/// Checks tape gradients of a scalar function of several tensors.
pub fn grad_check_many<F>(f: F, points: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let first = evaluate(&f, points)?;
    let second = evaluate(&f, points)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Determinism(format!(
            "f evaluated to {first} then {second} at the same point"
        )));
    }
    let analytic = analytic_gradient(&f, points)?;
    let numeric = numeric_gradient(&f, points, step)?;
    Ok(compare(&analytic, &numeric, tol))
}

pub fn grad_check<F>(f: F, point: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(point), step, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{seeded_init, Init, Rng};
    use std::cell::Cell;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::vector(vec![0.3, -1.2, 4.0]);
        let r = grad_check(|t, v| t.sum(v), &x, 1e-5, 1e-10).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_rel_err <= 1e-10);
    }

    #[test]
    fn sigmoid_of_affine() {
        let mut rng = Rng::new(17);
        let w = seeded_init(&mut rng, &[3, 3], Init::Uniform(-1.0, 1.0)).unwrap();
        let x = seeded_init(&mut rng, &[3], Init::Uniform(-1.0, 1.0)).unwrap();
        let r = grad_check_many(
            |t, v| {
                let wx = t.matmul(v[1], v[0])?;
                let s = t.sigmoid(wx)?;
                t.sum(s)
            },
            &[w, x],
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn tanh_derivative_at_point_three() {
        let x = Tensor::scalar(0.3);
        let r = grad_check(|t, v| t.tanh(v), &x, 1e-5, 1e-7).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let x = Tensor::vector(vec![0.5, -0.7]);
        let f = |t: &mut Tape, v: &[Var]| {
            let s = t.sigmoid(v[0])?;
            t.sum(s)
        };
        let points = [x];
        let doubled: Vec<f64> = analytic_gradient(&f, &points)
            .unwrap()
            .iter()
            .map(|g| 2.0 * g)
            .collect();
        let numeric = numeric_gradient(&f, &points, 1e-5).unwrap();
        assert!(!compare(&doubled, &numeric, 1e-5).pass);
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        let calls = Cell::new(0.0);
        let x = Tensor::scalar(1.0);
        let r = grad_check(
            |t, v| {
                calls.set(calls.get() + 1.0);
                t.shift(v, calls.get())
            },
            &x,
            1e-5,
            1e-5,
        );
        assert!(matches!(r, Err(Error::Determinism(_))));
    }

    #[test]
    fn non_positive_step_is_rejected() {
        let x = Tensor::scalar(1.0);
        assert!(grad_check(|t, v| t.sum(v), &x, 0.0, 1e-5).is_err());
    }
}
