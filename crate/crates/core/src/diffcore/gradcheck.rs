//! Finite-difference gradient checking.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::{Tape, Var};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Result of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

fn rel_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0)
}

fn eval<F: Scalar>(
    inputs: &[Array2<F>],
    build: &impl Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let value = tape.value(loss).to_f64().ok_or_else(|| Error::NonFinite("loss".into()))?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(value)
}

/// Compare analytic gradients of a scalar-valued fragment against
/// central finite differences at every coordinate of every input.
pub fn grad_check<F: Scalar>(
    inputs: &[Array2<F>],
    build: impl Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let coords: Vec<(usize, usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(k, a)| {
            let (r, c) = a.dim();
            (0..r).flat_map(move |i| (0..c).map(move |j| (k, i, j)))
        })
        .collect();
    grad_check_at(inputs, build, &coords)
}

/// Gradient check at a random subsample of coordinates; used where the
/// full coordinate sweep would be wasteful (end-to-end model losses).
pub fn grad_check_sampled<F: Scalar, R: Rng>(
    inputs: &[Array2<F>],
    build: impl Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
    per_input: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let mut coords = Vec::new();
    for (k, a) in inputs.iter().enumerate() {
        let (r, c) = a.dim();
        for _ in 0..per_input.min(r * c) {
            coords.push((k, rng.gen_range(0..r), rng.gen_range(0..c)));
        }
    }
    grad_check_at(inputs, build, &coords)
}

fn grad_check_at<F: Scalar>(
    inputs: &[Array2<F>],
    build: impl Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
    coords: &[(usize, usize, usize)],
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Array2<F>> = vars.iter().map(|&v| tape.grad(v).clone()).collect();

    let step = F::from_real(FD_STEP);
    let mut max_rel_error = 0.0f64;
    let mut work: Vec<Array2<F>> = inputs.to_vec();
    for &(k, i, j) in coords {
        let original = work[k][[i, j]];
        work[k][[i, j]] = original + step;
        let plus = eval(&work, &build)?;
        work[k][[i, j]] = original - step;
        let minus = eval(&work, &build)?;
        work[k][[i, j]] = original;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[k][[i, j]].to_f64().ok_or_else(|| Error::NonFinite("gradient".into()))?;
        if !a.is_finite() || !fd.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        max_rel_error = max_rel_error.max(rel_error(a, fd));
    }
    Ok(GradCheckReport { max_rel_error, checked: coords.len() })
}
