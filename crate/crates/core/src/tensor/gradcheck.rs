//! Central finite-difference checks for anything built on a [`Tape`].
//!
//! The analytic gradient comes from [`Tape::backward`]; the numeric one from
//! re-running the forward closure with each input element nudged by `±h`.
//! Agreement is measured per input tensor as
//! `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Relative error for each input, in the order given.
    pub relative_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares backward-pass gradients of `f` against central differences.
///
/// `f` records a computation over the given inputs (registered as
/// parameters, in order) and returns a scalar.
pub fn check<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (idx, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..inputs[idx].numel() {
            let orig = inputs[idx].data()[j];
            work[idx].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[idx].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[idx].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[j];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let scale = a2.sqrt().max(n2.sqrt());
        relative_errors.push(if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale });
    }
    Ok(GradCheckReport { relative_errors })
}

/// Reduces `out` to a scalar `Σ out ⊙ r` with fixed pseudo-random weights
/// `r`, so every output element contributes a distinct sensitivity.
pub fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var, TensorError> {
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let r = tape.constant(Tensor::new(shape, weights)?);
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

/// Seeded tensor with entries uniform in `[lo, hi)`.
pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}
