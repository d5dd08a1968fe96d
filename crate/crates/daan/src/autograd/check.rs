//! Central finite-difference gradient checking.
//!
//! The numerical estimate is an oracle that never touches the analytic
//! backward path: it re-runs the forward closure at perturbed inputs and
//! differences the exact (f64-accumulated) loss values.

use ndarray::ArrayD;
use rand::Rng;

use super::{LossValue, Tape, Var};

/// Default central-difference step.
pub const DEFAULT_STEP: f32 = 1e-3;

/// Outcome of one checked coordinate.
#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Gradient-scale floor for the relative-error denominator. Node values are
/// stored in f32, so a central difference with step 1e-3 cannot resolve
/// absolute gradient discrepancies below roughly 1e-6; against a floor of
/// 1e-3 such storage noise stays under the 1e-3 relative-error budget while
/// sign flips, missing terms, and wrong scales at any magnitude still blow
/// past it.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// Compare analytic gradients of a scalar-valued builder against central
/// finite differences at `n_coords` random coordinates per input.
///
/// `build` must construct the loss from leaves created on the given tape in
/// the order of `inputs`. Relative error uses `max(|analytic|, |numeric|, REL_ERROR_FLOOR)`
/// as the denominator so near-zero gradients do not explode the ratio.
pub fn finite_diff_check<F>(
    build: F,
    inputs: &[ArrayD<f32>],
    step: f32,
    n_coords: usize,
    rng: &mut impl Rng,
) -> Vec<CoordCheck>
where
    F: Fn(&mut Tape, &[Var]) -> LossValue,
{
    let eval = |arrays: &[ArrayD<f32>]| -> (f64, Vec<ArrayD<f32>>) {
        let mut tape = Tape::detached();
        let vars: Vec<Var> = arrays.iter().map(|a| tape.input(a.clone())).collect();
        let loss = build(&mut tape, &vars);
        let node_grads = tape.backward(loss.var);
        let grads = vars
            .iter()
            .map(|&v| {
                node_grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(tape.value(v).raw_dim()))
            })
            .collect();
        (loss.value, grads)
    };

    let (_, analytic_grads) = eval(inputs);

    let mut results = Vec::new();
    for (input_idx, input) in inputs.iter().enumerate() {
        let n = input.len();
        if n == 0 {
            continue;
        }
        for _ in 0..n_coords {
            let coord = rng.gen_range(0..n);
            let base = input.as_slice().unwrap()[coord];
            let hi = base + step;
            let lo = base - step;

            let mut plus = inputs.to_vec();
            plus[input_idx].as_slice_mut().unwrap()[coord] = hi;
            let (f_plus, _) = eval(&plus);

            let mut minus = inputs.to_vec();
            minus[input_idx].as_slice_mut().unwrap()[coord] = lo;
            let (f_minus, _) = eval(&minus);

            // Use the realized f32 spacing, not 2*step, to cancel input rounding.
            let denom = (hi as f64) - (lo as f64);
            let numeric = (f_plus - f_minus) / denom;
            let analytic = analytic_grads[input_idx].as_slice().unwrap()[coord] as f64;
            let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            let rel_error = (analytic - numeric).abs() / scale;
            results.push(CoordCheck { input: input_idx, coord, analytic, numeric, rel_error });
        }
    }
    results
}

/// Worst relative error over all checked coordinates.
pub fn max_rel_error(checks: &[CoordCheck]) -> f64 {
    checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
}
