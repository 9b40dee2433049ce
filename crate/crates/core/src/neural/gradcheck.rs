use ndarray::{ArrayView2, ArrayView3};
use rand::Rng;

use super::lstm::loss_and_gradient;
use super::model::SequenceModel;
use crate::seed::rng_from_seed;
use crate::Result;

/// Gradients smaller than this are compared on an absolute scale: the
/// relative error uses `max(|analytic|, |numeric|, RELATIVE_FLOOR)` as the
/// denominator, since central differences carry an absolute error of about
/// `1e-10` at step `1e-5`.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub block: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub max_relative_error: f64,
}

/// Compares the BPTT gradient of the batch MSE with central differences at
/// `n_probes` parameters. Probes pick a block uniformly (so small encoder and
/// head blocks are always exercised) and then an entry within it.
pub fn gradient_check(
    model: &SequenceModel,
    inputs: ArrayView3<f64>,
    o0: ArrayView2<f64>,
    targets: ArrayView3<f64>,
    n_probes: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grad) = loss_and_gradient(model, inputs, o0, targets, false)?;
    let blocks = model.layout().named_blocks();
    let mut rng = rng_from_seed(seed);
    let mut probe_model = model.clone();
    let mut probes = Vec::with_capacity(n_probes);
    for _ in 0..n_probes {
        let (name, block, _) = &blocks[rng.random_range(0..blocks.len())];
        let index = block.offset + rng.random_range(0..block.len());
        let original = probe_model.params()[index];
        probe_model.params_mut()[index] = original + step;
        let (plus, _) = loss_and_gradient(&probe_model, inputs, o0, targets, false)?;
        probe_model.params_mut()[index] = original - step;
        let (minus, _) = loss_and_gradient(&probe_model, inputs, o0, targets, false)?;
        probe_model.params_mut()[index] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grad[index];
        let relative_error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        probes.push(Probe { block: name.clone(), index, analytic, numeric, relative_error });
    }
    let max_relative_error = probes.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport { probes, max_relative_error })
}
