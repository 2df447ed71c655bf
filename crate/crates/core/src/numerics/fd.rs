//! Central finite differences as an independent check on [`Tape::grad`].

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BackwardPolicy, NodeId, NumericsError, Tape, Tensor};

/// Denominator floor for the per-coordinate relative error, so that
/// near-zero gradient entries are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct FdOptions {
    pub eps: f64,
    /// Check at most this many coordinates per input (sampled without
    /// replacement); `None` checks every coordinate.
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub coordinates_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares analytic gradients of the scalar built by `build` against
/// central differences, perturbing each selected input coordinate by `±eps`.
///
/// `build` receives one leaf per entry of `inputs`, in order.
pub fn finite_difference_check<F>(build: F, inputs: &[Tensor], opts: &FdOptions) -> Result<FdReport, NumericsError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, NumericsError>,
{
    if !(opts.eps > 0.0) {
        return Err(NumericsError::InvalidArgument("finite-difference eps must be positive"));
    }
    let eval = |values: &[Tensor]| -> Result<(Tape, Vec<NodeId>, NodeId), NumericsError> {
        let mut tape = Tape::new();
        let leaves = values
            .iter()
            .map(|v| tape.leaf(v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = build(&mut tape, &leaves)?;
        Ok((tape, leaves, out))
    };

    let (tape, leaves, out) = eval(inputs)?;
    let grads = tape.grad(out, &BackwardPolicy::standard())?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&l| grads.wrt(l)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = FdReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        coordinates_checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(k) if k < input.len() => {
                let mut c = sample(&mut rng, input.len(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..input.len()).collect(),
        };
        for c in coords {
            let orig = input.data()[c];
            work[which].data_mut()[c] = orig + opts.eps;
            let (t, _, o) = eval(&work)?;
            let plus = t.value(o).item()?;
            work[which].data_mut()[c] = orig - opts.eps;
            let (t, _, o) = eval(&work)?;
            let minus = t.value(o).item()?;
            work[which].data_mut()[c] = orig;

            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic[which].data()[c];
            report.max_relative_error = report.max_relative_error.max(relative_error(a, numeric));
            report.max_absolute_error = report.max_absolute_error.max((a - numeric).abs());
            report.coordinates_checked += 1;
        }
    }
    Ok(report)
}
