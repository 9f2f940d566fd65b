//! Central finite-difference gradient checking.
//!
//! The numeric side only evaluates forward values, so it is independent of
//! every backward rule it is used to verify.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Denominator floor for the relative error. Central differences at
    /// `step = 1e-5` carry roughly `1e-11 * |f|` of roundoff, so gradients
    /// below the floor are compared absolutely.
    pub floor: f64,
    /// Check at most this many coordinates per input (sampled with `seed`).
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            max_coords_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_input: usize,
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Evaluates `build` on leaves holding `inputs` and returns the scalar output.
pub fn evaluate<F>(inputs: &[Tensor], build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h` for one coordinate.
pub fn numeric_partial<F>(inputs: &[Tensor], which: usize, coord: usize, step: f64, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut shifted = inputs.to_vec();
    let x0 = shifted[which].data()[coord];
    shifted[which].data_mut()[coord] = x0 + step;
    let plus = evaluate(&shifted, build)?;
    shifted[which].data_mut()[coord] = x0 - step;
    let minus = evaluate(&shifted, build)?;
    Ok((plus - minus) / (2.0 * step))
}

/// Compares backward-pass gradients of every input against central differences.
pub fn check_gradients<F>(inputs: &[Tensor], build: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_input: 0,
        worst_coord: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (i, (t, &v)) in inputs.iter().zip(&vars).enumerate() {
        let zeros = vec![0.0; t.len()];
        let analytic = g.grad(v).unwrap_or(&zeros);
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(k) if k < t.len() => {
                let mut c = sample(&mut rng, t.len(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..t.len()).collect(),
        };
        for c in coords {
            let numeric = numeric_partial(inputs, i, c, opts.step, &build)?;
            let err = relative_error(analytic[c], numeric, opts.floor);
            report.checked += 1;
            if report.checked == 1 || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_input = i;
                report.worst_coord = c;
                report.analytic = analytic[c];
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
