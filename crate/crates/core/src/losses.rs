//! Training objectives. Each loss is built on a [`Graph`] so the trainer can
//! differentiate it; the `*_value` wrappers evaluate the same code on plain
//! numbers.

use std::fmt;
use std::str::FromStr;

use bcenhance_nn::{Graph, NnError, Tensor, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarialForm {
    NegativeLogLikelihood,
    LeastSquares,
}

impl FromStr for AdversarialForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" | "negative_log_likelihood" => Ok(Self::NegativeLogLikelihood),
            "ls" | "least_squares" => Ok(Self::LeastSquares),
            other => Err(Error::Config(format!(
                "unknown adversarial form {other:?} (expected least_squares or negative_log_likelihood)"
            ))),
        }
    }
}

impl fmt::Display for AdversarialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NegativeLogLikelihood => "negative_log_likelihood",
            Self::LeastSquares => "least_squares",
        })
    }
}

/// Single-discriminator objective or the classification + defect pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    Dual,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "dual" => Ok(Self::Dual),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected baseline or dual)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::Dual => "dual",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub form: AdversarialForm,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cyc: 10.0,
            lambda_id: 5.0,
            form: AdversarialForm::LeastSquares,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cyc >= 0.0 && self.lambda_id >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be nonnegative, got lambda_cyc={} lambda_id={}",
                self.lambda_cyc, self.lambda_id
            )));
        }
        Ok(())
    }
}

/// Mean absolute difference.
pub fn l1(graph: &mut Graph, x: Var, y: Var) -> Result<Var> {
    if graph.shape(x) != graph.shape(y) {
        return Err(NnError::Dimension {
            op: "l1",
            axes: "all axes".into(),
            expected: graph.shape(x).to_vec(),
            got: graph.shape(y).to_vec(),
        }
        .into());
    }
    let d = graph.sub(x, y)?;
    let a = graph.abs(d);
    Ok(graph.mean(a))
}

/// Cycle loss between `b` and its reconstruction.
pub fn cycle_loss(graph: &mut Graph, b: Var, b_reconstructed: Var) -> Result<Var> {
    l1(graph, b, b_reconstructed)
}

/// Identity loss between `a` and the generator applied to `a`.
pub fn identity_loss(graph: &mut Graph, a: Var, g_of_a: Var) -> Result<Var> {
    l1(graph, a, g_of_a)
}

/// `mean((s - target)^2)`.
fn squared_to(graph: &mut Graph, scores: Var, target: f64) -> Var {
    let d = graph.affine(scores, 1.0, -target);
    let sq = graph.square(d);
    graph.mean(sq)
}

/// Discriminator loss (minimized). `fake` may be omitted to keep only the
/// real-sample terms.
pub fn adv_d_loss(
    graph: &mut Graph,
    real: Var,
    fake: Option<Var>,
    form: AdversarialForm,
) -> Result<Var> {
    match form {
        AdversarialForm::LeastSquares => {
            let r = squared_to(graph, real, 1.0);
            match fake {
                Some(f) => {
                    let f = squared_to(graph, f, 0.0);
                    Ok(graph.add(r, f)?)
                }
                None => Ok(r),
            }
        }
        AdversarialForm::NegativeLogLikelihood => {
            let lr = graph.ln(real);
            let mut obj = graph.mean(lr);
            if let Some(f) = fake {
                let one_minus = graph.affine(f, -1.0, 1.0);
                let lf = graph.ln(one_minus);
                let mf = graph.mean(lf);
                obj = graph.add(obj, mf)?;
            }
            Ok(graph.affine(obj, -1.0, 0.0))
        }
    }
}

/// Generator adversarial loss (minimized).
pub fn adv_g_loss(graph: &mut Graph, fake: Var, form: AdversarialForm) -> Var {
    match form {
        AdversarialForm::LeastSquares => squared_to(graph, fake, 1.0),
        AdversarialForm::NegativeLogLikelihood => {
            let one_minus = graph.affine(fake, -1.0, 1.0);
            let l = graph.ln(one_minus);
            graph.mean(l)
        }
    }
}

/// Generator adversarial terms of the classification and defect
/// discriminators, each from its own scores.
pub fn dual_adv_losses(
    graph: &mut Graph,
    c_fake: Var,
    d_fake: Var,
    form: AdversarialForm,
) -> (Var, Var) {
    (
        adv_g_loss(graph, c_fake, form),
        adv_g_loss(graph, d_fake, form),
    )
}

/// Loss terms of one step; which adversarial entries are required depends
/// on the [`Variant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub adv: Option<T>,
    pub adc: Option<T>,
    pub add: Option<T>,
    pub cyc: Option<T>,
    pub id: Option<T>,
}

impl<T> Default for LossParts<T> {
    fn default() -> Self {
        Self {
            adv: None,
            adc: None,
            add: None,
            cyc: None,
            id: None,
        }
    }
}

/// `(coefficient, term)` pairs of the weighted objective.
pub fn weighted_terms<T: Copy>(
    parts: &LossParts<T>,
    weights: &LossWeights,
    variant: Variant,
) -> Result<Vec<(f64, T)>> {
    let need = |v: Option<T>, name: &str| {
        v.ok_or_else(|| {
            Error::Config(format!(
                "objective for variant {variant} is missing the {name} term"
            ))
        })
    };
    let mut terms = match variant {
        Variant::Baseline => vec![(1.0, need(parts.adv, "adv")?)],
        Variant::Dual => vec![
            (1.0, need(parts.adc, "adc")?),
            (1.0, need(parts.add, "add")?),
        ],
    };
    terms.push((weights.lambda_cyc, need(parts.cyc, "cyc")?));
    terms.push((weights.lambda_id, need(parts.id, "id")?));
    Ok(terms)
}

pub fn total_objective(
    parts: &LossParts<f64>,
    weights: &LossWeights,
    variant: Variant,
) -> Result<f64> {
    Ok(weighted_terms(parts, weights, variant)?
        .iter()
        .map(|(c, v)| c * v)
        .sum())
}

pub fn total_objective_graph(
    graph: &mut Graph,
    parts: &LossParts<Var>,
    weights: &LossWeights,
    variant: Variant,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (c, v) in weighted_terms(parts, weights, variant)? {
        let term = graph.affine(v, c, 0.0);
        total = Some(match total {
            Some(t) => graph.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("objective has at least three terms"))
}

fn values(xs: &[f64]) -> Tensor {
    Tensor::new(&[xs.len()], xs.to_vec()).expect("1-D tensor")
}

fn eval1(f: impl FnOnce(&mut Graph) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let v = f(&mut g)?;
    Ok(g.value(v).item())
}

/// Value-level cycle/identity loss.
pub fn l1_value(x: &[f64], y: &[f64]) -> Result<f64> {
    eval1(|g| {
        let (x, y) = (g.constant(values(x)), g.constant(values(y)));
        l1(g, x, y)
    })
}

pub fn adv_d_value(real: &[f64], fake: &[f64], form: AdversarialForm) -> Result<f64> {
    eval1(|g| {
        let (r, f) = (g.constant(values(real)), g.constant(values(fake)));
        adv_d_loss(g, r, Some(f), form)
    })
}

pub fn adv_g_value(fake: &[f64], form: AdversarialForm) -> Result<f64> {
    eval1(|g| {
        let f = g.constant(values(fake));
        Ok(adv_g_loss(g, f, form))
    })
}

/// Sum of the classification and defect generator terms.
pub fn dual_adv_value(c_fake: &[f64], d_fake: &[f64], form: AdversarialForm) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let (c, d) = (g.constant(values(c_fake)), g.constant(values(d_fake)));
    let (adc, add) = dual_adv_losses(&mut g, c, d, form);
    Ok((g.value(adc).item(), g.value(add).item()))
}
