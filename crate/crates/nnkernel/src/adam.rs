use crate::error::{dim_err, NnError, Result};
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn from_parts(config: AdamConfig, step: u64, first: Vec<Vec<f64>>, second: Vec<Vec<f64>>) -> Result<Self> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(a, b)| a.len() != b.len()) {
            return Err(NnError::Usage("first/second moment buffers disagree".into()));
        }
        Ok(Self {
            config,
            step,
            first,
            second,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// Applies one bias-corrected Adam update using each parameter's `grad`
    /// buffer, then clears the buffers.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        adam_step(params, self)
    }
}

pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(NnError::Usage(format!(
            "optimizer tracks {} tensors, parameter set has {}",
            state.first.len(),
            params.len()
        )));
    }
    for (i, t) in params.tensors().iter().enumerate() {
        if t.grad().is_none() {
            return Err(NnError::Usage(format!("missing gradient for parameter {i}")));
        }
        if state.first[i].len() != t.len() {
            return Err(dim_err("adam_step", "moment buffer length", &[t.len()], &[state.first[i].len()]));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (i, t) in params.tensors_mut().iter_mut().enumerate() {
        let g = t.take_grad().expect("checked above");
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for (j, p) in t.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
