use super::FeatureSet;
use crate::error::{Error, Result};

/// Mean and standard deviation of log F0 over voiced frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Stats {
    pub mu: f64,
    pub sigma: f64,
}

impl F0Stats {
    /// Population statistics of `ln f0` over the voiced (nonzero) frames.
    pub fn from_contours<'a>(contours: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let logs: Vec<f64> = contours
            .into_iter()
            .flatten()
            .filter(|&&f| f > 0.0)
            .map(|f| f.ln())
            .collect();
        if logs.len() < 2 {
            return Err(Error::Data(format!(
                "F0 statistics need at least 2 voiced frames, found {}",
                logs.len()
            )));
        }
        let n = logs.len() as f64;
        let mu = logs.iter().sum::<f64>() / n;
        let sigma = (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n).sqrt();
        if sigma <= 0.0 {
            return Err(Error::Data(
                "log-F0 has zero variance; statistics are degenerate".into(),
            ));
        }
        Ok(Self { mu, sigma })
    }
}

pub fn f0_statistics(corpus: &[FeatureSet]) -> Result<F0Stats> {
    F0Stats::from_contours(corpus.iter().map(|f| f.f0.as_slice()))
}

/// Log-Gaussian normalized conversion of the voiced frames; unvoiced frames stay 0.
pub fn lgn_convert(f0: &[f64], src: &F0Stats, tgt: &F0Stats) -> Result<Vec<f64>> {
    if src.sigma <= 0.0 || !src.sigma.is_finite() {
        return Err(Error::Data(format!(
            "source log-F0 sigma must be positive, got {}",
            src.sigma
        )));
    }
    Ok(f0
        .iter()
        .map(|&f| {
            if f > 0.0 {
                ((f.ln() - src.mu) / src.sigma * tgt.sigma + tgt.mu).exp()
            } else {
                0.0
            }
        })
        .collect())
}
