//! Mel-cepstrum as a truncated cosine series of the log power envelope on an
//! all-pass warped frequency axis:
//! `ln S(w) ≈ c0 + 2 Σ_{m≥1} c_m cos(m · warp(w))`.

use std::f64::consts::PI;

/// Number of uniform points on the warped axis used for the projection.
const GRID: usize = 512;

/// First-order all-pass frequency warping; `warp_frequency(., -alpha)` inverts it.
pub fn warp_frequency(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin() / (1.0 - alpha * omega.cos())).atan()
}

/// Projects a power envelope (bins uniformly spanning `[0, π]`) onto `dim`
/// warped cosine coefficients.
pub fn mcep_encode(envelope: &[f64], dim: usize, alpha: f64) -> Vec<f64> {
    let last = (envelope.len() - 1) as f64;
    let log_env: Vec<f64> = envelope.iter().map(|p| p.ln()).collect();
    let samples: Vec<(f64, f64)> = (0..GRID)
        .map(|k| {
            let warped = PI * (k as f64 + 0.5) / GRID as f64;
            let x = warp_frequency(warped, -alpha) / PI * last;
            let i = (x.floor() as usize).min(envelope.len() - 2);
            let frac = x - i as f64;
            (warped, log_env[i] + frac * (log_env[i + 1] - log_env[i]))
        })
        .collect();
    (0..dim)
        .map(|m| {
            samples
                .iter()
                .map(|(w, l)| l * (m as f64 * w).cos())
                .sum::<f64>()
                / GRID as f64
        })
        .collect()
}

/// Evaluates the power envelope of `coeffs` on `bins` points spanning `[0, π]`.
pub fn mcep_decode(coeffs: &[f64], bins: usize, alpha: f64) -> Vec<f64> {
    McepDecoder::new(coeffs.len(), bins, alpha).decode(coeffs)
}

/// Decoder with the warped cosine basis precomputed for a fixed grid.
pub struct McepDecoder {
    dim: usize,
    /// `[bins, dim]`, column 0 is 1 and column m is `2 cos(m · warp(w))`.
    basis: Vec<f64>,
}

impl McepDecoder {
    pub fn new(dim: usize, bins: usize, alpha: f64) -> Self {
        let mut basis = Vec::with_capacity(bins * dim);
        for j in 0..bins {
            let w = warp_frequency(PI * j as f64 / (bins - 1) as f64, alpha);
            basis.push(1.0);
            basis.extend((1..dim).map(|m| 2.0 * (m as f64 * w).cos()));
        }
        Self { dim, basis }
    }

    pub fn decode(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.dim, "coefficient count");
        self.basis
            .chunks(self.dim)
            .map(|row| {
                row.iter()
                    .zip(coeffs)
                    .map(|(b, c)| b * c)
                    .sum::<f64>()
                    .exp()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warp_endpoints_and_inverse() {
        assert_eq!(warp_frequency(0.0, 0.42), 0.0);
        assert!((warp_frequency(PI, 0.42) - PI).abs() < 1e-12);
        for k in 1..20 {
            let w = PI * k as f64 / 20.0;
            assert!((warp_frequency(warp_frequency(w, 0.42), -0.42) - w).abs() < 1e-12);
            // low frequencies are stretched
            assert!(warp_frequency(w, 0.42) > w);
        }
    }

    #[test]
    fn flat_envelope_is_c0_only() {
        let env = vec![1e-3; 513];
        let c = mcep_encode(&env, 24, 0.42);
        assert!((c[0] - 1e-3f64.ln()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        let d = mcep_decode(&c, 513, 0.42);
        assert!(d.iter().all(|v| (v / 1e-3 - 1.0).abs() < 1e-10));
    }
}
