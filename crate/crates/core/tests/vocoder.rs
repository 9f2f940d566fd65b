use std::time::Instant;

use bcenhance::toy::{sawtooth, synthetic_vowel};
use bcenhance::vocoder::{
    analyze, decoded_envelopes, f0_statistics, frame_count, lgn_convert, mcep_decode, mcep_encode,
    synthesize, F0Stats, FeatureSet, VocoderConfig, HOP, MCEP_DIM,
};
use bcenhance::Error;
use bcenhance_nn::Tensor;

fn lsd_db(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let per: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let s: f64 = x
                .iter()
                .zip(y)
                .map(|(p, q)| (10.0 * (p / q).log10()).powi(2))
                .sum();
            (s / x.len() as f64).sqrt()
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

#[test]
fn frame_count_one_second() {
    assert_eq!(frame_count(16_000), 201);
    let f = analyze(&sawtooth(1.0, 200.0, 0.5), 16_000).unwrap();
    assert_eq!(f.frames(), 201);
    assert_eq!(f.mcep.shape(), &[MCEP_DIM, 201]);
    assert_eq!(f.ap.shape(), &[4, 201]);
}

#[test]
fn sawtooth_pitch() {
    let f = analyze(&sawtooth(1.0, 200.0, 0.5), 16_000).unwrap();
    let voiced: Vec<f64> = f.f0.iter().copied().filter(|&v| v > 0.0).collect();
    assert!(voiced.len() > 180, "only {} voiced frames", voiced.len());
    for v in voiced {
        assert!((v - 200.0).abs() <= 10.0, "f0 {v}");
    }
}

#[test]
fn silence_is_unvoiced_with_constant_mcep() {
    let f = analyze(&vec![0.0; 16_000], 16_000).unwrap();
    assert!(f.f0.iter().all(|&v| v == 0.0));
    let first = f.mcep_frame(0);
    for t in 1..f.frames() {
        assert_eq!(f.mcep_frame(t), first);
    }
    // floor-energy cepstrum: flat envelope at the floor
    let floor_ceps = mcep_encode(&vec![1e-10; 513], MCEP_DIM, 0.42);
    for (a, b) in first.iter().zip(&floor_ceps) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!((first[0] - 1e-10f64.ln()).abs() < 1e-9);
}

#[test]
fn wrong_rate_is_input_error() {
    let err = analyze(&vec![0.0; 44_100], 44_100).unwrap_err();
    match err {
        Error::Input(msg) => assert!(msg.contains("resample"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

/// Error of the truncated series measured on the warped axis, against the
/// analytic log envelope.
#[test]
fn mcep_truncation_error_decreases_with_order() {
    let alpha = 0.42;
    let log_env = |w: f64| {
        let f = w / std::f64::consts::PI * 8000.0;
        let r = |c: f64, b: f64| 1.0 / (1.0 + ((f - c) / b).powi(2));
        (1e-4 + r(700.0, 150.0) + 0.4 * r(2200.0, 300.0)).ln()
    };
    let env: Vec<f64> = (0..513)
        .map(|k| log_env(std::f64::consts::PI * k as f64 / 512.0).exp())
        .collect();
    let mut last = f64::INFINITY;
    for dim in [4, 8, 12, 16, 20, 24, 32] {
        let c = mcep_encode(&env, dim, alpha);
        let n = 400;
        let mut sq = 0.0;
        for j in 0..n {
            let wt = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
            // inverse all-pass warp, written out independently
            let w = wt + 2.0 * ((-alpha * wt.sin()) / (1.0 + alpha * wt.cos())).atan();
            let approx = c[0] + 2.0 * (1..dim).map(|m| c[m] * (m as f64 * wt).cos()).sum::<f64>();
            sq += (approx - log_env(w)).powi(2);
        }
        let err = (sq / n as f64).sqrt();
        assert!(err < last, "order {dim}: {err} >= {last}");
        last = err;
    }
    // 24-coefficient decode on the linear grid stays close to the envelope
    let dec = mcep_decode(&mcep_encode(&env, 24, alpha), 513, alpha);
    assert!(lsd_db(&[env.clone()], &[dec]) < 1.0);
}

#[test]
fn translation_consistency() {
    let x = synthetic_vowel(0.5, 150.0, (700.0, 1200.0, 2600.0), 0.5);
    let mut shifted = vec![0.0; HOP];
    shifted.extend_from_slice(&x);
    let a = analyze(&x, 16_000).unwrap();
    let b = analyze(&shifted, 16_000).unwrap();
    for t in 10..a.frames() - 10 {
        assert_eq!(a.f0[t] > 0.0, b.f0[t + 1] > 0.0, "frame {t}");
        for (p, q) in a.mcep_frame(t).iter().zip(b.mcep_frame(t + 1)) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

#[test]
fn round_trip_vowel() {
    let start = Instant::now();
    let x = synthetic_vowel(1.0, 140.0, (730.0, 1090.0, 2440.0), 0.5);
    let a = analyze(&x, 16_000).unwrap();
    let y = synthesize(&a).unwrap();
    assert_eq!(y.len(), a.frames() * HOP);
    let b = analyze(&y, 16_000).unwrap();
    let n = a.frames().min(b.frames());
    let ea = decoded_envelopes(&a, 0.42);
    let eb = decoded_envelopes(&b, 0.42);
    let voiced: Vec<usize> = (5..n - 5).filter(|&t| a.f0[t] > 0.0).collect();
    assert!(voiced.len() > n / 2);
    let lsd = lsd_db(
        &voiced.iter().map(|&t| ea[t].clone()).collect::<Vec<_>>(),
        &voiced.iter().map(|&t| eb[t].clone()).collect::<Vec<_>>(),
    );
    assert!(lsd < 1.5, "lsd {lsd}");
    let both: Vec<usize> = voiced.iter().copied().filter(|&t| b.f0[t] > 0.0).collect();
    assert!(
        both.len() * 100 >= voiced.len() * 95,
        "{} of {} frames kept voicing",
        both.len(),
        voiced.len()
    );
    for &t in &both {
        let err = (b.f0[t] - a.f0[t]).abs() / a.f0[t];
        assert!(err < 0.05, "frame {t}: {} vs {}", b.f0[t], a.f0[t]);
    }
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn unvoiced_synthesis_has_no_pitch() {
    let x = synthetic_vowel(0.5, 150.0, (500.0, 1500.0, 2500.0), 0.5);
    let mut f = analyze(&x, 16_000).unwrap();
    f.f0.iter_mut().for_each(|v| *v = 0.0);
    f.ap.data_mut().iter_mut().for_each(|v| *v = 1.0);
    let y = synthesize(&f).unwrap();
    let g = analyze(&y, 16_000).unwrap();
    let voiced = g.f0.iter().filter(|&&v| v > 0.0).count();
    assert_eq!(voiced, 0, "{voiced} voiced frames");
}

#[test]
fn energy_coefficient_scales_output() {
    let x = synthetic_vowel(0.5, 150.0, (500.0, 1500.0, 2500.0), 0.3);
    let f = analyze(&x, 16_000).unwrap();
    let rms = |f: &FeatureSet| {
        let y = synthesize(f).unwrap();
        (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt()
    };
    let mut levels = vec![rms(&f)];
    for shift in [1.0, 2.0] {
        let mut g = f.clone();
        let t = g.frames();
        g.mcep.data_mut()[..t].iter_mut().for_each(|v| *v += shift);
        levels.push(rms(&g));
    }
    assert!(levels[0] < levels[1] && levels[1] < levels[2], "{levels:?}");
}

#[test]
fn f0_statistics_two_point() {
    let mk = |f0: Vec<f64>| FeatureSet {
        mcep: Tensor::zeros(&[MCEP_DIM, f0.len()]),
        ap: Tensor::zeros(&[4, f0.len()]),
        f0,
    };
    let s = f0_statistics(&[mk(vec![100.0, 0.0, 400.0]), mk(vec![0.0, 400.0, 100.0])]).unwrap();
    assert!((s.mu - (100f64.ln() + 400f64.ln()) / 2.0).abs() < 1e-12);
    assert!((s.sigma - 2f64.ln()).abs() < 1e-12);

    assert!(matches!(
        f0_statistics(&[mk(vec![0.0, 120.0, 0.0])]),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        f0_statistics(&[mk(vec![120.0, 120.0])]),
        Err(Error::Data(_))
    ));
}

#[test]
fn lgn_examples() {
    let src = F0Stats {
        mu: 5.0,
        sigma: 0.2,
    };
    let tgt = F0Stats {
        mu: 5.3,
        sigma: 0.25,
    };
    let out = lgn_convert(&[5.2f64.exp(), 0.0], &src, &tgt).unwrap();
    assert!((out[0] - 5.55f64.exp()).abs() / 5.55f64.exp() < 1e-12);
    assert_eq!(out[1], 0.0);

    let contour = [0.0, 110.0, 130.0, 0.0, 250.0];
    let same = lgn_convert(&contour, &src, &src).unwrap();
    for (a, b) in contour.iter().zip(&same) {
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }
    let back = lgn_convert(&lgn_convert(&contour, &src, &tgt).unwrap(), &tgt, &src).unwrap();
    for (a, b) in contour.iter().zip(&back) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(lgn_convert(
        &contour,
        &F0Stats {
            mu: 5.0,
            sigma: 0.0
        },
        &tgt
    )
    .is_err());
}

#[test]
fn config_defaults() {
    let c = VocoderConfig::default();
    assert_eq!(
        (
            c.f0_floor,
            c.f0_ceil,
            c.voicing_threshold,
            c.alpha,
            c.mcep_dim
        ),
        (50.0, 500.0, 0.3, 0.42, 24)
    );
}
