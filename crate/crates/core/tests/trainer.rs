use std::fs;
use std::path::Path;

use bcenhance::losses::Variant;
use bcenhance::metrics::lsd_waveforms;
use bcenhance::model::{read_checkpoint, Checkpoint, ModelConfig};
use bcenhance::toy::write_toy_corpus;
use bcenhance::trainer::*;
use bcenhance::vocoder::{analyze, synthesize, FeatureSet, HOP, SAMPLE_RATE};
use bcenhance::{audio::read_wav, Error};
use bcenhance_nn::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        crop_frames: 16,
        model: ModelConfig::with_divisor(16),
        checkpoint_every: 1,
        ..TrainConfig::default()
    }
}

fn corpus(dir: &Path, count: usize, seconds: f64) -> Vec<String> {
    write_toy_corpus(dir, count, seconds, 11).unwrap()
}

fn setup(config: &TrainConfig, count: usize) -> (tempfile::TempDir, TrainState, Vec<Utterance>) {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), count, 0.3);
    let (state, data) = prepare(config, dir.path()).unwrap();
    (dir, state, data)
}

fn params_of(state: &TrainState) -> Vec<Vec<Vec<f64>>> {
    let mut nets = vec![
        state
            .g_ba
            .net
            .params
            .tensors()
            .iter()
            .map(|t| t.data().to_vec())
            .collect(),
        state
            .g_ab
            .net
            .params
            .tensors()
            .iter()
            .map(|t| t.data().to_vec())
            .collect(),
        state
            .d_c
            .net
            .params
            .tensors()
            .iter()
            .map(|t| t.data().to_vec())
            .collect(),
    ];
    if let Some(d) = &state.d_d {
        nets.push(
            d.net
                .params
                .tensors()
                .iter()
                .map(|t| t.data().to_vec())
                .collect(),
        );
    }
    nets
}

fn column(m: &Tensor, t: usize) -> Vec<f64> {
    let n = m.shape()[1];
    (0..m.shape()[0]).map(|q| m.data()[q * n + t]).collect()
}

#[test]
fn parallel_batches_share_frame_range() {
    let (_dir, state, data) = setup(&small_config(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let b = make_batch(
            &data,
            Mapping::Parallel,
            16,
            (&state.norm_bc, &state.norm_ac),
            &mut rng,
        )
        .unwrap();
        assert_eq!(b.b_origin, b.a_origin);
        let u = &data[b.b_origin.0];
        let s = b.b_origin.1;
        let expect_b = state.norm_bc.normalize(&crop_columns(&u.bc.mcep, s, 16));
        let expect_a = state.norm_ac.normalize(&crop_columns(&u.ac.mcep, s, 16));
        assert_eq!(b.b, expect_b);
        assert_eq!(b.a, expect_a);
    }
}

#[test]
fn nonparallel_batches_are_independent() {
    let (_dir, state, data) = setup(&small_config(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut differ = 0;
    for _ in 0..50 {
        let b = make_batch(
            &data,
            Mapping::Nonparallel,
            16,
            (&state.norm_bc, &state.norm_ac),
            &mut rng,
        )
        .unwrap();
        differ += usize::from(b.b_origin != b.a_origin);
    }
    assert!(
        differ > 25,
        "only {differ} of 50 nonparallel batches differ"
    );
}

#[test]
fn short_utterance_is_reflection_padded() {
    let (_dir, state, data) = setup(&small_config(), 1);
    let frames = data[0].aligned_frames();
    let crop = frames.div_ceil(4) * 4 + 8;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = make_batch_for(
        &data,
        0,
        Mapping::Parallel,
        crop,
        (&state.norm_bc, &state.norm_ac),
        &mut rng,
    )
    .unwrap();
    assert_eq!(b.b.shape(), [24, crop]);
    assert_eq!(b.b_origin.1, 0);
    let src = state.norm_bc.normalize(&data[0].bc.mcep);
    // frame `frames + k` mirrors frame `frames - 2 - k`
    for k in 0..crop - frames {
        assert_eq!(column(&b.b, frames + k), column(&src, frames - 2 - k));
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let norms = NormStats::identity(24);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = make_batch(&[], Mapping::Parallel, 16, (&norms, &norms), &mut rng).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
}

#[test]
fn fixed_seed_repeats_crop_sequence() {
    let (_dir, state, data) = setup(&small_config(), 3);
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..20)
            .map(|_| {
                make_batch(
                    &data,
                    Mapping::Nonparallel,
                    16,
                    (&state.norm_bc, &state.norm_ac),
                    &mut rng,
                )
                .unwrap()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reflect_index_stays_in_range(i in 0usize..10_000, len in 1usize..300) {
        let r = reflect_index(i, len);
        prop_assert!(r < len);
        if i < len {
            prop_assert_eq!(r, i);
        }
    }

    #[test]
    fn split_is_a_seeded_four_to_one_partition(n in 1usize..60, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("u{i:03}")).collect();
        let (train, test) = split_ids(&ids, seed);
        prop_assert_eq!(test.len(), n / 5);
        let mut all: Vec<String> = train.iter().chain(&test).cloned().collect();
        all.sort();
        prop_assert_eq!(all, ids.clone());
        prop_assert_eq!(split_ids(&ids, seed), (train, test));
    }
}

#[test]
fn one_step_updates_every_parameter() {
    for variant in [Variant::Dual, Variant::Baseline] {
        let cfg = TrainConfig {
            variant,
            ..small_config()
        };
        let (_dir, mut state, data) = setup(&cfg, 2);
        let before = params_of(&state);
        let batches = batches_for_iteration(&state, &data).unwrap();
        train_step(&mut state, &batches).unwrap();
        let after = params_of(&state);
        assert_eq!(before.len(), if variant == Variant::Dual { 4 } else { 3 });
        for (n, (b, a)) in before.iter().zip(&after).enumerate() {
            let norm: f64 = b
                .iter()
                .flatten()
                .zip(a.iter().flatten())
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            assert!(norm > 0.0, "network {n} did not move");
            for (k, (tb, ta)) in b.iter().zip(a).enumerate() {
                assert_ne!(tb, ta, "network {n} tensor {k} unchanged");
            }
        }
        assert_eq!(state.iteration, 1);
    }
}

#[test]
fn frozen_half_discriminators_give_half_generator_loss() {
    let mut cfg = small_config();
    cfg.weights.lambda_cyc = 0.0;
    cfg.weights.lambda_id = 0.0;
    let (_dir, mut state, data) = setup(&cfg, 2);
    for d in std::iter::once(&mut state.d_c).chain(state.d_d.as_mut()) {
        d.net
            .params
            .tensors_mut()
            .iter_mut()
            .for_each(|t| t.data_mut().fill(0.0));
    }
    let batches = batches_for_iteration(&state, &data).unwrap();
    let (losses, _) = generator_update(&mut state, &batches).unwrap();
    assert_eq!(losses.adc, 0.25);
    assert_eq!(losses.add, Some(0.25));
    assert_eq!(losses.total, 0.5);
}

#[test]
fn updates_are_detached() {
    let (_dir, mut state, data) = setup(&small_config(), 2);
    let batches = batches_for_iteration(&state, &data).unwrap();

    let before = params_of(&state);
    let (_, fakes) = generator_update(&mut state, &batches).unwrap();
    let mid = params_of(&state);
    assert_ne!(before[0], mid[0]);
    assert_ne!(before[1], mid[1]);
    assert_eq!(
        before[2..],
        mid[2..],
        "generator update moved a discriminator"
    );

    discriminator_update(&mut state, &batches, &fakes).unwrap();
    let after = params_of(&state);
    assert_eq!(
        mid[..2],
        after[..2],
        "discriminator update moved a generator"
    );
    assert_ne!(mid[2], after[2]);
    assert_ne!(mid[3], after[3]);
}

#[test]
fn real_only_update_ignores_fakes() {
    let cfg = TrainConfig {
        discriminator_update: DiscriminatorUpdate::RealOnly,
        ..small_config()
    };
    let (_dir, state, data) = setup(&cfg, 2);
    let batches = batches_for_iteration(&state, &data).unwrap();
    let fakes_a: Vec<Tensor> = batches.iter().map(|b| b.b.clone()).collect();
    let fakes_b: Vec<Tensor> = batches.iter().map(|b| Tensor::zeros(b.b.shape())).collect();
    let mut s1 = state.clone();
    let mut s2 = state;
    let l1 = discriminator_update(&mut s1, &batches, &fakes_a).unwrap();
    let l2 = discriminator_update(&mut s2, &batches, &fakes_b).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(params_of(&s1), params_of(&s2));
}

#[test]
fn non_finite_loss_names_the_term() {
    let (_dir, mut state, data) = setup(&small_config(), 2);
    let mut batches = batches_for_iteration(&state, &data).unwrap();
    batches[0].b.data_mut()[3] = f64::NAN;
    let err = train_step(&mut state, &batches).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let msg = err.to_string();
    assert!(
        msg.contains("cycle") && msg.contains("iteration 0"),
        "{msg}"
    );
}

#[test]
fn checkpoint_round_trip_continues_identically() {
    let (_dir, mut state, data) = setup(&small_config(), 2);
    let batches = batches_for_iteration(&state, &data).unwrap();
    train_step(&mut state, &batches).unwrap();

    let bytes = state.to_checkpoint().encode();
    let mut restored = TrainState::from_checkpoint(&Checkpoint::decode(&bytes).unwrap()).unwrap();
    assert_eq!(restored.to_checkpoint().encode(), bytes);

    let batches = batches_for_iteration(&state, &data).unwrap();
    assert_eq!(batches, batches_for_iteration(&restored, &data).unwrap());
    let a = train_step(&mut state, &batches).unwrap();
    let b = train_step(&mut restored, &batches).unwrap();
    assert_eq!(a.to_record(), b.to_record());
    assert_eq!(
        state.to_checkpoint().encode(),
        restored.to_checkpoint().encode()
    );
}

#[test]
fn same_seed_gives_identical_loss_logs() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 2, 0.3);
    let cfg = small_config();
    let a = train(&cfg, dir.path(), &dir.path().join("a")).unwrap();
    let b = train(&cfg, dir.path(), &dir.path().join("b")).unwrap();
    let log_a = fs::read(&a.loss_log).unwrap();
    assert_eq!(log_a, fs::read(&b.loss_log).unwrap());
    assert_eq!(read_loss_log(&a.loss_log).unwrap().len(), 4);

    let other = TrainConfig { seed: 1, ..cfg };
    let c = train(&other, dir.path(), &dir.path().join("c")).unwrap();
    assert_ne!(log_a, fs::read(&c.loss_log).unwrap());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 3, 0.3);
    let full_cfg = TrainConfig {
        epochs: 4,
        batch_size: 2,
        ..small_config()
    };
    let full = train(&full_cfg, dir.path(), &dir.path().join("full")).unwrap();
    assert_eq!(full.iterations, 8);

    let part = dir.path().join("part");
    train(
        &TrainConfig {
            epochs: 2,
            ..full_cfg.clone()
        },
        dir.path(),
        &part,
    )
    .unwrap();
    // an interrupted run may leave records past the checkpoint
    let extra = fs::read_to_string(part.join(LOSS_LOG)).unwrap() + "4\t9\t9\t9\t9\t9\t9\n";
    fs::write(part.join(LOSS_LOG), extra).unwrap();
    let ckpt = part.join(epoch_checkpoint_name(2));
    assert_eq!(read_checkpoint(&ckpt).unwrap().iteration, 4);
    let resumed = resume(&full_cfg, &ckpt, dir.path(), &part).unwrap();
    assert_eq!(resumed.iterations, 8);
    assert_eq!(
        fs::read(&full.loss_log).unwrap(),
        fs::read(&resumed.loss_log).unwrap()
    );
    assert_eq!(
        fs::read(&full.checkpoint).unwrap(),
        fs::read(&resumed.checkpoint).unwrap()
    );

    let drifted = TrainConfig {
        lr_generator: 1e-3,
        ..full_cfg
    };
    let err = resume(&drifted, &ckpt, dir.path(), &part).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn run_directory_layout() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 2, 0.3);
    let out = dir.path().join("run");
    let cfg = TrainConfig {
        epochs: 2,
        checkpoint_every: 2,
        ..small_config()
    };
    let outcome = train(&cfg, dir.path(), &out).unwrap();
    assert!(out.join(CONFIG_FILE).exists());
    assert!(out.join(LATEST_CHECKPOINT).exists());
    assert!(!out.join(epoch_checkpoint_name(1)).exists());
    assert!(out.join(epoch_checkpoint_name(2)).exists());
    assert_eq!(
        TrainConfig::from_text(&fs::read_to_string(out.join(CONFIG_FILE)).unwrap()).unwrap(),
        cfg
    );
    let text = fs::read_to_string(&outcome.loss_log).unwrap();
    assert!(text.starts_with('#'));
    assert_eq!(
        parse_loss_log(&text)
            .unwrap()
            .iter()
            .map(|l| l.iteration)
            .collect::<Vec<_>>(),
        [0, 1, 2, 3]
    );

    let untrained = train(
        &TrainConfig { epochs: 0, ..cfg },
        dir.path(),
        &dir.path().join("zero"),
    )
    .unwrap();
    assert_eq!(untrained.iterations, 0);
    assert_eq!(read_checkpoint(&untrained.checkpoint).unwrap().iteration, 0);
}

#[test]
fn variants_differ_in_discriminators() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 2, 0.3);
    for variant in [Variant::Baseline, Variant::Dual] {
        let cfg = TrainConfig {
            variant,
            epochs: 1,
            ..small_config()
        };
        let out = train(&cfg, dir.path(), &dir.path().join(variant.to_string())).unwrap();
        let ckpt = read_checkpoint(&out.checkpoint).unwrap();
        let has_defect = ckpt.tensors.iter().any(|(n, _)| n.starts_with("d_d."));
        assert_eq!(has_defect, variant == Variant::Dual);
        let log = read_loss_log(&out.loss_log).unwrap();
        assert!(log
            .iter()
            .all(|l| l.add.is_some() == (variant == Variant::Dual)));
        // baseline total = adv + 10 cyc + 5 id; dual adds the defect term
        for l in &log {
            let expect = l.adc + l.add.unwrap_or(0.0) + 10.0 * l.cyc + 5.0 * l.id;
            assert!((l.total - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_log_round_trip() {
    let rows = [
        StepLosses {
            iteration: 0,
            adc: 0.1,
            add: Some(1.0 / 3.0),
            cyc: 2.5e-7,
            id: 1e10,
            total: 4.0,
            disc: 0.7,
        },
        StepLosses {
            iteration: 1,
            adc: 0.2,
            add: None,
            cyc: 0.3,
            id: 0.4,
            total: 5.0,
            disc: 0.6,
        },
    ];
    let text: String = std::iter::once(LOSS_LOG_HEADER.to_string())
        .chain(rows.iter().map(StepLosses::to_record))
        .map(|l| l + "\n")
        .collect();
    assert_eq!(parse_loss_log(&text).unwrap(), rows);
    assert!(parse_loss_log("0\t1\t2\n").is_err());
}

#[test]
fn feature_cache_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let ids = corpus(dir.path(), 2, 0.3);
    let wav = wav_path(dir.path(), "bc", &ids[0]);
    let (first, wrote) = cached_features(&wav).unwrap();
    assert!(wrote);
    let cache = wav.with_extension("bcf1");
    let bytes = fs::read(&cache).unwrap();
    let (again, wrote) = cached_features(&wav).unwrap();
    assert!(!wrote);
    assert_eq!(first, again);
    assert_eq!(bytes, fs::read(&cache).unwrap());
}

#[test]
fn dataset_layout_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(list_pairs(dir.path()), Err(Error::Data(_))));
    let ids = corpus(dir.path(), 2, 0.3);
    assert_eq!(list_pairs(dir.path()).unwrap(), ids);
    fs::remove_file(wav_path(dir.path(), "ac", &ids[1])).unwrap();
    let err = list_pairs(dir.path()).unwrap_err();
    assert!(err.to_string().contains(&ids[1]));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn config_text_round_trip_and_errors() {
    let mut cfg = TrainConfig::default();
    cfg.set("mapping", "nonparallel").unwrap();
    cfg.set("variant", "baseline").unwrap();
    cfg.set("adversarial_form", "nll").unwrap();
    cfg.set("lr_generator", "0.0005").unwrap();
    assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    for key in TRAIN_KEYS {
        assert!(cfg.to_text().contains(&format!("{key} = ")));
    }
    assert!(matches!(
        cfg.set("learning_rate", "1"),
        Err(Error::Config(_))
    ));
    assert!(matches!(cfg.set("epochs", "many"), Err(Error::Config(_))));
    assert!(TrainConfig::from_text("epochs = 1\nepochs = 2\n").is_err());
    assert!(TrainConfig::from_text("epochs\n").is_err());
    let parsed = TrainConfig::from_text("# comment\n\n epochs = 7 \n").unwrap();
    assert_eq!(parsed.epochs, 7);
    for (key, value) in [
        ("crop_frames", "130"),
        ("crop_frames", "8"),
        ("lr_generator", "0"),
        ("batch_size", "0"),
    ] {
        let mut c = TrainConfig::default();
        c.set(key, value).unwrap();
        assert!(c.validate().is_err(), "{key} = {value}");
    }
}

fn voicing(f0: &[f64]) -> Vec<bool> {
    f0.iter().map(|&f| f > 0.0).collect()
}

#[test]
fn enhance_keeps_duration_and_voicing() {
    let (dir, state, _) = setup(&small_config(), 2);
    let ids = list_pairs(dir.path()).unwrap();
    let (bc, rate) = read_wav(&wav_path(dir.path(), "bc", &ids[0])).unwrap();
    let out = enhance(&state, &bc, rate).unwrap();
    assert!(
        out.len().abs_diff(bc.len()) <= HOP,
        "{} vs {}",
        out.len(),
        bc.len()
    );
    assert!(out.iter().all(|v| v.is_finite()));

    let features = analyze(&bc, rate).unwrap();
    let enhanced = enhance_features(&state.g_ba.net, &features, &DomainStats::of(&state)).unwrap();
    assert_eq!(voicing(&enhanced.f0), voicing(&features.f0));
    assert_eq!(enhanced.ap, features.ap);
    assert_eq!(enhanced.mcep.shape(), features.mcep.shape());

    let err = enhance(&state, &bc, 8000).unwrap_err();
    assert!(matches!(err, Error::Input(_)));
}

#[test]
fn identity_mapping_reproduces_resynthesis() {
    let (dir, state, _) = setup(&small_config(), 2);
    let ids = list_pairs(dir.path()).unwrap();
    let (bc, rate) = read_wav(&wav_path(dir.path(), "bc", &ids[1])).unwrap();
    let stats = DomainStats {
        norm_ac: state.norm_bc.clone(),
        f0_ac: state.f0_bc,
        ..DomainStats::of(&state)
    };
    let enhanced = enhance_with(&IdentityMapper, &stats, &bc, rate).unwrap();
    let plain = synthesize(&analyze(&bc, rate).unwrap()).unwrap();
    let d = lsd_waveforms(&plain, &enhanced).unwrap();
    assert!(d < 0.2, "LSD to plain resynthesis {d}");
}

#[test]
fn enhance_pads_lengths_not_divisible_by_four() {
    let (_dir, state, _) = setup(&small_config(), 2);
    let stats = DomainStats::of(&state);
    for frames in [1, 5, 6, 7] {
        let f0: Vec<f64> = (0..frames)
            .map(|i| if i % 2 == 0 { 150.0 } else { 0.0 })
            .collect();
        let features = FeatureSet {
            f0,
            mcep: Tensor::full(&[24, frames], 0.1),
            ap: Tensor::full(&[4, frames], 0.5),
        };
        let out = enhance_features(&state.g_ba.net, &features, &stats).unwrap();
        assert_eq!(out.frames(), frames);
        assert_eq!(voicing(&out.f0), voicing(&features.f0));
    }
}

#[test]
fn evaluation_uses_test_split_or_everything() {
    let dir = tempfile::tempdir().unwrap();
    // STOI needs at least 30 analysis frames
    let ids = corpus(dir.path(), 2, 0.6);
    assert_eq!(evaluation_ids(dir.path(), 0).unwrap(), ids);
    let cfg = small_config();
    let (state, _) = prepare(&cfg, dir.path()).unwrap();
    let report = evaluate(&state, dir.path(), &ids).unwrap();
    assert_eq!(
        report.rows.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
        ids
    );
    let mean = report.rows.iter().map(|r| r.lsd).sum::<f64>() / 2.0;
    assert!((report.mean_lsd - mean).abs() < 1e-12);

    let big = tempfile::tempdir().unwrap();
    corpus(big.path(), 10, 0.1);
    let held = evaluation_ids(big.path(), 3).unwrap();
    assert_eq!(held.len(), 2);
    assert_eq!(held, split_ids(&list_pairs(big.path()).unwrap(), 3).1);
    assert_eq!(SAMPLE_RATE, 16_000);
}
