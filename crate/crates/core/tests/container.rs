use bcenhance::vocoder::{read_features, write_features, FeatureSet, FEATURE_MAGIC};
use bcenhance::Error;
use bcenhance_nn::Tensor;
use proptest::prelude::*;

fn features(t: usize, seed: u64) -> FeatureSet {
    let v = |i: usize| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0;
    FeatureSet {
        f0: (0..t)
            .map(|i| if i % 3 == 0 { 0.0 } else { 50.0 + 450.0 * v(i) })
            .collect(),
        mcep: Tensor::new(&[24, t], (0..24 * t).map(|i| v(i) * 4.0 - 2.0).collect()).unwrap(),
        ap: Tensor::new(&[4, t], (0..4 * t).map(v).collect()).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn bcf1_round_trip(t in 1usize..300, seed in 0u64..1000) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bcf1");
        let f = features(t, seed);
        write_features(&p, &f).unwrap();
        let g = read_features(&p).unwrap();
        prop_assert_eq!(&f.f0, &g.f0);
        prop_assert_eq!(f.mcep.data(), g.mcep.data());
        prop_assert_eq!(f.ap.data(), g.ap.data());
        let bytes = std::fs::read(&p).unwrap();
        prop_assert_eq!(bytes.len(), 16 + 8 * t * 29);
    }
}

#[test]
fn header_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.bcf1");
    write_features(&p, &features(7, 1)).unwrap();
    let b = std::fs::read(&p).unwrap();
    assert_eq!(&b[0..4], FEATURE_MAGIC);
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 7);
    assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 24);
    assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 4);
}

#[test]
fn corrupt_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.bcf1");
    write_features(&p, &features(5, 2)).unwrap();
    let mut b = std::fs::read(&p).unwrap();
    b.truncate(b.len() - 3);
    std::fs::write(&p, &b).unwrap();
    assert!(matches!(read_features(&p), Err(Error::Format { .. })));
    std::fs::write(&p, b"XXXX").unwrap();
    assert!(matches!(read_features(&p), Err(Error::Format { .. })));
}
