mod common;

use proptest::prelude::*;
use trr_core::feature_io::{
    decode_feature_map, encode_feature_map, read_feature_file, write_feature_file, FeatureError, FeatureMapSet,
    LayerFeatures,
};

fn feature_map_strategy() -> impl Strategy<Value = FeatureMapSet<f32>> {
    (1usize..4, 1usize..6, 1usize..5, "[a-z0-9_/.-]{0,12}")
        .prop_flat_map(|(n_layers, frames, channels, id)| {
            let per_layer = frames * channels;
            (
                proptest::collection::btree_set(0u16..24, n_layers),
                proptest::collection::vec(
                    proptest::collection::vec(-1e6f32..1e6f32, per_layer),
                    n_layers,
                ),
                Just((frames, channels, id)),
            )
        })
        .prop_map(|(indices, values, (frames, channels, id))| {
            let layers = indices
                .into_iter()
                .zip(values)
                .map(|(l, v)| LayerFeatures::new(l, frames, channels, v))
                .collect();
            FeatureMapSet::new(id, layers).unwrap()
        })
}

proptest! {
    #[test]
    fn encode_decode_is_lossless_for_f32(fm in feature_map_strategy()) {
        let bytes = encode_feature_map(&fm).unwrap();
        let back: FeatureMapSet<f32> = decode_feature_map(&bytes).unwrap();
        prop_assert_eq!(&back, &fm);
        prop_assert_eq!(encode_feature_map(&back).unwrap(), bytes);
    }

    #[test]
    fn f64_reading_widens_exactly(fm in feature_map_strategy()) {
        let bytes = encode_feature_map(&fm).unwrap();
        let wide: FeatureMapSet<f64> = decode_feature_map(&bytes).unwrap();
        prop_assert_eq!(encode_feature_map(&wide).unwrap(), bytes);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        if let Ok(fm) = decode_feature_map::<f32>(&bytes) {
            prop_assert_eq!(encode_feature_map(&fm).unwrap(), bytes);
        }
    }

    #[test]
    fn single_byte_mutations_error_or_reencode_faithfully(
        fm in feature_map_strategy(),
        pos in any::<prop::sample::Index>(),
        byte in any::<u8>(),
    ) {
        let mut bytes = encode_feature_map(&fm).unwrap();
        let i = pos.index(bytes.len());
        bytes[i] = byte;
        if let Ok(decoded) = decode_feature_map::<f32>(&bytes) {
            prop_assert_eq!(encode_feature_map(&decoded).unwrap(), bytes);
        }
    }

    #[test]
    fn every_truncation_is_reported(fm in feature_map_strategy(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_feature_map(&fm).unwrap();
        let n = cut.index(bytes.len());
        let is_truncation = matches!(
            decode_feature_map::<f32>(&bytes[..n]),
            Err(FeatureError::TruncatedPayload { .. })
        );
        prop_assert!(is_truncation);
    }
}

#[test]
fn file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut gen = trr_core::rng::seeded(5);
    let fm = common::random_feature_map(&mut gen, &[4, 5, 6, 11], 7, 9, 3.0);
    let a = dir.path().join("a.trrf");
    let b = dir.path().join("b.trrf");
    write_feature_file(&fm, &a).unwrap();
    let back: FeatureMapSet<f64> = read_feature_file(&a).unwrap();
    write_feature_file(&back, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_file_is_an_io_error() {
    let err = read_feature_file::<f32>("/nonexistent/x.trrf").unwrap_err();
    assert!(matches!(err, FeatureError::Io(_)));
}
