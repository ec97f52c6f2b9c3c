use proptest::prelude::*;
use svehnn::datagen::{generate_hetero, generate_xi, read_dataset_from, write_dataset_to, Dataset};

fn roundtrip(ds: &Dataset) -> Dataset {
    let mut buf = Vec::new();
    write_dataset_to(ds, &mut buf).unwrap();
    read_dataset_from(buf.as_slice()).unwrap()
}

#[test]
fn xi_classes_are_balanced_and_sixteen_points() {
    let ds = generate_xi(51, 1, 0.05).unwrap();
    assert_eq!(ds.manifest.class_balance, [25, 26]);
    assert!(ds.examples.iter().all(|e| e.input.num_points() == 16 && e.input.num_tabular() == 0));
}

#[test]
fn noiseless_xi_classes_differ_in_spread() {
    // an X spans both axes, an I is a vertical stroke
    let ds = generate_xi(10, 2, 0.0).unwrap();
    for e in &ds.examples {
        let xs: Vec<f64> = e.input.cloud.points().iter().map(|p| p[0]).collect();
        let width = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        if e.label == 1 {
            assert!(width > 1.0, "{width}");
        } else {
            assert!(width < 1e-12, "{width}");
        }
    }
}

#[test]
fn hetero_informative_columns_shift_with_label() {
    let ds = generate_hetero(400, 8, 4, 2, 3).unwrap();
    let col_mean = |t: usize, label: u8| {
        let v: Vec<f64> = ds.examples.iter().filter(|e| e.label == label).map(|e| e.input.tabular.values()[t]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    for t in 0..2 {
        assert!(col_mean(t, 1) - col_mean(t, 0) > 0.7);
    }
    for t in 2..4 {
        assert!((col_mean(t, 1) - col_mean(t, 0)).abs() < 0.3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn xi_roundtrip_is_bitwise(n in 2usize..20, seed in any::<u64>(), jitter in 0.0f64..0.2) {
        let ds = generate_xi(n, seed, jitter).unwrap();
        let back = roundtrip(&ds);
        prop_assert_eq!(back.manifest, ds.manifest);
        prop_assert_eq!(back.examples, ds.examples);
    }

    #[test]
    fn hetero_roundtrip_is_bitwise(n in 2usize..12, k in 4usize..9, d in 1usize..5, seed in any::<u64>()) {
        let ds = generate_hetero(n, k, d, d / 2, seed).unwrap();
        let back = roundtrip(&ds);
        prop_assert_eq!(back.examples, ds.examples);
    }

    #[test]
    fn generators_are_seed_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(generate_xi(8, seed, 0.05).unwrap().examples, generate_xi(8, seed, 0.05).unwrap().examples);
    }
}
