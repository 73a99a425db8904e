use super::*;
use crate::physics::simulate;

fn small_config() -> DatasetConfig {
    DatasetConfig {
        n_examples: 10,
        n_test: 3,
        train_fraction: 0.8,
        grid: GridSpec {
            n_tau: 16,
            n_t: 40,
            ..GridSpec::desk()
        },
        n_inputs: 4,
        created: "test".into(),
        seed: 7,
        ..DatasetConfig::default()
    }
}

fn two_maps() -> (G2Map, G2Map) {
    let a = SimParams::example();
    let b = SimParams {
        peaks: vec![
            crate::physics::Peak::lorentzian(-60.0, 5.0, 1.0),
            crate::physics::Peak::lorentzian(60.0, 5.0, 0.7),
        ],
        ..SimParams::example()
    };
    (simulate(&a).unwrap().clean, simulate(&b).unwrap().clean)
}

#[test]
fn mix_endpoints_reproduce_inputs() {
    let (a, b) = two_maps();
    assert_eq!(mix(&a, &b, 1.0).unwrap(), a);
    assert_eq!(mix(&a, &b, 0.0).unwrap(), b);
    let half = mix(&a, &b, 0.5).unwrap();
    let expect = (a.values[[3, 7]] + b.values[[3, 7]]) / 2.0;
    assert!((half.values[[3, 7]] - expect).abs() < 1e-15);
    half.check_clean_bounds(0.0).unwrap();
}

#[test]
fn mix_rejects_mismatched_grids_and_weights() {
    let (a, _) = two_maps();
    let other = simulate(&SimParams {
        grid: GridSpec::desk(),
        ..SimParams::example()
    })
    .unwrap()
    .clean;
    assert!(matches!(mix(&a, &other, 0.5), Err(Error::Shape { .. })));
    assert!(mix(&a, &a, 1.5).is_err());
}

#[test]
fn unmixed_example_target_is_the_clean_simulation() {
    let params = SimParams::example();
    let plan = InputPlan {
        indices: vec![0, 5, 10],
        window: Some(10.0),
    };
    let ex = make_example(&params, &plan).unwrap();
    assert_eq!(ex.target, simulate(&params).unwrap().clean);
    assert_eq!(ex.inputs.len(), 3);
    assert!(ex.inputs.iter().all(|c| c.t <= 10.0));
}

#[test]
fn config_rejects_unshifted_test_ranges() {
    let config = DatasetConfig {
        test_ranges: ParamRanges::default(),
        ..small_config()
    };
    let err = config.validate().unwrap_err();
    assert!(err.to_string().contains("test_ranges"), "{err}");
}

#[test]
fn build_and_reload_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    let manifest = build_dataset(&config, dir.path()).unwrap();
    assert_eq!(manifest.counts, SplitCounts { train: 8, val: 2, test: 3 });
    assert!(manifest.normalization.scale > 0.0);

    let ds = Dataset::open(dir.path()).unwrap();
    assert_eq!(ds.manifest, manifest);
    let train = ds.load_split(Split::Train).unwrap();
    assert_eq!(train.len(), 8);
    assert_eq!(train[0].n_inputs(), 4);
    assert_eq!(ds.summaries(Split::Test).unwrap().len(), 3);

    // The first record is example 0 of the training split, regenerated from its seed.
    let plan = config.input_plan().unwrap();
    let grids = config.grid.build().unwrap();
    let scale = NoiseSpec::calibrated_scale(&grids.tau, config.noise_counts);
    let params = sample_params(example_seed(config.seed, Split::Train, 0), &config.ranges, &config.grid, scale).unwrap();
    let ex = make_example(&params, &plan).unwrap();
    assert_eq!(Record::from_example(&ex), train[0]);
}

#[test]
fn worker_count_does_not_change_bytes() {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    build_dataset(&DatasetConfig { workers: Some(1), ..small_config() }, one.path()).unwrap();
    build_dataset(&DatasetConfig { workers: Some(3), ..small_config() }, many.path()).unwrap();
    for split in Split::ALL {
        let n = if split == Split::Test { 3 } else if split == Split::Train { 8 } else { 2 };
        for i in 0..n {
            let a = std::fs::read(split.record_path(one.path(), i)).unwrap();
            let b = std::fs::read(split.record_path(many.path(), i)).unwrap();
            assert_eq!(a, b, "{} record {i}", split.name());
        }
    }
    let m1 = std::fs::read(one.path().join(MANIFEST_FILE)).unwrap();
    let m2 = std::fs::read(many.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn corrupted_record_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&small_config(), dir.path()).unwrap();
    let path = Split::Val.record_path(dir.path(), 1);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[40] ^= 0x55;
    std::fs::write(&path, bytes).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    let err = ds.load_split(Split::Val).unwrap_err();
    assert!(matches!(err, Error::Checksum { .. }));
    assert!(err.to_string().contains("val record 1"), "{err}");
}

#[test]
fn test_split_uses_shifted_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    build_dataset(&config, dir.path()).unwrap();
    let grids = config.grid.build().unwrap();
    let scale = NoiseSpec::calibrated_scale(&grids.tau, config.noise_counts);
    for i in 0..3 {
        let p = sample_params(example_seed(config.seed, Split::Test, i), &config.test_ranges, &config.grid, scale).unwrap();
        assert!(p.peaks.iter().all(|k| k.fwhm >= 50.0 && k.fwhm <= 65.0));
    }
}
