use segnoise_core::metrics::{aggregate_framewise, score_volumewise, soft_dice};
use segnoise_core::noise::corrupt_dataset;
use segnoise_core::trainer::{beta_gridsearch, prepare, GridConfig, TrainConfig};
use segnoise_core::volume::{generate_corpus, load_dataset, make_folds, write_patient, FoldSizes, PhantomSpec};
use segnoise_core::{MaskFrame, MaskVolume, NoiseMode, NoiseSpec, PredictionVolume, Shape3};

fn small_spec() -> PhantomSpec {
    PhantomSpec {
        depth: 4,
        height: 40,
        width: 40,
        radius_min: 4.0,
        radius_max: 7.0,
        margin: 5,
        ..PhantomSpec::default()
    }
}

#[test]
fn bundles_round_trip_through_disk() {
    let records = generate_corpus(&small_spec(), 3, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for r in &records {
        write_patient(r, dir.path().join(r.patient_id())).unwrap();
    }
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.patient_id(), b.patient_id());
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.volume, b.volume);
    }
}

#[test]
fn corruption_leaves_test_masks_alone() {
    let records = generate_corpus(&small_spec(), 6, 2).unwrap();
    let ids: Vec<String> = records.iter().map(|r| r.patient_id().to_string()).collect();
    let split = make_folds(&ids, 1, FoldSizes::new(3, 1, 2), 0).unwrap().folds[0].clone();
    for mode in NoiseMode::ALL {
        let spec = NoiseSpec::new(mode, 5.0, 9).unwrap();
        let (masks, report) = corrupt_dataset(&records, &split, &spec).unwrap();
        for (r, m) in records.iter().zip(&masks) {
            if split.test_ids.iter().any(|t| t == r.patient_id()) {
                assert_eq!(&r.mask, m);
            }
        }
        assert_eq!(report.rows.len(), 4 * 4);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 17);
    }
}

#[test]
fn volume_score_weights_by_size() {
    // Frame 0: 10-pixel target, prediction covers 3 of them (dice 0.5).
    // Frame 1: 1000-pixel target, prediction covers 818 (dice ~0.9).
    let shape = Shape3::new(2, 40, 40);
    let small_t = MaskFrame::from_fn(40, 40, |y, x| y == 0 && x < 10);
    let small_p = MaskFrame::from_fn(40, 40, |y, x| y == 0 && x < 3);
    let big_t = MaskFrame::from_fn(40, 40, |y, x| y * 40 + x < 1000);
    let big_p = MaskFrame::from_fn(40, 40, |y, x| y * 40 + x < 818);
    let t = MaskVolume::from_frames(&[small_t.clone(), big_t.clone()]).unwrap();
    let p = MaskVolume::from_frames(&[small_p.clone(), big_p.clone()]).unwrap();

    let d0 = soft_dice(&segnoise_core::PredictionFrame::from_mask(&small_p), &small_t).unwrap();
    let d1 = soft_dice(&segnoise_core::PredictionFrame::from_mask(&big_p), &big_t).unwrap();
    assert!((d0 - 0.5).abs() < 1e-15 && (d1 - 0.9).abs() < 1e-3);

    let vol = score_volumewise(&PredictionVolume::from_mask(&p), &t).unwrap().dice;
    let framewise = aggregate_framewise(&[d0, d1]).unwrap();
    assert!(vol > d0 && vol < d1);
    assert!(vol > framewise, "volume {vol} should sit nearer the large frame than the plain mean {framewise}");
    assert_eq!(shape, t.shape());
}

#[test]
fn grid_is_deterministic() {
    let records = generate_corpus(&small_spec(), 6, 3).unwrap();
    let ids: Vec<String> = records.iter().map(|r| r.patient_id().to_string()).collect();
    let split = make_folds(&ids, 1, FoldSizes::new(3, 1, 2), 0).unwrap().folds[0].clone();
    let patients = prepare(&records).unwrap();
    let cfg = GridConfig {
        betas: vec![0.5, 1.0],
        sigma2_values: vec![0.0, 3.0],
        seeds: vec![0, 1],
        train: TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
        ..GridConfig::default()
    };
    let a = beta_gridsearch(&patients, &split, &cfg).unwrap();
    let b = beta_gridsearch(&patients, &split, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);

    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = single.install(|| beta_gridsearch(&patients, &split, &cfg).unwrap());
    assert_eq!(a, c);
}
