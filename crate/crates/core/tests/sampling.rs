mod common;

use std::collections::{BTreeMap, HashMap};

use common::scalar;
use ndarray::Array4;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use voxaug::sampling::{extract_patch, grid_locations, uniform_location, weighted_location, AggregationMode};
use voxaug::{Aggregator, AffineMatrix, Error, GridSampler, Image, Queue, QueueConfig, Rng, Sampler, Subject, SubjectsDataset};

fn coded(shape: [usize; 3]) -> Array4<f32> {
    Array4::from_shape_fn((2, shape[0], shape[1], shape[2]), |(c, i, j, k)| {
        (c * 1_000_000 + i * 10_000 + j * 100 + k) as f32
    })
}

fn tilted() -> AffineMatrix {
    AffineMatrix::from_rows([
        [0.8, 0.1, 0.0, -20.0],
        [0.0, 1.3, 0.2, 4.0],
        [0.1, 0.0, 2.0, 9.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap()
}

fn counting_dataset(n: usize) -> SubjectsDataset {
    let subjects = (0..n)
        .map(|i| {
            let data = Array4::from_elem((1, 6, 6, 6), i as f32);
            Subject::new().with_image("t1", Image::scalar(data, AffineMatrix::identity()))
        })
        .collect();
    SubjectsDataset::new(subjects, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patches_are_exact_crops(
        shape in prop::array::uniform3(1usize..12),
        frac in prop::array::uniform3(0.0f64..1.0),
        seed in any::<u64>(),
    ) {
        let patch = [0, 1, 2].map(|a| 1 + ((shape[a] - 1) as f64 * frac[a]) as usize);
        let data = coded(shape);
        let a = tilted();
        let subject = Subject::new().with_image("t1", Image::scalar(data.clone(), a));
        let p = Sampler::Uniform { patch_size: patch }.sample(&subject, 0, &mut Rng::new(seed)).unwrap();
        let o = p.location.origin;
        let img = &p.subject.images["t1"];
        prop_assert_eq!(img.spatial_shape().unwrap(), patch);
        for ((c, i, j, k), v) in scalar(img).indexed_iter() {
            prop_assert_eq!(*v, data[[c, o[0] + i, o[1] + j, o[2] + k]]);
        }
        let want = a.index_to_physical(o.map(|x| x as f64));
        let got = img.affine().index_to_physical([0.0; 3]);
        for d in 0..3 {
            prop_assert!((want[d] - got[d]).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_covers_every_voxel(
        shape in prop::array::uniform3(1usize..33),
        pfrac in prop::array::uniform3(0.0f64..1.0),
        ofrac in prop::array::uniform3(0.0f64..1.0),
    ) {
        let patch = [0, 1, 2].map(|a| 1 + ((shape[a] - 1) as f64 * pfrac[a]) as usize);
        let overlap = [0, 1, 2].map(|a| ((patch[a] - 1) as f64 * ofrac[a]) as usize);
        let locations = grid_locations(shape, patch, overlap).unwrap();
        let mut hits = ndarray::Array3::<u32>::zeros(shape);
        for l in &locations {
            for a in 0..3 {
                prop_assert!(l.origin[a] + l.size[a] <= shape[a]);
            }
            hits.slice_mut(ndarray::s![
                l.origin[0]..l.origin[0] + patch[0],
                l.origin[1]..l.origin[1] + patch[1],
                l.origin[2]..l.origin[2] + patch[2]
            ]).mapv_inplace(|h| h + 1);
        }
        prop_assert!(hits.iter().all(|&h| h > 0));
    }

    #[test]
    fn crop_aggregation_writes_each_voxel_once(
        shape in prop::array::uniform3(2usize..20),
        pfrac in prop::array::uniform3(0.0f64..1.0),
        ofrac in prop::array::uniform3(0.0f64..1.0),
    ) {
        let patch = [0, 1, 2].map(|a| 2 + ((shape[a] - 2) as f64 * pfrac[a]) as usize);
        let overlap = [0, 1, 2].map(|a| (((patch[a] - 1) as f64 * ofrac[a]) as usize) & !1);
        let data = coded(shape);
        let subject = Subject::new().with_image("t1", Image::scalar(data.clone(), AffineMatrix::identity()));
        let mut agg = Aggregator::new(shape, patch, overlap, AggregationMode::Crop).unwrap();
        for p in GridSampler::new(&subject, patch, overlap).unwrap() {
            let p = p.unwrap();
            agg.add(scalar(&p.subject.images["t1"]), &p.location).unwrap();
        }
        prop_assert!(agg.counts().iter().all(|&c| c == 1));
        prop_assert_eq!(agg.finalize().unwrap(), data);
    }
}

#[test]
fn grid_example_counts() {
    let locations = grid_locations([10, 10, 10], [4, 4, 4], [2, 2, 2]).unwrap();
    assert_eq!(locations.len(), 64);
}

#[test]
fn average_aggregation_of_identity_recovers_the_volume() {
    let shape = [9, 7, 8];
    let data = coded(shape);
    let subject = Subject::new().with_image("t1", Image::scalar(data.clone(), AffineMatrix::identity()));
    let mut agg = Aggregator::new(shape, [4, 3, 5], [3, 1, 2], AggregationMode::Average).unwrap();
    for p in GridSampler::new(&subject, [4, 3, 5], [3, 1, 2]).unwrap() {
        let p = p.unwrap();
        agg.add(scalar(&p.subject.images["t1"]), &p.location).unwrap();
    }
    assert!(agg.counts().iter().any(|&c| c > 1));
    assert_eq!(agg.finalize().unwrap(), data);
}

#[test]
fn aggregator_rejects_foreign_locations() {
    let mut agg = Aggregator::new([10; 3], [4; 3], [2; 3], AggregationMode::Crop).unwrap();
    let loc = voxaug::PatchLocation {
        origin: [1, 0, 0],
        size: [4; 3],
    };
    assert!(matches!(
        agg.add(&Array4::zeros((1, 4, 4, 4)), &loc),
        Err(Error::UnknownLocation([1, 0, 0]))
    ));
}

#[test]
fn uniform_origins_pass_chi_square() {
    // 9³ volume with 5³ patches leaves 5 origins per axis, 125 in total.
    let mut rng = Rng::new(2024);
    let mut counts = HashMap::new();
    let n = 10_000;
    for _ in 0..n {
        *counts.entry(uniform_location([9, 9, 9], [5, 5, 5], &mut rng).unwrap().origin).or_insert(0u32) += 1;
    }
    assert_eq!(counts.len(), 125);
    let e = n as f64 / 125.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(124.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn weighted_sampler_follows_the_map() {
    // Two admissible centres along x with weights 1 and 3.
    let shape = [4, 1, 1];
    let weights = [0.0, 1.0, 3.0, 0.0];
    let mut rng = Rng::new(5);
    let n = 10_000;
    let mut high = 0;
    for _ in 0..n {
        let loc = weighted_location(&weights, shape, [2, 1, 1], &mut rng).unwrap();
        assert!(loc.origin[0] == 0 || loc.origin[0] == 1, "{:?}", loc.origin);
        if loc.origin[0] == 1 {
            high += 1;
        }
    }
    let f = high as f64 / n as f64;
    assert!((f - 0.75).abs() < 0.03, "{f}");
}

#[test]
fn weighted_sampler_ignores_the_margin() {
    let shape = [5, 5, 5];
    let mut w = vec![1.0; 125];
    // A 4³ patch has origins 0..=1 per axis, so centres 2..=3. Zeroing the
    // centre of origin (0,0,0) must rule that origin out.
    w[(2 * 5 + 2) * 5 + 2] = 0.0;
    let mut rng = Rng::new(1);
    for _ in 0..200 {
        let loc = weighted_location(&w, shape, [4, 4, 4], &mut rng).unwrap();
        assert_ne!(loc.origin, [0, 0, 0]);
    }
    let margin_only: Vec<f64> = (0..125).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    assert!(matches!(
        weighted_location(&margin_only, shape, [4, 4, 4], &mut rng),
        Err(Error::AllZeroProbability)
    ));
}

#[test]
fn sampler_uses_the_named_probability_image() {
    let mut prob = Array4::<f32>::zeros((1, 6, 6, 6));
    prob[[0, 4, 1, 3]] = 1.0;
    let subject = Subject::new()
        .with_image("t1", Image::scalar(coded([6, 6, 6]), AffineMatrix::identity()))
        .with_image("prob", Image::scalar(prob, AffineMatrix::identity()));
    let sampler: Sampler = serde_json::from_value(serde_json::json!({
        "type": "weighted", "patch_size": [3, 3, 3], "probability_image": "prob"
    }))
    .unwrap();
    let p = sampler.sample(&subject, 0, &mut Rng::new(0)).unwrap();
    assert_eq!(p.location.origin, [3, 0, 2]);
    let missing = Sampler::Weighted {
        patch_size: [3, 3, 3],
        probability_image: "nope".into(),
    };
    assert!(matches!(missing.sample(&subject, 0, &mut Rng::new(0)), Err(Error::MissingImage(_))));
}

#[test]
fn oversized_patch_is_an_error() {
    let subject = common::subject_with("t1", Array4::zeros((1, 4, 4, 4)));
    let loc = voxaug::PatchLocation {
        origin: [0; 3],
        size: [5, 4, 4],
    };
    assert!(matches!(extract_patch(&subject, &loc), Err(Error::PatchTooLarge { .. })));
}

#[test]
fn queue_epoch_is_fair() {
    for workers in [1, 3] {
        let queue = Queue::new(
            counting_dataset(10),
            Sampler::Uniform { patch_size: [3, 3, 3] },
            QueueConfig {
                max_length: 8,
                samples_per_volume: 4,
                num_workers: workers,
                seed: 9,
                ..QueueConfig::default()
            },
        )
        .unwrap();
        let mut per_subject = BTreeMap::new();
        let mut total = 0;
        for p in queue.epoch(0) {
            let p = p.unwrap();
            let value = scalar(&p.subject.images["t1"])[[0, 0, 0, 0]] as usize;
            assert_eq!(value, p.subject_index);
            *per_subject.entry(p.subject_index).or_insert(0) += 1;
            total += 1;
        }
        assert_eq!(total, 40);
        assert_eq!(queue.epoch_len(), 40);
        assert!(per_subject.values().all(|&c| c == 4));
        assert_eq!(per_subject.len(), 10);
    }
}

fn patch_multiset(workers: usize, epoch: u64) -> Vec<(usize, [usize; 3], Vec<u32>)> {
    let subjects = (0..6)
        .map(|i| Subject::new().with_image("t1", Image::scalar(common::lcg_volume([1, 10, 9, 8], i), AffineMatrix::identity())))
        .collect();
    let spec = voxaug::PipelineSpec::from_json(
        r#"{"type":"compose","children":[{"type":"leaf","name":"RandomNoise"},{"type":"leaf","name":"RandomFlip","params":{"axes":[0,1]}}]}"#,
    )
    .unwrap();
    let dataset = SubjectsDataset::new(subjects, Some(spec)).unwrap();
    let queue = Queue::new(
        dataset,
        Sampler::Uniform { patch_size: [4, 4, 4] },
        QueueConfig {
            max_length: 6,
            samples_per_volume: 3,
            num_workers: workers,
            seed: 77,
            ..QueueConfig::default()
        },
    )
    .unwrap();
    let mut out: Vec<_> = queue
        .epoch(epoch)
        .map(|p| {
            let p = p.unwrap();
            let bits = scalar(&p.subject.images["t1"]).iter().map(|v| v.to_bits()).collect();
            (p.subject_index, p.location.origin, bits)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn worker_count_does_not_change_the_patches() {
    let one = patch_multiset(1, 0);
    assert_eq!(one.len(), 18);
    assert_eq!(one, patch_multiset(4, 0));
    assert_ne!(one, patch_multiset(1, 1));
}

#[test]
fn queue_reports_failing_subjects() {
    let subjects = vec![
        common::subject_with("t1", Array4::zeros((1, 6, 6, 6))),
        common::subject_with("t1", Array4::zeros((1, 2, 6, 6))),
    ];
    let queue = Queue::new(
        SubjectsDataset::new(subjects, None).unwrap(),
        Sampler::Uniform { patch_size: [3, 3, 3] },
        QueueConfig {
            max_length: 4,
            samples_per_volume: 2,
            shuffle_subjects: false,
            ..QueueConfig::default()
        },
    )
    .unwrap();
    let results: Vec<_> = queue.epoch(0).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 2);
    let err = results.into_iter().find_map(Result::err).unwrap();
    assert!(matches!(err, Error::Subject { index: 1, .. }));
}

#[test]
fn queue_configuration_is_validated() {
    let bad = [
        QueueConfig {
            max_length: 2,
            samples_per_volume: 3,
            ..QueueConfig::default()
        },
        QueueConfig {
            samples_per_volume: 0,
            ..QueueConfig::default()
        },
        QueueConfig {
            num_workers: 0,
            ..QueueConfig::default()
        },
    ];
    for cfg in bad {
        assert!(Queue::new(counting_dataset(1), Sampler::Uniform { patch_size: [1, 1, 1] }, cfg).is_err());
    }
    assert!(matches!(SubjectsDataset::new(Vec::new(), None), Err(Error::EmptyDataset)));
}

#[test]
fn dropping_an_epoch_early_releases_the_workers() {
    let queue = Queue::new(
        counting_dataset(20),
        Sampler::Uniform { patch_size: [2, 2, 2] },
        QueueConfig {
            max_length: 2,
            samples_per_volume: 2,
            num_workers: 3,
            ..QueueConfig::default()
        },
    )
    .unwrap();
    let first: Vec<_> = queue.epoch(0).take(3).collect();
    assert_eq!(first.len(), 3);
    let next = queue.epoch(1).next().unwrap().unwrap();
    assert_eq!(next.subject.images["t1"].spatial_shape().unwrap(), [2, 2, 2]);
}
