use proptest::prelude::*;
use roadseg::cam::{cam_map, class_scores, gap, normalize_saliency, upsample_bilinear};
use roadseg::evalcost::{iou_counts, miou, IouCounts, MiouMode};
use roadseg::fusion::{fuse, salient_area, Denominator, FusionConfig};
use roadseg::{
    load_image, load_mask, save_image, save_mask, segment, ClassWeights, FeatureMaps, Image, Label, LabelMap,
    SaliencyMap, SegmentationMask, SuperpixelConfig, SuperpixelMap,
};

fn feature_maps() -> impl Strategy<Value = FeatureMaps> {
    (1usize..5, 1usize..6, 1usize..6).prop_flat_map(|(c, h, w)| {
        prop::collection::vec(-4.0f32..4.0, c * h * w).prop_map(move |v| FeatureMaps::new(c, h, w, v).unwrap())
    })
}

fn saliency(w: usize, h: usize) -> impl Strategy<Value = SaliencyMap> {
    prop::collection::vec(-10.0f64..10.0, w * h).prop_map(move |v| SaliencyMap::new(w, h, v).unwrap())
}

fn labels(n: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(prop_oneof![Just(Label::Other), Just(Label::Road), Just(Label::Void)], n)
}

proptest! {
    #[test]
    fn fmap_bytes_round_trip(fm in feature_maps()) {
        let back = FeatureMaps::from_bytes(&fm.to_bytes()).unwrap();
        prop_assert_eq!(back.values(), fm.values());
        prop_assert_eq!((back.channels(), back.height(), back.width()), (fm.channels(), fm.height(), fm.width()));
    }

    #[test]
    fn normalize_is_idempotent_and_bounded(sm in (1usize..8, 1usize..8).prop_flat_map(|(w, h)| saliency(w, h))) {
        let once = normalize_saliency(&sm);
        let twice = normalize_saliency(&once);
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn upsample_stays_within_source_range(
        sm in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| saliency(w, h)),
        w in 1usize..20,
        h in 1usize..20,
    ) {
        let (lo, hi) = sm.min_max();
        let up = upsample_bilinear(&sm, w, h).unwrap();
        prop_assert!(up.values().iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }

    #[test]
    fn cam_is_linear_in_weights(fm in feature_maps(), a in -3.0f64..3.0, seed in 0u64..1000) {
        let c = fm.channels();
        let w1: Vec<f64> = (0..c).map(|k| ((seed + k as u64 * 7) % 13) as f64 - 6.0).collect();
        let w2: Vec<f64> = (0..c).map(|k| ((seed * 3 + k as u64) % 5) as f64 - 2.0).collect();
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + y).collect();
        let two = |w: &[f64]| ClassWeights::new(2, c, [w, &vec![0.0; c][..]].concat(), vec![0.0, 0.0]).unwrap();
        let cam = |w: &[f64]| cam_map(&fm, &two(w), 0).unwrap();
        let (m1, m2, mm) = (cam(&w1), cam(&w2), cam(&mix));
        for i in 0..mm.values().len() {
            let want = a * m1.values()[i] + m2.values()[i];
            prop_assert!((mm.values()[i] - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn cam_mean_equals_score_minus_bias(fm in feature_maps(), bias in -2.0f64..2.0) {
        let c = fm.channels();
        let row: Vec<f64> = (0..c).map(|k| k as f64 - 1.5).collect();
        let w = ClassWeights::new(2, c, [row, vec![0.0; c]].concat(), vec![bias, 0.0]).unwrap();
        let cam = cam_map(&fm, &w, 0).unwrap();
        let mean = cam.values().iter().sum::<f64>() / cam.values().len() as f64;
        let score = class_scores(&gap(&fm), &w).unwrap().0[0];
        prop_assert!((mean - (score - bias)).abs() < 1e-9 * (1.0 + score.abs()));
    }

    #[test]
    fn dataset_miou_ignores_how_images_are_split(
        pred in labels(48),
        gt in labels(48),
        cut in 1usize..47,
    ) {
        let whole = iou_counts(
            &SegmentationMask::new(48, 1, pred.clone()).unwrap(),
            &SegmentationMask::new(48, 1, gt.clone()).unwrap(),
        ).unwrap();
        let part = |r: std::ops::Range<usize>| iou_counts(
            &SegmentationMask::new(r.len(), 1, pred[r.clone()].to_vec()).unwrap(),
            &SegmentationMask::new(r.len(), 1, gt[r].to_vec()).unwrap(),
        ).unwrap();
        let split = [part(0..cut), part(cut..48)];
        prop_assert_eq!(split[0] + split[1], whole);
        let a = miou(&[whole], MiouMode::Dataset).unwrap().value;
        let b = miou(&split, MiouMode::Dataset).unwrap().value;
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn raising_theta_never_adds_road(
        ids in prop::collection::vec(0u32..6, 64),
        sal in prop::collection::vec(0.0f64..1.0, 64),
        t1 in 0.0f64..0.9,
        dt in 0.0f64..0.09,
        per_superpixel in any::<bool>(),
    ) {
        let sp = SuperpixelMap::from_ids(8, 8, &ids).unwrap();
        let salient = salient_area(&SaliencyMap::new(8, 8, sal).unwrap(), 0.5);
        let cfg = |theta| FusionConfig {
            denominator: if per_superpixel { Denominator::Superpixel } else { Denominator::SalientArea },
            ..FusionConfig::new(0.5, theta)
        };
        let lo = fuse(&sp, &salient, &cfg(t1)).unwrap().mask;
        let hi = fuse(&sp, &salient, &cfg(t1 + dt)).unwrap().mask;
        for (a, b) in lo.labels().iter().zip(hi.labels()) {
            prop_assert!(!(*b == Label::Road && *a != Label::Road));
        }
    }
}

#[test]
fn png_round_trips_image_and_mask() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(7, 5, |x, y| [(x * 30) as u8, (y * 40) as u8, 9]).unwrap();
    let p = dir.path().join("a.png");
    save_image(&img, &p).unwrap();
    assert_eq!(load_image(&p).unwrap(), img);

    let mask = SegmentationMask::from_fn(7, 5, |x, y| match (x + y) % 3 {
        0 => Label::Road,
        1 => Label::Other,
        _ => Label::Void,
    })
    .unwrap();
    let p = dir.path().join("m.png");
    save_mask(&mask, &p).unwrap();
    assert_eq!(load_mask(&p, &LabelMap::default()).unwrap(), mask);
}

/// Bilinear with pixel-centre alignment, evaluated point by point.
#[test]
fn upsample_two_by_two_matches_hand_interpolation() {
    let sm = SaliencyMap::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let up = upsample_bilinear(&sm, 4, 4).unwrap();
    let coord = |i: usize| ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, 1.0);
    for y in 0..4 {
        for x in 0..4 {
            let (sx, sy) = (coord(x), coord(y));
            let want = sx + 2.0 * sy;
            assert!(
                (up.get(x, y) - want).abs() < 1e-12,
                "({x},{y}) {} vs {want}",
                up.get(x, y)
            );
        }
    }
}

#[test]
fn gap_and_scores_match_direct_sums() {
    let (c, h, w) = (3, 4, 5);
    let values: Vec<f32> = (0..c * h * w).map(|i| ((i * 17) % 11) as f32 - 5.0).collect();
    let fm = FeatureMaps::new(c, h, w, values).unwrap();
    let weights = ClassWeights::new(2, c, vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75], vec![0.1, -0.2]).unwrap();
    let pooled = gap(&fm);
    let scores = class_scores(&pooled, &weights).unwrap();
    for cls in 0..2 {
        let mut direct = weights.bias()[cls];
        for k in 0..c {
            let mut sum = 0.0;
            for y in 0..h {
                for x in 0..w {
                    sum += f64::from(fm.get(k, x, y));
                }
            }
            direct += weights.row(cls)[k] * sum / (h * w) as f64;
        }
        assert!((scores.0[cls] - direct).abs() < 1e-12);
    }
}

/// Larger k merges more: component counts on noise never grow with k.
#[test]
fn granularity_is_monotone_on_noise() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let img = Image::from_fn(48, 48, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
        let counts: Vec<usize> = [50.0, 200.0, 800.0, 3200.0]
            .iter()
            .map(|&k| {
                let cfg = SuperpixelConfig {
                    min_size: 1,
                    ..SuperpixelConfig::with_k(k)
                };
                segment(&img, &cfg, 0).unwrap().num_components()
            })
            .collect();
        assert!(counts.windows(2).all(|p| p[0] >= p[1]), "{counts:?}");
    }
}

#[test]
fn empty_and_disjoint_unions() {
    let empty = IouCounts::default();
    let m = miou(&[empty, empty], MiouMode::PerImage).unwrap();
    assert!(m.empty_union && m.value == 1.0);
    let disjoint = IouCounts {
        intersection: 0,
        union: 10,
    };
    assert_eq!(miou(&[disjoint, empty], MiouMode::PerImage).unwrap().value, 0.0);
}
