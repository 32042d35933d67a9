//! Self-training from weak labels.
//!
//! Iteration 0 is the weak-label set itself. Iteration `k >= 1` trains a fresh
//! model on the masks of iteration `k - 1` and replaces them with the model's
//! predictions over the same images.

mod baseline;
mod scene;

pub use baseline::{baseline_segmenter, pixel_features, BaselineConfig, BaselineSegmenter, PixelModel, FEATURES};
pub use scene::{synth_background, synth_scene, RoadGeometry, SceneConfig, ROAD_GRAY};

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evalcost::{evaluate, IouCounts, Miou, MiouMode};
use crate::io::save_mask;
use crate::manifest::Manifest;
use crate::parallel::Execution;
use crate::raster::{Image, SegmentationMask};

/// A trainable segmentation backend.
///
/// `predict` must return a mask of the input's size holding only road and
/// other labels, and `train` must be deterministic for a fixed seed.
pub trait Segmenter: Sync {
    type Model: Send + Sync;

    fn train(&self, images: &[Image], masks: &[SegmentationMask], seed: u64) -> Result<Self::Model>;

    fn predict(&self, model: &Self::Model, image: &Image) -> Result<SegmentationMask>;
}

#[derive(Debug, Clone, Default)]
pub struct SelfTrainConfig {
    pub iterations: usize,
    pub seed: u64,
    pub eval_gt: Option<Vec<SegmentationMask>>,
    pub miou_mode: MiouMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Seed passed to the segmenter; `None` for iteration 0.
    pub seed: Option<u64>,
    pub masks: Vec<SegmentationMask>,
    pub counts: Option<Vec<IouCounts>>,
    pub miou: Option<Miou>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainRun {
    pub seed: u64,
    pub records: Vec<IterationRecord>,
}

impl SelfTrainRun {
    /// Iteration with the highest mIOU, if evaluated.
    pub fn best(&self) -> Option<&IterationRecord> {
        self.records
            .iter()
            .filter(|r| r.miou.is_some())
            .max_by(|a, b| a.miou.unwrap().value.total_cmp(&b.miou.unwrap().value))
    }

    pub fn mious(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.miou.map(|m| m.value)).collect()
    }

    /// Writes `iter_<k>/<index>.pgm` for every iteration and a `manifest.txt`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut manifest = Manifest::new();
        manifest.set("command", "selftrain");
        manifest.set("seed", self.seed);
        manifest.set("iterations", self.records.len().saturating_sub(1));
        for r in &self.records {
            let sub = dir.join(format!("iter_{}", r.iteration));
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for (i, m) in r.masks.iter().enumerate() {
                save_mask(m, sub.join(format!("{i:04}.pgm")))?;
            }
            let prefix = format!("iteration.{}", r.iteration);
            manifest.set(
                format!("{prefix}.source"),
                if r.iteration == 0 { "weak" } else { "predictions" },
            );
            if let Some(seed) = r.seed {
                manifest.set(format!("{prefix}.seed"), seed);
            }
            if let Some(m) = r.miou {
                manifest.set(format!("{prefix}.miou"), format!("{:.6}", m.value));
            }
        }
        manifest.write(dir.join("manifest.txt"))
    }
}

fn evaluate_opt(masks: &[SegmentationMask], cfg: &SelfTrainConfig) -> Result<(Option<Vec<IouCounts>>, Option<Miou>)> {
    match &cfg.eval_gt {
        Some(gt) => {
            let (counts, m) = evaluate(masks, gt, cfg.miou_mode)?;
            Ok((Some(counts), Some(m)))
        }
        None => Ok((None, None)),
    }
}

/// Runs `cfg.iterations` rounds of self-training. The result holds
/// `iterations + 1` records, the first being the weak masks.
pub fn self_train<S: Segmenter>(
    images: &[Image],
    weak_masks: &[SegmentationMask],
    seg: &S,
    cfg: &SelfTrainConfig,
    exec: Execution,
) -> Result<SelfTrainRun> {
    if images.len() != weak_masks.len() {
        return Err(Error::Misaligned(format!(
            "{} images vs {} weak masks",
            images.len(),
            weak_masks.len()
        )));
    }
    if let Some(gt) = &cfg.eval_gt {
        if gt.len() != images.len() {
            return Err(Error::Misaligned(format!(
                "{} images vs {} ground-truth masks",
                images.len(),
                gt.len()
            )));
        }
    }
    for (img, m) in images.iter().zip(weak_masks) {
        crate::raster::check_same(img.dims(), m.dims())?;
    }

    let (counts, miou) = evaluate_opt(weak_masks, cfg)?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        seed: None,
        masks: weak_masks.to_vec(),
        counts,
        miou,
    }];
    for iteration in 1..=cfg.iterations {
        let seed = cfg.seed.wrapping_add(iteration as u64);
        let prev = &records.last().expect("iteration 0 present").masks;
        let model = seg.train(images, prev, seed)?;
        let masks = exec.try_map(images, |img| seg.predict(&model, img))?;
        let (counts, miou) = evaluate_opt(&masks, cfg)?;
        records.push(IterationRecord {
            iteration,
            seed: Some(seed),
            masks,
            counts,
            miou,
        });
    }
    Ok(SelfTrainRun {
        seed: cfg.seed,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedMasks {
    pub masks: Vec<SegmentationMask>,
    /// `true` where the ground-truth mask was used.
    pub from_gt: Vec<bool>,
}

impl MixedMasks {
    pub fn gt_count(&self) -> usize {
        self.from_gt.iter().filter(|&&b| b).count()
    }
}

/// Number of ground-truth masks used for a fraction `p` of `n` images.
pub fn gt_share(n: usize, p: f64) -> usize {
    // tolerate representation error such as 0.29 * 100 = 28.999...
    ((p * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Replaces a seeded uniform sample of `floor(p * n)` weak masks with their
/// ground-truth counterparts.
pub fn mix_ground_truth(
    weak_masks: &[SegmentationMask],
    gt_masks: &[SegmentationMask],
    fraction: f64,
    seed: u64,
) -> Result<MixedMasks> {
    if weak_masks.len() != gt_masks.len() {
        return Err(Error::Misaligned(format!(
            "{} weak masks vs {} ground-truth masks",
            weak_masks.len(),
            gt_masks.len()
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config("fraction", format!("must be in [0, 1], got {fraction}")));
    }
    let n = weak_masks.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut from_gt = vec![false; n];
    for i in index::sample(&mut rng, n, gt_share(n, fraction)) {
        from_gt[i] = true;
    }
    let masks = from_gt
        .iter()
        .zip(weak_masks.iter().zip(gt_masks))
        .map(|(&g, (w, t))| if g { t.clone() } else { w.clone() })
        .collect();
    Ok(MixedMasks { masks, from_gt })
}
