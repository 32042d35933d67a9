//! Closed-loop desk-scale experiment on synthetic scenes.
//!
//! 1. Train the GAP head on pooled features of road scenes and road-free
//!    background scenes rendered from a seed range disjoint from the target.
//! 2. Compute road saliency for every target scene.
//! 3. Fuse saliency with superpixels into weak masks.
//! 4. Self-train the baseline segmenter from the weak masks.

use crate::cam::TrainedClassifier;
use crate::cam::{
    extract_features_batch, gap, image_saliency_batch, FilterBank, GapTrainConfig, PooledFeatures, SaliencySource,
};
use crate::error::Result;
use crate::evalcost::{evaluate, MiouMode};
use crate::fusion::{weak_label_pipeline, FusionConfig};
use crate::parallel::Execution;
use crate::raster::{Image, SaliencyMap, SegmentationMask};
use crate::selftrain::{
    self_train, synth_background, synth_scene, BaselineSegmenter, SceneConfig, SelfTrainConfig, SelfTrainRun,
};
use crate::superpixel::SuperpixelConfig;

pub const NON_ROAD_CLASS: usize = 0;
pub const ROAD_CLASS: usize = 1;

/// Seed offset of the classifier's training scenes relative to the target set.
const DISTANT_SEED_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct DeskConfig {
    pub n_scenes: usize,
    /// Images per class for the classifier.
    pub n_classifier_images: usize,
    pub scene: SceneConfig,
    pub filter_channels: usize,
    pub stride: usize,
    pub gap: GapTrainConfig,
    pub saliency: SaliencySource,
    pub superpixel: SuperpixelConfig,
    pub fusion: FusionConfig,
    pub iterations: usize,
    pub seed: u64,
    pub mode: MiouMode,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            n_scenes: 64,
            n_classifier_images: 96,
            scene: SceneConfig::default(),
            filter_channels: 64,
            stride: 8,
            gap: GapTrainConfig {
                learning_rate: 0.5,
                epochs: 100,
                batch_size: 8,
                seed: 42,
                l2: 1e-3,
            },
            saliency: SaliencySource::Class(ROAD_CLASS),
            superpixel: SuperpixelConfig::default(),
            fusion: FusionConfig::new(0.9, 0.01),
            iterations: 3,
            seed: 42,
            mode: MiouMode::Dataset,
        }
    }
}

/// Target scenes with ground truth.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub images: Vec<Image>,
    pub gts: Vec<SegmentationMask>,
}

pub fn target_corpus(n: usize, scene: &SceneConfig, seed: u64, exec: Execution) -> Result<Corpus> {
    let seeds: Vec<u64> = (0..n as u64)
        .map(|i| seed.wrapping_mul(10_007).wrapping_add(i))
        .collect();
    let pairs = exec.try_map(&seeds, |&s| synth_scene(&scene.with_seed(s)))?;
    let (images, gts) = pairs.into_iter().unzip();
    Ok(Corpus { images, gts })
}

/// Road scenes (label 1) and background scenes (label 0) from a disjoint seed range.
pub fn classifier_images(
    n_per_class: usize,
    scene: &SceneConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(Image, usize)>> {
    let base = seed.wrapping_mul(10_007).wrapping_add(DISTANT_SEED_OFFSET);
    let jobs: Vec<(u64, usize)> = (0..n_per_class as u64)
        .flat_map(|i| [(base + 2 * i, ROAD_CLASS), (base + 2 * i + 1, NON_ROAD_CLASS)])
        .collect();
    exec.try_map(&jobs, |&(s, label)| {
        let cfg = scene.with_seed(s);
        let img = if label == ROAD_CLASS {
            synth_scene(&cfg)?.0
        } else {
            synth_background(&cfg)?
        };
        Ok((img, label))
    })
}

pub fn train_classifier(
    data: &[(Image, usize)],
    bank: &FilterBank,
    cfg: &GapTrainConfig,
    exec: Execution,
) -> Result<(TrainedClassifier, f64)> {
    let images: Vec<Image> = data.iter().map(|(i, _)| i.clone()).collect();
    let feats = extract_features_batch(&images, bank, exec)?;
    let pooled: Vec<(PooledFeatures, usize)> = feats.iter().zip(data).map(|(f, (_, l))| (gap(f), *l)).collect();
    let trained = crate::cam::train::train_on_pooled(&pooled, cfg)?;
    let acc = trained.accuracy(&pooled);
    Ok((trained, acc))
}

pub fn weak_masks(
    images: &[Image],
    saliency: &[SaliencyMap],
    spcfg: &SuperpixelConfig,
    fcfg: &FusionConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SegmentationMask>> {
    let idx: Vec<usize> = (0..images.len()).collect();
    exec.try_map(&idx, |&i| {
        weak_label_pipeline(&images[i], &saliency[i], spcfg, fcfg, seed).map(|f| f.mask)
    })
}

#[derive(Debug, Clone)]
pub struct DeskReport {
    pub classifier_accuracy: f64,
    pub classifier_loss: f64,
    pub saliency_miou: f64,
    pub weak_miou: f64,
    pub run: SelfTrainRun,
    pub corpus: Corpus,
    pub saliency: Vec<SaliencyMap>,
}

impl DeskReport {
    /// mIOU of each self-training record, iteration 0 being the weak masks.
    pub fn trajectory(&self) -> Vec<f64> {
        self.run.mious().into_iter().map(|m| m.unwrap_or(f64::NAN)).collect()
    }
}

pub fn run_desk_experiment(cfg: &DeskConfig, segmenter: &BaselineSegmenter, exec: Execution) -> Result<DeskReport> {
    let corpus = target_corpus(cfg.n_scenes, &cfg.scene, cfg.seed, exec)?;
    let distant = classifier_images(cfg.n_classifier_images, &cfg.scene, cfg.seed, exec)?;
    let bank = FilterBank::random(cfg.filter_channels, cfg.stride, cfg.seed)?;
    let (trained, accuracy) = train_classifier(&distant, &bank, &cfg.gap, exec)?;

    let saliency = image_saliency_batch(&corpus.images, &bank, &trained.weights, cfg.saliency, exec)?;
    // saliency alone, thresholded at tau
    let saliency_masks: Vec<SegmentationMask> = saliency
        .iter()
        .map(|sm| {
            SegmentationMask::new(
                sm.width(),
                sm.height(),
                sm.values()
                    .iter()
                    .map(|&v| {
                        if v > cfg.fusion.tau {
                            crate::raster::Label::Road
                        } else {
                            crate::raster::Label::Other
                        }
                    })
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let (_, saliency_miou) = evaluate(&saliency_masks, &corpus.gts, cfg.mode)?;

    let weak = weak_masks(&corpus.images, &saliency, &cfg.superpixel, &cfg.fusion, cfg.seed, exec)?;
    let st = SelfTrainConfig {
        iterations: cfg.iterations,
        seed: cfg.seed,
        eval_gt: Some(corpus.gts.clone()),
        miou_mode: cfg.mode,
    };
    let run = self_train(&corpus.images, &weak, segmenter, &st, exec)?;
    let weak_miou = run.records[0].miou.map(|m| m.value).unwrap_or(f64::NAN);
    Ok(DeskReport {
        classifier_accuracy: accuracy,
        classifier_loss: trained.final_loss,
        saliency_miou: saliency_miou.value,
        weak_miou,
        run,
        corpus,
        saliency,
    })
}
