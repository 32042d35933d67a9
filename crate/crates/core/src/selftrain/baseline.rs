//! Per-pixel multinomial logistic regression segmenter.
//!
//! Each pixel is described by its RGB values, normalized `(x, y)` position, and
//! the mean and standard deviation of each channel over the surrounding 5×5
//! window. Features are standardized with statistics from the training sample.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Segmenter;
use crate::error::{Error, Result};
use crate::raster::{check_same, Image, Label, SegmentationMask};

pub const FEATURES: usize = 11;
const WINDOW_RADIUS: usize = 2;
/// Model class order; index 0 is other, index 1 is road.
const CLASSES: [Label; 2] = [Label::Other, Label::Road];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Non-void pixels sampled per training image.
    pub pixels_per_image: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            pixels_per_image: 400,
            epochs: 15,
            batch_size: 64,
            learning_rate: 0.2,
            l2: 1e-4,
        }
    }
}

/// Trained per-pixel classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelModel {
    mean: [f64; FEATURES],
    scale: [f64; FEATURES],
    weights: [[f64; FEATURES]; 2],
    bias: [f64; 2],
    /// Set when the training masks held a single label; the model then
    /// predicts that label everywhere.
    pub constant: Option<Label>,
}

impl PixelModel {
    fn logits(&self, f: &[f64; FEATURES]) -> [f64; 2] {
        let mut out = self.bias;
        for (c, o) in out.iter_mut().enumerate() {
            for (i, &fi) in f.iter().enumerate() {
                *o += self.weights[c][i] * (fi - self.mean[i]) * self.scale[i];
            }
        }
        out
    }
}

/// Feature vectors for every pixel, row-major.
pub fn pixel_features(image: &Image) -> Vec<[f64; FEATURES]> {
    let (w, h) = image.dims();
    // integral images of each channel and its square, (w+1)×(h+1)
    let stride = w + 1;
    let mut sum = vec![[0f64; 3]; stride * (h + 1)];
    let mut sq = vec![[0f64; 3]; stride * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let px = image.get(x, y);
            let (i, up, left, diag) = (
                (y + 1) * stride + x + 1,
                y * stride + x + 1,
                (y + 1) * stride + x,
                y * stride + x,
            );
            for c in 0..3 {
                let v = f64::from(px[c]) / 255.0;
                sum[i][c] = v + sum[up][c] + sum[left][c] - sum[diag][c];
                sq[i][c] = v * v + sq[up][c] + sq[left][c] - sq[diag][c];
            }
        }
    }
    let xs = (w.max(2) - 1) as f64;
    let ys = (h.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(WINDOW_RADIUS), (y + WINDOW_RADIUS + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(WINDOW_RADIUS), (x + WINDOW_RADIUS + 1).min(w));
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let px = image.get(x, y);
            let mut f = [0f64; FEATURES];
            for c in 0..3 {
                let rect = |t: &Vec<[f64; 3]>| {
                    t[y1 * stride + x1][c] - t[y0 * stride + x1][c] - t[y1 * stride + x0][c] + t[y0 * stride + x0][c]
                };
                let mean = rect(&sum) / n;
                let var = (rect(&sq) / n - mean * mean).max(0.0);
                f[c] = f64::from(px[c]) / 255.0;
                f[5 + c] = mean;
                f[8 + c] = var.sqrt();
            }
            f[3] = x as f64 / xs;
            f[4] = y as f64 / ys;
            out.push(f);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BaselineSegmenter {
    pub config: BaselineConfig,
}

impl BaselineSegmenter {
    pub fn new(config: BaselineConfig) -> Self {
        Self { config }
    }
}

pub fn baseline_segmenter() -> BaselineSegmenter {
    BaselineSegmenter::default()
}

impl Segmenter for BaselineSegmenter {
    type Model = PixelModel;

    fn train(&self, images: &[Image], masks: &[SegmentationMask], seed: u64) -> Result<PixelModel> {
        let cfg = &self.config;
        if images.len() != masks.len() {
            return Err(Error::Misaligned(format!(
                "{} images vs {} masks",
                images.len(),
                masks.len()
            )));
        }
        if images.is_empty() {
            return Err(Error::Empty("training images"));
        }
        if cfg.pixels_per_image == 0 || cfg.epochs == 0 || cfg.batch_size == 0 {
            return Err(Error::config("baseline", "pixels, epochs and batch size must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples: Vec<([f64; FEATURES], usize)> = Vec::new();
        for (img, mask) in images.iter().zip(masks) {
            check_same(img.dims(), mask.dims())?;
            let candidates: Vec<usize> = mask
                .labels()
                .iter()
                .enumerate()
                .filter(|(_, l)| **l != Label::Void)
                .map(|(i, _)| i)
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let feats = pixel_features(img);
            let take = cfg.pixels_per_image.min(candidates.len());
            for j in index::sample(&mut rng, candidates.len(), take) {
                let p = candidates[j];
                let class = usize::from(mask.labels()[p] == Label::Road);
                samples.push((feats[p], class));
            }
        }

        let mut mean = [0f64; FEATURES];
        let mut scale = [1f64; FEATURES];
        let mut model = PixelModel {
            mean,
            scale,
            weights: [[0.0; FEATURES]; 2],
            bias: [0.0; 2],
            constant: None,
        };
        let present = [0, 1].map(|c| samples.iter().any(|(_, l)| *l == c));
        match present {
            [false, false] => return Err(Error::Empty("non-void training pixels")),
            [true, false] | [false, true] => {
                model.constant = Some(CLASSES[usize::from(present[1])]);
                return Ok(model);
            }
            _ => {}
        }

        let n = samples.len() as f64;
        for (f, _) in &samples {
            for i in 0..FEATURES {
                mean[i] += f[i] / n;
            }
        }
        let mut var = [0f64; FEATURES];
        for (f, _) in &samples {
            for i in 0..FEATURES {
                var[i] += (f[i] - mean[i]).powi(2) / n;
            }
        }
        for i in 0..FEATURES {
            scale[i] = if var[i] > 1e-12 { 1.0 / var[i].sqrt() } else { 0.0 };
        }
        model.mean = mean;
        model.scale = scale;

        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let mut gw = [[0f64; FEATURES]; 2];
                let mut gb = [0f64; 2];
                for &s in chunk {
                    let (f, label) = &samples[s];
                    let logits = model.logits(f);
                    let m = logits[0].max(logits[1]);
                    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
                    let z = e[0] + e[1];
                    for c in 0..2 {
                        let delta = e[c] / z - if c == *label { 1.0 } else { 0.0 };
                        gb[c] += delta;
                        for i in 0..FEATURES {
                            gw[c][i] += delta * (f[i] - mean[i]) * scale[i];
                        }
                    }
                }
                let m = chunk.len() as f64;
                for c in 0..2 {
                    model.bias[c] -= cfg.learning_rate * gb[c] / m;
                    for (w, g) in model.weights[c].iter_mut().zip(&gw[c]) {
                        *w -= cfg.learning_rate * (g / m + cfg.l2 * *w);
                    }
                }
            }
        }
        Ok(model)
    }

    fn predict(&self, model: &PixelModel, image: &Image) -> Result<SegmentationMask> {
        let (w, h) = image.dims();
        if let Some(label) = model.constant {
            return SegmentationMask::filled(w, h, label);
        }
        let labels = pixel_features(image)
            .iter()
            .map(|f| {
                let l = model.logits(f);
                if l[1] > l[0] {
                    Label::Road
                } else {
                    Label::Other
                }
            })
            .collect();
        SegmentationMask::new(w, h, labels)
    }
}
