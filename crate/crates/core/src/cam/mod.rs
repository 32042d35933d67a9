//! Class activation mapping over a global-average-pooling classifier.
//!
//! A frozen [`FilterBank`] stands in for the convolutional trunk and produces
//! [`FeatureMaps`]. The classifier head is linear over the pooled features:
//!
//! ```text
//! pooled[k] = mean over (x, y) of f_k(x, y)
//! score[c]  = sum_k w[c][k] * pooled[k] + bias[c]
//! cam_c(x, y) = sum_k w[c][k] * f_k(x, y)
//! ```
//!
//! so the spatial mean of `cam_c` equals `score[c] - bias[c]`.

pub(crate) mod train;

pub use train::{loss_and_gradient, train_gap_classifier, GapTrainConfig, TrainedClassifier};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fmap::{ClassWeights, FeatureMaps};
use crate::parallel::Execution;
use crate::raster::{Image, SaliencyMap};

pub const KERNEL_SIZE: usize = 3;
const KERNEL_LEN: usize = KERNEL_SIZE * KERNEL_SIZE * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Relu,
    Identity,
}

impl Nonlinearity {
    fn apply(self, v: f32) -> f32 {
        match self {
            Nonlinearity::Relu => v.max(0.0),
            Nonlinearity::Identity => v,
        }
    }
}

/// Fixed 3×3×3 convolution kernels with per-kernel bias, followed by a
/// nonlinearity and `stride × stride` average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kernels: Vec<[f32; KERNEL_LEN]>,
    biases: Vec<f32>,
    nonlinearity: Nonlinearity,
    stride: usize,
}

impl FilterBank {
    /// Kernel weights are drawn from `N(0, 1/27)` with a seeded ChaCha8 stream.
    /// Each bias cancels the kernel's response to mid-gray input plus a
    /// `N(0, 0.1^2)` offset, so units respond to colour contrast rather than
    /// overall brightness. Kernel layout is `[dy][dx][channel]`.
    pub fn random(channels: usize, stride: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("channels", "must be >= 1"));
        }
        if stride == 0 {
            return Err(Error::config("stride", "must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (KERNEL_LEN as f64).sqrt();
        let mut kernels = Vec::with_capacity(channels);
        let mut biases = Vec::with_capacity(channels);
        for _ in 0..channels {
            let mut k = [0f32; KERNEL_LEN];
            for v in k.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = (z * scale) as f32;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            let mid_gray: f32 = k.iter().sum::<f32>() * 0.5;
            biases.push(-mid_gray + (0.1 * z) as f32);
            kernels.push(k);
        }
        Ok(Self {
            kernels,
            biases,
            nonlinearity: Nonlinearity::Relu,
            stride,
        })
    }

    pub fn from_kernels(
        kernels: Vec<[f32; KERNEL_LEN]>,
        biases: Vec<f32>,
        nonlinearity: Nonlinearity,
        stride: usize,
    ) -> Result<Self> {
        if kernels.is_empty() || stride == 0 {
            return Err(Error::config(
                "filter-bank",
                "needs at least one kernel and stride >= 1",
            ));
        }
        if biases.len() != kernels.len() {
            return Err(Error::config("filter-bank", "needs one bias per kernel"));
        }
        if kernels.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::config("filter-bank", "kernel values must be finite"));
        }
        Ok(Self {
            kernels,
            biases,
            nonlinearity,
            stride,
        })
    }

    pub fn channels(&self) -> usize {
        self.kernels.len()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    /// Feature grid size `(fw, fh)` for an image of the given size.
    pub fn grid_size(&self, width: usize, height: usize) -> (usize, usize) {
        (width.div_ceil(self.stride), height.div_ceil(self.stride))
    }
}

/// Convolves (replicated borders), applies the nonlinearity and average-pools
/// each `stride × stride` block. Edge blocks average over the pixels they hold.
pub fn extract_features(image: &Image, bank: &FilterBank) -> Result<FeatureMaps> {
    let (w, h) = image.dims();
    let required = KERNEL_SIZE.max(bank.stride);
    if w < required || h < required {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            required,
        });
    }
    let (fw, fh) = bank.grid_size(w, h);
    let rgb: Vec<f32> = image.as_bytes().iter().map(|&v| f32::from(v) / 255.0).collect();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;

    let k_count = bank.channels();
    let mut sums = vec![0f32; k_count * fh * fw];
    let mut patch = [0f32; KERNEL_LEN];
    for y in 0..h {
        for x in 0..w {
            let mut i = 0;
            for dy in -1..=1isize {
                let yy = clamp(y as isize + dy, h);
                for dx in -1..=1isize {
                    let xx = clamp(x as isize + dx, w);
                    let p = 3 * (yy * w + xx);
                    patch[i..i + 3].copy_from_slice(&rgb[p..p + 3]);
                    i += 3;
                }
            }
            let cell = (y / bank.stride) * fw + x / bank.stride;
            for (k, (kernel, bias)) in bank.kernels.iter().zip(&bank.biases).enumerate() {
                let v: f32 = kernel.iter().zip(&patch).map(|(a, b)| a * b).sum::<f32>() + bias;
                sums[k * fh * fw + cell] += bank.nonlinearity.apply(v);
            }
        }
    }
    for gy in 0..fh {
        let rows = (h - gy * bank.stride).min(bank.stride);
        for gx in 0..fw {
            let cols = (w - gx * bank.stride).min(bank.stride);
            let count = (rows * cols) as f32;
            for k in 0..k_count {
                sums[(k * fh + gy) * fw + gx] /= count;
            }
        }
    }
    FeatureMaps::new(k_count, fh, fw, sums)
}

pub fn extract_features_batch(images: &[Image], bank: &FilterBank, exec: Execution) -> Result<Vec<FeatureMaps>> {
    exec.try_map(images, |img| extract_features(img, bank))
}

/// Globally average-pooled features, one value per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures(pub Vec<f64>);

impl PooledFeatures {
    pub fn channels(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores(pub Vec<f64>);

impl ClassScores {
    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &s)| if s > best.1 { (i, s) } else { best },
            )
            .0
    }
}

pub fn gap(fm: &FeatureMaps) -> PooledFeatures {
    let n = fm.area() as f64;
    PooledFeatures(
        (0..fm.channels())
            .map(|k| fm.channel(k).iter().map(|&v| f64::from(v)).sum::<f64>() / n)
            .collect(),
    )
}

pub fn class_scores(pf: &PooledFeatures, w: &ClassWeights) -> Result<ClassScores> {
    if pf.channels() != w.channels() {
        return Err(Error::ShapeMismatch(format!(
            "pooled features have {} channels, weights expect {}",
            pf.channels(),
            w.channels()
        )));
    }
    Ok(ClassScores(
        (0..w.classes())
            .map(|c| w.row(c).iter().zip(&pf.0).map(|(a, b)| a * b).sum::<f64>() + w.bias()[c])
            .collect(),
    ))
}

/// Raw class activation map at feature resolution. The bias is not included.
pub fn cam_map(fm: &FeatureMaps, w: &ClassWeights, class: usize) -> Result<SaliencyMap> {
    if class >= w.classes() {
        return Err(Error::ClassOutOfRange {
            index: class,
            classes: w.classes(),
        });
    }
    weighted_channel_sum(fm, w.row(class))
}

/// Activation map of `positive` minus that of `negative`, i.e. the CAM of the
/// logit difference between two classes.
pub fn cam_contrast_map(fm: &FeatureMaps, w: &ClassWeights, positive: usize, negative: usize) -> Result<SaliencyMap> {
    for class in [positive, negative] {
        if class >= w.classes() {
            return Err(Error::ClassOutOfRange {
                index: class,
                classes: w.classes(),
            });
        }
    }
    let diff: Vec<f64> = w
        .row(positive)
        .iter()
        .zip(w.row(negative))
        .map(|(a, b)| a - b)
        .collect();
    weighted_channel_sum(fm, &diff)
}

fn weighted_channel_sum(fm: &FeatureMaps, row: &[f64]) -> Result<SaliencyMap> {
    if row.len() != fm.channels() {
        return Err(Error::ShapeMismatch(format!(
            "feature maps have {} channels, weights expect {}",
            fm.channels(),
            row.len()
        )));
    }
    let mut values = vec![0f64; fm.area()];
    for (k, &wk) in row.iter().enumerate() {
        for (acc, &f) in values.iter_mut().zip(fm.channel(k)) {
            *acc += wk * f64::from(f);
        }
    }
    SaliencyMap::new(fm.width(), fm.height(), values)
}

/// Per-map min-max scaling to `[0, 1]`. A constant map becomes all zeros.
pub fn normalize_saliency(raw: &SaliencyMap) -> SaliencyMap {
    let (lo, hi) = raw.min_max();
    let range = hi - lo;
    let values = if range > 0.0 {
        raw.values()
            .iter()
            .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; raw.values().len()]
    };
    SaliencyMap::new(raw.width(), raw.height(), values).expect("same shape")
}

/// Bilinear resampling with pixel-centre alignment and clamped borders.
pub fn upsample_bilinear(sm: &SaliencyMap, width: usize, height: usize) -> Result<SaliencyMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    let (sw, sh) = sm.dims();
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|i| {
                let s = ((i as f64 + 0.5) * src as f64 / out as f64 - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(width, sw);
    let ys = axis(height, sh);
    let mut values = Vec::with_capacity(width * height);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = sm.get(x0, y0) * (1.0 - tx) + sm.get(x1, y0) * tx;
            let bottom = sm.get(x0, y1) * (1.0 - tx) + sm.get(x1, y1) * tx;
            values.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    SaliencyMap::new(width, height, values)
}

/// Which activation map becomes the saliency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaliencySource {
    Class(usize),
    Contrast { positive: usize, negative: usize },
}

/// Features, CAM, min-max normalization and bilinear restoration to image size.
pub fn image_saliency(
    image: &Image,
    bank: &FilterBank,
    weights: &ClassWeights,
    source: SaliencySource,
) -> Result<SaliencyMap> {
    let fm = extract_features(image, bank)?;
    let raw = match source {
        SaliencySource::Class(c) => cam_map(&fm, weights, c)?,
        SaliencySource::Contrast { positive, negative } => cam_contrast_map(&fm, weights, positive, negative)?,
    };
    upsample_bilinear(&normalize_saliency(&raw), image.width(), image.height())
}

pub fn image_saliency_batch(
    images: &[Image],
    bank: &FilterBank,
    weights: &ClassWeights,
    source: SaliencySource,
    exec: Execution,
) -> Result<Vec<SaliencyMap>> {
    exec.try_map(images, |img| image_saliency(img, bank, weights, source))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(channels: usize, h: usize, w: usize, values: Vec<f32>) -> FeatureMaps {
        FeatureMaps::new(channels, h, w, values).unwrap()
    }

    #[test]
    fn zero_image_zero_features() {
        let random = FilterBank::random(6, 4, 1).unwrap();
        let bank = FilterBank::from_kernels(random.kernels.clone(), vec![0.0; 6], Nonlinearity::Relu, 4).unwrap();
        let img = Image::filled(9, 7, [0, 0, 0]).unwrap();
        let f = extract_features(&img, &bank).unwrap();
        assert_eq!((f.channels(), f.height(), f.width()), (6, 2, 3));
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_is_ceil_of_stride() {
        let bank = FilterBank::random(2, 16, 0).unwrap();
        assert_eq!(bank.grid_size(224, 224), (14, 14));
        assert_eq!(bank.grid_size(225, 17), (15, 2));
    }

    #[test]
    fn too_small_image() {
        let bank = FilterBank::random(2, 8, 0).unwrap();
        let img = Image::filled(7, 20, [1, 2, 3]).unwrap();
        assert!(matches!(
            extract_features(&img, &bank),
            Err(Error::ImageTooSmall { required: 8, .. })
        ));
        let bank = FilterBank::random(2, 1, 0).unwrap();
        let img = Image::filled(2, 20, [1, 2, 3]).unwrap();
        assert!(matches!(
            extract_features(&img, &bank),
            Err(Error::ImageTooSmall { required: 3, .. })
        ));
    }

    #[test]
    fn features_deterministic() {
        let img = Image::from_fn(8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 100]).unwrap();
        let a = extract_features(&img, &FilterBank::random(4, 2, 42).unwrap()).unwrap();
        let b = extract_features(&img, &FilterBank::random(4, 2, 42).unwrap()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn gap_means() {
        assert_eq!(gap(&fm(1, 1, 2, vec![1.0, 3.0])).0, vec![2.0]);
        assert_eq!(
            gap(&fm(2, 2, 2, vec![5.0, 5.0, 5.0, 5.0, -1.5, -1.5, -1.5, -1.5])).0,
            vec![5.0, -1.5]
        );
    }

    #[test]
    fn scores_basic() {
        let w = ClassWeights::zeros(2, 3).unwrap();
        let s = class_scores(&PooledFeatures(vec![1.0, 2.0, 3.0]), &w).unwrap();
        assert_eq!(s.0, vec![0.0, 0.0]);

        let w = ClassWeights::new(2, 1, vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let s = class_scores(&PooledFeatures(vec![0.7]), &w).unwrap();
        assert_eq!(s.0[0], 0.7);
        assert!(class_scores(&PooledFeatures(vec![0.7, 1.0]), &w).is_err());
    }

    #[test]
    fn cam_linearity_and_errors() {
        let f = fm(2, 2, 2, vec![3.0; 4].into_iter().chain(vec![1.25; 4]).collect());
        let w = ClassWeights::new(2, 2, vec![1.0, -1.0, 0.0, 0.0], vec![9.0, 9.0]).unwrap();
        let m = cam_map(&f, &w, 0).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.75));
        assert!(cam_map(&f, &w, 1).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(matches!(
            cam_map(&f, &w, 2),
            Err(Error::ClassOutOfRange { index: 2, classes: 2 })
        ));
        let w3 = ClassWeights::zeros(2, 3).unwrap();
        assert!(matches!(cam_map(&f, &w3, 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn contrast_is_difference_of_maps() {
        let f = fm(2, 1, 3, vec![1.0, 2.0, 3.0, 0.5, 0.0, -1.0]);
        let w = ClassWeights::new(2, 2, vec![1.0, 2.0, -0.5, 0.25], vec![0.0, 0.0]).unwrap();
        let a = cam_map(&f, &w, 0).unwrap();
        let b = cam_map(&f, &w, 1).unwrap();
        let d = cam_contrast_map(&f, &w, 0, 1).unwrap();
        for i in 0..3 {
            assert!((d.values()[i] - (a.values()[i] - b.values()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let raw = SaliencyMap::new(3, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(normalize_saliency(&raw).values(), &[0.0, 0.5, 1.0]);
        let flat = SaliencyMap::new(2, 2, vec![3.5; 4]).unwrap();
        assert_eq!(normalize_saliency(&flat).values(), &[0.0; 4]);
    }

    #[test]
    fn upsample_constant_and_single() {
        let c = SaliencyMap::new(3, 2, vec![0.3; 6]).unwrap();
        let up = upsample_bilinear(&c, 7, 5).unwrap();
        assert_eq!(up.dims(), (7, 5));
        assert!(up.values().iter().all(|&v| v == 0.3));
        let one = SaliencyMap::new(1, 1, vec![0.8]).unwrap();
        assert!(upsample_bilinear(&one, 4, 3)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.8));
        assert!(upsample_bilinear(&one, 0, 3).is_err());
    }
}
