//! Road IoU with void handling, and annotation-cost accounting.

use crate::error::{Error, Result};
use crate::raster::{check_same, Label, SegmentationMask};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IouCounts {
    pub intersection: u64,
    pub union: u64,
}

impl IouCounts {
    /// `None` when the union is empty.
    pub fn iou(&self) -> Option<f64> {
        (self.union > 0).then(|| self.intersection as f64 / self.union as f64)
    }
}

impl std::ops::Add for IouCounts {
    type Output = IouCounts;

    fn add(self, rhs: IouCounts) -> IouCounts {
        IouCounts {
            intersection: self.intersection + rhs.intersection,
            union: self.union + rhs.union,
        }
    }
}

/// Counts road intersection and union over pixels where the ground truth is
/// not void. A void prediction counts as other.
pub fn iou_counts(pred: &SegmentationMask, gt: &SegmentationMask) -> Result<IouCounts> {
    check_same(pred.dims(), gt.dims())?;
    let mut counts = IouCounts::default();
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g == Label::Void {
            continue;
        }
        let (p, g) = (p == Label::Road, g == Label::Road);
        counts.intersection += u64::from(p && g);
        counts.union += u64::from(p || g);
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MiouMode {
    /// Sum intersections and unions over all images, then divide.
    #[default]
    Dataset,
    /// Mean of per-image IoU, skipping images with an empty union.
    PerImage,
}

impl MiouMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dataset" => Ok(MiouMode::Dataset),
            "per_image" => Ok(MiouMode::PerImage),
            _ => Err(Error::config(
                "miou-mode",
                format!("`{s}` is not one of dataset, per-image"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Miou {
    pub value: f64,
    /// Set when no image had a non-empty union; `value` is then 1.0.
    pub empty_union: bool,
}

pub fn miou(per_image: &[IouCounts], mode: MiouMode) -> Result<Miou> {
    if per_image.is_empty() {
        return Err(Error::Empty("per-image IoU counts"));
    }
    let total = per_image.iter().copied().fold(IouCounts::default(), |a, b| a + b);
    if total.union == 0 {
        return Ok(Miou {
            value: 1.0,
            empty_union: true,
        });
    }
    let value = match mode {
        MiouMode::Dataset => total.intersection as f64 / total.union as f64,
        MiouMode::PerImage => {
            let ious: Vec<f64> = per_image.iter().filter_map(IouCounts::iou).collect();
            ious.iter().sum::<f64>() / ious.len() as f64
        }
    };
    Ok(Miou {
        value,
        empty_union: false,
    })
}

/// Convenience: counts and dataset mIOU over aligned prediction / truth lists.
pub fn evaluate(
    preds: &[SegmentationMask],
    gts: &[SegmentationMask],
    mode: MiouMode,
) -> Result<(Vec<IouCounts>, Miou)> {
    if preds.len() != gts.len() {
        return Err(Error::Misaligned(format!(
            "{} predictions vs {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    let counts = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| iou_counts(p, g))
        .collect::<Result<Vec<_>>>()?;
    let m = miou(&counts, mode)?;
    Ok((counts, m))
}

/// Seconds spent per annotation unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub sec_per_mask: f64,
    pub sec_per_image_label: f64,
    pub sec_per_keyword_label: f64,
    pub sec_per_class_check: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            sec_per_mask: 79.0,
            sec_per_image_label: 1.0,
            sec_per_keyword_label: 60.0,
            sec_per_class_check: 10.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("sec-per-mask", self.sec_per_mask),
            ("sec-per-image-label", self.sec_per_image_label),
            ("sec-per-keyword-label", self.sec_per_keyword_label),
            ("sec-per-class-check", self.sec_per_class_check),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub seconds: f64,
    /// Hours rounded half-up to one decimal.
    pub hours: f64,
}

impl Cost {
    pub fn from_seconds(seconds: f64) -> Self {
        Self {
            seconds,
            hours: round_half_up_1dp(seconds / 3600.0),
        }
    }
}

/// Rounds to one decimal, halves away from zero for non-negative input.
pub fn round_half_up_1dp(x: f64) -> f64 {
    // the 1e-9 nudge keeps values like 0.25 (stored as 0.2499..) on the upper side
    ((x * 10.0) + 0.5 + 1e-9).floor() / 10.0
}

/// Pixel-mask annotation of `n_images` images.
pub fn supervised_cost(n_images: u64, cm: &CostModel) -> Cost {
    Cost::from_seconds(n_images as f64 * cm.sec_per_mask)
}

/// Selecting keyword labels in one database plus checking classes in another.
pub fn distant_cost(n_keyword_labels: u64, n_classes_checked: u64, cm: &CostModel) -> Cost {
    Cost::from_seconds(
        n_keyword_labels as f64 * cm.sec_per_keyword_label + n_classes_checked as f64 * cm.sec_per_class_check,
    )
}

/// Weak labels plus pixel masks for `floor(fraction * n_images)` images.
pub fn mixed_cost(
    n_images: u64,
    fraction: f64,
    n_keyword_labels: u64,
    n_classes_checked: u64,
    cm: &CostModel,
) -> Result<Cost> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config("fraction", format!("must be in [0, 1], got {fraction}")));
    }
    let gt_images = (fraction * n_images as f64).floor() as u64;
    let weak = distant_cost(n_keyword_labels, n_classes_checked, cm);
    let full = supervised_cost(gt_images, cm);
    Ok(Cost::from_seconds(weak.seconds + full.seconds))
}
