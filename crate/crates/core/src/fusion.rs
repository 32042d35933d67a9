//! Weak road labels from a salient area and a superpixel partition.
//!
//! A superpixel `s` is labelled road when `|s ∩ P| / D > theta`, where `P` is
//! the set of pixels with saliency strictly above `tau` and the denominator
//! `D` is either `|P|` ([`Denominator::SalientArea`], the default) or `|s|`
//! ([`Denominator::Superpixel`]).

use std::fmt;

use crate::error::{Error, Result};
use crate::raster::{check_same, BinaryMask, Image, Label, SaliencyMap, SegmentationMask};
use crate::superpixel::{segment, SuperpixelConfig, SuperpixelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    #[default]
    SalientArea,
    Superpixel,
}

impl Denominator {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "salient_area" => Ok(Denominator::SalientArea),
            "superpixel" => Ok(Denominator::Superpixel),
            _ => Err(Error::config(
                "denominator",
                format!("`{s}` is not one of salient-area, superpixel"),
            )),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Denominator::SalientArea => "salient-area",
            Denominator::Superpixel => "superpixel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub tau: f64,
    pub theta: f64,
    pub denominator: Denominator,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau: 0.75,
            theta: 0.01,
            denominator: Denominator::SalientArea,
        }
    }
}

impl FusionConfig {
    pub fn new(tau: f64, theta: f64) -> Self {
        Self {
            tau,
            theta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau", format!("must be in [0, 1], got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::config("theta", format!("must be in [0, 1), got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionWarning {
    /// No pixel exceeded `tau`; the mask is all other.
    EmptySalientArea,
}

impl fmt::Display for FusionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionWarning::EmptySalientArea => f.write_str("empty-salient-area"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedMask {
    pub mask: SegmentationMask,
    pub warning: Option<FusionWarning>,
}

/// Pixels whose saliency is strictly greater than `tau`.
pub fn salient_area(sm: &SaliencyMap, tau: f64) -> BinaryMask {
    let bits = sm.values().iter().map(|&v| v > tau).collect();
    BinaryMask::new(sm.width(), sm.height(), bits).expect("same shape")
}

/// Per-superpixel count of salient pixels.
pub fn overlap_counts(sp: &SuperpixelMap, salient: &BinaryMask) -> Vec<usize> {
    let mut counts = vec![0usize; sp.num_components()];
    for (&id, &bit) in sp.ids().iter().zip(salient.bits()) {
        if bit {
            counts[id as usize] += 1;
        }
    }
    counts
}

/// Road decision per superpixel given its overlap counts.
pub fn road_components(sp: &SuperpixelMap, overlap: &[usize], salient_total: usize, cfg: &FusionConfig) -> Vec<bool> {
    overlap
        .iter()
        .zip(sp.sizes())
        .map(|(&inter, &size)| {
            let denom = match cfg.denominator {
                Denominator::SalientArea => salient_total,
                Denominator::Superpixel => size,
            };
            denom > 0 && inter as f64 / denom as f64 > cfg.theta
        })
        .collect()
}

pub fn fuse(sp: &SuperpixelMap, salient: &BinaryMask, cfg: &FusionConfig) -> Result<FusedMask> {
    cfg.validate()?;
    check_same(sp.dims(), salient.dims())?;
    let (w, h) = sp.dims();
    let total = salient.count();
    if total == 0 && cfg.denominator == Denominator::SalientArea {
        return Ok(FusedMask {
            mask: SegmentationMask::filled(w, h, Label::Other)?,
            warning: Some(FusionWarning::EmptySalientArea),
        });
    }
    let road = road_components(sp, &overlap_counts(sp, salient), total, cfg);
    let labels = sp
        .ids()
        .iter()
        .map(|&id| if road[id as usize] { Label::Road } else { Label::Other })
        .collect();
    Ok(FusedMask {
        mask: SegmentationMask::new(w, h, labels)?,
        warning: (total == 0).then_some(FusionWarning::EmptySalientArea),
    })
}

/// Superpixels, salient area and fusion for one image. `sm` must already be
/// normalized and at image resolution.
pub fn weak_label_pipeline(
    image: &Image,
    sm: &SaliencyMap,
    spcfg: &SuperpixelConfig,
    fcfg: &FusionConfig,
    seed: u64,
) -> Result<FusedMask> {
    fcfg.validate()?;
    check_same(image.dims(), sm.dims())?;
    let sp = segment(image, spcfg, seed)?;
    fuse(&sp, &salient_area(sm, fcfg.tau), fcfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_tau() {
        let sm = SaliencyMap::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(salient_area(&sm, 1.0).count(), 0);
        assert_eq!(salient_area(&sm, 0.0).bits(), &[false, true, true]);
    }

    #[test]
    fn left_half_example() {
        let sp = SuperpixelMap::from_ids(4, 4, &[0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
        let salient = BinaryMask::new(4, 4, (0..16).map(|i| i % 4 == 0).collect()).unwrap();
        let out = fuse(&sp, &salient, &FusionConfig::new(0.75, 0.01)).unwrap();
        assert!(out.warning.is_none());
        for y in 0..4 {
            for x in 0..4 {
                let expect = if x < 2 { Label::Road } else { Label::Other };
                assert_eq!(out.mask.get(x, y), expect);
            }
        }
    }

    #[test]
    fn empty_salient_area_warns() {
        let sp = SuperpixelMap::from_ids(2, 2, &[0, 0, 1, 1]).unwrap();
        let salient = BinaryMask::new(2, 2, vec![false; 4]).unwrap();
        let out = fuse(&sp, &salient, &FusionConfig::default()).unwrap();
        assert_eq!(out.warning, Some(FusionWarning::EmptySalientArea));
        assert_eq!(out.mask.histogram().other, 4);

        let cfg = FusionConfig {
            denominator: Denominator::Superpixel,
            ..Default::default()
        };
        let out = fuse(&sp, &salient, &cfg).unwrap();
        assert_eq!(out.mask.histogram().other, 4);
    }

    #[test]
    fn denominators_differ() {
        // one small superpixel fully salient, one large partly salient
        let sp = SuperpixelMap::from_ids(5, 1, &[0, 1, 1, 1, 1]).unwrap();
        let salient = BinaryMask::new(5, 1, vec![true, true, false, false, false]).unwrap();
        let area = fuse(&sp, &salient, &FusionConfig::new(0.5, 0.5)).unwrap();
        // |s0 ∩ P| / |P| = 1/2, not > 0.5
        assert_eq!(area.mask.histogram().road, 0);
        let per_sp = fuse(
            &sp,
            &salient,
            &FusionConfig {
                denominator: Denominator::Superpixel,
                ..FusionConfig::new(0.5, 0.5)
            },
        )
        .unwrap();
        // s0: 1/1 > 0.5 road, s1: 1/4 other
        assert_eq!(per_sp.mask.labels()[0], Label::Road);
        assert_eq!(per_sp.mask.histogram().road, 1);
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::new(1.5, 0.1).validate().is_err());
        assert!(FusionConfig::new(0.5, 1.0).validate().is_err());
        let err = FusionConfig::new(0.5, 1.5).validate().unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert!(FusionConfig::new(1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let sp = SuperpixelMap::from_ids(2, 2, &[0; 4]).unwrap();
        let salient = BinaryMask::new(4, 1, vec![true; 4]).unwrap();
        assert!(matches!(
            fuse(&sp, &salient, &FusionConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_image_pipeline() {
        let img = Image::filled(16, 16, [120, 120, 120]).unwrap();
        let all = SaliencyMap::new(16, 16, vec![0.6; 256]).unwrap();
        let out = weak_label_pipeline(
            &img,
            &all,
            &SuperpixelConfig::default(),
            &FusionConfig::new(0.0, 0.01),
            0,
        )
        .unwrap();
        assert_eq!(out.mask.histogram().road, 256);
        let none = SaliencyMap::new(16, 16, vec![0.0; 256]).unwrap();
        let out = weak_label_pipeline(&img, &none, &SuperpixelConfig::default(), &FusionConfig::default(), 0).unwrap();
        assert_eq!(out.mask.histogram().other, 256);
    }

    #[test]
    fn denominator_parse() {
        assert_eq!(Denominator::parse("salient-area").unwrap(), Denominator::SalientArea);
        assert_eq!(Denominator::parse("SUPERPIXEL").unwrap(), Denominator::Superpixel);
        assert!(Denominator::parse("pixels").is_err());
    }
}
