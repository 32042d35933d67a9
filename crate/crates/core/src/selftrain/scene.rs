//! Synthetic car-centric road scenes.
//!
//! A horizon splits sky from ground. The road is a gray trapezoid that starts
//! narrow at the horizon and widens toward the bottom edge. The ground colour
//! varies per scene from green grass to dry verge, and optional elliptical
//! shadows darken parts of the ground. Ground truth marks the trapezoid as road
//! with a one-pixel void rim along its inner boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{Image, Label, SegmentationMask};

pub const ROAD_GRAY: [f64; 3] = [108.0, 108.0, 112.0];
const SKY: [f64; 3] = [118.0, 166.0, 224.0];
const GRASS: [f64; 3] = [72.0, 132.0, 58.0];
/// Dry-verge colour; each scene's ground lies between grass and this.
const DIRT: [f64; 3] = [124.0, 112.0, 86.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Standard deviation of the per-pixel texture noise, in 8-bit levels.
    pub noise: f64,
    /// Upper bound on the number of shadow patches cast on the ground.
    pub shadows: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            seed: 0,
            noise: 6.0,
            shadows: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::config(
                "scene-size",
                format!("must be at least 16x16, got {}x{}", self.width, self.height),
            ));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::config("noise", format!("must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Road trapezoid in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadGeometry {
    pub horizon: f64,
    pub top_center: f64,
    pub top_half_width: f64,
    pub bottom_center: f64,
    pub bottom_half_width: f64,
}

impl RoadGeometry {
    fn sample(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self {
            horizon: h * rng.random_range(0.25..0.6),
            top_center: w * rng.random_range(0.4..0.6),
            top_half_width: w * rng.random_range(0.02..0.06),
            bottom_center: w * rng.random_range(0.4..0.6),
            bottom_half_width: w * rng.random_range(0.3..0.45),
        }
    }

    /// Whether the centre of pixel `(x, y)` lies on the road.
    pub fn contains(&self, x: usize, y: usize, height: usize) -> bool {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if py < self.horizon {
            return false;
        }
        let t = (py - self.horizon) / (height as f64 - self.horizon);
        let center = self.top_center + t * (self.bottom_center - self.top_center);
        let half = self.top_half_width + t * (self.bottom_half_width - self.top_half_width);
        (px - center).abs() <= half
    }
}

/// Darkened ellipse below the horizon.
#[derive(Debug, Clone, Copy)]
struct Shadow {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    gain: f64,
}

impl Shadow {
    fn covers(&self, x: usize, y: usize) -> bool {
        let dx = (x as f64 + 0.5 - self.cx) / self.rx;
        let dy = (y as f64 + 0.5 - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

fn render(cfg: &SceneConfig, rng: &mut ChaCha8Rng, road: Option<&RoadGeometry>, horizon: f64) -> Result<Image> {
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid std-dev");
    let (w, h) = (cfg.width as f64, cfg.height);
    let dryness: f64 = rng.random_range(0.0..1.0);
    let ground: [f64; 3] = std::array::from_fn(|c| GRASS[c] + dryness * (DIRT[c] - GRASS[c]));
    let n_shadows = rng.random_range(0..=cfg.shadows);
    let shadows: Vec<Shadow> = (0..n_shadows)
        .map(|_| Shadow {
            cx: w * rng.random_range(0.0..1.0),
            cy: rng.random_range(horizon..h as f64),
            rx: w * rng.random_range(0.08..0.25),
            ry: w * rng.random_range(0.05..0.15),
            gain: rng.random_range(0.5..0.7),
        })
        .collect();
    Image::from_fn(cfg.width, h, |x, y| {
        let on_road = road.is_some_and(|r| r.contains(x, y, h));
        let base = if on_road {
            ROAD_GRAY
        } else if (y as f64 + 0.5) < horizon {
            // sky brightens toward the horizon
            let lift = 20.0 * (y as f64 / horizon);
            [SKY[0] + lift, SKY[1] + lift, SKY[2] + lift * 0.5]
        } else {
            ground
        };
        let gain = if (y as f64 + 0.5) >= horizon && shadows.iter().any(|s| s.covers(x, y)) {
            shadows
                .iter()
                .filter(|s| s.covers(x, y))
                .map(|s| s.gain)
                .fold(1.0, f64::min)
        } else {
            1.0
        };
        let base = base.map(|v| v * gain);
        let mut px = [0u8; 3];
        let shared = if cfg.noise > 0.0 { noise.sample(rng) } else { 0.0 };
        for c in 0..3 {
            let jitter = if cfg.noise > 0.0 { 0.3 * noise.sample(rng) } else { 0.0 };
            px[c] = (base[c] + shared + jitter).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
}

/// Renders a road scene and its ground truth.
pub fn synth_scene(cfg: &SceneConfig) -> Result<(Image, SegmentationMask)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geometry = RoadGeometry::sample(&mut rng, cfg.width, cfg.height);
    let image = render(cfg, &mut rng, Some(&geometry), geometry.horizon)?;

    let (w, h) = (cfg.width, cfg.height);
    let inside: Vec<bool> = (0..w * h).map(|i| geometry.contains(i % w, i / w, h)).collect();
    let mask = SegmentationMask::from_fn(w, h, |x, y| {
        let i = y * w + x;
        if !inside[i] {
            return Label::Other;
        }
        let outside_neighbor = (x > 0 && !inside[i - 1])
            || (x + 1 < w && !inside[i + 1])
            || (y > 0 && !inside[i - w])
            || (y + 1 < h && !inside[i + w]);
        if outside_neighbor {
            Label::Void
        } else {
            Label::Road
        }
    })?;
    Ok((image, mask))
}

/// Renders a road-free landscape of the same style. The horizon sits lower
/// than in road scenes, so these images hold more sky on average.
pub fn synth_background(cfg: &SceneConfig) -> Result<Image> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon = cfg.height as f64 * rng.random_range(0.25..0.6);
    render(cfg, &mut rng, None, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_road_is_uniform() {
        let cfg = SceneConfig {
            noise: 0.0,
            shadows: 0,
            seed: 3,
            ..Default::default()
        };
        let (img, gt) = synth_scene(&cfg).unwrap();
        let road: Vec<[u8; 3]> = (0..cfg.height)
            .flat_map(|y| (0..cfg.width).map(move |x| (x, y)))
            .filter(|&(x, y)| gt.get(x, y) == Label::Road)
            .map(|(x, y)| img.get(x, y))
            .collect();
        assert!(!road.is_empty());
        assert!(road.iter().all(|&p| p == [108, 108, 112]));
    }

    #[test]
    fn deterministic() {
        let cfg = SceneConfig::default().with_seed(11);
        assert_eq!(synth_scene(&cfg).unwrap(), synth_scene(&cfg).unwrap());
        assert_ne!(synth_scene(&cfg).unwrap().0, synth_scene(&cfg.with_seed(12)).unwrap().0);
    }

    #[test]
    fn road_fraction_in_range() {
        for seed in 0..10 {
            let cfg = SceneConfig::default().with_seed(seed);
            let (_, gt) = synth_scene(&cfg).unwrap();
            let h = gt.histogram();
            let frac = (h.road + h.void) as f64 / h.total() as f64;
            assert!(frac > 0.15 && frac < 0.55, "seed {seed}: {frac}");
        }
    }

    #[test]
    fn void_rim_separates_road_from_other() {
        let (_, gt) = synth_scene(&SceneConfig::default().with_seed(5)).unwrap();
        let (w, h) = gt.dims();
        assert!(gt.histogram().void > 0);
        for y in 0..h {
            for x in 0..w {
                if gt.get(x, y) != Label::Road {
                    continue;
                }
                for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
                    if nx < w && ny < h {
                        assert_ne!(gt.get(nx, ny), Label::Other);
                    }
                }
            }
        }
    }

    #[test]
    fn too_small_rejected() {
        let cfg = SceneConfig {
            width: 15,
            ..Default::default()
        };
        assert!(synth_scene(&cfg).is_err());
    }

    #[test]
    fn background_has_no_road_gray_band() {
        for seed in 0..10 {
            let cfg = SceneConfig {
                noise: 0.0,
                shadows: 0,
                seed,
                ..Default::default()
            };
            let img = synth_background(&cfg).unwrap();
            let [r, g, b] = img.get(cfg.width / 2, cfg.height - 1);
            // grass-to-dirt ground is always warmer than the bluish road gray
            assert!(b < g && b < r.max(g) - 20, "seed {seed}: {:?}", [r, g, b]);
        }
    }
}
