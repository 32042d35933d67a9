//! Graph-based superpixels.
//!
//! Pixels are nodes of an 8-connected grid graph whose edge weights are RGB
//! distances after Gaussian pre-smoothing. Edges are visited in ascending
//! weight order and two components merge when the edge weight does not exceed
//! either component's internal difference plus `k / |C|`. Larger `k` therefore
//! gives coarser segmentations.
//!
//! Components of the greedy stage may touch only diagonally. They are split
//! into 4-connected pieces and pieces below `min_size` are merged into a
//! neighbor across a shared pixel edge, lowest weight first, so every output
//! region is 4-connected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::save_gray;
use crate::parallel::Execution;
use crate::raster::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpixelConfig {
    pub k: f64,
    pub sigma: f64,
    pub min_size: usize,
}

impl Default for SuperpixelConfig {
    fn default() -> Self {
        Self {
            k: 500.0,
            sigma: 0.8,
            min_size: 20,
        }
    }
}

impl SuperpixelConfig {
    pub fn with_k(k: f64) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::config("k", format!("must be > 0, got {}", self.k)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if self.min_size < 1 {
            return Err(Error::config("min-size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Partition of an image into labelled regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
    sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentStats {
    pub id: u32,
    pub size: usize,
    pub bbox: BoundingBox,
}

impl SuperpixelMap {
    /// Builds a map from raw ids, renumbering them densely in scan order.
    pub fn from_ids(width: usize, height: usize, raw: &[u32]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if raw.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "superpixel map {}x{} needs {} ids, got {}",
                width,
                height,
                width * height,
                raw.len()
            )));
        }
        let mut remap = std::collections::HashMap::new();
        let mut sizes = Vec::new();
        let ids = raw
            .iter()
            .map(|&r| {
                let next = remap.len() as u32;
                let id = *remap.entry(r).or_insert(next);
                if id as usize == sizes.len() {
                    sizes.push(0);
                }
                sizes[id as usize] += 1;
                id
            })
            .collect();
        Ok(Self {
            width,
            height,
            ids,
            sizes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn id(&self, x: usize, y: usize) -> u32 {
        self.ids[y * self.width + x]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    /// Debug export of ids modulo 256 as a gray image. Lossy.
    pub fn save_debug_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let data: Vec<u8> = self.ids.iter().map(|&id| (id % 256) as u8).collect();
        save_gray(self.width, self.height, &data, path)
    }
}

pub fn component_stats(sp: &SuperpixelMap) -> Vec<ComponentStats> {
    let mut stats: Vec<ComponentStats> = sp
        .sizes
        .iter()
        .enumerate()
        .map(|(id, &size)| ComponentStats {
            id: id as u32,
            size,
            bbox: BoundingBox {
                x_min: usize::MAX,
                y_min: usize::MAX,
                x_max: 0,
                y_max: 0,
            },
        })
        .collect();
    for y in 0..sp.height {
        for x in 0..sp.width {
            let b = &mut stats[sp.id(x, y) as usize].bbox;
            b.x_min = b.x_min.min(x);
            b.y_min = b.y_min.min(y);
            b.x_max = b.x_max.max(x);
            b.y_max = b.y_max.max(y);
        }
    }
    stats
}

/// Disjoint sets with union by size and path compression. Each root also
/// tracks the internal difference of its component.
struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
    internal: Vec<f64>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    fn size(&self, root: u32) -> usize {
        self.size[root as usize] as usize
    }

    /// Joins two roots; the merged component's internal difference becomes `w`.
    fn union(&mut self, a: u32, b: u32, w: f64) -> u32 {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.internal[big as usize] = w;
        big
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: u32,
    b: u32,
    w: f32,
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil() as usize + 1;
    let mut k: Vec<f64> = (0..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

/// One-sided symmetric kernel applied along rows then columns, edges clamped.
fn smooth_channel(src: &[f32], width: usize, height: usize, kernel: &[f32]) -> Vec<f32> {
    let r = kernel.len() as isize - 1;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0f32; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = kernel[0] * row[x];
            for i in 1..=r {
                acc += kernel[i as usize] * (row[clamp(x as isize - i, width)] + row[clamp(x as isize + i, width)]);
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0f32; src.len()];
    for y in 0..height {
        for x in 0..width {
            let at = |yy: isize| tmp[clamp(yy, height) * width + x];
            let mut acc = kernel[0] * tmp[y * width + x];
            for i in 1..=r {
                acc += kernel[i as usize] * (at(y as isize - i) + at(y as isize + i));
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn smoothed_planes(image: &Image, sigma: f64) -> [Vec<f32>; 3] {
    let (w, h) = image.dims();
    let bytes = image.as_bytes();
    let plane = |c: usize| -> Vec<f32> { bytes.iter().skip(c).step_by(3).map(|&v| v as f32).collect() };
    let mut planes = [plane(0), plane(1), plane(2)];
    if sigma > 0.0 {
        let kernel = gaussian_kernel(sigma);
        for p in planes.iter_mut() {
            *p = smooth_channel(p, w, h, &kernel);
        }
    }
    planes
}

fn build_edges(planes: &[Vec<f32>; 3], width: usize, height: usize, eight: bool) -> Vec<Edge> {
    let idx = |x: usize, y: usize| (y * width + x) as u32;
    let dist = |a: u32, b: u32| -> f32 {
        planes
            .iter()
            .map(|p| (p[a as usize] - p[b as usize]).powi(2))
            .sum::<f32>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(width * height * if eight { 4 } else { 2 });
    let mut push = |a: u32, b: u32| edges.push(Edge { a, b, w: dist(a, b) });
    for y in 0..height {
        for x in 0..width {
            let here = idx(x, y);
            if x + 1 < width {
                push(here, idx(x + 1, y));
            }
            if y + 1 < height {
                push(here, idx(x, y + 1));
            }
            if eight {
                if x + 1 < width && y + 1 < height {
                    push(here, idx(x + 1, y + 1));
                }
                if x + 1 < width && y > 0 {
                    push(here, idx(x + 1, y - 1));
                }
            }
        }
    }
    // stable: equal weights keep generation order
    edges.sort_by(|l, r| l.w.total_cmp(&r.w));
    edges
}

/// Labels 4-connected runs of equal root id, returning one label per pixel.
fn split_four_connected(roots: &[u32], width: usize, height: usize) -> Vec<u32> {
    const UNSET: u32 = u32::MAX;
    let mut labels = vec![UNSET; roots.len()];
    let mut stack = Vec::new();
    let mut next = 0u32;
    for start in 0..roots.len() {
        if labels[start] != UNSET {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if labels[q] == UNSET && roots[q] == roots[p] {
                    labels[q] = next;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        next += 1;
    }
    labels
}

/// Segments `image` into superpixels.
///
/// `seed` is reserved for a randomized tie-breaking policy; the current
/// algorithm is fully deterministic and does not read it.
pub fn segment(image: &Image, cfg: &SuperpixelConfig, seed: u64) -> Result<SuperpixelMap> {
    let _ = seed;
    cfg.validate()?;
    let (width, height) = image.dims();
    let n = width * height;
    let planes = smoothed_planes(image, cfg.sigma);

    let mut sets = DisjointSets::new(n);
    for e in build_edges(&planes, width, height, true) {
        let (a, b) = (sets.find(e.a), sets.find(e.b));
        if a == b {
            continue;
        }
        let w = f64::from(e.w);
        let ta = sets.internal[a as usize] + cfg.k / sets.size(a) as f64;
        let tb = sets.internal[b as usize] + cfg.k / sets.size(b) as f64;
        if w <= ta && w <= tb {
            sets.union(a, b, w);
        }
    }
    let roots: Vec<u32> = (0..n as u32).map(|p| sets.find(p)).collect();

    let pieces = split_four_connected(&roots, width, height);
    let mut merged = DisjointSets::new(n);
    // pieces are labelled at their first pixel; seed the sets with those sizes
    let mut piece_sizes = vec![0u32; n];
    for &p in &pieces {
        piece_sizes[p as usize] += 1;
    }
    merged.size = piece_sizes;
    if cfg.min_size > 1 {
        for e in build_edges(&planes, width, height, false) {
            let (a, b) = (merged.find(pieces[e.a as usize]), merged.find(pieces[e.b as usize]));
            if a != b && (merged.size(a) < cfg.min_size || merged.size(b) < cfg.min_size) {
                merged.union(a, b, f64::from(e.w));
            }
        }
    }
    let raw: Vec<u32> = pieces.iter().map(|&p| merged.find(p)).collect();
    SuperpixelMap::from_ids(width, height, &raw)
}

/// Segments a batch of images with the same configuration.
pub fn segment_batch(
    images: &[Image],
    cfg: &SuperpixelConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SuperpixelMap>> {
    cfg.validate()?;
    exec.try_map(images, |img| segment(img, cfg, seed))
}
