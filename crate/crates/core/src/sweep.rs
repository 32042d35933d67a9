//! Grid sweep over superpixel granularity and fusion thresholds.
//!
//! Superpixels are computed once per `k` and shared by every `(tau, theta)`
//! cell of that `k`. Rows come back sorted by mIOU, best first.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::evalcost::{iou_counts, miou, IouCounts, MiouMode};
use crate::fusion::{fuse, salient_area, Denominator, FusionConfig};
use crate::parallel::Execution;
use crate::raster::{check_same, Image, SaliencyMap, SegmentationMask};
use crate::superpixel::{segment_batch, SuperpixelConfig, SuperpixelMap};

pub const CSV_HEADER: [&str; 6] = ["k", "tau", "theta", "miou", "n_images", "warnings"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub ks: Vec<f64>,
    /// `(tau, theta)` pairs evaluated for every `k`.
    pub thresholds: Vec<(f64, f64)>,
}

impl SweepGrid {
    pub fn new(ks: Vec<f64>, thresholds: Vec<(f64, f64)>) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::config("k", "sweep needs at least one k"));
        }
        if thresholds.is_empty() {
            return Err(Error::config("tau", "sweep needs at least one (tau, theta) pair"));
        }
        let unique_k: BTreeSet<u64> = ks.iter().map(|k| k.to_bits()).collect();
        let unique_t: BTreeSet<(u64, u64)> = thresholds.iter().map(|(a, b)| (a.to_bits(), b.to_bits())).collect();
        if unique_k.len() != ks.len() || unique_t.len() != thresholds.len() {
            return Err(Error::config("grid", "duplicate parameter values"));
        }
        for &k in &ks {
            SuperpixelConfig::with_k(k).validate()?;
        }
        for &(tau, theta) in &thresholds {
            FusionConfig::new(tau, theta).validate()?;
        }
        Ok(Self { ks, thresholds })
    }

    /// Every combination of the given `k`, `tau` and `theta` lists.
    pub fn cartesian(ks: Vec<f64>, taus: &[f64], thetas: &[f64]) -> Result<Self> {
        let thresholds = taus.iter().flat_map(|&t| thetas.iter().map(move |&h| (t, h))).collect();
        Self::new(ks, thresholds)
    }

    /// Three granularities against four threshold pairs: 12 cells.
    pub fn reference() -> Self {
        Self::new(
            vec![100.0, 500.0, 1000.0],
            vec![(0.9, 0.01), (0.9, 0.1), (0.75, 0.25), (0.5, 0.5)],
        )
        .expect("valid grid")
    }

    pub fn len(&self) -> usize {
        self.ks.len() * self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    /// Smoothing and minimum size; `k` comes from the grid.
    pub superpixel: SuperpixelConfig,
    pub denominator: Denominator,
    pub mode: MiouMode,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            superpixel: SuperpixelConfig::default(),
            denominator: Denominator::SalientArea,
            mode: MiouMode::Dataset,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub tau: f64,
    pub theta: f64,
    pub miou: std::result::Result<f64, String>,
    pub n_images: usize,
    /// Images whose salient area was empty.
    pub empty_salient: usize,
}

impl SweepRow {
    fn order(a: &SweepRow, b: &SweepRow) -> Ordering {
        let key = |r: &SweepRow| (r.k, r.tau, r.theta);
        let (ka, kb) = (key(a), key(b));
        let params =
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2));
        match (&a.miou, &b.miou) {
            (Ok(x), Ok(y)) => y.total_cmp(x).then(params),
            (Ok(_), Err(_)) => Ordering::Less,
            (Err(_), Ok(_)) => Ordering::Greater,
            (Err(_), Err(_)) => params,
        }
    }

    pub fn csv_record(&self) -> [String; 6] {
        let (miou, warnings) = match &self.miou {
            Ok(v) => (
                format!("{v:.6}"),
                if self.empty_salient > 0 {
                    format!("empty-salient-area:{}", self.empty_salient)
                } else {
                    String::new()
                },
            ),
            Err(e) => ("error".to_string(), format!("error: {e}")),
        };
        [
            format_param(self.k),
            format_param(self.tau),
            format_param(self.theta),
            miou,
            self.n_images.to_string(),
            warnings,
        ]
    }
}

fn format_param(v: f64) -> String {
    format!("{v}")
}

fn evaluate_cell(
    sps: &[SuperpixelMap],
    saliency: &[SaliencyMap],
    gts: &[SegmentationMask],
    cfg: &FusionConfig,
    mode: MiouMode,
) -> Result<(f64, usize)> {
    let mut counts = Vec::with_capacity(sps.len());
    let mut empty = 0;
    for ((sp, sm), gt) in sps.iter().zip(saliency).zip(gts) {
        let fused = fuse(sp, &salient_area(sm, cfg.tau), cfg)?;
        empty += usize::from(fused.warning.is_some());
        counts.push(iou_counts(&fused.mask, gt)?);
    }
    Ok((miou(&counts, mode)?.value, empty))
}

/// Evaluates every grid cell. A failing cell is reported in its row and does
/// not stop the sweep; only misaligned inputs are a hard error.
pub fn run_sweep(
    images: &[Image],
    saliency: &[SaliencyMap],
    gts: &[SegmentationMask],
    grid: &SweepGrid,
    settings: &SweepSettings,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if images.len() != saliency.len() || images.len() != gts.len() {
        return Err(Error::Misaligned(format!(
            "{} images, {} saliency maps, {} ground-truth masks",
            images.len(),
            saliency.len(),
            gts.len()
        )));
    }
    if images.is_empty() {
        return Err(Error::Empty("sweep images"));
    }
    for ((img, sm), gt) in images.iter().zip(saliency).zip(gts) {
        check_same(img.dims(), sm.dims())?;
        check_same(img.dims(), gt.dims())?;
    }

    let mut rows = Vec::with_capacity(grid.len());
    for &k in &grid.ks {
        let spcfg = SuperpixelConfig {
            k,
            ..settings.superpixel
        };
        let sps = segment_batch(images, &spcfg, settings.seed, exec);
        let cells = exec.map(&grid.thresholds, |&(tau, theta)| {
            let cfg = FusionConfig {
                tau,
                theta,
                denominator: settings.denominator,
            };
            let result = sps
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|sps| evaluate_cell(sps, saliency, gts, &cfg, settings.mode).map_err(|e| e.to_string()));
            let (miou, empty_salient) = match result {
                Ok((v, e)) => (Ok(v), e),
                Err(e) => (Err(e), 0),
            };
            SweepRow {
                k,
                tau,
                theta,
                miou,
                n_images: images.len(),
                empty_salient,
            }
        });
        rows.extend(cells);
    }
    rows.sort_by(SweepRow::order);
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Per-image evaluation rows: image id, intersection, union, iou.
pub fn write_iou_csv<W: Write>(ids: &[String], counts: &[IouCounts], out: W) -> Result<()> {
    if ids.len() != counts.len() {
        return Err(Error::Misaligned(format!(
            "{} ids vs {} counts",
            ids.len(),
            counts.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image", "intersection", "union", "iou"])?;
    for (id, c) in ids.iter().zip(counts) {
        let iou = c.iou().map(|v| format!("{v:.6}")).unwrap_or_default();
        w.write_record([id.clone(), c.intersection.to_string(), c.union.to_string(), iou])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
