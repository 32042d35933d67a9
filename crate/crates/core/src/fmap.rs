//! Feature maps, class weights and the FMAP binary container.
//!
//! FMAP layout, all little-endian:
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `FMAP`                            |
//! | 4      | 4         | format version (`u32`, currently 1)     |
//! | 8      | 4         | channels `K` (`u32`)                    |
//! | 12     | 4         | rows `fh` (`u32`)                       |
//! | 16     | 4         | columns `fw` (`u32`)                    |
//! | 20     | 4·K·fh·fw | `f32` values, channel-major, row-major  |
//!
//! Class weights use the same container with `K = C + 1` channels of one row
//! each: channel `c < C` holds the weight vector of class `c` and the last
//! channel holds the `C` biases, zero-padded to the row width.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FMAP_MAGIC: [u8; 4] = *b"FMAP";
pub const FMAP_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// `K × fh × fw` activations, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl FeatureMaps {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature maps need K, fh, fw >= 1, got {channels}x{height}x{width}"
            )));
        }
        if values.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{channels}x{height}x{width} feature maps need {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("feature values must be finite".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Spatial positions per channel.
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let n = self.area();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, x: usize, y: usize) -> f32 {
        self.values[(k * self.height + y) * self.width + x]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(&FMAP_MAGIC);
        for v in [
            FMAP_VERSION,
            self.channels as u32,
            self.height as u32,
            self.width as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != FMAP_MAGIC {
                return Err(Error::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(Error::CorruptHeader(format!(
                "FMAP header needs {HEADER_LEN} bytes, file has {}",
                bytes.len()
            )));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != FMAP_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let version = word(1);
        if version != FMAP_VERSION {
            return Err(Error::VersionMismatch {
                expected: FMAP_VERSION,
                found: version,
            });
        }
        let (k, fh, fw) = (word(2) as usize, word(3) as usize, word(4) as usize);
        let count = k
            .checked_mul(fh)
            .and_then(|n| n.checked_mul(fw))
            .ok_or_else(|| Error::CorruptHeader("FMAP dimensions overflow".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if Some(payload.len()) != count.checked_mul(4) {
            return Err(Error::LengthMismatch {
                expected: count,
                found: payload.len(),
            });
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(k, fh, fw, values)
    }
}

pub fn write_fmap(fm: &FeatureMaps, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, fm.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<FeatureMaps> {
    let path = path.as_ref();
    FeatureMaps::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Linear classifier weights `C × K` plus a per-class bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    classes: usize,
    channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ClassWeights {
    pub fn new(classes: usize, channels: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if classes < 2 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "class weights need C >= 2 and K >= 1, got C={classes} K={channels}"
            )));
        }
        if weights.len() != classes * channels || bias.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "class weights {classes}x{channels} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("class weights must be finite".into()));
        }
        Ok(Self {
            classes,
            channels,
            weights,
            bias,
        })
    }

    pub fn zeros(classes: usize, channels: usize) -> Result<Self> {
        Self::new(classes, channels, vec![0.0; classes * channels], vec![0.0; classes])
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.channels..(c + 1) * self.channels]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Packs into the FMAP layout described in the module docs. Values are
    /// narrowed to `f32`.
    pub fn to_feature_maps(&self) -> Result<FeatureMaps> {
        if self.classes > self.channels {
            return Err(Error::ShapeMismatch(format!(
                "bias row of {} classes does not fit a row of {} channels",
                self.classes, self.channels
            )));
        }
        let mut values: Vec<f32> = self.weights.iter().map(|&v| v as f32).collect();
        values.extend(self.bias.iter().map(|&v| v as f32));
        values.resize((self.classes + 1) * self.channels, 0.0);
        FeatureMaps::new(self.classes + 1, 1, self.channels, values)
    }

    pub fn from_feature_maps(fm: &FeatureMaps) -> Result<Self> {
        if fm.height() != 1 || fm.channels() < 3 {
            return Err(Error::ShapeMismatch(format!(
                "class weight container must be (C+1)x1xK with C >= 2, got {}x{}x{}",
                fm.channels(),
                fm.height(),
                fm.width()
            )));
        }
        let classes = fm.channels() - 1;
        let channels = fm.width();
        if classes > channels {
            return Err(Error::ShapeMismatch(format!(
                "bias row of {classes} classes does not fit a row of {channels} channels"
            )));
        }
        let weights = fm.values()[..classes * channels]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        let bias = fm.channel(classes)[..classes].iter().map(|&v| f64::from(v)).collect();
        Self::new(classes, channels, weights, bias)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_fmap(&self.to_feature_maps()?, path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_feature_maps(&read_fmap(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_file_is_24_bytes() {
        let fm = FeatureMaps::new(1, 1, 1, vec![0.5]).unwrap();
        let bytes = fm.to_bytes();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"FMAP");
        assert_eq!(&bytes[20..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = FeatureMaps::new(1, 1, 1, vec![0.5]).unwrap().to_bytes();
        bytes[..4].copy_from_slice(b"XMAP");
        let err = FeatureMaps::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn version_and_length_errors() {
        let good = FeatureMaps::new(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap().to_bytes();
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(
            FeatureMaps::from_bytes(&v2),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
        assert!(matches!(
            FeatureMaps::from_bytes(&good[..good.len() - 1]),
            Err(Error::LengthMismatch { .. })
        ));
        let mut long = good.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(
            FeatureMaps::from_bytes(&long),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            FeatureMaps::from_bytes(&good[..10]),
            Err(Error::CorruptHeader(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(FeatureMaps::new(1, 1, 2, vec![1.0, f32::NAN]).is_err());
        assert!(ClassWeights::new(2, 1, vec![1.0, f64::INFINITY], vec![0.0; 2]).is_err());
    }

    #[test]
    fn channel_major_layout() {
        let fm = FeatureMaps::new(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(fm.get(1, 2, 0), 8.0);
        assert_eq!(fm.get(0, 0, 1), 3.0);
        assert_eq!(fm.channel(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn class_weights_container() {
        let w = ClassWeights::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, -2.0, 0.5], vec![0.25, -0.75]).unwrap();
        let fm = w.to_feature_maps().unwrap();
        assert_eq!((fm.channels(), fm.height(), fm.width()), (3, 1, 3));
        assert_eq!(fm.channel(2), &[0.25, -0.75, 0.0]);
        assert_eq!(ClassWeights::from_feature_maps(&fm).unwrap(), w);
    }

    #[test]
    fn class_weights_need_room_for_bias() {
        let w = ClassWeights::zeros(3, 2).unwrap();
        assert!(w.to_feature_maps().is_err());
        assert!(ClassWeights::zeros(1, 4).is_err());
    }
}
