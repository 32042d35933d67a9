//! Weak road segmentation from image-level supervision.
//!
//! The pipeline turns a road / non-road image classifier into pixel masks:
//! class activation maps give a coarse road saliency, graph-based superpixels
//! sharpen it into weak labels, and a segmenter is self-trained on those
//! labels. Evaluation is road IoU with void pixels ignored.
//!
//! Batch loops run on rayon when the `parallel` feature is enabled (default);
//! see [`parallel::Execution`].

pub mod cam;
pub mod error;
pub mod evalcost;
pub mod experiment;
pub mod fmap;
pub mod fusion;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod raster;
pub mod selftrain;
pub mod superpixel;
pub mod sweep;

pub use error::{Error, Result};
pub use fmap::{read_fmap, write_fmap, ClassWeights, FeatureMaps};
pub use io::{load_image, load_mask, save_image, save_mask, LabelMap};
pub use parallel::Execution;
pub use raster::{BinaryMask, Image, Label, SaliencyMap, SegmentationMask};
pub use superpixel::{segment, SuperpixelConfig, SuperpixelMap};
