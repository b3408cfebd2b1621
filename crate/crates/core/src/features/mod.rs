//! SURF interest points, 64-dimensional descriptors and ratio-test matching.

mod describe;
mod detect;
mod matching;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use describe::{compute_descriptors, Described};
pub use detect::detect_features;
pub use matching::match_features;

/// Smallest image side accepted by the detector.
pub const MIN_IMAGE_SIDE: u32 = 32;

pub const DESCRIPTOR_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {width}x{height} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("invalid feature parameters: {0}")]
    InvalidParams(String),
    #[error("failed to write feature records: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Minimum determinant-of-Hessian response (area-normalized, intensities in `[0, 1]`).
    pub hessian_threshold: f64,
    pub octaves: u32,
    /// Detection layers per octave; two extra filter sizes bracket them.
    pub layers_per_octave: u32,
    /// Skip orientation assignment (all descriptors use angle 0).
    pub upright: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            hessian_threshold: 4e-4,
            octaves: 4,
            layers_per_octave: 3,
            upright: false,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.hessian_threshold >= 0.0) {
            return Err(FeatureError::InvalidParams(
                "hessian_threshold must be >= 0".into(),
            ));
        }
        if !(1..=6).contains(&self.octaves) {
            return Err(FeatureError::InvalidParams("octaves must be in 1..=6".into()));
        }
        if !(1..=8).contains(&self.layers_per_octave) {
            return Err(FeatureError::InvalidParams(
                "layers_per_octave must be in 1..=8".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub x: f64,
    pub y: f64,
    /// Gaussian-equivalent scale in pixels (1.2 / 9 of the box filter size).
    pub scale: f64,
    /// Radians; 0 until descriptors are computed.
    pub orientation: f64,
    pub laplacian_sign: i8,
    pub response: f64,
}

/// Unit-norm 64-component SURF descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn distance(&self, other: &Descriptor) -> f32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f32>()
            .sqrt()
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f32,
    /// Best over second-best distance; 0 when no second candidate exists.
    pub ratio: f32,
}

/// Default Lowe ratio.
pub const DEFAULT_RATIO: f32 = 0.7;

#[derive(Serialize)]
struct FeatureRecord {
    x: f64,
    y: f64,
    scale: f64,
    response: f64,
}

#[derive(Serialize)]
struct FeatureDump<'a> {
    features_a: Vec<FeatureRecord>,
    features_b: Vec<FeatureRecord>,
    matches: &'a [MatchPair],
}

/// Writes features and matches as JSON records for external visualization.
pub fn dump_records(
    path: impl AsRef<Path>,
    a: &[FeaturePoint],
    b: &[FeaturePoint],
    matches: &[MatchPair],
) -> Result<(), FeatureError> {
    let rec = |p: &FeaturePoint| FeatureRecord {
        x: p.x,
        y: p.y,
        scale: p.scale,
        response: p.response,
    };
    let dump = FeatureDump {
        features_a: a.iter().map(rec).collect(),
        features_b: b.iter().map(rec).collect(),
        matches,
    };
    let text = serde_json::to_string_pretty(&dump).map_err(std::io::Error::other)?;
    std::fs::write(path, text)?;
    Ok(())
}
