use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::EvalParams;
use crate::features::FeatureParams;
use crate::fusion::DepthNormalization;
use crate::geometry::RansacParams;
use crate::stack::StackSpec;
use crate::stereo::StereoParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOrdering {
    /// Byte-wise file name order.
    #[default]
    Lexicographic,
    /// Digit runs compared as numbers, so `f9` sorts before `f10`.
    Natural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSource {
    pub dir: PathBuf,
    pub ordering: FrameOrdering,
    /// Offset between the centre frame and each neighbour.
    pub stride: usize,
    /// Case-insensitive file extensions treated as frames.
    pub extensions: Vec<String>,
}

impl Default for FrameSource {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("frames"),
            ordering: FrameOrdering::Lexicographic,
            stride: 1,
            extensions: vec!["png".into(), "jpg".into(), "jpeg".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchingParams {
    pub ratio: f32,
    /// Strongest detections kept per frame before description.
    pub max_features: usize,
}

impl Default for MatchingParams {
    fn default() -> Self {
        Self {
            ratio: crate::features::DEFAULT_RATIO,
            max_features: 4000,
        }
    }
}

/// RANSAC settings; the sampling seed derives from the top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub threshold_px: f64,
    pub confidence: f64,
    pub max_iters: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        let d = RansacParams::default();
        Self {
            threshold_px: d.threshold_px,
            confidence: d.confidence,
            max_iters: d.max_iters,
        }
    }
}

impl RansacConfig {
    pub fn with_seed(&self, seed: u64) -> RansacParams {
        RansacParams {
            threshold_px: self.threshold_px,
            confidence: self.confidence,
            max_iters: self.max_iters,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuardParams {
    pub min_matches: usize,
    /// Median match displacement below this is treated as no camera motion.
    pub min_parallax_px: f64,
    /// Share of inliers within `row_aligned_tol_px` rows that skips rectification.
    pub row_aligned_fraction: f64,
    pub row_aligned_tol_px: f64,
}

impl Default for GuardParams {
    fn default() -> Self {
        Self {
            min_matches: 8,
            min_parallax_px: 0.5,
            row_aligned_fraction: 0.95,
            row_aligned_tol_px: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    pub agree_tol: f32,
    pub normalization: DepthNormalization,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            agree_tol: 1.0,
            normalization: DepthNormalization::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackParams {
    pub specs: Vec<StackSpec>,
    /// Also write one 8-bit PNG per channel next to each container.
    pub export_png: bool,
}

impl Default for StackParams {
    fn default() -> Self {
        Self {
            specs: vec![StackSpec::RGB_D],
            export_png: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExposureParams {
    /// Row label of the exposure table.
    pub condition: String,
}

impl Default for ExposureParams {
    fn default() -> Self {
        Self {
            condition: "dataset".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Triples processed concurrently; 0 uses one per core.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub frames: FrameSource,
    pub features: FeatureParams,
    pub matching: MatchingParams,
    pub ransac: RansacConfig,
    pub guards: GuardParams,
    pub sgm: StereoParams,
    pub fusion: FusionParams,
    pub stack: StackParams,
    pub exposure: ExposureParams,
    pub eval: EvalParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            output_dir: PathBuf::from("out"),
            frames: FrameSource::default(),
            features: FeatureParams::default(),
            matching: MatchingParams::default(),
            ransac: RansacConfig::default(),
            guards: GuardParams::default(),
            sgm: StereoParams::default(),
            fusion: FusionParams::default(),
            stack: StackParams::default(),
            exposure: ExposureParams::default(),
            eval: EvalParams::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Default configuration with every parameter spelled out.
    pub fn reference_toml() -> String {
        format!(
            "# depthstack configuration; every key is optional and shown with its default\n\n{}",
            Self::default().to_toml_string()
        )
    }

    /// Parameter checks that need no file system access.
    pub fn validate_params(&self) -> Result<(), PipelineError> {
        if self.frames.stride == 0 {
            return Err(invalid("frames.stride must be >= 1"));
        }
        if self.frames.extensions.is_empty() {
            return Err(invalid("frames.extensions must not be empty"));
        }
        self.features.validate().map_err(|e| invalid(format!("features: {e}")))?;
        if !(self.matching.ratio > 0.0 && self.matching.ratio <= 1.0) {
            return Err(invalid("matching.ratio must be in (0, 1]"));
        }
        if self.matching.max_features < 8 {
            return Err(invalid("matching.max_features must be >= 8"));
        }
        self.ransac
            .with_seed(self.seed)
            .validate()
            .map_err(|e| invalid(format!("ransac: {e}")))?;
        let g = &self.guards;
        if g.min_matches < 8 {
            return Err(invalid("guards.min_matches must be >= 8"));
        }
        if !(g.min_parallax_px >= 0.0 && g.row_aligned_tol_px >= 0.0) {
            return Err(invalid("guards tolerances must be >= 0"));
        }
        if !(g.row_aligned_fraction > 0.0 && g.row_aligned_fraction <= 1.0) {
            return Err(invalid("guards.row_aligned_fraction must be in (0, 1]"));
        }
        // the width bound is checked once frames are known
        self.sgm
            .validate(u32::MAX)
            .map_err(|e| invalid(format!("sgm: {e}")))?;
        if !(self.fusion.agree_tol >= 0.0 && self.fusion.agree_tol.is_finite()) {
            return Err(invalid("fusion.agree_tol must be finite and >= 0"));
        }
        if let DepthNormalization::Fixed { min, max } = self.fusion.normalization {
            if !(min.is_finite() && max.is_finite() && max > min) {
                return Err(invalid("fusion.normalization needs finite min < max"));
            }
        }
        if self.stack.specs.is_empty() {
            return Err(invalid("stack.specs must list at least one variant"));
        }
        if self.eval.max_dets == 0 {
            return Err(invalid("eval.max_dets must be >= 1"));
        }
        Ok(())
    }

    /// Parameter checks plus existence of the frame directory.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.validate_params()?;
        if !self.frames.dir.is_dir() {
            return Err(invalid(format!(
                "frames.dir {} is not a directory",
                self.frames.dir.display()
            )));
        }
        Ok(())
    }
}
