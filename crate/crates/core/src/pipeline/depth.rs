use std::fmt;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::features::{compute_descriptors, detect_features, match_features, Described};
use crate::fusion::{fuse, FusedDepth, FusionCounts};
use crate::geometry::{ransac_f, rectify, vertical_disparities, PointPair, RectifyingPair};
use crate::raster::{load_raster, to_gray, warp_projective, warp_projective_with, ChannelLabel, GrayImage, Interpolation, MultiChannelImage, Planes};
use crate::stereo::{compute_disparity, DisparityMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Features,
    Geometry,
    Stereo,
    Fusion,
    Stack,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Features => "features",
            Stage::Geometry => "geometry",
            Stage::Stereo => "stereo",
            Stage::Fusion => "fusion",
            Stage::Stack => "stack",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

/// Failure of one triple at one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl StageError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectificationMode {
    /// Matches already share rows; frames used as they are, no F fitted.
    RowAligned,
    Projective,
}

/// What happened between the centre frame and one neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub matches: usize,
    pub inliers: usize,
    /// Zero when the pair was row-aligned and no fit was needed.
    pub ransac_iterations: usize,
    pub inlier_rms_sampson: Option<f64>,
    pub rectification: RectificationMode,
    /// RMS row offset of the inliers after rectification, in pixels.
    pub vertical_rms_px: f64,
    /// Median `x_center - x_neighbour` over the inliers.
    pub median_raw_disparity: f64,
    /// The pair was mirrored so the centre frame plays the left view.
    pub mirrored: bool,
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthDiagnostics {
    pub prev: PairDiagnostics,
    pub next: PairDiagnostics,
    pub fusion: FusionCounts,
    pub fused_valid_fraction: f64,
    pub rejected_fraction: f64,
    pub median_disparity: Option<f32>,
}

#[derive(Debug, Clone)]
pub struct DepthResult {
    pub fused: FusedDepth,
    /// Per-neighbour maps on the centre grid.
    pub prev_map: DisparityMap,
    pub next_map: DisparityMap,
    pub diagnostics: DepthDiagnostics,
}

/// Detected, described features of one frame.
pub struct FrameFeatures {
    gray: GrayImage,
    described: Described,
}

impl FrameFeatures {
    pub fn new(frame: &MultiChannelImage, config: &PipelineConfig) -> Result<Self, StageError> {
        let gray = to_gray(frame).map_err(|e| StageError::new(Stage::Features, e))?;
        let mut pts = detect_features(&gray, &config.features).map_err(|e| StageError::new(Stage::Features, e))?;
        pts.truncate(config.matching.max_features);
        let described = compute_descriptors(&gray, &pts, config.features.upright);
        Ok(Self { gray, described })
    }

    pub fn gray(&self) -> &GrayImage {
        &self.gray
    }

    pub fn len(&self) -> usize {
        self.described.len()
    }

    pub fn is_empty(&self) -> bool {
        self.described.is_empty()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn warp_gray(g: &GrayImage, h: &Matrix3<f64>) -> Result<GrayImage, StageError> {
    let img = MultiChannelImage::from_f32(g.width(), g.height(), vec![g.as_slice().to_vec()], vec![ChannelLabel::Gray])
        .map_err(|e| StageError::new(Stage::Geometry, e))?;
    let warped = warp_projective(&img, h, None).map_err(|e| StageError::new(Stage::Geometry, e))?;
    let Planes::F32(planes) = warped.into_planes() else {
        unreachable!("real-valued input stays real-valued")
    };
    // samples from outside the source carry no texture
    let data = planes.into_iter().next().expect("one plane").into_iter().map(|v| if v.is_nan() { 0.0 } else { v }).collect();
    GrayImage::new(g.width(), g.height(), data).map_err(|e| StageError::new(Stage::Geometry, e))
}

/// Disparity of `center` against one neighbour, on the centre frame's grid.
///
/// `seed` drives the robust fit; values are positive whichever side the
/// neighbour lies on.
pub fn pair_disparity(
    center: &FrameFeatures,
    other: &FrameFeatures,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(DisparityMap, PairDiagnostics), StageError> {
    let guards = &config.guards;
    let matches = match_features(&center.described.descriptors, &other.described.descriptors, config.matching.ratio);
    if matches.len() < guards.min_matches {
        return Err(StageError::new(
            Stage::Features,
            format!("too few matches ({} < {})", matches.len(), guards.min_matches),
        ));
    }
    let pairs: Vec<PointPair> = matches
        .iter()
        .map(|m| {
            let a = &center.described.points[m.index_a];
            let b = &other.described.points[m.index_b];
            PointPair::new(a.x, a.y, b.x, b.y)
        })
        .collect();
    let parallax = median(pairs.iter().map(|p| (p.a - p.b).norm()).collect());
    if parallax < guards.min_parallax_px {
        return Err(StageError::new(
            Stage::Geometry,
            format!(
                "insufficient parallax (median displacement {parallax:.3} px < {} px)",
                guards.min_parallax_px
            ),
        ));
    }
    let (w, h) = (center.gray.width(), center.gray.height());
    // near-pure horizontal motion over a shallow scene is degenerate for F,
    // and needs no rectification anyway
    let aligned: Vec<PointPair> = pairs
        .iter()
        .filter(|p| (p.a.y - p.b.y).abs() <= guards.row_aligned_tol_px)
        .copied()
        .collect();
    let (mode, rp, inliers, ransac_iterations, inlier_rms_sampson) =
        if aligned.len() as f64 >= guards.row_aligned_fraction * pairs.len() as f64 {
            let id = Matrix3::identity();
            let rp = RectifyingPair {
                h1: id,
                h2: id,
                extent: (w, h),
            };
            (RectificationMode::RowAligned, rp, aligned, 0, None)
        } else {
            let fit = ransac_f(&pairs, &config.ransac.with_seed(seed)).map_err(|e| StageError::new(Stage::Geometry, e))?;
            let inliers: Vec<PointPair> = fit.inliers(&pairs).copied().collect();
            let rp = rectify(&fit.f, &inliers, (w, h)).map_err(|e| StageError::new(Stage::Geometry, e))?;
            (
                RectificationMode::Projective,
                rp,
                inliers,
                fit.iterations_used,
                Some(fit.inlier_rms_sampson),
            )
        };
    let vd = vertical_disparities(&rp, &inliers);
    let vertical_rms_px = (vd.iter().map(|v| v * v).sum::<f64>() / vd.len().max(1) as f64).sqrt();
    let median_raw_disparity = median(inliers.iter().map(|p| p.a.x - p.b.x).collect());

    let (left, right) = match mode {
        RectificationMode::RowAligned => (center.gray.clone(), other.gray.clone()),
        RectificationMode::Projective => {
            let inv = |m: &Matrix3<f64>| {
                m.try_inverse()
                    .ok_or_else(|| StageError::new(Stage::Geometry, "rectifying transform is singular"))
            };
            (warp_gray(&center.gray, &inv(&rp.h1)?)?, warp_gray(&other.gray, &inv(&rp.h2)?)?)
        }
    };
    let mirrored = median_raw_disparity < 0.0;
    let stereo = |e| StageError::new(Stage::Stereo, e);
    let rectified = if mirrored {
        compute_disparity(&left.flip_horizontal(), &right.flip_horizontal(), &config.sgm)
            .map_err(stereo)?
            .flip_horizontal()
    } else {
        compute_disparity(&left, &right, &config.sgm).map_err(stereo)?
    };
    let map = match mode {
        RectificationMode::RowAligned => rectified,
        RectificationMode::Projective => {
            // centre pixel p reads the rectified map at H1 p
            let back = warp_projective_with(&rectified.to_image(), &rp.h1, Some((w, h)), Interpolation::Nearest)
                .map_err(|e| StageError::new(Stage::Stereo, e))?;
            DisparityMap::from_image(&back, rectified.range()).map_err(stereo)?
        }
    };
    let diag = PairDiagnostics {
        matches: pairs.len(),
        inliers: inliers.len(),
        ransac_iterations,
        inlier_rms_sampson,
        rectification: mode,
        vertical_rms_px,
        median_raw_disparity,
        mirrored,
        valid_fraction: map.valid_fraction(),
    };
    Ok((map, diag))
}

/// Mixes `seed` with a frame position so every pair gets its own stream.
pub fn pair_seed(seed: u64, center_index: usize, side: u64) -> u64 {
    let mut z = seed ^ (center_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ side.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fused disparity of `center` from its two neighbours.
pub fn depth_from_frames(
    prev: &MultiChannelImage,
    center: &MultiChannelImage,
    next: &MultiChannelImage,
    config: &PipelineConfig,
    center_index: usize,
) -> Result<DepthResult, StageError> {
    for f in [prev, next] {
        if (f.width(), f.height()) != (center.width(), center.height()) {
            return Err(StageError::new(
                Stage::Load,
                format!(
                    "frame sizes differ: {}x{} vs {}x{}",
                    f.width(),
                    f.height(),
                    center.width(),
                    center.height()
                ),
            ));
        }
    }
    config
        .sgm
        .validate(center.width())
        .map_err(|e| StageError::new(Stage::Stereo, e))?;
    let fc = FrameFeatures::new(center, config)?;
    let fp = FrameFeatures::new(prev, config)?;
    let fnx = FrameFeatures::new(next, config)?;
    let (prev_map, prev_diag) = pair_disparity(&fc, &fp, config, pair_seed(config.seed, center_index, 0))?;
    let (next_map, next_diag) = pair_disparity(&fc, &fnx, config, pair_seed(config.seed, center_index, 1))?;
    let fused = fuse(&prev_map, &next_map, config.fusion.agree_tol).map_err(|e| StageError::new(Stage::Fusion, e))?;
    let diagnostics = DepthDiagnostics {
        prev: prev_diag,
        next: next_diag,
        fusion: fused.counts,
        fused_valid_fraction: fused.counts.valid_fraction(),
        rejected_fraction: fused.counts.rejected_fraction(),
        median_disparity: fused.map.median_valid(),
    };
    Ok(DepthResult {
        fused,
        prev_map,
        next_map,
        diagnostics,
    })
}

/// Loads a frame as R,G,B; single-channel frames are replicated.
pub fn load_frame(path: &Path) -> Result<MultiChannelImage, StageError> {
    let img = load_raster(path).map_err(|e| StageError::new(Stage::Load, e))?;
    if img.channel_index(ChannelLabel::Gray).is_some() && img.channel_count() == 1 {
        let Planes::U8(p) = img.planes() else {
            unreachable!("loaded rasters are 8-bit")
        };
        let g = p[0].clone();
        return MultiChannelImage::from_u8(
            img.width(),
            img.height(),
            vec![g.clone(), g.clone(), g],
            vec![ChannelLabel::R, ChannelLabel::G, ChannelLabel::B],
        )
        .map_err(|e| StageError::new(Stage::Load, e));
    }
    Ok(img)
}

/// [`depth_from_frames`] on files.
pub fn run_depth(
    prev: &Path,
    center: &Path,
    next: &Path,
    config: &PipelineConfig,
    center_index: usize,
) -> Result<DepthResult, StageError> {
    let (p, c, n) = (load_frame(prev)?, load_frame(center)?, load_frame(next)?);
    depth_from_frames(&p, &c, &n, config, center_index)
}
