//! Semi-global matching on census costs.

mod aggregate;
mod census;
mod cost;
mod select;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{save_raster, ChannelLabel, GrayImage, ImageError, MultiChannelImage};

pub use aggregate::{aggregate, AggregateParams, DIRECTIONS};
pub use census::{census, CensusImage, MAX_WINDOW};
pub use cost::{build_cost_volume, flat_cost_mask, CostVolume};
pub use select::{lr_check, median_filter_valid, select_disparity};

#[derive(Debug, Error)]
pub enum StereoError {
    #[error("census window {0}x{1} must be odd and at most 9x9")]
    BadWindow(u32, u32),
    #[error("invalid disparity range [{min}, {max}] for width {width}")]
    BadRange { min: i32, max: i32, width: u32 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Inclusive disparity search interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisparityRange {
    pub min: i32,
    pub max: i32,
}

impl DisparityRange {
    pub const fn new(min: i32, max: i32) -> Self {
        Self { min, max }
    }

    /// Number of candidate disparities.
    pub fn len(&self) -> usize {
        (self.max - self.min + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.max < self.min
    }

    pub fn validate(&self, width: u32) -> Result<(), StereoError> {
        let bad = self.is_empty() || self.len() > 256 || self.max.unsigned_abs() >= width || self.min.unsigned_abs() >= width;
        if bad {
            return Err(StereoError::BadRange {
                min: self.min,
                max: self.max,
                width,
            });
        }
        Ok(())
    }
}

impl Default for DisparityRange {
    fn default() -> Self {
        Self::new(0, 128)
    }
}

/// Per-pixel disparity, NaN where invalid.
///
/// Left-image convention: the left pixel `(x, y)` matches the right pixel
/// `(x - d, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: u32,
    height: u32,
    range: DisparityRange,
    data: Vec<f32>,
}

impl DisparityMap {
    pub const INVALID: f32 = f32::NAN;

    pub fn new(width: u32, height: u32, range: DisparityRange, data: Vec<f32>) -> Result<Self, StereoError> {
        if data.len() != width as usize * height as usize {
            return Err(StereoError::DimensionMismatch(format!(
                "{} values for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            range,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, range: DisparityRange, value: f32) -> Self {
        Self {
            width,
            height,
            range,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn range(&self) -> DisparityRange {
        self.range
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        !self.get(x, y).is_nan()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.data.len() as f64
    }

    /// Median of the valid values (lower median for even counts).
    pub fn median_valid(&self) -> Option<f32> {
        let mut v: Vec<f32> = self.data.iter().copied().filter(|v| !v.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f32::total_cmp);
        Some(v[(v.len() - 1) / 2])
    }

    /// Mirrors the map horizontally; values are unchanged.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(w) {
            data.extend(row.iter().rev());
        }
        Self { data, ..*self }
    }

    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| if v.is_nan() { v } else { f(v) }).collect(),
            ..*self
        }
    }

    /// Single DEPTH plane holding the raw values (NaN where invalid).
    pub fn to_image(&self) -> MultiChannelImage {
        MultiChannelImage::from_f32(self.width, self.height, vec![self.data.clone()], vec![ChannelLabel::Depth])
            .expect("consistent geometry")
    }

    pub fn from_image(img: &MultiChannelImage, range: DisparityRange) -> Result<Self, StereoError> {
        let plane = img.f32_plane(ChannelLabel::Depth)?;
        Self::new(img.width(), img.height(), range, plane.to_vec())
    }

    /// 8-bit rendering stretched over the valid values; invalid pixels are 0.
    pub fn visualize(&self) -> MultiChannelImage {
        let (lo, hi) = self
            .data
            .iter()
            .filter(|v| !v.is_nan())
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let plane = self
            .data
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    0
                } else {
                    1 + ((v - lo) / span * 254.0).round() as u8
                }
            })
            .collect();
        MultiChannelImage::from_u8(self.width, self.height, vec![plane], vec![ChannelLabel::Gray])
            .expect("consistent geometry")
    }

    pub fn save_visualization(&self, path: impl AsRef<Path>) -> Result<(), StereoError> {
        save_raster(&self.visualize(), path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoParams {
    pub census_window: (u32, u32),
    pub range: DisparityRange,
    pub p1: u16,
    pub p2: u16,
    pub uniqueness_ratio: f64,
    pub lr_tolerance: f64,
}

impl Default for StereoParams {
    fn default() -> Self {
        Self {
            census_window: (5, 5),
            range: DisparityRange::default(),
            p1: 10,
            p2: 120,
            uniqueness_ratio: 0.95,
            lr_tolerance: 1.0,
        }
    }
}

impl StereoParams {
    pub fn aggregate_params(&self) -> AggregateParams {
        AggregateParams {
            p1: self.p1,
            p2: self.p2,
        }
    }

    pub fn validate(&self, width: u32) -> Result<(), StereoError> {
        census::check_window(self.census_window)?;
        self.range.validate(width)?;
        let bits = self.census_window.0 * self.census_window.1 - 1;
        self.aggregate_params().validate(bits as u16)?;
        if !(self.uniqueness_ratio > 0.0 && self.uniqueness_ratio <= 1.0) {
            return Err(StereoError::InvalidParams("uniqueness_ratio must be in (0, 1]".into()));
        }
        if !(self.lr_tolerance >= 0.0) {
            return Err(StereoError::InvalidParams("lr_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

fn one_direction(left: &GrayImage, right: &GrayImage, params: &StereoParams) -> Result<DisparityMap, StereoError> {
    let cl = census(left, params.census_window)?;
    let cr = census(right, params.census_window)?;
    let cv = build_cost_volume(&cl, &cr, params.range)?;
    let agg = aggregate(&cv, &params.aggregate_params())?;
    let flat = flat_cost_mask(&cv, cl.bit_count() as u16);
    let selected = select_disparity(&agg, params.uniqueness_ratio);
    let range = selected.range();
    let (w, h) = (selected.width(), selected.height());
    let data = selected
        .into_vec()
        .into_iter()
        .zip(flat)
        .map(|(d, f)| if f { DisparityMap::INVALID } else { d })
        .collect();
    DisparityMap::new(w, h, range, data)
}

/// Left-image disparity from a rectified pair, cross-checked against the
/// right-image disparity. Pixels with flat matching costs are invalid.
pub fn compute_disparity(left: &GrayImage, right: &GrayImage, params: &StereoParams) -> Result<DisparityMap, StereoError> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(StereoError::DimensionMismatch(format!(
            "left {}x{}, right {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    params.validate(left.width())?;
    let dl = one_direction(left, right, params)?;
    // mirrored roles turn "right pixel x matches left x + d" into the left convention
    let dr = one_direction(&right.flip_horizontal(), &left.flip_horizontal(), params)?.flip_horizontal();
    lr_check(&dl, &dr, params.lr_tolerance)
}
