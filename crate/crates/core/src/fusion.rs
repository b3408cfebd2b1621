//! Merging the previous- and next-frame disparity maps of a centre frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stereo::{DisparityMap, DisparityRange};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("disparity maps differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("no valid disparity to normalize")]
    AllInvalid,
    #[error("invalid normalization bounds [{0}, {1}]")]
    BadBounds(f32, f32),
}

/// Pixel tallies behind a fusion; the four counts cover every pixel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionCounts {
    pub agreed: usize,
    pub one_side: usize,
    pub rejected: usize,
    pub both_invalid: usize,
}

impl FusionCounts {
    pub fn total(&self) -> usize {
        self.agreed + self.one_side + self.rejected + self.both_invalid
    }

    fn fraction(&self, n: usize) -> f64 {
        if self.total() == 0 { 0.0 } else { n as f64 / self.total() as f64 }
    }

    pub fn valid_fraction(&self) -> f64 {
        self.fraction(self.agreed + self.one_side)
    }

    pub fn one_side_fraction(&self) -> f64 {
        self.fraction(self.one_side)
    }

    pub fn rejected_fraction(&self) -> f64 {
        self.fraction(self.rejected)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedDepth {
    pub map: DisparityMap,
    pub counts: FusionCounts,
}

#[derive(Clone, Copy)]
enum Outcome {
    Agreed,
    OneSide,
    Rejected,
    BothInvalid,
}

/// Mean where both maps agree within `agree_tol`, the single valid value
/// where only one is valid, INVALID otherwise.
pub fn fuse(d_prev: &DisparityMap, d_next: &DisparityMap, agree_tol: f32) -> Result<FusedDepth, FusionError> {
    if d_prev.width() != d_next.width() || d_prev.height() != d_next.height() {
        return Err(FusionError::DimensionMismatch(
            d_prev.width(),
            d_prev.height(),
            d_next.width(),
            d_next.height(),
        ));
    }
    let (values, outcomes): (Vec<f32>, Vec<Outcome>) = d_prev
        .as_slice()
        .par_iter()
        .zip(d_next.as_slice())
        .map(|(&a, &b)| match (a.is_nan(), b.is_nan()) {
            (false, false) if (a - b).abs() <= agree_tol => ((a + b) / 2.0, Outcome::Agreed),
            (false, false) => (DisparityMap::INVALID, Outcome::Rejected),
            (false, true) => (a, Outcome::OneSide),
            (true, false) => (b, Outcome::OneSide),
            (true, true) => (DisparityMap::INVALID, Outcome::BothInvalid),
        })
        .unzip();
    let mut counts = FusionCounts::default();
    for o in outcomes {
        match o {
            Outcome::Agreed => counts.agreed += 1,
            Outcome::OneSide => counts.one_side += 1,
            Outcome::Rejected => counts.rejected += 1,
            Outcome::BothInvalid => counts.both_invalid += 1,
        }
    }
    let range = DisparityRange::new(
        d_prev.range().min.min(d_next.range().min),
        d_prev.range().max.max(d_next.range().max),
    );
    let map = DisparityMap::new(d_prev.width(), d_prev.height(), range, values).expect("consistent geometry");
    Ok(FusedDepth { map, counts })
}

/// How disparities are stretched onto the 8-bit depth channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DepthNormalization {
    /// Dataset-wide bounds; values outside are clamped.
    Fixed { min: f32, max: f32 },
    /// Bounds taken from each map's own valid values.
    PerImage,
}

impl DepthNormalization {
    pub fn fixed(range: DisparityRange) -> Self {
        Self::Fixed {
            min: range.min as f32,
            max: range.max as f32,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fixed { .. } => "fixed",
            Self::PerImage => "per_image",
        }
    }
}

impl Default for DepthNormalization {
    fn default() -> Self {
        Self::fixed(DisparityRange::default())
    }
}

/// 8-bit depth channel: valid values in `[1, 255]`, 0 for INVALID.
///
/// `q = (d - offset) * scale` rounded, so `d ≈ q / scale + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPlane {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
    pub offset: f32,
    pub scale: f32,
    pub policy: DepthNormalization,
}

impl DepthPlane {
    /// Disparity represented by code `q`, `None` for 0.
    pub fn decode(&self, q: u8) -> Option<f32> {
        (q != 0).then(|| q as f32 / self.scale + self.offset)
    }
}

pub fn normalize_depth(map: &DisparityMap, policy: &DepthNormalization) -> Result<DepthPlane, FusionError> {
    let (lo, hi) = match *policy {
        DepthNormalization::Fixed { min, max } => {
            if !(min.is_finite() && max.is_finite() && max > min) {
                return Err(FusionError::BadBounds(min, max));
            }
            (min, max)
        }
        DepthNormalization::PerImage => map
            .as_slice()
            .iter()
            .filter(|v| !v.is_nan())
            .fold(None, |acc: Option<(f32, f32)>, &v| {
                Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
            })
            .ok_or(FusionError::AllInvalid)?,
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scale = 254.0 / span;
    let offset = lo - 1.0 / scale;
    let data = map
        .as_slice()
        .par_iter()
        .map(|&d| {
            if d.is_nan() {
                0
            } else {
                (1.0 + ((d - lo) / span * 254.0).round()).clamp(1.0, 255.0) as u8
            }
        })
        .collect();
    Ok(DepthPlane {
        width: map.width(),
        height: map.height(),
        data,
        offset,
        scale,
        policy: *policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAN: f32 = f32::NAN;

    fn row(v: Vec<f32>) -> DisparityMap {
        DisparityMap::new(v.len() as u32, 1, DisparityRange::new(0, 16), v).unwrap()
    }

    #[test]
    fn rules() {
        let f = fuse(&row(vec![6.0, 5.0, 4.0, NAN, NAN]), &row(vec![NAN, 7.0, 4.5, 3.0, NAN]), 1.0).unwrap();
        let v = f.map.as_slice();
        assert_eq!(v[0], 6.0);
        assert!(v[1].is_nan());
        assert_eq!(v[2], 4.25);
        assert_eq!(v[3], 3.0);
        assert!(v[4].is_nan());
        assert_eq!(
            f.counts,
            FusionCounts {
                agreed: 1,
                one_side: 2,
                rejected: 1,
                both_invalid: 1
            }
        );
        assert_eq!(f.counts.rejected_fraction(), 0.2);
    }

    #[test]
    fn size_mismatch() {
        assert!(fuse(&row(vec![1.0; 3]), &row(vec![1.0; 4]), 1.0).is_err());
    }

    #[test]
    fn normalization_anchors() {
        let policy = DepthNormalization::fixed(DisparityRange::new(0, 128));
        let p = normalize_depth(&row(vec![0.0, 64.0, 128.0, NAN, 500.0, -3.0]), &policy).unwrap();
        assert_eq!(p.data, [1, 128, 255, 0, 255, 1]);
        assert_eq!(p.decode(1), Some(0.0));
        assert!((p.decode(255).unwrap() - 128.0).abs() < 1e-4);
    }

    #[test]
    fn per_image_requires_a_valid_pixel() {
        assert!(matches!(
            normalize_depth(&row(vec![NAN; 4]), &DepthNormalization::PerImage),
            Err(FusionError::AllInvalid)
        ));
        let p = normalize_depth(&row(vec![2.0, 4.0, NAN]), &DepthNormalization::PerImage).unwrap();
        assert_eq!(p.data, [1, 255, 0]);
    }
}
