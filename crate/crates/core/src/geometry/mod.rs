//! Two-view epipolar geometry: fundamental matrix estimation and
//! uncalibrated projective rectification.

mod fundamental;
mod ransac;
mod rectify;

use std::path::Path;

use nalgebra::{Matrix3, Point2, Vector3};
use serde::Serialize;
use thiserror::Error;

pub use fundamental::{estimate_f_8point, sampson_distance, FundamentalMatrix};
pub use ransac::{ransac_f, RansacParams, RobustFit};
pub use rectify::{rectify, vertical_disparities, RectifyingPair};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("need at least {needed} correspondences, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("robust fit found only {found} inliers (need 8) after {iterations} iterations")]
    TooFewInliers { found: usize, iterations: usize },
    #[error("epipole inside image at ({x:.1}, {y:.1})")]
    EpipoleInsideImage { x: f64, y: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("failed to write geometry records: {0}")]
    Io(#[from] std::io::Error),
}

/// A point correspondence: `a` in the first view, `b` in the second,
/// related by `b^T F a = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

impl PointPair {
    pub fn new(ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        Self {
            a: Point2::new(ax, ay),
            b: Point2::new(bx, by),
        }
    }
}

#[inline]
pub(crate) fn homogeneous(p: &Point2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// Applies a projective transform to a point.
pub fn transform_point(h: &Matrix3<f64>, p: &Point2<f64>) -> Point2<f64> {
    let q = h * homogeneous(p);
    Point2::new(q.x / q.z, q.y / q.z)
}

#[inline]
pub(crate) fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[derive(Serialize)]
struct GeometryDump<'a> {
    fundamental: [[f64; 3]; 3],
    epipole_a: [f64; 3],
    epipole_b: [f64; 3],
    inlier_mask: &'a [bool],
}

/// Writes F, both epipoles and the inlier mask as JSON.
pub fn dump_records(path: impl AsRef<Path>, fit: &RobustFit) -> Result<(), GeometryError> {
    let m = fit.f.matrix();
    let (ea, eb) = fit.f.epipoles();
    let dump = GeometryDump {
        fundamental: [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]),
        epipole_a: [ea.x, ea.y, ea.z],
        epipole_b: [eb.x, eb.y, eb.z],
        inlier_mask: &fit.inlier_mask,
    };
    let text = serde_json::to_string_pretty(&dump).map_err(std::io::Error::other)?;
    std::fs::write(path, text)?;
    Ok(())
}
