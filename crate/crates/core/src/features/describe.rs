use std::f64::consts::{FRAC_PI_3, TAU};

use rayon::prelude::*;

use super::{Descriptor, FeaturePoint, DESCRIPTOR_LEN};
use crate::raster::{GrayImage, IntegralImage};

/// Descriptors for the points that could be described.
///
/// `points[k]` and `descriptors[k]` belong together; `points` carries the
/// assigned orientation. `skipped` lists input indices whose sampling
/// window left the image (or whose window was flat).
#[derive(Debug, Clone, Default)]
pub struct Described {
    pub points: Vec<FeaturePoint>,
    pub descriptors: Vec<Descriptor>,
    pub skipped: Vec<usize>,
}

impl Described {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[inline]
fn wavelet_size(scale: f64, factor: f64) -> i64 {
    (((factor * scale).round() as i64) / 2 * 2).max(2)
}

#[inline]
fn haar_x(ii: &IntegralImage, x: f64, y: f64, size: i64) -> f64 {
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let half = size / 2;
    ii.box_sum(cx, cy - half, half, size) - ii.box_sum(cx - half, cy - half, half, size)
}

#[inline]
fn haar_y(ii: &IntegralImage, x: f64, y: f64, size: i64) -> f64 {
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let half = size / 2;
    ii.box_sum(cx - half, cy, size, half) - ii.box_sum(cx - half, cy - half, size, half)
}

/// Dominant Haar-response direction in a radius-6s disc.
fn orientation(ii: &IntegralImage, p: &FeaturePoint) -> f64 {
    let s = p.scale;
    let size = wavelet_size(s, 4.0);
    let mut samples = Vec::with_capacity(113);
    for j in -6i32..=6 {
        for i in -6i32..=6 {
            let r2 = i * i + j * j;
            if r2 >= 36 {
                continue;
            }
            let g = (-(r2 as f64) / (2.0 * 2.5 * 2.5)).exp();
            let px = p.x + i as f64 * s;
            let py = p.y + j as f64 * s;
            let rx = g * haar_x(ii, px, py, size);
            let ry = g * haar_y(ii, px, py, size);
            if rx != 0.0 || ry != 0.0 {
                samples.push((rx, ry, ry.atan2(rx).rem_euclid(TAU)));
            }
        }
    }
    // windows of width pi/3 anchored at every sample angle
    let mut best = (0.0f64, 0.0f64, 0.0f64);
    for &(_, _, start) in &samples {
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(rx, ry, a) in &samples {
            if (a - start).rem_euclid(TAU) < FRAC_PI_3 {
                sx += rx;
                sy += ry;
            }
        }
        let mag = sx * sx + sy * sy;
        if mag > best.0 {
            best = (mag, sx, sy);
        }
    }
    if best.0 == 0.0 {
        0.0
    } else {
        best.2.atan2(best.1)
    }
}

fn describe_one(ii: &IntegralImage, p: &FeaturePoint, upright: bool) -> Option<(FeaturePoint, Descriptor)> {
    let s = p.scale;
    let size = wavelet_size(s, 2.0);
    // descriptor window corners reach 10*sqrt(2)*s, orientation disc 6s + 2s
    let reach = (10.0 * std::f64::consts::SQRT_2 * s + size as f64).max(8.0 * s) + 1.0;
    let (w, h) = (ii.width() as f64, ii.height() as f64);
    if p.x - reach < 0.0 || p.y - reach < 0.0 || p.x + reach >= w || p.y + reach >= h {
        return None;
    }
    let theta = if upright { 0.0 } else { orientation(ii, p) };
    let (sin, cos) = theta.sin_cos();
    let sigma = 3.3 * s;
    let mut desc = [0f64; DESCRIPTOR_LEN];
    for b in 0..4 {
        for a in 0..4 {
            let cell = &mut desc[(b * 4 + a) * 4..(b * 4 + a) * 4 + 4];
            for l in 0..5 {
                for k in 0..5 {
                    let u = ((a * 5 + k) as f64 - 10.0 + 0.5) * s;
                    let v = ((b * 5 + l) as f64 - 10.0 + 0.5) * s;
                    let px = p.x + u * cos - v * sin;
                    let py = p.y + u * sin + v * cos;
                    let g = (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
                    let hx = haar_x(ii, px, py, size);
                    let hy = haar_y(ii, px, py, size);
                    let dx = g * (hx * cos + hy * sin);
                    let dy = g * (-hx * sin + hy * cos);
                    cell[0] += dx;
                    cell[1] += dx.abs();
                    cell[2] += dy;
                    cell[3] += dy.abs();
                }
            }
        }
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-12 || !norm.is_finite() {
        return None;
    }
    let mut out = [0f32; DESCRIPTOR_LEN];
    for (o, v) in out.iter_mut().zip(desc) {
        *o = (v / norm) as f32;
    }
    let mut point = *p;
    point.orientation = theta;
    Some((point, Descriptor(out)))
}

/// Computes oriented (or upright) SURF descriptors for `pts`.
pub fn compute_descriptors(g: &GrayImage, pts: &[FeaturePoint], upright: bool) -> Described {
    let ii = IntegralImage::new(g);
    let results: Vec<Option<(FeaturePoint, Descriptor)>> =
        pts.par_iter().map(|p| describe_one(&ii, p, upright)).collect();
    let mut out = Described::default();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Some((p, d)) => {
                out.points.push(p);
                out.descriptors.push(d);
            }
            None => out.skipped.push(idx),
        }
    }
    out
}
