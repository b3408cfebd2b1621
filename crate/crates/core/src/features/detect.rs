use rayon::prelude::*;

use super::{FeatureError, FeatureParams, FeaturePoint, MIN_IMAGE_SIDE};
use crate::raster::{GrayImage, IntegralImage};

/// Box-filter Hessian responses for one filter size on one sampling grid.
pub(super) struct ResponseLayer {
    pub filter: u32,
    pub step: u32,
    pub cols: usize,
    pub rows: usize,
    pub response: Vec<f32>,
    pub laplacian: Vec<i8>,
}

impl ResponseLayer {
    fn build(ii: &IntegralImage, filter: u32, step: u32) -> Self {
        let cols = ii.width().div_ceil(step) as usize;
        let rows = ii.height().div_ceil(step) as usize;
        let w = filter as i64;
        let b = (w - 1) / 2;
        let l = w / 3;
        let inv_area = 1.0 / (w * w) as f64;
        let mut response = vec![0f32; cols * rows];
        let mut laplacian = vec![1i8; cols * rows];
        response
            .par_chunks_mut(cols)
            .zip(laplacian.par_chunks_mut(cols))
            .enumerate()
            .for_each(|(j, (resp_row, lap_row))| {
                let r = (j as u32 * step) as i64;
                for i in 0..cols {
                    let c = (i as u32 * step) as i64;
                    let dxx = ii.box_sum(c - b, r - l + 1, w, 2 * l - 1)
                        - 3.0 * ii.box_sum(c - l / 2, r - l + 1, l, 2 * l - 1);
                    let dyy = ii.box_sum(c - l + 1, r - b, 2 * l - 1, w)
                        - 3.0 * ii.box_sum(c - l + 1, r - l / 2, 2 * l - 1, l);
                    let dxy = ii.box_sum(c + 1, r - l, l, l) + ii.box_sum(c - l, r + 1, l, l)
                        - ii.box_sum(c - l, r - l, l, l)
                        - ii.box_sum(c + 1, r + 1, l, l);
                    let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
                    resp_row[i] = (dxx * dyy - 0.81 * dxy * dxy) as f32;
                    lap_row[i] = if dxx + dyy >= 0.0 { 1 } else { -1 };
                }
            });
        Self {
            filter,
            step,
            cols,
            rows,
            response,
            laplacian,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.response[j * self.cols + i] as f64
    }
}

/// Box filter side for `octave` (0-based) and `layer` (0-based).
pub(super) fn filter_size(octave: u32, layer: u32) -> u32 {
    3 * ((1 << (octave + 1)) * (layer + 1) + 1)
}

/// Detects SURF interest points, strongest first.
pub fn detect_features(
    g: &GrayImage,
    params: &FeatureParams,
) -> Result<Vec<FeaturePoint>, FeatureError> {
    params.validate()?;
    if g.width() < MIN_IMAGE_SIDE || g.height() < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall {
            width: g.width(),
            height: g.height(),
        });
    }
    let ii = IntegralImage::new(g);
    let maps_per_octave = params.layers_per_octave + 2;
    let specs: Vec<(u32, u32)> = (0..params.octaves)
        .flat_map(|o| (0..maps_per_octave).map(move |l| (o, l)))
        .collect();
    let layers: Vec<ResponseLayer> = specs
        .par_iter()
        .map(|&(o, l)| ResponseLayer::build(&ii, filter_size(o, l), 1 << o))
        .collect();

    let triples: Vec<(usize, usize, usize)> = (0..params.octaves as usize)
        .flat_map(|o| {
            let base = o * maps_per_octave as usize;
            (1..=params.layers_per_octave as usize).map(move |m| (base + m - 1, base + m, base + m + 1))
        })
        .collect();
    let mut points: Vec<FeaturePoint> = triples
        .par_iter()
        .flat_map_iter(|&(b, m, t)| {
            scan_layer(&layers[b], &layers[m], &layers[t], g, params.hessian_threshold)
        })
        .collect();
    points.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.scale.total_cmp(&b.scale))
    });
    Ok(points)
}

fn scan_layer(
    bottom: &ResponseLayer,
    mid: &ResponseLayer,
    top: &ResponseLayer,
    g: &GrayImage,
    threshold: f64,
) -> Vec<FeaturePoint> {
    let step = mid.step as i64;
    // every neighbour sample must see the largest filter entirely inside the image
    let margin = (top.filter as i64 - 1) / 2 + step;
    let (w, h) = (g.width() as i64, g.height() as i64);
    let mut out = Vec::new();
    for j in 1..mid.rows.saturating_sub(1) {
        let r = j as i64 * step;
        if r < margin || r + margin >= h {
            continue;
        }
        for i in 1..mid.cols.saturating_sub(1) {
            let c = i as i64 * step;
            if c < margin || c + margin >= w {
                continue;
            }
            let v = mid.at(i, j);
            if v <= threshold || !is_local_max(bottom, mid, top, i, j, v) {
                continue;
            }
            if let Some(p) = interpolate(bottom, mid, top, i, j, w, h) {
                out.push(p);
            }
        }
    }
    out
}

/// Strict maximum over the 3x3x3 neighbourhood; ties resolve towards the
/// earliest neighbour in (layer, row, column) order so plateaus yield one point.
fn is_local_max(
    bottom: &ResponseLayer,
    mid: &ResponseLayer,
    top: &ResponseLayer,
    i: usize,
    j: usize,
    v: f64,
) -> bool {
    for (li, layer) in [bottom, mid, top].into_iter().enumerate() {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if li == 1 && di == 0 && dj == 0 {
                    continue;
                }
                let n = layer.at((i as i64 + di) as usize, (j as i64 + dj) as usize);
                let before = (li, dj, di) < (1, 0, 0);
                if n > v || (before && n == v) {
                    return false;
                }
            }
        }
    }
    true
}

fn interpolate(
    b: &ResponseLayer,
    m: &ResponseLayer,
    t: &ResponseLayer,
    i: usize,
    j: usize,
    w: i64,
    h: i64,
) -> Option<FeaturePoint> {
    let v = m.at(i, j);
    let dx = (m.at(i + 1, j) - m.at(i - 1, j)) / 2.0;
    let dy = (m.at(i, j + 1) - m.at(i, j - 1)) / 2.0;
    let ds = (t.at(i, j) - b.at(i, j)) / 2.0;
    let dxx = m.at(i + 1, j) + m.at(i - 1, j) - 2.0 * v;
    let dyy = m.at(i, j + 1) + m.at(i, j - 1) - 2.0 * v;
    let dss = t.at(i, j) + b.at(i, j) - 2.0 * v;
    let dxy = (m.at(i + 1, j + 1) - m.at(i - 1, j + 1) - m.at(i + 1, j - 1) + m.at(i - 1, j - 1)) / 4.0;
    let dxs = (t.at(i + 1, j) - t.at(i - 1, j) - b.at(i + 1, j) + b.at(i - 1, j)) / 4.0;
    let dys = (t.at(i, j + 1) - t.at(i, j - 1) - b.at(i, j + 1) + b.at(i, j - 1)) / 4.0;
    let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
    let grad = nalgebra::Vector3::new(dx, dy, ds);
    let offset = -(hess.try_inverse()? * grad);
    if offset.iter().any(|o| !o.is_finite() || o.abs() >= 0.5) {
        return None;
    }
    let step = m.step as f64;
    let x = (i as f64 + offset.x) * step;
    let y = (j as f64 + offset.y) * step;
    if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
        return None;
    }
    let filter_step = (m.filter - b.filter) as f64;
    let filter = m.filter as f64 + offset.z * filter_step;
    let response = v + 0.5 * grad.dot(&offset);
    if response <= 0.0 {
        return None;
    }
    Some(FeaturePoint {
        x,
        y,
        scale: 1.2 / 9.0 * filter,
        orientation: 0.0,
        laplacian_sign: m.laplacian[j * m.cols + i],
        response,
    })
}
