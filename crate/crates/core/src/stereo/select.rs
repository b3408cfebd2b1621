use rayon::prelude::*;

use super::{CostVolume, DisparityMap, StereoError};

fn choose(costs: &[u16], ratio: f64) -> Option<f32> {
    let (best, &c0) = costs.iter().enumerate().min_by_key(|&(d, &c)| (c, d))?;
    let second = costs
        .iter()
        .enumerate()
        .filter(|&(d, _)| d.abs_diff(best) > 1)
        .map(|(_, &c)| c)
        .min();
    if let Some(s) = second {
        if !(c0 < s && c0 as f64 <= ratio * s as f64) {
            return None;
        }
    }
    let mut offset = 0.0;
    if best > 0 && best + 1 < costs.len() {
        let (cm, cp) = (costs[best - 1] as f64, costs[best + 1] as f64);
        let denom = cm - 2.0 * c0 as f64 + cp;
        if denom > 0.0 {
            offset = ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5);
        }
    }
    Some((best as f64 + offset) as f32)
}

/// Winner-takes-all with parabola refinement and a uniqueness test
/// against the best cost outside `d* ± 1`.
pub fn select_disparity(agg: &CostVolume, uniqueness_ratio: f64) -> DisparityMap {
    let (w, h, nd) = (agg.width() as usize, agg.height() as usize, agg.disparities());
    let base = agg.range().min as f32;
    let data: Vec<f32> = agg
        .as_slice()
        .par_chunks(nd)
        .map(|c| choose(c, uniqueness_ratio).map_or(DisparityMap::INVALID, |d| base + d))
        .collect();
    debug_assert_eq!(data.len(), w * h);
    DisparityMap::new(agg.width(), agg.height(), agg.range(), data).expect("consistent geometry")
}

/// Keeps `dl(x)` where `|dl(x) - dr(x - round(dl(x)))| <= tol`, then applies
/// a 3x3 median over valid pixels.
pub fn lr_check(dl: &DisparityMap, dr: &DisparityMap, tol: f64) -> Result<DisparityMap, StereoError> {
    if dl.width() != dr.width() || dl.height() != dr.height() {
        return Err(StereoError::DimensionMismatch(format!(
            "left {}x{}, right {}x{}",
            dl.width(),
            dl.height(),
            dr.width(),
            dr.height()
        )));
    }
    let w = dl.width() as usize;
    let checked: Vec<f32> = dl
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            if d.is_nan() {
                return d;
            }
            let (x, y) = (i % w, i / w);
            let xr = x as i64 - d.round() as i64;
            if xr < 0 || xr >= w as i64 {
                return DisparityMap::INVALID;
            }
            let r = dr.as_slice()[y * w + xr as usize];
            if !r.is_nan() && ((d - r).abs() as f64) <= tol {
                d
            } else {
                DisparityMap::INVALID
            }
        })
        .collect();
    let checked = DisparityMap::new(dl.width(), dl.height(), dl.range(), checked)?;
    Ok(median_filter_valid(&checked))
}

/// 3x3 median of the valid neighbours (lower median on even counts);
/// invalid pixels stay invalid.
pub fn median_filter_valid(m: &DisparityMap) -> DisparityMap {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let src = m.as_slice();
    let data: Vec<f32> = (0..src.len())
        .into_par_iter()
        .map(|i| {
            if src[i].is_nan() {
                return src[i];
            }
            let (x, y) = (i as i64 % w, i as i64 / w);
            let mut window = [0f32; 9];
            let mut n = 0;
            for yy in (y - 1).max(0)..=(y + 1).min(h - 1) {
                for xx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                    let v = src[(yy * w + xx) as usize];
                    if !v.is_nan() {
                        window[n] = v;
                        n += 1;
                    }
                }
            }
            let window = &mut window[..n];
            window.sort_by(f32::total_cmp);
            window[(n - 1) / 2]
        })
        .collect();
    DisparityMap::new(m.width(), m.height(), m.range(), data).expect("consistent geometry")
}
