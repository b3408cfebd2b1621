use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CostVolume, StereoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateParams {
    /// Penalty for a disparity change of one.
    pub p1: u16,
    /// Penalty for larger disparity changes.
    pub p2: u16,
}

impl Default for AggregateParams {
    fn default() -> Self {
        Self { p1: 10, p2: 120 }
    }
}

impl AggregateParams {
    /// Each path value stays within `C_max + P2`, so eight of them must fit in 16 bits.
    pub fn validate(&self, max_cost: u16) -> Result<(), StereoError> {
        if !(self.p1 > 0 && self.p2 > self.p1) {
            return Err(StereoError::InvalidParams(format!(
                "need P2 > P1 > 0, got P1={} P2={}",
                self.p1, self.p2
            )));
        }
        let bound = DIRECTIONS.len() as u32 * (max_cost as u32 + self.p2 as u32);
        if bound > u16::MAX as u32 {
            return Err(StereoError::InvalidParams(format!(
                "aggregated cost bound {bound} exceeds 16 bits"
            )));
        }
        Ok(())
    }
}

/// Path directions `r` as `(dx, dy)`; each path visits `p` after `p - r`.
pub const DIRECTIONS: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)];

#[inline]
fn step(cost: &[u16], prev: &[u16], prev_min: u32, p1: u32, p2: u32, out: &mut [u16]) -> u32 {
    let nd = cost.len();
    let jump = prev_min + p2;
    let mut out_min = u32::MAX;
    for d in 0..nd {
        let mut best = prev[d] as u32;
        if d > 0 {
            best = best.min(prev[d - 1] as u32 + p1);
        }
        if d + 1 < nd {
            best = best.min(prev[d + 1] as u32 + p1);
        }
        let v = cost[d] as u32 + best.min(jump) - prev_min;
        out[d] = v as u16;
        out_min = out_min.min(v);
    }
    out_min
}

#[inline]
fn start(cost: &[u16], out: &mut [u16]) -> u32 {
    out.copy_from_slice(cost);
    cost.iter().copied().min().unwrap_or(0) as u32
}

fn horizontal(cv: &CostVolume, dx: i32, p1: u32, p2: u32, total: &mut [u16]) {
    let (w, nd) = (cv.width() as usize, cv.disparities());
    let costs = cv.as_slice();
    total.par_chunks_mut(w * nd).enumerate().for_each(|(y, acc)| {
        let row = &costs[y * w * nd..(y + 1) * w * nd];
        let mut prev = vec![0u16; nd];
        let mut cur = vec![0u16; nd];
        let mut prev_min = 0;
        for k in 0..w {
            let x = if dx > 0 { k } else { w - 1 - k };
            let c = &row[x * nd..(x + 1) * nd];
            prev_min = if k == 0 { start(c, &mut cur) } else { step(c, &prev, prev_min, p1, p2, &mut cur) };
            for (a, &v) in acc[x * nd..(x + 1) * nd].iter_mut().zip(&cur) {
                *a += v;
            }
            std::mem::swap(&mut prev, &mut cur);
        }
    });
}

fn vertical(cv: &CostVolume, (dx, dy): (i32, i32), p1: u32, p2: u32, total: &mut [u16]) {
    let (w, h, nd) = (cv.width() as usize, cv.height() as usize, cv.disparities());
    let costs = cv.as_slice();
    let mut prev = vec![0u16; w * nd];
    let mut prev_min = vec![0u32; w];
    let mut cur = vec![0u16; w * nd];
    let mut cur_min = vec![0u32; w];
    for k in 0..h {
        let y = if dy > 0 { k } else { h - 1 - k };
        let row = &costs[y * w * nd..(y + 1) * w * nd];
        let acc = &mut total[y * w * nd..(y + 1) * w * nd];
        cur.par_chunks_mut(nd)
            .zip(cur_min.par_iter_mut())
            .zip(acc.par_chunks_mut(nd))
            .enumerate()
            .for_each(|(x, ((out, m), a))| {
                let c = &row[x * nd..(x + 1) * nd];
                let px = x as i64 - dx as i64;
                *m = if k == 0 || px < 0 || px >= w as i64 {
                    start(c, out)
                } else {
                    let px = px as usize;
                    step(c, &prev[px * nd..(px + 1) * nd], prev_min[px], p1, p2, out)
                };
                for (t, &v) in a.iter_mut().zip(out.iter()) {
                    *t += v;
                }
            });
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut prev_min, &mut cur_min);
    }
}

/// Sums the eight path costs
/// `L_r(p,d) = C(p,d) + min(L(p-r,d), L(p-r,d±1)+P1, min_k L(p-r,k)+P2) - min_k L(p-r,k)`.
///
/// Integer arithmetic makes the result independent of thread scheduling.
pub fn aggregate(cv: &CostVolume, params: &AggregateParams) -> Result<CostVolume, StereoError> {
    let max_cost = cv.as_slice().iter().copied().max().unwrap_or(0);
    params.validate(max_cost)?;
    let (p1, p2) = (params.p1 as u32, params.p2 as u32);
    let mut total = vec![0u16; cv.as_slice().len()];
    for &(dx, dy) in &DIRECTIONS {
        if dy == 0 {
            horizontal(cv, dx, p1, p2, &mut total);
        } else {
            vertical(cv, (dx, dy), p1, p2, &mut total);
        }
    }
    Ok(CostVolume::from_parts(cv.width(), cv.height(), cv.range(), total))
}
