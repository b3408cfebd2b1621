use rayon::prelude::*;

use super::{CensusImage, DisparityRange, StereoError};

/// 16-bit costs laid out as `(y, x, d)` with `d` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: u32,
    height: u32,
    range: DisparityRange,
    data: Vec<u16>,
}

impl CostVolume {
    pub fn new(width: u32, height: u32, range: DisparityRange, data: Vec<u16>) -> Result<Self, StereoError> {
        if range.is_empty() || range.len() > 256 {
            return Err(StereoError::BadRange {
                min: range.min,
                max: range.max,
                width,
            });
        }
        if data.len() != width as usize * height as usize * range.len() {
            return Err(StereoError::DimensionMismatch(format!(
                "{} costs for {width}x{height}x{}",
                data.len(),
                range.len()
            )));
        }
        Ok(Self {
            width,
            height,
            range,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, range: DisparityRange, mut f: impl FnMut(u32, u32, i32) -> u16) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * range.len());
        for y in 0..height {
            for x in 0..width {
                for d in range.min..=range.max {
                    data.push(f(x, y, d));
                }
            }
        }
        Self::new(width, height, range, data).expect("consistent geometry")
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

    pub fn disparities(&self) -> usize {
        self.range.len()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, d: i32) -> u16 {
        let nd = self.disparities();
        self.data[(y as usize * self.width as usize + x as usize) * nd + (d - self.range.min) as usize]
    }

    /// Costs of pixel `(x, y)` for every disparity.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u16] {
        let nd = self.disparities();
        let i = (y as usize * self.width as usize + x as usize) * nd;
        &self.data[i..i + nd]
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.data
    }

    pub(super) fn from_parts(width: u32, height: u32, range: DisparityRange, data: Vec<u16>) -> Self {
        Self {
            width,
            height,
            range,
            data,
        }
    }
}

/// Hamming distance between left `(x, y)` and right `(x - d, y)`; lookups
/// outside the image or on invalid census pixels cost the full bit count.
pub fn build_cost_volume(cl: &CensusImage, cr: &CensusImage, range: DisparityRange) -> Result<CostVolume, StereoError> {
    if cl.width() != cr.width() || cl.height() != cr.height() || cl.window() != cr.window() {
        return Err(StereoError::DimensionMismatch("census images differ in size or window".into()));
    }
    range.validate(cl.width())?;
    let (w, h) = (cl.width() as usize, cl.height() as usize);
    let nd = range.len();
    let max_cost = cl.bit_count() as u16;
    let (lc, lv) = cl.raw();
    let (rc, rv) = cr.raw();
    let mut data = vec![max_cost; w * h * nd];
    data.par_chunks_mut(w * nd).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let i = y * w + x;
            if !lv[i] {
                continue;
            }
            let cell = &mut row[x * nd..(x + 1) * nd];
            for (k, c) in cell.iter_mut().enumerate() {
                let xr = x as i64 - (range.min as i64 + k as i64);
                if xr < 0 || xr >= w as i64 {
                    continue;
                }
                let j = y * w + xr as usize;
                if rv[j] {
                    *c = (lc[i] ^ rc[j]).count_ones() as u16;
                }
            }
        }
    });
    Ok(CostVolume::from_parts(cl.width(), cl.height(), range, data))
}

/// Pixels with nothing to match: every cost is `max_cost` (census border or
/// no lookup inside the image), or the remaining costs are all equal across
/// at least two disparities.
pub fn flat_cost_mask(cv: &CostVolume, max_cost: u16) -> Vec<bool> {
    cv.as_slice()
        .par_chunks(cv.disparities())
        .map(|c| {
            let mut seen = c.iter().filter(|&&v| v < max_cost);
            match seen.next() {
                Some(&first) => {
                    let mut n = 1;
                    for &v in seen {
                        if v != first {
                            return false;
                        }
                        n += 1;
                    }
                    n >= 2
                }
                None => true,
            }
        })
        .collect()
}
