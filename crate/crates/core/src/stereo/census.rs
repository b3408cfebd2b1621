use super::StereoError;
use crate::raster::GrayImage;

/// Largest supported census window side.
pub const MAX_WINDOW: u32 = 9;

/// Census codes: bit `i` is set iff the `i`-th neighbour (raster order over
/// the window, centre skipped) is strictly darker than the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusImage {
    width: u32,
    height: u32,
    window: (u32, u32),
    codes: Vec<u128>,
    valid: Vec<bool>,
}

impl CensusImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn window(&self) -> (u32, u32) {
        self.window
    }

    /// Bits per code: window area minus the centre.
    pub fn bit_count(&self) -> u32 {
        self.window.0 * self.window.1 - 1
    }

    /// Code at `(x, y)`, `None` within half a window of the border.
    #[inline]
    pub fn code(&self, x: u32, y: u32) -> Option<u128> {
        let i = y as usize * self.width as usize + x as usize;
        self.valid[i].then_some(self.codes[i])
    }

    pub(super) fn raw(&self) -> (&[u128], &[bool]) {
        (&self.codes, &self.valid)
    }
}

pub(super) fn check_window((w, h): (u32, u32)) -> Result<(), StereoError> {
    if w % 2 == 0 || h % 2 == 0 || w > MAX_WINDOW || h > MAX_WINDOW || w * h < 3 {
        return Err(StereoError::BadWindow(w, h));
    }
    Ok(())
}

pub fn census(g: &GrayImage, window: (u32, u32)) -> Result<CensusImage, StereoError> {
    check_window(window)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    let (rx, ry) = ((window.0 / 2) as usize, (window.1 / 2) as usize);
    let px = g.as_slice();
    let mut codes = vec![0u128; w * h];
    let mut valid = vec![false; w * h];
    for y in ry..h.saturating_sub(ry) {
        for x in rx..w.saturating_sub(rx) {
            let c = px[y * w + x];
            let mut code = 0u128;
            let mut bit = 0;
            for yy in y - ry..=y + ry {
                for xx in x - rx..=x + rx {
                    if yy == y && xx == x {
                        continue;
                    }
                    if px[yy * w + xx] < c {
                        code |= 1 << bit;
                    }
                    bit += 1;
                }
            }
            codes[y * w + x] = code;
            valid[y * w + x] = true;
        }
    }
    Ok(CensusImage {
        width: g.width(),
        height: g.height(),
        window,
        codes,
        valid,
    })
}
