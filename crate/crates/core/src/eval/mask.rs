use super::EvalError;

/// Binary raster packed into 64-bit words, row-major over the whole image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        let bits = width as usize * height as usize;
        Self {
            width,
            height,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    /// Mask with the given pixels set; coordinates outside the raster are ignored.
    pub fn from_pixels(width: u32, height: u32, pixels: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut m = Self::new(width, height);
        for (x, y) in pixels {
            if x < width && y < height {
                m.set(x, y, true);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Panics if `(x, y)` is outside the raster.
    pub fn get(&self, x: u32, y: u32) -> bool {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        let i = self.index(x, y);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        let i = self.index(x, y);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        (0..self.width as usize * self.height as usize)
            .filter(|&i| self.words[i / 64] >> (i % 64) & 1 == 1)
            .map(move |i| ((i % w) as u32, (i / w) as u32))
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<(), EvalError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(EvalError::DimensionMismatch {
                a: (self.width, self.height),
                b: (other.width, other.height),
            });
        }
        Ok(())
    }

    /// `(|a ∩ b|, |a ∪ b|)`.
    pub fn overlap(&self, other: &BinaryMask) -> Result<(u64, u64), EvalError> {
        self.check_dims(other)?;
        let (mut inter, mut union) = (0u64, 0u64);
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones() as u64;
            union += (a | b).count_ones() as u64;
        }
        Ok((inter, union))
    }
}

/// Intersection over union; 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, EvalError> {
    let (inter, union) = a.overlap(b)?;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Even-odd fill of one closed polygon: pixel `(x, y)` is set iff
/// `(x + 0.5, y + 0.5)` is inside. Centres lying exactly on an edge are
/// inside for edges at the smaller x or y and outside for edges at the
/// larger x or y, so polygons sharing an edge never share a pixel.
pub fn rasterize(polygon: &[(f64, f64)], width: u32, height: u32) -> Result<BinaryMask, EvalError> {
    if polygon.len() < 3 {
        return Err(EvalError::BadPolygon(format!(
            "need at least 3 vertices, got {}",
            polygon.len()
        )));
    }
    if let Some(&(x, y)) = polygon.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(EvalError::BadPolygon(format!("non-finite vertex ({x}, {y})")));
    }
    let mut mask = BinaryMask::new(width, height);
    let n = polygon.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(n);
    for y in 0..height {
        let py = y as f64 + 0.5;
        crossings.clear();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = polygon[i];
            let (xj, yj) = polygon[j];
            if (yi > py) != (yj > py) {
                crossings.push((xj - xi) * (py - yi) / (yj - yi) + xi);
            }
            j = i;
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        // a centre px is inside iff an odd number of crossings satisfy px < c
        let mut k = 0;
        for x in 0..width {
            let px = x as f64 + 0.5;
            while k < crossings.len() && crossings[k] <= px {
                k += 1;
            }
            if (crossings.len() - k) % 2 == 1 {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Union of several polygons, each filled even-odd; empty results are an error.
pub fn rasterize_polygons(
    polygons: &[Vec<(f64, f64)>],
    width: u32,
    height: u32,
) -> Result<BinaryMask, EvalError> {
    if polygons.is_empty() {
        return Err(EvalError::BadPolygon("no polygons".into()));
    }
    let mut mask = BinaryMask::new(width, height);
    for p in polygons {
        mask.union_with(&rasterize(p, width, height)?);
    }
    if mask.is_empty() {
        return Err(EvalError::BadPolygon("zero area after rasterization".into()));
    }
    Ok(mask)
}

/// Splits a flat `[x1, y1, x2, y2, ...]` list into vertices.
pub fn polygon_from_flat(coords: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    if !coords.len().is_multiple_of(2) {
        return Err(EvalError::BadPolygon(format!(
            "odd coordinate count {}",
            coords.len()
        )));
    }
    Ok(coords.chunks_exact(2).map(|c| (c[0], c[1])).collect())
}
