//! Planar rasters, grayscale luminance, integral images and projective warping.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unreadable raster {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("unsupported raster: {0}")]
    Unsupported(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("missing channel {0}")]
    MissingChannel(ChannelLabel),
    #[error("singular transform (|det| = {0:e})")]
    SingularTransform(f64),
    #[error("failed to write {path}: {reason}")]
    Write { path: String, reason: String },
}

/// Semantic tag carried by every plane of a [`MultiChannelImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ChannelLabel {
    R,
    G,
    B,
    H,
    S,
    V,
    L,
    A,
    #[serde(rename = "B*")]
    BStar,
    #[serde(rename = "DEPTH")]
    Depth,
    #[serde(rename = "GRAY")]
    Gray,
}

impl ChannelLabel {
    pub const ALL: [ChannelLabel; 11] = [
        ChannelLabel::R,
        ChannelLabel::G,
        ChannelLabel::B,
        ChannelLabel::H,
        ChannelLabel::S,
        ChannelLabel::V,
        ChannelLabel::L,
        ChannelLabel::A,
        ChannelLabel::BStar,
        ChannelLabel::Depth,
        ChannelLabel::Gray,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelLabel::R => "R",
            ChannelLabel::G => "G",
            ChannelLabel::B => "B",
            ChannelLabel::H => "H",
            ChannelLabel::S => "S",
            ChannelLabel::V => "V",
            ChannelLabel::L => "L",
            ChannelLabel::A => "A",
            ChannelLabel::BStar => "B*",
            ChannelLabel::Depth => "DEPTH",
            ChannelLabel::Gray => "GRAY",
        }
    }
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelLabel {
    type Err = ImageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| ImageError::Unsupported(format!("unknown channel label {s:?}")))
    }
}

/// Sample storage shared by all planes of one image.
#[derive(Debug, Clone, PartialEq)]
pub enum Planes {
    U8(Vec<Vec<u8>>),
    F32(Vec<Vec<f32>>),
}

impl Planes {
    pub fn len(&self) -> usize {
        match self {
            Planes::U8(p) => p.len(),
            Planes::F32(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Planar raster with one semantic label per channel.
///
/// Planes are stored row-major and never interleaved; every plane holds
/// exactly `width * height` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    width: u32,
    height: u32,
    planes: Planes,
    labels: Vec<ChannelLabel>,
}

impl MultiChannelImage {
    pub fn new(
        width: u32,
        height: u32,
        planes: Planes,
        labels: Vec<ChannelLabel>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Geometry(format!("empty raster {width}x{height}")));
        }
        if planes.len() != labels.len() {
            return Err(ImageError::Geometry(format!(
                "{} planes but {} labels",
                planes.len(),
                labels.len()
            )));
        }
        if planes.is_empty() {
            return Err(ImageError::Geometry("raster without channels".into()));
        }
        let n = width as usize * height as usize;
        let ok = match &planes {
            Planes::U8(p) => p.iter().all(|c| c.len() == n),
            Planes::F32(p) => p.iter().all(|c| c.len() == n),
        };
        if !ok {
            return Err(ImageError::Geometry(format!(
                "plane length differs from {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            planes,
            labels,
        })
    }

    pub fn from_u8(
        width: u32,
        height: u32,
        planes: Vec<Vec<u8>>,
        labels: Vec<ChannelLabel>,
    ) -> Result<Self, ImageError> {
        Self::new(width, height, Planes::U8(planes), labels)
    }

    pub fn from_f32(
        width: u32,
        height: u32,
        planes: Vec<Vec<f32>>,
        labels: Vec<ChannelLabel>,
    ) -> Result<Self, ImageError> {
        Self::new(width, height, Planes::F32(planes), labels)
    }

    /// Builds an 8-bit R,G,B image from a per-pixel closure.
    pub fn rgb_from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut planes = (0..3).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for (plane, v) in planes.iter_mut().zip(px) {
                    plane.push(v);
                }
            }
        }
        Self::from_u8(
            width,
            height,
            planes,
            vec![ChannelLabel::R, ChannelLabel::G, ChannelLabel::B],
        )
        .expect("consistent geometry")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[ChannelLabel] {
        &self.labels
    }

    pub fn channel_count(&self) -> usize {
        self.labels.len()
    }

    pub fn planes(&self) -> &Planes {
        &self.planes
    }

    pub fn into_planes(self) -> Planes {
        self.planes
    }

    pub fn is_u8(&self) -> bool {
        matches!(self.planes, Planes::U8(_))
    }

    pub fn channel_index(&self, label: ChannelLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn u8_plane(&self, label: ChannelLabel) -> Result<&[u8], ImageError> {
        let idx = self
            .channel_index(label)
            .ok_or(ImageError::MissingChannel(label))?;
        match &self.planes {
            Planes::U8(p) => Ok(&p[idx]),
            Planes::F32(_) => Err(ImageError::Unsupported(format!(
                "channel {label} is not 8-bit"
            ))),
        }
    }

    pub fn f32_plane(&self, label: ChannelLabel) -> Result<&[f32], ImageError> {
        let idx = self
            .channel_index(label)
            .ok_or(ImageError::MissingChannel(label))?;
        match &self.planes {
            Planes::F32(p) => Ok(&p[idx]),
            Planes::U8(_) => Err(ImageError::Unsupported(format!(
                "channel {label} is not real-valued"
            ))),
        }
    }

    /// Borrows the three 8-bit R,G,B planes.
    pub fn rgb_planes(&self) -> Result<[&[u8]; 3], ImageError> {
        Ok([
            self.u8_plane(ChannelLabel::R)?,
            self.u8_plane(ChannelLabel::G)?,
            self.u8_plane(ChannelLabel::B)?,
        ])
    }
}

/// Single-plane luminance image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Geometry(format!("empty raster {width}x{height}")));
        }
        if data.len() != width as usize * height as usize {
            return Err(ImageError::Geometry(format!(
                "{} samples for {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::Geometry("non-finite gray sample".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("from_fn produced invalid samples")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
            .expect("map produced invalid samples")
    }

    /// Mirrors the image horizontally.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(w) {
            data.extend(row.iter().rev());
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Quantizes to an 8-bit GRAY raster.
    pub fn to_u8_image(&self) -> MultiChannelImage {
        let plane = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        MultiChannelImage::from_u8(self.width, self.height, vec![plane], vec![ChannelLabel::Gray])
            .expect("consistent geometry")
    }
}

/// Summed-area table over a [`GrayImage`], one row and column larger than the source.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(g: &GrayImage) -> Self {
        let w = g.width as usize;
        let h = g.height as usize;
        let stride = w + 1;
        let mut sums = vec![0.0f64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                row += g.data[y * w + x] as f64;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width: g.width,
            height: g.height,
            sums,
        }
    }

    /// Width of the source image (the table has `width + 1` columns).
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Cumulative sum of all samples with coordinates strictly below `(x, y)`.
    #[inline]
    pub fn entry(&self, x: u32, y: u32) -> f64 {
        self.sums[y as usize * (self.width as usize + 1) + x as usize]
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn rect_sum(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> f64 {
        debug_assert!(x0 <= x1 && y0 <= y1 && x1 <= self.width && y1 <= self.height);
        self.entry(x1, y1) - self.entry(x0, y1) - self.entry(x1, y0) + self.entry(x0, y0)
    }

    /// Box sum with top-left `(x, y)` and size `w x h`, clipped to the image.
    #[inline]
    pub fn box_sum(&self, x: i64, y: i64, w: i64, h: i64) -> f64 {
        let x0 = x.clamp(0, self.width as i64) as u32;
        let y0 = y.clamp(0, self.height as i64) as u32;
        let x1 = (x + w).clamp(0, self.width as i64) as u32;
        let y1 = (y + h).clamp(0, self.height as i64) as u32;
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        self.rect_sum(x0, y0, x1, y1)
    }
}

/// Reads a PNG or JPEG raster with 1 (GRAY) or 3 (R,G,B) 8-bit channels.
pub fn load_raster(path: impl AsRef<Path>) -> Result<MultiChannelImage, ImageError> {
    let path = path.as_ref();
    let unreadable = |reason: String| ImageError::Unreadable {
        path: path.display().to_string(),
        reason,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?;
    let decoded = reader.decode().map_err(|e| unreadable(e.to_string()))?;
    let (w, h) = (decoded.width(), decoded.height());
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            MultiChannelImage::from_u8(w, h, vec![buf.into_raw()], vec![ChannelLabel::Gray])
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let raw = buf.into_raw();
            let n = w as usize * h as usize;
            let mut planes = (0..3).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
            for px in raw.chunks_exact(3) {
                for (plane, &v) in planes.iter_mut().zip(px) {
                    plane.push(v);
                }
            }
            MultiChannelImage::from_u8(
                w,
                h,
                planes,
                vec![ChannelLabel::R, ChannelLabel::G, ChannelLabel::B],
            )
        }
        other => Err(ImageError::Unsupported(format!(
            "{}: color type {:?} (need 8-bit gray or RGB)",
            path.display(),
            other.color()
        ))),
    }
}

/// Writes a 1- or 3-channel 8-bit image as PNG.
pub fn save_raster(img: &MultiChannelImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let Planes::U8(planes) = img.planes() else {
        return Err(ImageError::Unsupported("only 8-bit planes can be saved".into()));
    };
    let (w, h) = (img.width(), img.height());
    let write_err = |e: image::ImageError| ImageError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    match planes.len() {
        1 => image::GrayImage::from_raw(w, h, planes[0].clone())
            .expect("plane size checked at construction")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(write_err),
        3 => {
            let mut raw = Vec::with_capacity(planes[0].len() * 3);
            for ((r, g), b) in planes[0].iter().zip(&planes[1]).zip(&planes[2]) {
                raw.extend([*r, *g, *b]);
            }
            image::RgbImage::from_raw(w, h, raw)
                .expect("plane size checked at construction")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(write_err)
        }
        n => Err(ImageError::Unsupported(format!(
            "PNG export needs 1 or 3 channels, got {n}"
        ))),
    }
}

pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// BT.601 luminance scaled to `[0, 1]`.
pub fn to_gray(img: &MultiChannelImage) -> Result<GrayImage, ImageError> {
    if let Some(idx) = img.channel_index(ChannelLabel::Gray) {
        return match img.planes() {
            Planes::U8(p) => GrayImage::new(
                img.width(),
                img.height(),
                p[idx].iter().map(|&v| v as f32 / 255.0).collect(),
            ),
            Planes::F32(p) => GrayImage::new(img.width(), img.height(), p[idx].clone()),
        };
    }
    let [r, g, b] = img.rgb_planes()?;
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            ((wr * r as f32 + wg * g as f32 + wb * b as f32) / 255.0).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}

/// Convenience wrapper: [`IntegralImage::new`].
pub fn integral(g: &GrayImage) -> IntegralImage {
    IntegralImage::new(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Resamples `img` through the projective map `h`.
///
/// `h` maps output pixel coordinates to source coordinates: output pixel
/// `p` takes the value of the source at `h * p` (pixel centres at integer
/// coordinates). Samples mapping outside the source become 0 for 8-bit
/// planes and NaN (the disparity INVALID marker) for real-valued planes.
/// Output geometry equals the input unless `extent` is given.
pub fn warp_projective(
    img: &MultiChannelImage,
    h: &Matrix3<f64>,
    extent: Option<(u32, u32)>,
) -> Result<MultiChannelImage, ImageError> {
    warp_projective_with(img, h, extent, Interpolation::Bilinear)
}

pub fn warp_projective_with(
    img: &MultiChannelImage,
    h: &Matrix3<f64>,
    extent: Option<(u32, u32)>,
    interp: Interpolation,
) -> Result<MultiChannelImage, ImageError> {
    let det = h.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 {
        return Err(ImageError::SingularTransform(det));
    }
    let (ow, oh) = extent.unwrap_or((img.width(), img.height()));
    if ow == 0 || oh == 0 {
        return Err(ImageError::Geometry(format!("empty warp extent {ow}x{oh}")));
    }
    let sw = img.width() as usize;
    let sh = img.height() as usize;
    let n_out = ow as usize * oh as usize;

    // Per output pixel: up to four (source index, weight) taps, or none.
    let mut taps: Vec<Option<[(usize, f32); 4]>> = Vec::with_capacity(n_out);
    for y in 0..oh {
        for x in 0..ow {
            let p = h * Vector3::new(x as f64, y as f64, 1.0);
            if p.z.abs() < 1e-15 {
                taps.push(None);
                continue;
            }
            let (sx, sy) = (p.x / p.z, p.y / p.z);
            taps.push(sample_taps(sx, sy, sw, sh, interp));
        }
    }

    let planes = match img.planes() {
        Planes::U8(src) => Planes::U8(
            src.iter()
                .map(|plane| {
                    taps.iter()
                        .map(|t| match t {
                            None => 0u8,
                            Some(t) => {
                                let v: f32 = t
                                    .iter()
                                    .filter(|(_, w)| *w > 0.0)
                                    .map(|&(i, w)| plane[i] as f32 * w)
                                    .sum();
                                v.round().clamp(0.0, 255.0) as u8
                            }
                        })
                        .collect()
                })
                .collect(),
        ),
        Planes::F32(src) => Planes::F32(
            src.iter()
                .map(|plane| {
                    taps.iter()
                        .map(|t| match t {
                            None => f32::NAN,
                            Some(t) => t
                                .iter()
                                .filter(|(_, w)| *w > 0.0)
                                .map(|&(i, w)| plane[i] * w)
                                .sum(),
                        })
                        .collect()
                })
                .collect(),
        ),
    };
    MultiChannelImage::new(ow, oh, planes, img.labels().to_vec())
}

fn sample_taps(
    sx: f64,
    sy: f64,
    w: usize,
    h: usize,
    interp: Interpolation,
) -> Option<[(usize, f32); 4]> {
    match interp {
        Interpolation::Nearest => {
            let (nx, ny) = (sx.round(), sy.round());
            if nx < 0.0 || ny < 0.0 || nx > (w - 1) as f64 || ny > (h - 1) as f64 {
                return None;
            }
            let i = ny as usize * w + nx as usize;
            Some([(i, 1.0), (i, 0.0), (i, 0.0), (i, 0.0)])
        }
        Interpolation::Bilinear => {
            if !(sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64) {
                return None;
            }
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let fx = (sx - x0 as f64) as f32;
            let fy = (sy - y0 as f64) as f32;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            Some([
                (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
                (y0 * w + x1, fx * (1.0 - fy)),
                (y1 * w + x0, (1.0 - fx) * fy),
                (y1 * w + x1, fx * fy),
            ])
        }
    }
}
