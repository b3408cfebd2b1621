//! sRGB, HSV and CIELAB conversions plus the L-channel exposure rating.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ChannelLabel, ImageError, MultiChannelImage};

#[derive(Debug, Error)]
pub enum ColorError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("exposure report needs at least one frame")]
    NoFrames,
}

/// D65 reference white.
pub const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

#[inline]
fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn srgb_encode(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

#[inline]
fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > LAB_EPSILON {
        t
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

/// Converts one 8-bit sRGB pixel to CIELAB (L clamped to `[0, 100]`).
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_decode(c as f64 / 255.0));
    let xyz = SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    [
        (116.0 * fy - 16.0).clamp(0.0, 100.0),
        500.0 * (fx - fy),
        200.0 * (fy - fz),
    ]
}

/// Inverse of [`srgb_to_lab`], clamped and rounded to 8 bits.
pub fn lab_to_srgb(lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let y = if lab[0] > LAB_KAPPA * LAB_EPSILON {
        fy * fy * fy
    } else {
        lab[0] / LAB_KAPPA
    };
    let xyz = [
        lab_f_inv(fx) * WHITE_D65[0],
        y * WHITE_D65[1],
        lab_f_inv(fz) * WHITE_D65[2],
    ];
    XYZ_TO_SRGB.map(|row| {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        (srgb_encode(lin.clamp(0.0, 1.0)) * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

/// Hexcone HSV: hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
/// Hue is 0 for achromatic pixels.
pub fn srgb_to_hsv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return [0.0, s, v];
    }
    let sector = if max == r {
        (g - b) / delta
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = 60.0 * sector;
    if h < 0.0 {
        h += 360.0;
    }
    if h >= 360.0 {
        h -= 360.0;
    }
    [h, s, v]
}

pub fn hsv_to_srgb(hsv: [f64; 3]) -> [u8; 3] {
    let h = hsv[0].rem_euclid(360.0);
    let s = hsv[1].clamp(0.0, 1.0);
    let v = hsv[2].clamp(0.0, 1.0);
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn convert_planes(
    img: &MultiChannelImage,
    labels: [ChannelLabel; 3],
    f: impl Fn([u8; 3]) -> [f64; 3],
) -> Result<MultiChannelImage, ImageError> {
    let [r, g, b] = img.rgb_planes()?;
    let n = r.len();
    let mut planes = (0..3).map(|_| Vec::with_capacity(n)).collect::<Vec<_>>();
    for i in 0..n {
        let out = f([r[i], g[i], b[i]]);
        for (plane, v) in planes.iter_mut().zip(out) {
            plane.push(v as f32);
        }
    }
    MultiChannelImage::from_f32(img.width(), img.height(), planes, labels.to_vec())
}

/// R,G,B (8-bit) to real-valued L, A, B* planes.
pub fn rgb_to_lab(img: &MultiChannelImage) -> Result<MultiChannelImage, ImageError> {
    convert_planes(
        img,
        [ChannelLabel::L, ChannelLabel::A, ChannelLabel::BStar],
        srgb_to_lab,
    )
}

/// R,G,B (8-bit) to real-valued H, S, V planes.
pub fn rgb_to_hsv(img: &MultiChannelImage) -> Result<MultiChannelImage, ImageError> {
    convert_planes(
        img,
        [ChannelLabel::H, ChannelLabel::S, ChannelLabel::V],
        srgb_to_hsv,
    )
}

fn planes_to_rgb(
    img: &MultiChannelImage,
    labels: [ChannelLabel; 3],
    f: impl Fn([f64; 3]) -> [u8; 3],
) -> Result<MultiChannelImage, ImageError> {
    let a = img.f32_plane(labels[0])?;
    let b = img.f32_plane(labels[1])?;
    let c = img.f32_plane(labels[2])?;
    let mut planes = (0..3).map(|_| Vec::with_capacity(a.len())).collect::<Vec<_>>();
    for i in 0..a.len() {
        let px = f([a[i] as f64, b[i] as f64, c[i] as f64]);
        for (plane, v) in planes.iter_mut().zip(px) {
            plane.push(v);
        }
    }
    MultiChannelImage::from_u8(
        img.width(),
        img.height(),
        planes,
        vec![ChannelLabel::R, ChannelLabel::G, ChannelLabel::B],
    )
}

pub fn lab_to_rgb(img: &MultiChannelImage) -> Result<MultiChannelImage, ImageError> {
    planes_to_rgb(
        img,
        [ChannelLabel::L, ChannelLabel::A, ChannelLabel::BStar],
        lab_to_srgb,
    )
}

pub fn hsv_to_rgb(img: &MultiChannelImage) -> Result<MultiChannelImage, ImageError> {
    planes_to_rgb(
        img,
        [ChannelLabel::H, ChannelLabel::S, ChannelLabel::V],
        hsv_to_srgb,
    )
}

/// Running sums for a population standard deviation, accumulated relative
/// to the first sample so constant inputs give exactly zero.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    shift: Option<f64>,
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        let k = *self.shift.get_or_insert(v);
        let d = v - k;
        self.n += 1;
        self.sum += d;
        self.sum_sq += d * d;
    }

    fn stddev(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        (self.sum_sq / n - mean * mean).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameExposure {
    pub frame_id: String,
    pub stddev: f64,
}

/// Spread of CIELAB lightness over a set of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureReport {
    /// Dataset or light-condition name shown in the table.
    pub condition: String,
    pub per_image_stddev: Vec<FrameExposure>,
    /// Population sigma over every pixel of every frame.
    pub dataset_stddev: f64,
}

/// Frame-by-frame exposure rating; frames can be released after [`add`](Self::add).
#[derive(Debug, Clone, Default)]
pub struct ExposureAccumulator {
    pooled: Moments,
    per_image: Vec<FrameExposure>,
}

impl ExposureAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, frame_id: impl Into<String>, frame: &MultiChannelImage) -> Result<f64, ColorError> {
        let lab = rgb_to_lab(frame)?;
        let mut m = Moments::default();
        for &l in lab.f32_plane(ChannelLabel::L)? {
            m.push(l as f64);
            self.pooled.push(l as f64);
        }
        let stddev = m.stddev();
        self.per_image.push(FrameExposure {
            frame_id: frame_id.into(),
            stddev,
        });
        Ok(stddev)
    }

    pub fn finish(self, condition: &str) -> Result<ExposureReport, ColorError> {
        if self.per_image.is_empty() {
            return Err(ColorError::NoFrames);
        }
        Ok(ExposureReport {
            condition: condition.to_string(),
            per_image_stddev: self.per_image,
            dataset_stddev: self.pooled.stddev(),
        })
    }
}

/// Computes per-frame and pooled population standard deviation of L.
pub fn exposure_report<'a, I>(condition: &str, frames: I) -> Result<ExposureReport, ColorError>
where
    I: IntoIterator<Item = (String, &'a MultiChannelImage)>,
{
    let mut acc = ExposureAccumulator::new();
    for (id, frame) in frames {
        acc.add(id, frame)?;
    }
    acc.finish(condition)
}

impl ExposureReport {
    /// Two-column text table: one row per frame, then the pooled value.
    pub fn to_table(&self) -> String {
        let width = self
            .per_image_stddev
            .iter()
            .map(|f| f.frame_id.len())
            .chain([self.condition.len(), "Light condition".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  Standard deviation", "Light condition");
        for f in &self.per_image_stddev {
            let _ = writeln!(out, "{:<width$}  {:.1}", f.frame_id, f.stddev);
        }
        let _ = writeln!(out, "{:<width$}  {:.1}", self.condition, self.dataset_stddev);
        out
    }
}

/// One row per condition with its pooled sigma.
pub fn condition_table(reports: &[ExposureReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.condition.len())
        .chain(["Light condition".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  Standard deviation", "Light condition");
    for r in reports {
        let _ = writeln!(out, "{:<width$}  {:.1}", r.condition, r.dataset_stddev);
    }
    out
}
