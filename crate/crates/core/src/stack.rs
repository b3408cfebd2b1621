//! Colour + depth channel stacks and the MCIM v1 container.
//!
//! Layout (little-endian): `"MCIM"`, version `u16`, width `u32`, height
//! `u32`, channel count `u16`, dtype `u8` (0 = u8), reserved `u8`; one label
//! record per channel (`u8` length + ASCII); one `(offset f32, scale f32)`
//! record per channel; planar row-major samples; CRC32 of everything before it.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{rgb_to_hsv, rgb_to_lab};
use crate::fusion::DepthPlane;
use crate::raster::{save_raster, ChannelLabel, ImageError, MultiChannelImage, Planes};

pub const MAGIC: &[u8; 4] = b"MCIM";
pub const VERSION: u16 = 1;
/// Fixed header: magic, version, width, height, channel count, dtype, reserved.
pub const HEADER_LEN: usize = 18;

#[derive(Debug, Error)]
pub enum StackError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("depth plane is {0}x{1}, frame is {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("stack {0} needs a depth plane")]
    MissingDepth(StackSpec),
    #[error("stack {0} takes no depth plane")]
    UnexpectedDepth(StackSpec),
    #[error("unknown stack spec {0:?}")]
    UnknownSpec(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported sample type {0}")]
    UnsupportedDtype(u8),
    #[error("truncated container: {0}")]
    Truncated(String),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColourSpace {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "HSV")]
    Hsv,
    #[serde(rename = "LAB")]
    Lab,
}

impl ColourSpace {
    pub fn labels(self) -> [ChannelLabel; 3] {
        use ChannelLabel::*;
        match self {
            ColourSpace::Rgb => [R, G, B],
            ColourSpace::Hsv => [H, S, V],
            ColourSpace::Lab => [L, A, BStar],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColourSpace::Rgb => "RGB",
            ColourSpace::Hsv => "HSV",
            ColourSpace::Lab => "LAB",
        }
    }
}

/// One network input variant: an optional colour space plus optional depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StackSpec {
    pub colour: Option<ColourSpace>,
    pub include_depth: bool,
}

impl StackSpec {
    pub const DEPTH: Self = Self::new(None, true);
    pub const RGB: Self = Self::new(Some(ColourSpace::Rgb), false);
    pub const RGB_D: Self = Self::new(Some(ColourSpace::Rgb), true);
    pub const HSV: Self = Self::new(Some(ColourSpace::Hsv), false);
    pub const HSV_D: Self = Self::new(Some(ColourSpace::Hsv), true);
    pub const LAB: Self = Self::new(Some(ColourSpace::Lab), false);
    pub const LAB_D: Self = Self::new(Some(ColourSpace::Lab), true);

    /// The seven input variants compared in the study.
    pub const ALL: [Self; 7] = [Self::DEPTH, Self::RGB, Self::RGB_D, Self::HSV, Self::HSV_D, Self::LAB, Self::LAB_D];

    pub const fn new(colour: Option<ColourSpace>, include_depth: bool) -> Self {
        Self { colour, include_depth }
    }

    /// Channel order: colour channels in canonical order, DEPTH last.
    pub fn labels(&self) -> Vec<ChannelLabel> {
        let mut out: Vec<ChannelLabel> = self.colour.map(|c| c.labels().to_vec()).unwrap_or_default();
        if self.include_depth {
            out.push(ChannelLabel::Depth);
        }
        out
    }

    /// Fixed quantization of every colour channel of this spec.
    pub fn quantization(&self) -> Vec<(ChannelLabel, Quantization)> {
        self.labels()
            .into_iter()
            .filter(|&l| l != ChannelLabel::Depth)
            .map(|l| (l, Quantization::for_label(l)))
            .collect()
    }

    pub fn file_tag(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for StackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.colour, self.include_depth) {
            (None, _) => f.write_str("DEPTH"),
            (Some(c), false) => f.write_str(c.as_str()),
            (Some(c), true) => write!(f, "{}-D", c.as_str()),
        }
    }
}

impl FromStr for StackSpec {
    type Err = StackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|spec| spec.to_string() == upper)
            .ok_or_else(|| StackError::UnknownSpec(s.to_string()))
    }
}

impl Serialize for StackSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StackSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `q = clamp(round((v - offset) * scale), 0, 255)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub offset: f32,
    pub scale: f32,
}

impl Quantization {
    pub const IDENTITY: Self = Self { offset: 0.0, scale: 1.0 };

    pub fn for_label(label: ChannelLabel) -> Self {
        use ChannelLabel::*;
        match label {
            L => Self { offset: 0.0, scale: 2.55 },
            A | BStar => Self { offset: -128.0, scale: 1.0 },
            H => Self { offset: 0.0, scale: 255.0 / 360.0 },
            S | V => Self { offset: 0.0, scale: 255.0 },
            R | G | B | Depth | Gray => Self::IDENTITY,
        }
    }

    #[inline]
    pub fn quantize(&self, v: f32) -> u8 {
        ((v - self.offset) * self.scale).round().clamp(0.0, 255.0) as u8
    }

    #[inline]
    pub fn dequantize(&self, q: u8) -> f32 {
        q as f32 / self.scale + self.offset
    }
}

/// An 8-bit multi-channel image with the quantization of each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    pub image: MultiChannelImage,
    pub quantization: Vec<Quantization>,
}

impl ChannelStack {
    pub fn new(image: MultiChannelImage, quantization: Vec<Quantization>) -> Result<Self, StackError> {
        if !image.is_u8() {
            return Err(StackError::Malformed("stack planes must be 8-bit".into()));
        }
        if quantization.len() != image.channel_count() {
            return Err(StackError::Malformed(format!(
                "{} quantization records for {} channels",
                quantization.len(),
                image.channel_count()
            )));
        }
        Ok(Self { image, quantization })
    }

    pub fn labels(&self) -> &[ChannelLabel] {
        self.image.labels()
    }

    /// Channel values mapped back through its quantization.
    pub fn dequantize(&self, label: ChannelLabel) -> Result<Vec<f32>, StackError> {
        let idx = self.image.channel_index(label).ok_or(ImageError::MissingChannel(label))?;
        let q = self.quantization[idx];
        Ok(self.image.u8_plane(label)?.iter().map(|&v| q.dequantize(v)).collect())
    }

    /// Exact byte size of the encoded container.
    pub fn encoded_len(&self) -> usize {
        let labels: usize = self.labels().iter().map(|l| 1 + l.as_str().len()).sum();
        let n = self.image.channel_count();
        HEADER_LEN + labels + 8 * n + n * self.image.width() as usize * self.image.height() as usize + 4
    }
}

/// Builds the `spec` variant of an R,G,B frame.
pub fn stack(frame: &MultiChannelImage, depth: Option<&DepthPlane>, spec: StackSpec) -> Result<ChannelStack, StackError> {
    let (w, h) = (frame.width(), frame.height());
    match (depth, spec.include_depth) {
        (None, true) => return Err(StackError::MissingDepth(spec)),
        (Some(_), false) => return Err(StackError::UnexpectedDepth(spec)),
        (Some(d), true) if (d.width, d.height) != (w, h) => {
            return Err(StackError::DimensionMismatch(d.width, d.height, w, h))
        }
        _ => {}
    }
    let mut planes: Vec<Vec<u8>> = Vec::new();
    let mut quant = Vec::new();
    if let Some(colour) = spec.colour {
        match colour {
            ColourSpace::Rgb => {
                for p in frame.rgb_planes()? {
                    planes.push(p.to_vec());
                    quant.push(Quantization::IDENTITY);
                }
            }
            ColourSpace::Hsv | ColourSpace::Lab => {
                let converted = if colour == ColourSpace::Hsv { rgb_to_hsv(frame)? } else { rgb_to_lab(frame)? };
                for label in colour.labels() {
                    let q = Quantization::for_label(label);
                    planes.push(converted.f32_plane(label)?.iter().map(|&v| q.quantize(v)).collect());
                    quant.push(q);
                }
            }
        }
    }
    if let Some(d) = depth {
        planes.push(d.data.clone());
        quant.push(Quantization {
            offset: d.offset,
            scale: d.scale,
        });
    }
    let image = MultiChannelImage::from_u8(w, h, planes, spec.labels())?;
    ChannelStack::new(image, quant)
}

pub fn encode(stack: &ChannelStack) -> Vec<u8> {
    let img = &stack.image;
    let mut out = Vec::with_capacity(stack.encoded_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&img.width().to_le_bytes());
    out.extend_from_slice(&img.height().to_le_bytes());
    out.extend_from_slice(&(img.channel_count() as u16).to_le_bytes());
    out.push(0);
    out.push(0);
    for label in img.labels() {
        let s = label.as_str().as_bytes();
        out.push(s.len() as u8);
        out.extend_from_slice(s);
    }
    for q in &stack.quantization {
        out.extend_from_slice(&q.offset.to_le_bytes());
        out.extend_from_slice(&q.scale.to_le_bytes());
    }
    if let Planes::U8(planes) = img.planes() {
        for p in planes {
            out.extend_from_slice(p);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], StackError> {
        if self.buf.len() < self.pos + n {
            return Err(StackError::Truncated(format!("{what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, StackError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, StackError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, StackError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self, what: &str) -> Result<f32, StackError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Parses a container: magic first, then structure and length, then checksum.
pub fn decode(buf: &[u8]) -> Result<ChannelStack, StackError> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(StackError::BadMagic);
    }
    let mut r = Reader { buf, pos: 4 };
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(StackError::UnsupportedVersion(version));
    }
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    let channels = r.u16("channel count")? as usize;
    let dtype = r.u8("dtype")?;
    if dtype != 0 {
        return Err(StackError::UnsupportedDtype(dtype));
    }
    r.u8("reserved")?;
    if width == 0 || height == 0 || channels == 0 {
        return Err(StackError::Malformed(format!("{width}x{height} with {channels} channels")));
    }
    let mut labels = Vec::with_capacity(channels);
    for _ in 0..channels {
        let n = r.u8("label length")? as usize;
        let raw = r.take(n, "label")?;
        let text = std::str::from_utf8(raw).map_err(|_| StackError::Malformed("non-ASCII label".into()))?;
        let label: ChannelLabel = text
            .parse()
            .map_err(|_| StackError::Malformed(format!("unknown label {text:?}")))?;
        labels.push(label);
    }
    let mut quantization = Vec::with_capacity(channels);
    for _ in 0..channels {
        let offset = r.f32("quantization")?;
        let scale = r.f32("quantization")?;
        quantization.push(Quantization { offset, scale });
    }
    let plane_len = width as usize * height as usize;
    let expected = r.pos + channels * plane_len + 4;
    if buf.len() < expected {
        return Err(StackError::Truncated(format!("{} of {expected} bytes", buf.len())));
    }
    if buf.len() > expected {
        return Err(StackError::Malformed(format!("{} trailing bytes", buf.len() - expected)));
    }
    let body = &buf[..expected - 4];
    let stored = u32::from_le_bytes(buf[expected - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(StackError::Checksum { stored, computed });
    }
    let planes = (0..channels)
        .map(|_| r.take(plane_len, "plane").map(<[u8]>::to_vec))
        .collect::<Result<Vec<_>, _>>()?;
    let image = MultiChannelImage::from_u8(width, height, planes, labels)?;
    ChannelStack::new(image, quantization)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StackError + '_ {
    move |source| StackError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the container atomically: a temporary sibling file renamed into place.
pub fn write_stack(stack: &ChannelStack, path: impl AsRef<Path>) -> Result<(), StackError> {
    let path = path.as_ref();
    let bytes = encode(stack);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<ChannelStack, StackError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes)
}

/// Writes each channel as an 8-bit gray PNG named `{stem}_{label}.png`.
pub fn export_png(stack: &ChannelStack, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>, StackError> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    for &label in stack.labels() {
        let plane = stack.image.u8_plane(label)?.to_vec();
        let gray = MultiChannelImage::from_u8(stack.image.width(), stack.image.height(), vec![plane], vec![ChannelLabel::Gray])?;
        let tag = label.as_str().replace('*', "star");
        let path = dir.join(format!("{stem}_{tag}.png"));
        save_raster(&gray, &path)?;
        written.push(path);
    }
    Ok(written)
}
