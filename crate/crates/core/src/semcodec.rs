//! Semantic ROI compression: one lossless base frame plus abstract frames
//! that keep only mask-selected pixels.
//!
//! Container layout (`.svc`, all integers little-endian):
//!
//! ```text
//! "SVCF" | version u16 | width u32 | height u32 | frame_count u32
//!        | channels u8 | quality u8 | flags u8
//! base:     frame_index u32 | len u32 | PNG bytes
//! repeated: frame_index u32 | len u32 | image bytes | len u32 | mask RLE
//! ```
//!
//! `frame_count` counts the base frame. Abstract images are JPEG at the
//! stored quality, or PNG when quality is 100. The mask RLE is a sequence of
//! LEB128 run lengths alternating false/true, starting with false.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::mask::BinaryMask;

pub const MAGIC: &[u8; 4] = b"SVCF";
pub const VERSION: u16 = 1;
/// Quality value that switches abstract frames to lossless PNG.
pub const LOSSLESS_QUALITY: u8 = 100;
pub const DEFAULT_QUALITY: u8 = 75;
const FLAG_MASKS: u8 = 1;
const HEADER_BYTES: usize = 4 + 2 + 4 + 4 + 4 + 1 + 1 + 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractFrame {
    pub frame_index: u32,
    pub image: Vec<u8>,
    pub mask_rle: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticContainer {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub quality: u8,
    pub base_index: u32,
    pub base_png: Vec<u8>,
    pub abstract_frames: Vec<AbstractFrame>,
}

fn color_type(channels: usize) -> ExtendedColorType {
    if channels == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    }
}

/// Deterministic PNG bytes for a frame (best compression, adaptive filter).
pub fn encode_png(frame: &Frame) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Best, FilterType::Adaptive)
        .write_image(
            &frame.to_u8(),
            frame.width() as u32,
            frame.height() as u32,
            color_type(frame.channels()),
        )
        .map_err(|e| Error::Encode(format!("PNG frame {}: {e}", frame.index)))?;
    Ok(out)
}

pub fn encode_jpeg(frame: &Frame, quality: u8) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality)
        .write_image(
            &frame.to_u8(),
            frame.width() as u32,
            frame.height() as u32,
            color_type(frame.channels()),
        )
        .map_err(|e| Error::Encode(format!("JPEG frame {}: {e}", frame.index)))?;
    Ok(out)
}

fn decode_image(bytes: &[u8], index: usize, channels: u8) -> Result<Frame> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::CorruptContainer(format!("frame {index}: {e}")))?;
    let img = if channels == 1 {
        image::DynamicImage::ImageLuma8(img.to_luma8())
    } else {
        image::DynamicImage::ImageRgb8(img.to_rgb8())
    };
    Frame::from_dynamic_image(index, img, Path::new("<container>"))
}

fn push_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *bytes
            .get(*pos)
            .ok_or_else(|| Error::CorruptContainer("truncated mask run".into()))?;
        *pos += 1;
        v |= u64::from(b & 0x7f) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::CorruptContainer("mask run overflows".into()))
}

pub fn encode_mask_rle(mask: &BinaryMask) -> Vec<u8> {
    let mut out = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for &b in mask.bits() {
        if b == current {
            run += 1;
        } else {
            push_varint(&mut out, run);
            current = b;
            run = 1;
        }
    }
    push_varint(&mut out, run);
    out
}

pub fn decode_mask_rle(bytes: &[u8], width: usize, height: usize) -> Result<BinaryMask> {
    let n = width * height;
    let mut bits = Vec::with_capacity(n);
    let mut pos = 0;
    let mut value = false;
    while pos < bytes.len() {
        let run = read_varint(bytes, &mut pos)? as usize;
        if bits.len() + run > n {
            return Err(Error::CorruptContainer("mask runs exceed frame size".into()));
        }
        bits.extend(std::iter::repeat_n(value, run));
        value = !value;
    }
    if bits.len() != n {
        return Err(Error::CorruptContainer(format!(
            "mask covers {} of {n} pixels",
            bits.len()
        )));
    }
    BinaryMask::from_bits(width, height, bits)
}

/// Frame with every pixel outside `mask` set to zero.
pub fn abstract_frame(frame: &Frame, mask: &BinaryMask) -> Frame {
    let c = frame.channels();
    let mut out = frame.clone();
    for (i, &keep) in mask.bits().iter().enumerate() {
        if !keep {
            out.data_mut()[i * c..(i + 1) * c].fill(0.0);
        }
    }
    out
}

/// Encodes `frames[0]` losslessly and every later frame as an abstract frame.
/// `masks` holds either one mask per later frame, or one per frame with the
/// first ignored.
pub fn encode(frames: &[Frame], masks: &[BinaryMask], quality: u8) -> Result<SemanticContainer> {
    let base = frames.first().ok_or(Error::EmptySequence)?;
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidConfig(format!("quality {quality} outside 1..=100")));
    }
    let masks = if masks.len() == frames.len() {
        &masks[1..]
    } else if masks.len() + 1 == frames.len() {
        masks
    } else {
        return Err(Error::DimensionMismatch(format!(
            "{} masks for {} frames",
            masks.len(),
            frames.len()
        )));
    };
    for f in &frames[1..] {
        if !f.same_shape(base) {
            return Err(Error::DimensionMismatch(format!(
                "frame {} shape differs from base frame {}",
                f.index, base.index
            )));
        }
    }
    for w in frames.windows(2) {
        if w[1].index <= w[0].index {
            return Err(Error::DimensionMismatch(format!(
                "frame indices not increasing: {} after {}",
                w[1].index, w[0].index
            )));
        }
    }
    for m in masks {
        if m.width() != base.width() || m.height() != base.height() {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs frame {}x{}",
                m.width(),
                m.height(),
                base.width(),
                base.height()
            )));
        }
    }
    let abstract_frames = frames[1..]
        .par_iter()
        .zip(masks.par_iter())
        .map(|(f, m)| {
            let a = abstract_frame(f, m);
            let image = if quality == LOSSLESS_QUALITY {
                encode_png(&a)?
            } else {
                encode_jpeg(&a, quality)?
            };
            Ok(AbstractFrame {
                frame_index: f.index as u32,
                image,
                mask_rle: encode_mask_rle(m),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SemanticContainer {
        width: base.width() as u32,
        height: base.height() as u32,
        channels: base.channels() as u8,
        quality,
        base_index: base.index as u32,
        base_png: encode_png(base)?,
        abstract_frames,
    })
}

/// `composite = true`: the base frame followed by each abstract frame pasted
/// onto the base inside its mask. `composite = false`: abstract frames only.
pub fn decode(container: &SemanticContainer, composite: bool) -> Result<Vec<Frame>> {
    let (w, h) = (container.width as usize, container.height as usize);
    let c = container.channels as usize;
    let base = decode_image(&container.base_png, container.base_index as usize, container.channels)?;
    if base.width() != w || base.height() != h {
        return Err(Error::CorruptContainer("base frame size differs from header".into()));
    }
    let decoded = container
        .abstract_frames
        .par_iter()
        .map(|a| {
            let img = decode_image(&a.image, a.frame_index as usize, container.channels)?;
            if img.width() != w || img.height() != h {
                return Err(Error::CorruptContainer(format!(
                    "frame {} size differs from header",
                    a.frame_index
                )));
            }
            if !composite {
                return Ok(img);
            }
            let mask = decode_mask_rle(&a.mask_rle, w, h)?;
            let mut out = base.clone().with_index(a.frame_index as usize);
            for (i, &m) in mask.bits().iter().enumerate() {
                if m {
                    out.data_mut()[i * c..(i + 1) * c].copy_from_slice(&img.data()[i * c..(i + 1) * c]);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    if composite {
        let mut all = Vec::with_capacity(decoded.len() + 1);
        all.push(base);
        all.extend(decoded);
        Ok(all)
    } else {
        Ok(decoded)
    }
}

impl SemanticContainer {
    pub fn frame_count(&self) -> usize {
        self.abstract_frames.len() + 1
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&(self.frame_count() as u32).to_le_bytes());
        out.push(self.channels);
        out.push(self.quality);
        out.push(FLAG_MASKS);
        out.extend_from_slice(&self.base_index.to_le_bytes());
        out.extend_from_slice(&(self.base_png.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.base_png);
        for a in &self.abstract_frames {
            out.extend_from_slice(&a.frame_index.to_le_bytes());
            out.extend_from_slice(&(a.image.len() as u32).to_le_bytes());
            out.extend_from_slice(&a.image);
            out.extend_from_slice(&(a.mask_rle.len() as u32).to_le_bytes());
            out.extend_from_slice(&a.mask_rle);
        }
        out
    }

    /// Serialized size in bytes.
    pub fn byte_len(&self) -> usize {
        HEADER_BYTES
            + 8
            + self.base_png.len()
            + self
                .abstract_frames
                .iter()
                .map(|a| 12 + a.image.len() + a.mask_rle.len())
                .sum::<usize>()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::CorruptContainer("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(Error::CorruptContainer(format!("unsupported version {version}")));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let frame_count = r.u32()? as usize;
        let channels = r.u8()?;
        let quality = r.u8()?;
        let flags = r.u8()?;
        if !matches!(channels, 1 | 3) || !(1..=100).contains(&quality) || flags != FLAG_MASKS {
            return Err(Error::CorruptContainer(format!(
                "bad header fields: channels {channels}, quality {quality}, flags {flags}"
            )));
        }
        if width == 0 || height == 0 || frame_count == 0 {
            return Err(Error::CorruptContainer("empty dimensions or frame count".into()));
        }
        let base_index = r.u32()?;
        let base_png = r.blob()?.to_vec();
        let mut abstract_frames = Vec::with_capacity(frame_count.min(1 << 16) - 1);
        let mut last = base_index;
        for _ in 1..frame_count {
            let frame_index = r.u32()?;
            if frame_index <= last {
                return Err(Error::CorruptContainer(format!(
                    "frame index {frame_index} not after {last}"
                )));
            }
            last = frame_index;
            let image = r.blob()?.to_vec();
            let mask_rle = r.blob()?.to_vec();
            abstract_frames.push(AbstractFrame {
                frame_index,
                image,
                mask_rle,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptContainer(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            quality,
            base_index,
            base_png,
            abstract_frames,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptContainer(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

/// Sum of per-frame PNG sizes, the lossless reference.
pub fn lossless_reference_bytes(frames: &[Frame]) -> Result<u64> {
    let sizes = frames
        .par_iter()
        .map(|f| encode_png(f).map(|b| b.len() as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(sizes.iter().sum())
}

/// Uncompressed 8-bit size of a frame sequence.
pub fn raw_reference_bytes(frames: &[Frame]) -> u64 {
    frames.iter().map(|f| f.data().len() as u64).sum()
}

/// Bytes per abstract frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameBytes {
    pub frame_index: u32,
    pub image: u64,
    pub mask: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub container_bytes: u64,
    pub base_bytes: u64,
    pub abstract_bytes: u64,
    pub mask_bytes: u64,
    pub reference_lossless_bytes: u64,
    pub reference_raw_bytes: u64,
    pub abstract_count: usize,
    pub per_frame: Vec<FrameBytes>,
}

/// Formats a ratio `r` as `r:1`, with one decimal below 10.
pub fn format_ratio(r: f64) -> String {
    if r >= 10.0 {
        format!("{r:.0}:1")
    } else {
        format!("{r:.1}:1")
    }
}

pub fn megabytes(bytes: u64) -> f64 {
    bytes as f64 / 1e6
}

impl CompressionReport {
    /// Report from bare sizes, with no per-frame breakdown.
    pub fn from_sizes(container_bytes: u64, reference_lossless_bytes: u64, reference_raw_bytes: u64) -> Self {
        Self {
            container_bytes,
            base_bytes: 0,
            abstract_bytes: 0,
            mask_bytes: 0,
            reference_lossless_bytes,
            reference_raw_bytes,
            abstract_count: 0,
            per_frame: Vec::new(),
        }
    }

    /// Lossless-reference bytes over container bytes.
    pub fn scr(&self) -> f64 {
        self.reference_lossless_bytes as f64 / self.container_bytes as f64
    }

    /// Raw bytes over container bytes.
    pub fn ratio_vs_raw(&self) -> f64 {
        self.reference_raw_bytes as f64 / self.container_bytes as f64
    }

    /// Raw bytes over lossless-reference bytes.
    pub fn lossless_vs_raw(&self) -> f64 {
        self.reference_raw_bytes as f64 / self.reference_lossless_bytes as f64
    }

    /// Text table with size (MB) and SCR columns.
    pub fn table(&self, label: &str, frame_count: usize) -> String {
        let rows: Vec<[String; 4]> = vec![
            [
                "Original video (uncompressed)".into(),
                format!("{frame_count} x RGB raw"),
                format!("{:.3}", megabytes(self.reference_raw_bytes)),
                String::new(),
            ],
            [
                "Original video (PNG, lossless)".into(),
                format!("{frame_count} x RGB PNG"),
                format!("{:.3}", megabytes(self.reference_lossless_bytes)),
                format_ratio(self.lossless_vs_raw()),
            ],
            [
                label.into(),
                "1 x RGB PNG".into(),
                format!("{:.3}", megabytes(self.base_bytes)),
                String::new(),
            ],
            [
                String::new(),
                format!("{} x RGB mask", self.abstract_count),
                format!("{:.3}", megabytes(self.abstract_bytes)),
                String::new(),
            ],
            [
                String::new(),
                format!("{} x mask RLE", self.abstract_count),
                format!("{:.3}", megabytes(self.mask_bytes)),
                String::new(),
            ],
            [
                String::new(),
                "container total".into(),
                format!("{:.3}", megabytes(self.container_bytes)),
                format_ratio(self.scr()),
            ],
        ];
        let headers = ["Motion detection cues", "Image type", "Size (MB)", "SCR"];
        let mut widths = headers.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: [&str; 4]| {
            let _ = writeln!(
                s,
                "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
        };
        line(&mut s, headers);
        for r in &rows {
            line(&mut s, [&r[0], &r[1], &r[2], &r[3]]);
        }
        s.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
    }
}

pub fn compression_report(
    container: &SemanticContainer,
    reference_lossless_bytes: u64,
    reference_raw_bytes: u64,
) -> Result<CompressionReport> {
    if reference_lossless_bytes == 0 || reference_raw_bytes == 0 {
        return Err(Error::InvalidConfig("reference sizes must be positive".into()));
    }
    let per_frame: Vec<FrameBytes> = container
        .abstract_frames
        .iter()
        .map(|a| FrameBytes {
            frame_index: a.frame_index,
            image: a.image.len() as u64,
            mask: a.mask_rle.len() as u64,
        })
        .collect();
    Ok(CompressionReport {
        container_bytes: container.byte_len() as u64,
        base_bytes: container.base_png.len() as u64,
        abstract_bytes: per_frame.iter().map(|f| f.image).sum(),
        mask_bytes: per_frame.iter().map(|f| f.mask).sum(),
        reference_lossless_bytes,
        reference_raw_bytes,
        abstract_count: per_frame.len(),
        per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(index: usize, w: usize, h: usize) -> Frame {
        Frame::from_fn(index, w, h, 3, |x, y, c| {
            // exact 8-bit levels so PNG round trips are lossless
            (20 + (x * 7 + y * 13 + c * 5 + index * 3) % 29 * 7) as f32 / 255.0
        })
    }

    #[test]
    fn rle_round_trip() {
        for m in [
            BinaryMask::new(7, 3),
            BinaryMask::filled(7, 3, true),
            BinaryMask::from_fn(40, 30, |x, y| (x / 3 + y) % 4 == 0),
        ] {
            let rle = encode_mask_rle(&m);
            assert_eq!(decode_mask_rle(&rle, m.width(), m.height()).unwrap(), m);
        }
        assert!(decode_mask_rle(&encode_mask_rle(&BinaryMask::new(4, 4)), 5, 4).is_err());
    }

    #[test]
    fn base_only_container() {
        let c = encode(&[textured(0, 16, 12)], &[], 75).unwrap();
        assert_eq!(c.frame_count(), 1);
        let back = SemanticContainer::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        let frames = decode(&back, true).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0], textured(0, 16, 12));
    }

    #[test]
    fn lossless_round_trip_is_exact() {
        let frames: Vec<Frame> = (0..4).map(|i| textured(i * 2, 24, 16)).collect();
        let masks: Vec<BinaryMask> = (0..3)
            .map(|k| BinaryMask::from_fn(24, 16, |x, y| (x + 3 * k..x + 3 * k + 6).contains(&12) && y > 4))
            .collect();
        let c = encode(&frames, &masks, LOSSLESS_QUALITY).unwrap();
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), c.byte_len());
        let out = decode(&SemanticContainer::from_bytes(&bytes).unwrap(), true).unwrap();
        assert_eq!(out.len(), 4);
        for (k, f) in out.iter().enumerate() {
            assert_eq!(f.index, frames[k].index);
        }
        let base = &frames[0];
        for (k, m) in masks.iter().enumerate() {
            let dec = &out[k + 1];
            for y in 0..16 {
                for x in 0..24 {
                    for ch in 0..3 {
                        let expected = if m.get(x, y) { frames[k + 1].get(x, y, ch) } else { base.get(x, y, ch) };
                        assert_eq!(dec.get(x, y, ch), expected);
                    }
                }
            }
        }
        let abstracts = decode(&c, false).unwrap();
        assert_eq!(abstracts.len(), 3);
        assert_eq!(abstracts[0], abstract_frame(&frames[1], &masks[0]));
    }

    #[test]
    fn all_false_masks_reproduce_base_and_compress_well() {
        let frames: Vec<Frame> = (0..5).map(|i| textured(i, 32, 32)).collect();
        let masks = vec![BinaryMask::new(32, 32); 5];
        let c = encode(&frames, &masks, 75).unwrap();
        let out = decode(&c, true).unwrap();
        assert!(out[1..].iter().all(|f| f.data() == frames[0].data()));
        let black = encode_jpeg(&Frame::zeros(0, 32, 32, 3), 75).unwrap().len();
        assert!(c.abstract_frames.iter().all(|a| a.image.len() == black));
    }

    #[test]
    fn serialization_is_deterministic_and_validated() {
        let frames: Vec<Frame> = (0..3).map(|i| textured(i, 20, 10)).collect();
        let masks = vec![BinaryMask::from_fn(20, 10, |x, _| x < 5); 2];
        let a = encode(&frames, &masks, 60).unwrap().to_bytes();
        let b = encode(&frames, &masks, 60).unwrap().to_bytes();
        assert_eq!(a, b);
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(matches!(SemanticContainer::from_bytes(&bad), Err(Error::CorruptContainer(_))));
        let mut bad = a.clone();
        bad[4] = 9;
        assert!(matches!(SemanticContainer::from_bytes(&bad), Err(Error::CorruptContainer(_))));
        assert!(matches!(SemanticContainer::from_bytes(&a[..a.len() - 1]), Err(Error::CorruptContainer(_))));
    }

    #[test]
    fn encode_errors() {
        assert!(matches!(encode(&[], &[], 75), Err(Error::EmptySequence)));
        let frames = vec![textured(0, 8, 8), textured(1, 9, 8)];
        assert!(matches!(encode(&frames, &[BinaryMask::new(8, 8)], 75), Err(Error::DimensionMismatch(_))));
        let frames = vec![textured(0, 8, 8), textured(1, 8, 8)];
        assert!(matches!(encode(&frames, &[BinaryMask::new(7, 8)], 75), Err(Error::DimensionMismatch(_))));
        assert!(matches!(encode(&frames, &[], 75), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn table2_arithmetic() {
        let mb = 1_000_000u64;
        let raw = 2400 * mb;
        let lossless = 1070 * mb;
        for (base, masks, expected) in [
            (6.0, 19.7, "42:1"),
            (6.0, 24.1, "36:1"),
            (6.0, 13.0, "56:1"),
            (6.0, 10.3, "66:1"),
        ] {
            let container = ((base + masks) * 1e6_f64).round() as u64;
            let r = CompressionReport::from_sizes(container, lossless, raw);
            assert_eq!(format_ratio(r.scr()), expected);
        }
        let r = CompressionReport::from_sizes(lossless, lossless, raw);
        assert_eq!(format_ratio(r.scr()), "1.0:1");
        assert_eq!(format_ratio(r.lossless_vs_raw()), "2.2:1");
    }

    #[test]
    fn report_counts_bytes() {
        let frames: Vec<Frame> = (0..3).map(|i| textured(i, 20, 10)).collect();
        let masks = vec![BinaryMask::from_fn(20, 10, |x, _| x < 5); 2];
        let c = encode(&frames, &masks, 75).unwrap();
        let lossless = lossless_reference_bytes(&frames).unwrap();
        let r = compression_report(&c, lossless, raw_reference_bytes(&frames)).unwrap();
        assert_eq!(r.container_bytes as usize, c.to_bytes().len());
        assert_eq!(r.per_frame.len(), 2);
        assert_eq!(r.abstract_count, 2);
        assert_eq!(raw_reference_bytes(&frames), 3 * 20 * 10 * 3);
        let t = r.table("Flux + appearance + building", 3);
        assert!(t.contains("SCR") && t.contains("container total"));
    }
}
