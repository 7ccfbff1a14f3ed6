//! Multi-channel raster frames.
//!
//! Pixels are stored row-major with channels interleaved: the sample for
//! column `x`, row `y`, channel `c` lives at `(y * width + x) * channels + c`.
//! Intensities are unit-interval reals converted from 8-bit on load.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};

/// Rec. 601 luma weights used for grayscale conversion.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp: Option<f64>,
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(
        index: usize,
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::DimensionMismatch(format!(
                "frames must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch(format!(
                "non-finite intensity {bad}"
            )));
        }
        Ok(Self {
            index,
            timestamp: None,
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(index: usize, width: usize, height: usize, channels: usize) -> Self {
        Self::new(index, width, height, channels, vec![0.0; width * height * channels])
            .expect("valid zero frame")
    }

    /// Builds a frame by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        index: usize,
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(index, width, height, channels, data).expect("from_fn produced invalid frame")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Copies one channel out as a dense `f64` plane.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        assert!(c < self.channels);
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| f64::from(v))
            .collect()
    }

    /// Rec. 601 luma of an RGB frame; gray frames are returned unchanged.
    pub fn to_luminance(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| px[0] * LUMA_WEIGHTS[0] + px[1] * LUMA_WEIGHTS[1] + px[2] * LUMA_WEIGHTS[2])
            .collect();
        let mut out = Frame::new(self.index, self.width, self.height, 1, data)
            .expect("luminance frame");
        out.timestamp = self.timestamp;
        out
    }

    /// Replicates a gray frame into three identical channels.
    pub fn to_rgb(&self) -> Frame {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        let mut out = Frame::new(self.index, self.width, self.height, 3, data).expect("rgb frame");
        out.timestamp = self.timestamp;
        out
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Quantizes to 8-bit samples, clamping to [0,1] first.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| unit_to_u8(v)).collect()
    }

    pub fn from_u8(
        index: usize,
        width: usize,
        height: usize,
        channels: usize,
        bytes: &[u8],
    ) -> Result<Self> {
        let data = bytes.iter().map(|&b| u8_to_unit(b)).collect();
        Self::new(index, width, height, channels, data)
    }

    pub fn to_dynamic_image(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_u8();
        match self.channels {
            1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("gray buffer")),
            _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("rgb buffer")),
        }
    }

    pub fn from_dynamic_image(index: usize, img: DynamicImage, path: &Path) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(buf) => Self::from_u8(index, w, h, 1, buf.as_raw()),
            DynamicImage::ImageRgb8(buf) => Self::from_u8(index, w, h, 3, buf.as_raw()),
            other => Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                detail: format!("{:?}", other.color()),
            }),
        }
    }
}

#[inline]
pub fn u8_to_unit(b: u8) -> f32 {
    f32::from(b) / 255.0
}

#[inline]
pub fn unit_to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Loads an 8-bit gray or RGB image as a frame with intensities in [0,1].
pub fn load_frame(path: impl AsRef<Path>, index: usize) -> Result<Frame> {
    let path = path.as_ref();
    let unreadable = |reason: String| Error::UnreadableImage {
        path: path.to_path_buf(),
        reason,
    };
    let img = ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?
        .decode()
        .map_err(|e| unreadable(e.to_string()))?;
    Frame::from_dynamic_image(index, img, path)
}

/// Writes a frame as 8-bit PNG or JPEG depending on the file extension.
pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    frame
        .to_dynamic_image()
        .save(path)
        .map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
}
