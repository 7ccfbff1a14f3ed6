//! Spatiotemporal derivatives, structure-tensor and color flux-tensor traces.
//!
//! Derivatives are separable Gaussian-derivative filters evaluated at the
//! center frame of an odd-length temporal window. Kernels are applied as
//! correlations, `out(x) = Σ_j w[j] · I(x + j)`, and are moment-normalized so
//! that they are exact on low-order polynomials:
//!
//! * smoothing: `Σ w = 1`
//! * first derivative: `Σ w = 0`, `Σ j·w = 1`
//! * second derivative: `Σ w = 0`, `Σ j·w = 0`, `Σ j²·w = 2`
//!
//! The structure-tensor trace sums `I_x² + I_y² + I_t²` and the color flux
//! trace sums `I_xt² + I_yt² + I_tt²`, both over channels and over a square
//! spatial window Ω.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::config::{SequenceConfig, ThresholdMode};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::fusion::erode;
use crate::mask::BinaryMask;

/// Offset added before taking logs in Otsu mode.
pub const LOG_EPSILON: f64 = 1e-12;

/// Spatial kernel radius for a given sigma (3σ, rounded up).
pub fn spatial_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}

fn gaussian_weights(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    (-r..=r)
        .map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Sampled Gaussian normalized to unit sum.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let g = gaussian_weights(sigma, radius);
    let sum: f64 = g.iter().sum();
    g.into_iter().map(|v| v / sum).collect()
}

/// First derivative of Gaussian: antisymmetric with `Σ j·w = 1`.
pub fn gaussian_derivative_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let g = gaussian_weights(sigma, radius);
    let r = radius as f64;
    let raw: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(i, gv)| (i as f64 - r) * gv)
        .collect();
    let moment: f64 = raw
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 - r) * v)
        .sum();
    raw.into_iter().map(|v| v / moment).collect()
}

/// Second derivative of Gaussian: symmetric, zero mean, `Σ j²·w = 2`.
pub fn gaussian_second_derivative_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let g = gaussian_weights(sigma, radius);
    let r = radius as f64;
    let offsets: Vec<f64> = (0..g.len()).map(|i| i as f64 - r).collect();
    let gsum: f64 = g.iter().sum();
    let mean_sq: f64 = g.iter().zip(&offsets).map(|(gv, j)| j * j * gv).sum::<f64>() / gsum;
    let raw: Vec<f64> = g
        .iter()
        .zip(&offsets)
        .map(|(gv, j)| (j * j - mean_sq) * gv)
        .collect();
    let second: f64 = raw.iter().zip(&offsets).map(|(v, j)| j * j * v).sum();
    raw.into_iter().map(|v| 2.0 * v / second).collect()
}

/// Correlates every row with `kernel`, replicating edge pixels.
pub fn correlate_rows(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let last = width as i64 - 1;
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width)
        .zip(plane.par_chunks(width))
        .for_each(|(dst, src)| {
            for x in 0..width as i64 {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let sx = (x + k as i64 - r).clamp(0, last) as usize;
                    acc += w * src[sx];
                }
                dst[x as usize] = acc;
            }
        });
    out
}

/// Correlates every column with `kernel`, replicating edge pixels.
pub fn correlate_cols(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let last = height as i64 - 1;
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, dst)| {
        for (k, w) in kernel.iter().enumerate() {
            let sy = (y as i64 + k as i64 - r).clamp(0, last) as usize;
            let src = &plane[sy * width..(sy + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    });
    out
}

/// Sum over the `(2r+1)²` window around each pixel, replicating edges.
pub fn box_sum(plane: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let ones = vec![1.0; 2 * radius + 1];
    let rows = correlate_rows(plane, width, height, &ones);
    correlate_cols(&rows, width, height, &ones)
}

/// Smoothed intensity and its two spatial derivatives, one channel of one frame.
#[derive(Debug, Clone)]
struct SpatialResponse {
    smooth: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Kernels {
    smooth: Vec<f64>,
    deriv: Vec<f64>,
    t_smooth: Vec<f64>,
    t_deriv: Vec<f64>,
    t_second: Vec<f64>,
}

impl Kernels {
    fn new(config: &SequenceConfig) -> Self {
        let rs = spatial_radius(config.spatial_sigma);
        let rt = config.half_window();
        Self {
            smooth: gaussian_kernel(config.spatial_sigma, rs),
            deriv: gaussian_derivative_kernel(config.spatial_sigma, rs),
            t_smooth: gaussian_kernel(config.temporal_sigma, rt),
            t_deriv: gaussian_derivative_kernel(config.temporal_sigma, rt),
            t_second: gaussian_second_derivative_kernel(config.temporal_sigma, rt),
        }
    }
}

fn spatial_responses(frame: &Frame, k: &Kernels) -> Vec<SpatialResponse> {
    let (w, h) = (frame.width(), frame.height());
    (0..frame.channels())
        .into_par_iter()
        .map(|c| {
            let plane = frame.channel_plane(c);
            let gx = correlate_rows(&plane, w, h, &k.smooth);
            let dxr = correlate_rows(&plane, w, h, &k.deriv);
            SpatialResponse {
                smooth: correlate_cols(&gx, w, h, &k.smooth),
                dy: correlate_cols(&gx, w, h, &k.deriv),
                dx: correlate_cols(&dxr, w, h, &k.smooth),
            }
        })
        .collect()
}

/// The six derivative rasters of one channel at the window center.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDerivatives {
    pub ix: Vec<f64>,
    pub iy: Vec<f64>,
    pub it: Vec<f64>,
    pub ixt: Vec<f64>,
    pub iyt: Vec<f64>,
    pub itt: Vec<f64>,
}

/// Per-channel derivative rasters evaluated at one window's center frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeStack {
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
    pub channels: Vec<ChannelDerivatives>,
}

fn weighted_sum(planes: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let n = planes[0].len();
    let mut out = vec![0.0; n];
    for (plane, &w) in planes.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(plane.iter()) {
            *o += w * v;
        }
    }
    out
}

fn combine_window(
    window: &[&Vec<SpatialResponse>],
    k: &Kernels,
    frame_index: usize,
    width: usize,
    height: usize,
) -> DerivativeStack {
    let channels = window[0].len();
    let channels = (0..channels)
        .into_par_iter()
        .map(|c| {
            let smooth: Vec<&[f64]> = window.iter().map(|f| f[c].smooth.as_slice()).collect();
            let dx: Vec<&[f64]> = window.iter().map(|f| f[c].dx.as_slice()).collect();
            let dy: Vec<&[f64]> = window.iter().map(|f| f[c].dy.as_slice()).collect();
            ChannelDerivatives {
                ix: weighted_sum(&dx, &k.t_smooth),
                iy: weighted_sum(&dy, &k.t_smooth),
                it: weighted_sum(&smooth, &k.t_deriv),
                ixt: weighted_sum(&dx, &k.t_deriv),
                iyt: weighted_sum(&dy, &k.t_deriv),
                itt: weighted_sum(&smooth, &k.t_second),
            }
        })
        .collect();
    DerivativeStack {
        frame_index,
        width,
        height,
        channels,
    }
}

fn check_window(frames: &[Frame], config: &SequenceConfig) -> Result<()> {
    config.validate()?;
    if frames.len() < config.temporal_window {
        return Err(Error::WindowTooShort {
            got: frames.len(),
            need: config.temporal_window,
        });
    }
    if frames.len() > config.temporal_window {
        return Err(Error::DimensionMismatch(format!(
            "window has {} frames, temporal_window is {}",
            frames.len(),
            config.temporal_window
        )));
    }
    check_same_shape(frames)
}

fn check_same_shape(frames: &[Frame]) -> Result<()> {
    let first = &frames[0];
    if let Some(bad) = frames.iter().find(|f| !f.same_shape(first)) {
        return Err(Error::DimensionMismatch(format!(
            "frame {} is {}x{}x{}, frame {} is {}x{}x{}",
            first.index,
            first.width(),
            first.height(),
            first.channels(),
            bad.index,
            bad.width(),
            bad.height(),
            bad.channels()
        )));
    }
    Ok(())
}

/// Derivatives of a `temporal_window`-frame window, evaluated at its center.
pub fn compute_derivatives(frames: &[Frame], config: &SequenceConfig) -> Result<DerivativeStack> {
    check_window(frames, config)?;
    let k = Kernels::new(config);
    let responses: Vec<Vec<SpatialResponse>> = frames.iter().map(|f| spatial_responses(f, &k)).collect();
    let refs: Vec<&Vec<SpatialResponse>> = responses.iter().collect();
    let center = &frames[frames.len() / 2];
    Ok(combine_window(&refs, &k, center.index, center.width(), center.height()))
}

/// Streams a frame sequence, emitting one [`DerivativeStack`] per interior
/// frame. Each frame is spatially filtered once.
pub struct DerivativeStream {
    config: SequenceConfig,
    kernels: Kernels,
    window: VecDeque<(usize, Vec<SpatialResponse>)>,
    shape: Option<(usize, usize, usize)>,
}

impl DerivativeStream {
    pub fn new(config: &SequenceConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            kernels: Kernels::new(config),
            window: VecDeque::with_capacity(config.temporal_window),
            shape: None,
        })
    }

    /// Adds the next frame; returns the stack for the window center once the
    /// window is full.
    pub fn push(&mut self, frame: &Frame) -> Result<Option<DerivativeStack>> {
        let shape = (frame.width(), frame.height(), frame.channels());
        match self.shape {
            None => self.shape = Some(shape),
            Some(s) if s != shape => {
                return Err(Error::DimensionMismatch(format!(
                    "frame {} is {:?}, sequence is {:?}",
                    frame.index, shape, s
                )))
            }
            _ => {}
        }
        if self.window.len() == self.config.temporal_window {
            self.window.pop_front();
        }
        self.window
            .push_back((frame.index, spatial_responses(frame, &self.kernels)));
        if self.window.len() < self.config.temporal_window {
            return Ok(None);
        }
        let refs: Vec<&Vec<SpatialResponse>> = self.window.iter().map(|(_, r)| r).collect();
        let center = self.window[self.window.len() / 2].0;
        Ok(Some(combine_window(&refs, &self.kernels, center, shape.0, shape.1)))
    }
}

/// Nonnegative per-pixel scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceField {
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl TraceField {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

fn integrated_sum_of_squares(
    stack: &DerivativeStack,
    config: &SequenceConfig,
    parts: impl Fn(&ChannelDerivatives) -> [&[f64]; 3],
) -> TraceField {
    let n = stack.width * stack.height;
    let mut energy = vec![0.0; n];
    for ch in &stack.channels {
        for part in parts(ch) {
            for (e, v) in energy.iter_mut().zip(part) {
                *e += v * v;
            }
        }
    }
    TraceField {
        frame_index: stack.frame_index,
        width: stack.width,
        height: stack.height,
        values: box_sum(&energy, stack.width, stack.height, config.integration_radius),
    }
}

/// trace(J): `Σ_Ω Σ_c (I_x² + I_y² + I_t²)`. Responds to moving and static edges.
pub fn structure_tensor_trace(stack: &DerivativeStack, config: &SequenceConfig) -> TraceField {
    integrated_sum_of_squares(stack, config, |c| [&c.ix, &c.iy, &c.it])
}

/// trace(J_FC): `Σ_Ω Σ_c (I_xt² + I_yt² + I_tt²)`. Vanishes on static structure.
pub fn color_flux_trace(stack: &DerivativeStack, config: &SequenceConfig) -> TraceField {
    integrated_sum_of_squares(stack, config, |c| [&c.ixt, &c.iyt, &c.itt])
}

/// Full symmetric 3×3 tensor field, components in the order
/// `[aa, ab, ac, bb, bc, cc]`. Only needed for inspection.
#[derive(Debug, Clone)]
pub struct TensorField {
    pub width: usize,
    pub height: usize,
    pub components: [Vec<f64>; 6],
}

impl TensorField {
    pub fn trace(&self) -> Vec<f64> {
        self.components[0]
            .iter()
            .zip(&self.components[3])
            .zip(&self.components[5])
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

fn integrated_tensor(
    stack: &DerivativeStack,
    config: &SequenceConfig,
    parts: impl Fn(&ChannelDerivatives) -> [&[f64]; 3],
) -> TensorField {
    let (w, h) = (stack.width, stack.height);
    const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let components = PAIRS.map(|(a, b)| {
        let mut acc = vec![0.0; w * h];
        for ch in &stack.channels {
            let p = parts(ch);
            for ((o, u), v) in acc.iter_mut().zip(p[a]).zip(p[b]) {
                *o += u * v;
            }
        }
        box_sum(&acc, w, h, config.integration_radius)
    });
    TensorField {
        width: w,
        height: h,
        components,
    }
}

/// The full 3D structure tensor J (gradient outer products over Ω).
pub fn structure_tensor(stack: &DerivativeStack, config: &SequenceConfig) -> TensorField {
    integrated_tensor(stack, config, |c| [&c.ix, &c.iy, &c.it])
}

/// The full color flux tensor J_FC.
pub fn color_flux_tensor(stack: &DerivativeStack, config: &SequenceConfig) -> TensorField {
    integrated_tensor(stack, config, |c| [&c.ixt, &c.iyt, &c.itt])
}

/// Result of thresholding a trace field.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOutcome {
    pub mask: BinaryMask,
    /// θ in trace units; the mask is `trace > θ`.
    pub threshold: f64,
    /// Otsu found a single-valued trace; the mask is all-false.
    pub degenerate: bool,
}

/// Nearest-rank percentile of `values` (which must be nonempty).
fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// Otsu threshold over a 256-bin histogram; `None` when all values are equal.
fn otsu(values: &[f64]) -> Option<f64> {
    const BINS: usize = 256;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12 * lo.abs().max(1.0)) {
        return None;
    }
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0usize; BINS];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let total_mean: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &n)| i as f64 * n as f64)
        .sum::<f64>()
        / total;
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_split) = (-1.0, 0);
    for (i, &n) in hist.iter().enumerate().take(BINS - 1) {
        w0 += n as f64 / total;
        sum0 += i as f64 * n as f64 / total;
        let w1 = 1.0 - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (total_mean - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_split = i;
        }
    }
    Some(lo + (best_split + 1) as f64 * width)
}

/// Binarizes a trace field. Pixels outside `validity` are excluded from the
/// statistics and forced to false.
pub fn threshold_trace(
    trace: &TraceField,
    mode: ThresholdMode,
    validity: Option<&BinaryMask>,
) -> Result<ThresholdOutcome> {
    if let Some(v) = validity {
        if v.width() != trace.width || v.height() != trace.height {
            return Err(Error::DimensionMismatch(format!(
                "validity mask {}x{} vs trace {}x{}",
                v.width(),
                v.height(),
                trace.width,
                trace.height
            )));
        }
    }
    let is_valid = |i: usize| validity.is_none_or(|v| v.bits()[i]);
    let mut valid_values: Vec<f64> = trace
        .values
        .iter()
        .enumerate()
        .filter(|&(i, _)| is_valid(i))
        .map(|(_, &v)| v)
        .collect();

    let empty = BinaryMask::new(trace.width, trace.height);
    let (threshold, degenerate) = match mode {
        ThresholdMode::Fixed(t) => (t, false),
        ThresholdMode::Percentile(p) => {
            if valid_values.is_empty() {
                return Ok(ThresholdOutcome {
                    mask: empty,
                    threshold: f64::INFINITY,
                    degenerate: false,
                });
            }
            (percentile(&mut valid_values, p), false)
        }
        ThresholdMode::Otsu => {
            let logs: Vec<f64> = valid_values.iter().map(|v| (v + LOG_EPSILON).ln()).collect();
            match otsu(&logs) {
                Some(t) => (t.exp() - LOG_EPSILON, false),
                None => {
                    log::warn!(
                        "frame {}: trace is constant, Otsu threshold undefined",
                        trace.frame_index
                    );
                    return Ok(ThresholdOutcome {
                        mask: empty,
                        threshold: f64::INFINITY,
                        degenerate: true,
                    });
                }
            }
        }
    };
    let bits = trace
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| is_valid(i) && v > threshold)
        .collect();
    Ok(ThresholdOutcome {
        mask: BinaryMask::from_bits(trace.width, trace.height, bits)?,
        threshold,
        degenerate,
    })
}

/// Pixels valid in every frame of a window, shrunk by `margin` so that
/// filter support never reaches a warp border.
pub fn window_validity(masks: &[&BinaryMask], margin: usize) -> BinaryMask {
    let mut acc = masks[0].clone();
    for m in &masks[1..] {
        acc = acc.and(m);
    }
    erode(&acc, margin)
}

/// Margin needed by [`window_validity`] for a configuration.
pub fn validity_margin(config: &SequenceConfig) -> usize {
    spatial_radius(config.spatial_sigma) + config.integration_radius
}

/// Motion output for one interior frame.
#[derive(Debug, Clone)]
pub struct MotionFrame {
    pub frame_index: usize,
    pub flux: TraceField,
    pub threshold: ThresholdOutcome,
}

/// Runs derivative filtering, color flux trace and thresholding over a whole
/// stabilized sequence. `validity`, when given, holds one mask per frame.
/// Frames within half a window of either end produce no output.
pub fn detect_motion(
    frames: &[Frame],
    validity: Option<&[BinaryMask]>,
    config: &SequenceConfig,
    mut sink: impl FnMut(MotionFrame) -> Result<()>,
) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    if frames.len() < config.temporal_window {
        return Err(Error::WindowTooShort {
            got: frames.len(),
            need: config.temporal_window,
        });
    }
    if let Some(v) = validity {
        if v.len() != frames.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} validity masks for {} frames",
                v.len(),
                frames.len()
            )));
        }
    }
    check_same_shape(frames)?;
    let half = config.half_window();
    let margin = validity_margin(config);
    let mut stream = DerivativeStream::new(config)?;
    for (pos, frame) in frames.iter().enumerate() {
        let Some(stack) = stream.push(frame)? else {
            continue;
        };
        let center = pos - half;
        let flux = color_flux_trace(&stack, config);
        let valid = validity.map(|v| {
            let window: Vec<&BinaryMask> = v[center - half..=center + half].iter().collect();
            window_validity(&window, margin)
        });
        let threshold = threshold_trace(&flux, config.threshold, valid.as_ref())?;
        sink(MotionFrame {
            frame_index: stack.frame_index,
            flux,
            threshold,
        })?;
    }
    Ok(())
}
