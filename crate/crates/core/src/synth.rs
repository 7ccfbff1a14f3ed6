//! Synthetic aerial scenes with exact geometry: a textured ground plane,
//! vehicles translating on it, parked vehicles (optionally on roofs) and box
//! buildings, seen from a camera orbiting a target point.
//!
//! World units are meters, Z up, the ground plane is Z = 0. Every ray is cast
//! through the same pinhole model the stabilizer inverts.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::appearance::{write_records, DetectionRecord};
use crate::detection::{BBox, Category, DetectionSet};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::CameraPose;
use crate::config::ThresholdMode;
use crate::georeg::{image_to_plane_pixel, write_poses, PlaneConfig};
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: f64,
    /// Defaults to the image center.
    #[serde(default)]
    pub principal: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSpec {
    /// Horizontal distance from the target, meters.
    pub radius: f64,
    pub altitude: f64,
    /// Radians per frame.
    pub angular_rate: f64,
    #[serde(default)]
    pub start_angle: f64,
    #[serde(default)]
    pub target: [f64; 2],
}

/// 1.5 km above ground on a 2.6 km orbit; 0.005 rad/frame is about 52 m/s
/// at 4 Hz.
impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            radius: 2600.0,
            altitude: 1500.0,
            angular_rate: 0.005,
            start_angle: 0.0,
            target: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundSpec {
    /// Value-noise lattice spacing, meters.
    pub cell_size: f64,
    /// Peak-to-peak relative brightness variation.
    pub contrast: f64,
    pub color: [f64; 3],
}

impl Default for GroundSpec {
    fn default() -> Self {
        Self {
            cell_size: 2.0,
            contrast: 0.5,
            color: [0.55, 0.52, 0.45],
        }
    }
}

/// Axis-aligned vehicle moving at constant velocity on the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    /// Footprint corner with the smallest coordinates at frame 0.
    pub start: [f64; 2],
    /// Meters per second.
    pub velocity: [f64; 2],
    /// Extent along world X and Y, meters.
    pub size: [f64; 2],
    pub color: [f64; 3],
}

/// Stationary vehicle; `elevation > 0` places it on a roof of that height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParkedSpec {
    pub position: [f64; 2],
    pub size: [f64; 2],
    pub color: [f64; 3],
    #[serde(default)]
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingSpec {
    /// `[x0, y0, x1, y1]`, meters.
    pub footprint: [f64; 4],
    pub height: f64,
    pub roof_color: [f64; 3],
    #[serde(default = "default_wall")]
    pub wall_color: [f64; 3],
}

fn default_wall() -> [f64; 3] {
    [0.35, 0.33, 0.32]
}

/// Appearance-detector model used for `detections.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub dropout: f64,
    pub jitter: f64,
    pub margin: f64,
    pub false_positive_rate: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            dropout: 0.0,
            jitter: 0.0,
            margin: 3.0,
            false_positive_rate: 0.0,
        }
    }
}

fn default_frame_rate() -> f64 {
    4.0
}

fn default_supersample() -> usize {
    2
}

/// Complete description of a synthetic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub frame_count: usize,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_hz: f64,
    /// Sub-samples per pixel edge.
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    pub camera: CameraSpec,
    #[serde(default)]
    pub orbit: OrbitSpec,
    /// Stabilized raster the ground truth is expressed in.
    pub plane: PlaneConfig,
    #[serde(default)]
    pub ground: GroundSpec,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub parked: Vec<ParkedSpec>,
    #[serde(default)]
    pub buildings: Vec<BuildingSpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
}

fn unit_color(c: &[f64; 3]) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.frame_count < 3 {
            return bad(format!("frame_count {} < 3", self.frame_count));
        }
        if self.camera.width == 0 || self.camera.height == 0 || !(self.camera.focal > 0.0) {
            return bad("camera needs positive size and focal length".into());
        }
        if !(1..=8).contains(&self.supersample) {
            return bad(format!("supersample {} outside 1..=8", self.supersample));
        }
        if !(self.frame_rate_hz > 0.0) {
            return bad("frame_rate_hz must be positive".into());
        }
        if !(self.ground.cell_size > 0.0) || !(0.0..=1.0).contains(&self.ground.contrast) {
            return bad("ground cell_size must be > 0 and contrast in [0,1]".into());
        }
        self.plane
            .validate()
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let tallest = self.buildings.iter().map(|b| b.height).fold(0.0, f64::max);
        if !(self.orbit.altitude > tallest) {
            return bad(format!(
                "altitude {} must exceed the tallest building ({tallest} m)",
                self.orbit.altitude
            ));
        }
        for (i, b) in self.buildings.iter().enumerate() {
            let [x0, y0, x1, y1] = b.footprint;
            if !(x1 > x0 && y1 > y0 && b.height > 0.0) {
                return bad(format!("building {i}: empty footprint or nonpositive height"));
            }
            if !unit_color(&b.roof_color) || !unit_color(&b.wall_color) {
                return bad(format!("building {i}: colors must be in [0,1]"));
            }
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if !(v.size[0] > 0.0 && v.size[1] > 0.0) || !unit_color(&v.color) {
                return bad(format!("vehicle {i}: bad size or color"));
            }
        }
        for (i, p) in self.parked.iter().enumerate() {
            if !(p.size[0] > 0.0 && p.size[1] > 0.0) || !unit_color(&p.color) {
                return bad(format!("parked vehicle {i}: bad size or color"));
            }
            if p.elevation != 0.0 && self.roof_under(p).is_none() {
                return bad(format!(
                    "parked vehicle {i}: elevation {} does not match a roof under it",
                    p.elevation
                ));
            }
        }
        Ok(())
    }

    fn roof_under(&self, p: &ParkedSpec) -> Option<usize> {
        self.buildings.iter().position(|b| {
            let [x0, y0, x1, y1] = b.footprint;
            (b.height - p.elevation).abs() < 1e-9
                && p.position[0] >= x0
                && p.position[1] >= y0
                && p.position[0] + p.size[0] <= x1
                && p.position[1] + p.size[1] <= y1
        })
    }

    pub fn principal(&self) -> [f64; 2] {
        self.camera
            .principal
            .unwrap_or([self.camera.width as f64 / 2.0, self.camera.height as f64 / 2.0])
    }

    pub fn pose(&self, frame: usize) -> Result<CameraPose> {
        let o = &self.orbit;
        let a = o.start_angle + o.angular_rate * frame as f64;
        let target = Vector3::new(o.target[0], o.target[1], 0.0);
        let center = target + Vector3::new(o.radius * a.cos(), o.radius * a.sin(), o.altitude);
        CameraPose::look_at(self.camera.focal, self.principal(), center, target)
    }

    /// Footprint corner of a moving vehicle at a frame.
    pub fn vehicle_position(&self, v: &VehicleSpec, frame: usize) -> [f64; 2] {
        let t = frame as f64 / self.frame_rate_hz;
        [v.start[0] + v.velocity[0] * t, v.start[1] + v.velocity[1] * t]
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = mix(seed ^ mix((ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated lattice noise in [0, 1).
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}

/// Two octaves of value noise.
fn texture(seed: u64, x: f64, y: f64, cell: f64) -> f64 {
    0.65 * value_noise(seed, x / cell, y / cell) + 0.35 * value_noise(seed ^ 0x5bd1, 2.0 * x / cell, 2.0 * y / cell)
}

fn modulate(color: &[f64; 3], n: f64, contrast: f64) -> [f64; 3] {
    let g = 1.0 - contrast / 2.0 + contrast * n;
    color.map(|c| (c * g).clamp(0.0, 1.0))
}

/// Vehicle color at a point of its footprint: body color with a dark
/// windshield band across the long axis, a third of the way from the front.
fn vehicle_color(color: &[f64; 3], size: &[f64; 2], heading: [f64; 2], local: [f64; 2]) -> [f64; 3] {
    let long = if size[0] >= size[1] { 0 } else { 1 };
    let mut u = local[long] / size[long];
    if heading[long] < 0.0 {
        u = 1.0 - u;
    }
    if (0.6..0.75).contains(&u) {
        color.map(|c| c * 0.3)
    } else {
        *color
    }
}

fn in_rect(p: [f64; 2], corner: [f64; 2], size: [f64; 2]) -> Option<[f64; 2]> {
    let l = [p[0] - corner[0], p[1] - corner[1]];
    (l[0] >= 0.0 && l[1] >= 0.0 && l[0] < size[0] && l[1] < size[1]).then_some(l)
}

/// Ray/box intersection by the slab method: entry distance and the axis of
/// the entered face.
fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, usize)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - o[k]) / d[k];
        let b = (hi[k] - o[k]) / d[k];
        let (t0, t1) = if a < b { (a, b) } else { (b, a) };
        if t0 > t_near {
            t_near = t0;
            axis = k;
        }
        t_far = t_far.min(t1);
    }
    (t_near <= t_far && t_near > 0.0).then_some((t_near, axis))
}

struct FrameScene<'a> {
    spec: &'a SceneSpec,
    vehicles: Vec<[f64; 2]>,
}

impl FrameScene<'_> {
    fn shade(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> [f64; 3] {
        let spec = self.spec;
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, b) in spec.buildings.iter().enumerate() {
            let [x0, y0, x1, y1] = b.footprint;
            if let Some((t, axis)) = ray_box(o, d, [x0, y0, 0.0], [x1, y1, b.height]) {
                if best.is_none_or(|(bt, _, _)| t < bt) {
                    best = Some((t, axis, i));
                }
            }
        }
        if let Some((t, axis, i)) = best {
            let b = &spec.buildings[i];
            let p = o + d * t;
            if axis != 2 {
                let f = if axis == 0 { 0.75 } else { 0.9 };
                return b.wall_color.map(|c| c * f);
            }
            let xy = [p.x, p.y];
            for pk in spec.parked.iter().filter(|pk| (pk.elevation - b.height).abs() < 1e-9) {
                if let Some(l) = in_rect(xy, pk.position, pk.size) {
                    return vehicle_color(&pk.color, &pk.size, [1.0, 1.0], l);
                }
            }
            return b.roof_color;
        }
        if d.z >= 0.0 {
            return [0.0; 3];
        }
        let t = -o.z / d.z;
        let xy = [o.x + d.x * t, o.y + d.y * t];
        for (v, pos) in spec.vehicles.iter().zip(&self.vehicles) {
            if let Some(l) = in_rect(xy, *pos, v.size) {
                return vehicle_color(&v.color, &v.size, v.velocity, l);
            }
        }
        for pk in spec.parked.iter().filter(|pk| pk.elevation == 0.0) {
            if let Some(l) = in_rect(xy, pk.position, pk.size) {
                return vehicle_color(&pk.color, &pk.size, [1.0, 1.0], l);
            }
        }
        let n = texture(spec.seed, xy[0], xy[1], spec.ground.cell_size);
        modulate(&spec.ground.color, n, spec.ground.contrast)
    }
}

/// Renders one camera frame.
pub fn render_frame(spec: &SceneSpec, frame: usize) -> Result<(Frame, CameraPose)> {
    let pose = spec.pose(frame)?;
    let scene = FrameScene {
        spec,
        vehicles: spec.vehicles.iter().map(|v| spec.vehicle_position(v, frame)).collect(),
    };
    let (w, h) = (spec.camera.width, spec.camera.height);
    let s = spec.supersample;
    let o = pose.center();
    let mut data = vec![0f32; w * h * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for sy in 0..s {
                for sx in 0..s {
                    let px = x as f64 + (sx as f64 + 0.5) / s as f64 - 0.5;
                    let py = y as f64 + (sy as f64 + 0.5) / s as f64 - 0.5;
                    let c = scene.shade(&o, &pose.pixel_ray(px, py));
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            let n = (s * s) as f64;
            for k in 0..3 {
                row[x * 3 + k] = (acc[k] / n) as f32;
            }
        }
    });
    Ok((Frame::new(frame, w, h, 3, data)?, pose))
}

/// Rendered sequence plus ground truth in stabilized-plane pixels.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub frames: Vec<Frame>,
    pub poses: Vec<CameraPose>,
    /// Moving vehicles, category `GroundTruth`.
    pub moving_gt: DetectionSet,
    /// Parked vehicles where they appear after stabilization (roof-top ones
    /// drift with parallax), category `GroundTruth`.
    pub parked_gt: DetectionSet,
    /// Building footprints on π.
    pub building_footprints: Vec<BBox>,
    /// Per-frame stabilized roof outlines (hull of the projected roof).
    pub roof_boxes: DetectionSet,
}

/// Box in plane pixels covering the world rectangle at height `z`, as seen
/// from `pose` after stabilization (exact for z = 0).
pub fn stabilized_rect(
    corner: [f64; 2],
    size: [f64; 2],
    z: f64,
    pose: &CameraPose,
    plane: &PlaneConfig,
    frame: usize,
) -> Result<Option<BBox>> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let p = if z == 0.0 {
            plane.world_to_pixel([corner[0] + dx * size[0], corner[1] + dy * size[1]])
        } else {
            let world = Vector3::new(corner[0] + dx * size[0], corner[1] + dy * size[1], z);
            let Some(img) = pose.project(&world) else {
                return Ok(None);
            };
            image_to_plane_pixel(pose, plane, [img.x, img.y])?
        };
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let b = BBox::new(frame, lo[0], lo[1], hi[0] - lo[0], hi[1] - lo[1], Category::GroundTruth);
    Ok(b.clamp_to(plane.output_width, plane.output_height))
}

pub fn render_sequence(spec: &SceneSpec) -> Result<SynthSequence> {
    spec.validate()?;
    let rendered = (0..spec.frame_count)
        .map(|k| render_frame(spec, k))
        .collect::<Result<Vec<_>>>()?;
    let (frames, poses): (Vec<Frame>, Vec<CameraPose>) = rendered.into_iter().unzip();
    let plane = &spec.plane;
    let mut moving = Vec::new();
    let mut parked = Vec::new();
    let mut roofs = Vec::new();
    for (k, pose) in poses.iter().enumerate() {
        for v in &spec.vehicles {
            let pos = spec.vehicle_position(v, k);
            moving.extend(stabilized_rect(pos, v.size, 0.0, pose, plane, k)?);
        }
        for p in &spec.parked {
            parked.extend(stabilized_rect(p.position, p.size, p.elevation, pose, plane, k)?);
        }
        for b in &spec.buildings {
            let [x0, y0, x1, y1] = b.footprint;
            roofs.extend(stabilized_rect([x0, y0], [x1 - x0, y1 - y0], b.height, pose, plane, k)?);
        }
    }
    let building_footprints = spec
        .buildings
        .iter()
        .filter_map(|b| {
            let [x0, y0, x1, y1] = b.footprint;
            let a = plane.world_to_pixel([x0, y0]);
            let c = plane.world_to_pixel([x1, y1]);
            BBox::new(0, a[0], a[1], c[0] - a[0], c[1] - a[1], Category::Building)
                .clamp_to(plane.output_width, plane.output_height)
        })
        .collect();
    Ok(SynthSequence {
        frames,
        poses,
        moving_gt: DetectionSet::from_boxes(moving),
        parked_gt: DetectionSet::from_boxes(parked),
        building_footprints,
        roof_boxes: DetectionSet::from_boxes(roofs.into_iter().map(|b| b.with_category(Category::Building))),
    })
}

/// A controllable stand-in for an appearance detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleDetector {
    /// Probability of dropping each true box.
    pub dropout: f64,
    /// Maximum absolute offset added to each box edge, pixels.
    pub jitter: f64,
    /// Pixels added on every side before jitter; detector boxes are
    /// usually looser than the object.
    pub margin: f64,
    /// Probability per frame of one injected false box.
    pub false_positive_rate: f64,
    pub seed: u64,
    /// Raster the false boxes are placed in.
    pub width: usize,
    pub height: usize,
}

impl OracleDetector {
    pub fn exact(width: usize, height: usize) -> Self {
        Self {
            dropout: 0.0,
            jitter: 0.0,
            margin: 0.0,
            false_positive_rate: 0.0,
            seed: 0,
            width,
            height,
        }
    }
}

/// Perturbs ground-truth boxes into `Vehicle` detections. Output depends only
/// on the inputs and the seed.
pub fn oracle_appearance(gt: &DetectionSet, det: &OracleDetector) -> Result<DetectionSet> {
    for (name, v) in [("dropout", det.dropout), ("false_positive_rate", det.false_positive_rate)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!("{name} {v} outside [0,1]")));
        }
    }
    if !(det.jitter >= 0.0 && det.margin >= 0.0) {
        return Err(Error::InvalidConfig("jitter and margin must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(det.seed);
    let mut out = Vec::new();
    let (mut sum_w, mut sum_h, mut n) = (0.0, 0.0, 0usize);
    for b in gt.iter() {
        sum_w += b.w;
        sum_h += b.h;
        n += 1;
    }
    let (fp_w, fp_h) = if n > 0 { (sum_w / n as f64, sum_h / n as f64) } else { (12.0, 6.0) };
    let mut frames: Vec<usize> = gt.frame_indices().collect();
    if frames.is_empty() {
        return Ok(DetectionSet::new());
    }
    frames.dedup();
    for f in frames {
        for b in gt.frame(f) {
            // draw every variate so one box's fate does not shift the others
            let keep = rng.gen::<f64>() >= det.dropout;
            let mut j = [0.0; 4];
            for v in &mut j {
                *v = if det.jitter > 0.0 { rng.gen_range(-det.jitter..=det.jitter) } else { 0.0 };
            }
            let conf = rng.gen_range(0.5..1.0);
            if !keep {
                continue;
            }
            let m = det.margin;
            let x0 = b.x - m + j[0];
            let y0 = b.y - m + j[1];
            let x1 = (b.x2() + m + j[2]).max(x0 + 1.0);
            let y1 = (b.y2() + m + j[3]).max(y0 + 1.0);
            let jittered = BBox::new(f, x0, y0, x1 - x0, y1 - y0, Category::Vehicle).with_confidence(if det.jitter > 0.0 { conf } else { 1.0 });
            out.extend(jittered.clamp_to(det.width, det.height));
        }
        if rng.gen::<f64>() < det.false_positive_rate {
            let x = rng.gen_range(0.0..(det.width as f64 - fp_w).max(1.0));
            let y = rng.gen_range(0.0..(det.height as f64 - fp_h).max(1.0));
            out.push(BBox::new(f, x, y, fp_w, fp_h, Category::Vehicle).with_confidence(rng.gen_range(0.3..0.8)));
        }
    }
    Ok(DetectionSet::from_boxes(out))
}

/// Writes detections as appearance-input records with a fixed class label.
pub fn write_as_class(path: impl AsRef<Path>, dets: &DetectionSet, class: &str) -> Result<()> {
    let records: Vec<DetectionRecord> = dets
        .iter()
        .map(|b| DetectionRecord {
            frame_index: b.frame_index,
            class: class.to_string(),
            confidence: b.confidence,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        })
        .collect();
    write_records(path, &records)
}

impl SceneSpec {
    pub fn oracle_detector(&self) -> OracleDetector {
        OracleDetector {
            dropout: self.oracle.dropout,
            jitter: self.oracle.jitter,
            margin: self.oracle.margin,
            false_positive_rate: self.oracle.false_positive_rate,
            seed: self.seed ^ 0x0d7e_c7ed,
            width: self.plane.output_width,
            height: self.plane.output_height,
        }
    }
}

/// Oracle detections over moving and parked vehicles.
pub fn scene_detections(spec: &SceneSpec, seq: &SynthSequence) -> Result<DetectionSet> {
    let mut gt = seq.moving_gt.clone();
    gt.extend(seq.parked_gt.iter().copied());
    oracle_appearance(&gt, &spec.oracle_detector())
}

/// Renders `spec` into `dir` together with oracle detections and a
/// `pipeline.toml` pointing at them. Synthetic frames are noise free, so the
/// written config thresholds the trace at a fixed level instead of a
/// percentile.
pub fn write_scene(spec: &SceneSpec, dir: impl AsRef<Path>) -> Result<(SynthSequence, PipelineConfig)> {
    let dir = dir.as_ref();
    let seq = render_sequence(spec)?;
    let dets = scene_detections(spec, &seq)?;
    write_dataset(&seq, dir, Some(&dets))?;
    let mut cfg = PipelineConfig {
        ground_truth: Some("gt.csv".into()),
        plane: spec.plane,
        ..PipelineConfig::default()
    };
    cfg.sequence.threshold = ThresholdMode::Fixed(SYNTH_TRACE_THRESHOLD);
    let path = dir.join("pipeline.toml");
    fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    fs::write(dir.join("scene.toml"), spec.to_toml()).map_err(|e| Error::io(dir.join("scene.toml"), e))?;
    cfg.resolve_relative(dir);
    Ok((seq, cfg))
}

/// Flux-trace level separating motion from resampling residue on rendered
/// scenes with unit-range colors.
pub const SYNTH_TRACE_THRESHOLD: f64 = 0.1;

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// Writes a rendered sequence in the pipeline's input formats:
/// `frames/`, `poses.csv`, `gt.csv`, `parked_gt.csv`, `buildings.csv` and,
/// when given, `detections.csv`.
pub fn write_dataset(seq: &SynthSequence, dir: impl AsRef<Path>, detections: Option<&DetectionSet>) -> Result<()> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    seq.frames
        .par_iter()
        .try_for_each(|f| crate::frame::save_frame(f, frames_dir.join(frame_file_name(f.index))))?;
    let poses: Vec<(usize, CameraPose)> = seq.poses.iter().copied().enumerate().collect();
    write_poses(dir.join("poses.csv"), &poses)?;
    write_as_class(dir.join("gt.csv"), &seq.moving_gt, Category::GroundTruth.label())?;
    write_as_class(dir.join("parked_gt.csv"), &seq.parked_gt, Category::GroundTruth.label())?;
    write_as_class(
        dir.join("buildings.csv"),
        &DetectionSet::from_boxes(seq.building_footprints.iter().copied()),
        Category::Building.label(),
    )?;
    if let Some(d) = detections {
        write_as_class(dir.join("detections.csv"), d, "car")?;
    }
    Ok(())
}
