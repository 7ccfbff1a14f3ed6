//! Motion/appearance decision fusion, building roof-top detection and
//! temporal aggregation of building boxes.
//!
//! | motion | appearance | blob size | category                   |
//! |--------|------------|-----------|----------------------------|
//! | 1      | 1          | any       | `MovingVehicle`            |
//! | 0      | 1          | any       | `StationaryVehicleOrFalse` |
//! | 1      | 0          | small     | `OtherMovingOrFalse`       |
//! | 1      | 0          | large     | `Building`                 |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::appearance::paint_box;
use crate::config::SequenceConfig;
use crate::detection::{BBox, Category, DetectionSet};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::mask::BinaryMask;

/// One 8-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blob {
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
    /// Inclusive pixel bounds `[x0, y0, x1, y1]`.
    pub bounds: [usize; 4],
}

impl Blob {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Tight box in pixel-edge coordinates.
    pub fn bbox(&self, frame_index: usize, category: Category) -> BBox {
        let [x0, y0, x1, y1] = self.bounds;
        BBox::new(
            frame_index,
            x0 as f64,
            y0 as f64,
            (x1 - x0 + 1) as f64,
            (y1 - y0 + 1) as f64,
            category,
        )
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

/// 8-connected labeling. Returns per-pixel labels (0 = background, blobs
/// numbered from 1 in raster order of their first pixel) and the blob count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            let mut best = 0u32;
            let mut neighbours = [0u32; 4];
            if x > 0 {
                neighbours[0] = labels[i - 1];
            }
            if y > 0 {
                let up = i - w;
                if x > 0 {
                    neighbours[1] = labels[up - 1];
                }
                neighbours[2] = labels[up];
                if x + 1 < w {
                    neighbours[3] = labels[up + 1];
                }
            }
            for &n in neighbours.iter().filter(|&&n| n != 0) {
                let root = find(&mut parent, n);
                if best == 0 {
                    best = root;
                } else if root != best {
                    let (lo, hi) = (best.min(root), best.max(root));
                    parent[hi as usize] = lo;
                    best = lo;
                }
            }
            if best == 0 {
                best = parent.len() as u32;
                parent.push(best);
            }
            labels[i] = best;
        }
    }
    // compact roots to 1..=n in order of first appearance
    let mut remap = vec![0u32; parent.len()];
    let mut count = 0u32;
    for l in labels.iter_mut().filter(|l| **l != 0) {
        let root = find(&mut parent, *l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *l = remap[root];
    }
    (labels, count as usize)
}

/// 8-connected components with at least `min_area` pixels, ordered by their
/// first pixel in raster order.
pub fn connected_components(mask: &BinaryMask, min_area: usize) -> Vec<Blob> {
    let w = mask.width();
    let (labels, n) = label_components(mask);
    let mut blobs: Vec<Blob> = (0..n)
        .map(|_| Blob {
            pixels: Vec::new(),
            bounds: [usize::MAX, usize::MAX, 0, 0],
        })
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let b = &mut blobs[l as usize - 1];
        let (x, y) = (i % w, i / w);
        b.pixels.push(i);
        b.bounds = [
            b.bounds[0].min(x),
            b.bounds[1].min(y),
            b.bounds[2].max(x),
            b.bounds[3].max(y),
        ];
    }
    blobs.retain(|b| b.area() >= min_area.max(1));
    blobs
}

fn sweep(mask: &BinaryMask, radius: usize, take_max: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let r = radius as isize;
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let (pos, len) = if horizontal { (x, w) } else { (y, h) };
                let lo = (pos as isize - r).max(0) as usize;
                let hi = (pos as isize + r).min(len as isize - 1) as usize;
                let mut vals = (lo..=hi).map(|k| if horizontal { src[y * w + k] } else { src[k * w + x] });
                out[y * w + x] = if take_max {
                    vals.any(|v| v)
                } else {
                    vals.all(|v| v)
                };
            }
        }
        out
    };
    let rows = pass(mask.bits(), true);
    let bits = pass(&rows, false);
    BinaryMask::from_bits(w, h, bits).expect("same dims")
}

/// Binary dilation with a `(2r+1)²` square, restricted to the raster.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    sweep(mask, radius, true)
}

/// Binary erosion with a `(2r+1)²` square; pixels outside the raster do not
/// take part.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    sweep(mask, radius, false)
}

/// Closing followed by opening.
pub fn morphology_close_open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let closed = erode(&dilate(mask, radius), radius);
    dilate(&erode(&closed, radius), radius)
}

fn mask_of(blobs: &[&Blob], width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    for b in blobs {
        for &i in &b.pixels {
            m.bits_mut()[i] = true;
        }
    }
    m
}

/// Per-frame fusion result.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub frame_index: usize,
    pub moving_vehicle_mask: BinaryMask,
    pub building_mask: BinaryMask,
    /// Moving vehicles (appearance boxes confirmed by motion), stationary
    /// appearance hits, small unexplained motion and building blobs.
    pub categorized: DetectionSet,
    /// Every motion blob above `min_blob_area`, with its table category.
    pub motion_blobs: Vec<BBox>,
    /// Building boxes found in this frame.
    pub building_boxes: Vec<BBox>,
}

/// Single-frame fusion; the frame's own building boxes act as the roof-top
/// filter.
pub fn fuse(
    motion: &BinaryMask,
    appearance: &BinaryMask,
    frame_index: usize,
    config: &SequenceConfig,
) -> Result<FusionOutput> {
    fuse_with_buildings(motion, appearance, frame_index, config, Some(&BinaryMask::new(motion.width(), motion.height())))
}

/// Fusion against previously aggregated building cover. With
/// `prior_buildings = None` the roof-top filter is disabled entirely; with
/// `Some(cover)` vehicles inside `cover` or inside this frame's building boxes
/// are demoted to `StationaryVehicleOrFalse`.
pub fn fuse_with_buildings(
    motion: &BinaryMask,
    appearance: &BinaryMask,
    frame_index: usize,
    config: &SequenceConfig,
    prior_buildings: Option<&BinaryMask>,
) -> Result<FusionOutput> {
    motion.check_dims(appearance, "motion vs appearance mask")?;
    if let Some(p) = prior_buildings {
        motion.check_dims(p, "motion vs building cover")?;
    }
    let (w, h) = (motion.width(), motion.height());
    let app = appearance.bits();

    let blobs = connected_components(motion, config.min_blob_area);
    let mut motion_blobs = Vec::with_capacity(blobs.len());
    let mut vehicle_blobs = Vec::new();
    let mut building_blobs = Vec::new();
    let mut categorized = Vec::new();
    for blob in &blobs {
        let inside = blob.pixels.iter().filter(|&&i| app[i]).count();
        let category = if inside as f64 >= config.overlap_fraction * blob.area() as f64 {
            vehicle_blobs.push(blob);
            Category::MovingVehicle
        } else if blob.area() as f64 <= config.small_large_area_cutoff {
            Category::OtherMovingOrFalse
        } else {
            building_blobs.push(blob);
            Category::Building
        };
        let b = blob.bbox(frame_index, category);
        motion_blobs.push(b);
        match category {
            Category::OtherMovingOrFalse => {
                log::debug!("frame {frame_index}: unexplained motion blob {b:?}");
                categorized.push(b);
            }
            Category::Building => categorized.push(b),
            _ => {}
        }
    }

    let refined = morphology_close_open(&mask_of(&building_blobs, w, h), config.morphology_radius);
    let kept: Vec<Blob> = connected_components(&refined, config.min_blob_area);
    let building_mask = mask_of(&kept.iter().collect::<Vec<_>>(), w, h)
        .and(motion)
        .and_not(appearance);
    let building_boxes: Vec<BBox> = building_blobs
        .iter()
        .map(|b| b.bbox(frame_index, Category::Building))
        .collect();

    let cover = prior_buildings.map(|prior| {
        let mut c = prior.clone();
        for b in &building_boxes {
            paint_box(&mut c, b);
        }
        c
    });

    let vehicle_mask = mask_of(&vehicle_blobs, w, h);
    for comp in connected_components(appearance, 1) {
        let confirmed = comp.pixels.iter().any(|&i| vehicle_mask.bits()[i]);
        let b = comp.bbox(frame_index, Category::StationaryVehicleOrFalse);
        let on_roof = cover.as_ref().is_some_and(|c| {
            let [cx, cy] = b.center();
            c.get((cx as usize).min(w - 1), (cy as usize).min(h - 1))
        });
        let category = if confirmed && !on_roof {
            Category::MovingVehicle
        } else {
            Category::StationaryVehicleOrFalse
        };
        categorized.push(b.with_category(category));
    }

    let mut moving_vehicle_mask = vehicle_mask.and_not(&building_mask);
    if let Some(c) = &cover {
        moving_vehicle_mask = moving_vehicle_mask.and_not(c);
    }

    Ok(FusionOutput {
        frame_index,
        moving_vehicle_mask,
        building_mask,
        categorized: DetectionSet::from_boxes(categorized),
        motion_blobs,
        building_boxes,
    })
}

/// Frame-by-frame fusion that accumulates every building box seen so far
/// into the roof-top filter.
#[derive(Debug, Clone)]
pub struct StreamingFusion {
    config: SequenceConfig,
    cover: Option<BinaryMask>,
    per_frame: Vec<(usize, Vec<BBox>)>,
}

impl StreamingFusion {
    pub fn new(config: &SequenceConfig) -> Self {
        Self {
            config: config.clone(),
            cover: None,
            per_frame: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        motion: &BinaryMask,
        appearance: &BinaryMask,
        frame_index: usize,
    ) -> Result<FusionOutput> {
        let cover = self
            .cover
            .get_or_insert_with(|| BinaryMask::new(motion.width(), motion.height()));
        let out = fuse_with_buildings(motion, appearance, frame_index, &self.config, Some(cover))?;
        for b in &out.building_boxes {
            paint_box(cover, b);
        }
        self.per_frame.push((frame_index, out.building_boxes.clone()));
        Ok(out)
    }

    /// Building boxes per frame, in push order.
    pub fn building_history(&self) -> &[(usize, Vec<BBox>)] {
        &self.per_frame
    }
}

/// Roof-top boxes linked across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingTrack {
    pub id: usize,
    pub boxes: Vec<BBox>,
}

impl BuildingTrack {
    pub fn first_frame(&self) -> usize {
        self.boxes[0].frame_index
    }

    pub fn last_frame(&self) -> usize {
        self.boxes[self.boxes.len() - 1].frame_index
    }

    /// Diagonal of the bounding box of member-box centers, in pixels.
    pub fn spread(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for b in &self.boxes {
            let c = b.center();
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }
}

/// Greedy chain-linking of per-frame building boxes. Within a frame, candidate
/// (track, box) pairs are taken in descending IoU against each track's last
/// box; a pair links when IoU ≥ `iou_link` and neither side is taken.
pub fn aggregate_buildings(per_frame: &[(usize, Vec<BBox>)], iou_link: f64) -> Vec<BuildingTrack> {
    let mut tracks: Vec<BuildingTrack> = Vec::new();
    for (frame, boxes) in per_frame {
        let mut pairs = Vec::new();
        for (t, track) in tracks.iter().enumerate() {
            let last = track.boxes.last().expect("tracks are nonempty");
            if last.frame_index == *frame {
                continue;
            }
            for (k, b) in boxes.iter().enumerate() {
                let iou = last.iou(b);
                if iou >= iou_link && iou > 0.0 {
                    pairs.push((iou, t, k));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut box_used = vec![false; boxes.len()];
        let mut track_used = vec![false; tracks.len()];
        for (_, t, k) in pairs {
            if box_used[k] || track_used[t] {
                continue;
            }
            box_used[k] = true;
            track_used[t] = true;
            tracks[t].boxes.push(BBox { frame_index: *frame, ..boxes[k] });
        }
        for (k, b) in boxes.iter().enumerate() {
            if !box_used[k] {
                tracks.push(BuildingTrack {
                    id: tracks.len(),
                    boxes: vec![BBox { frame_index: *frame, ..*b }],
                });
            }
        }
    }
    tracks
}

/// Writes tracks as `track_id,frame_index,x,y,w,h` lines with a header.
pub fn write_building_tracks(path: impl AsRef<Path>, tracks: &[BuildingTrack]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "track_id,frame_index,x,y,w,h").map_err(io)?;
    for t in tracks {
        for b in &t.boxes {
            writeln!(w, "{},{},{},{},{},{}", t.id, b.frame_index, b.x, b.y, b.w, b.h).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_building_tracks(path: impl AsRef<Path>) -> Result<Vec<BuildingTrack>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut tracks: Vec<BuildingTrack> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: n as u64 + 1,
            reason,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", f.len())));
        }
        let id: usize = f[0].parse().map_err(|e| bad(format!("track_id: {e}")))?;
        let frame: usize = f[1].parse().map_err(|e| bad(format!("frame_index: {e}")))?;
        let mut v = [0.0; 4];
        for (k, s) in f[2..].iter().enumerate() {
            v[k] = s.parse().map_err(|e| bad(format!("{s:?}: {e}")))?;
        }
        let b = BBox::new(frame, v[0], v[1], v[2], v[3], Category::Building);
        match tracks.iter_mut().find(|t| t.id == id) {
            Some(t) => t.boxes.push(b),
            None => tracks.push(BuildingTrack { id, boxes: vec![b] }),
        }
    }
    Ok(tracks)
}

/// Display color for a category in overlays.
pub fn category_color(c: Category) -> Rgb<u8> {
    match c {
        Category::MovingVehicle => Rgb([255, 40, 40]),
        Category::StationaryVehicleOrFalse => Rgb([40, 120, 255]),
        Category::OtherMovingOrFalse => Rgb([255, 200, 0]),
        Category::Building => Rgb([0, 220, 90]),
        Category::Vehicle => Rgb([255, 255, 255]),
        Category::GroundTruth => Rgb([255, 0, 255]),
    }
}

/// Draws 1-pixel box outlines over a frame.
pub fn render_overlay(frame: &Frame, boxes: &[BBox]) -> RgbImage {
    let rgb = frame.to_rgb();
    let (w, h) = (rgb.width() as u32, rgb.height() as u32);
    let mut img = RgbImage::from_raw(w, h, rgb.to_u8()).expect("rgb buffer");
    for b in boxes {
        let Some(c) = b.clamp_to(w as usize, h as usize) else {
            continue;
        };
        let color = category_color(b.category);
        let x0 = c.x.floor() as u32;
        let y0 = c.y.floor() as u32;
        let x1 = (c.x2().ceil() as u32).saturating_sub(1).min(w - 1);
        let y1 = (c.y2().ceil() as u32).saturating_sub(1).min(h - 1);
        for x in x0..=x1 {
            img.put_pixel(x, y0, color);
            img.put_pixel(x, y1, color);
        }
        for y in y0..=y1 {
            img.put_pixel(x0, y, color);
            img.put_pixel(x1, y, color);
        }
    }
    img
}
