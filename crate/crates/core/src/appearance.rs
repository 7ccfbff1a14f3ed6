//! Ingest of externally produced vehicle detections and their rasterization
//! into appearance masks.
//!
//! Detection files are CSV with the header
//! `frame_index,class,confidence,x,y,w,h`; coordinates are stabilized-plane
//! pixels.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{BBox, Category, DetectionSet};
use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::mask::BinaryMask;

/// Classes merged into the single vehicle class by default.
pub const DEFAULT_VEHICLE_CLASSES: [&str; 3] = ["car", "pick-up", "van"];

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.25;

/// One line of a detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame_index: usize,
    pub class: String,
    pub confidence: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl DetectionRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(format!("box size {}x{} must be positive", self.w, self.h));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0,1]", self.confidence));
        }
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        Ok(())
    }

    pub fn to_bbox(&self, category: Category) -> BBox {
        BBox::new(self.frame_index, self.x, self.y, self.w, self.h, category)
            .with_confidence(self.confidence)
    }
}

/// Parses detection records. `path` only labels errors.
pub fn parse_detection_records(reader: impl Read, path: &Path) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let rec: DetectionRecord = row
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        rec.validate().map_err(|reason| parse_err(line, reason))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_detection_records(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detection_records(file, path)
}

/// Detections after class filtering, plus counts of records whose class was
/// not in the filter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub detections: DetectionSet,
    pub unknown_classes: BTreeMap<String, usize>,
}

/// Keeps records whose class is in `class_filter` (case-insensitive) and whose
/// confidence is at least `min_confidence`, merged into [`Category::Vehicle`].
pub fn filter_records(
    records: &[DetectionRecord],
    class_filter: &[&str],
    min_confidence: f64,
) -> Ingested {
    let classes: BTreeSet<String> = class_filter.iter().map(|c| c.trim().to_lowercase()).collect();
    let mut unknown = BTreeMap::new();
    let mut kept = Vec::new();
    for r in records {
        if !classes.contains(&r.class.trim().to_lowercase()) {
            *unknown.entry(r.class.clone()).or_insert(0) += 1;
            continue;
        }
        if r.confidence >= min_confidence {
            kept.push(r.to_bbox(Category::Vehicle));
        }
    }
    for (class, n) in &unknown {
        log::warn!("{n} detection(s) with class {class:?} outside the vehicle filter");
    }
    Ingested {
        detections: DetectionSet::from_boxes(kept),
        unknown_classes: unknown,
    }
}

pub fn load_detections(
    path: impl AsRef<Path>,
    class_filter: &[&str],
    min_confidence: f64,
) -> Result<Ingested> {
    let records = read_detection_records(path)?;
    Ok(filter_records(&records, class_filter, min_confidence))
}

/// Writes a detection set in the detection file format, using the category
/// label as the class column.
pub fn write_detections(path: impl AsRef<Path>, dets: &DetectionSet) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_detections_to(file, dets).map_err(|e| Error::io(path, e))
}

pub fn write_detections_to(writer: impl Write, dets: &DetectionSet) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["frame_index", "class", "confidence", "x", "y", "w", "h"])?;
    for b in dets.iter() {
        w.serialize(DetectionRecord {
            frame_index: b.frame_index,
            class: b.category.label().to_string(),
            confidence: b.confidence,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        })?;
    }
    w.flush()
}

/// Writes raw detection records, e.g. an appearance detector's output.
pub fn write_records(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in records {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_detections`], restoring categories from
/// the class column.
pub fn read_categorized(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    let records = read_detection_records(path)?;
    let mut boxes = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let category = r.class.parse::<Category>().map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 2,
            reason,
        })?;
        boxes.push(r.to_bbox(category));
    }
    Ok(DetectionSet::from_boxes(boxes))
}

/// Pixel `(px, py)` is covered when its center lies in `[x, x+w) × [y, y+h)`.
fn pixel_span(start: f64, len: f64, limit: usize) -> std::ops::Range<usize> {
    let lo = (start - 0.5).ceil().max(0.0);
    let hi = (start + len - 0.5).ceil().clamp(0.0, limit as f64);
    if hi <= lo {
        0..0
    } else {
        lo as usize..hi as usize
    }
}

/// Paints one box into a mask (pixel-center rule, clamped to the raster).
pub fn paint_box(mask: &mut BinaryMask, b: &BBox) {
    let (w, h) = (mask.width(), mask.height());
    let xs = pixel_span(b.x, b.w, w);
    for y in pixel_span(b.y, b.h, h) {
        for x in xs.clone() {
            mask.set(x, y, true);
        }
    }
}

/// Union of the detection rectangles of one frame; all-false when the frame
/// has no records.
pub fn rasterize_detections(
    dets: &DetectionSet,
    frame_index: usize,
    width: usize,
    height: usize,
) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    for b in dets.frame(frame_index) {
        paint_box(&mut mask, b);
    }
    mask
}

/// Maps a box through `h` and returns the axis-aligned hull of its corners.
/// `None` when a corner maps to infinity.
pub fn warp_box(b: &BBox, h: &Homography) -> Option<BBox> {
    let corners = [
        [b.x, b.y],
        [b.x2(), b.y],
        [b.x, b.y2()],
        [b.x2(), b.y2()],
    ];
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in corners {
        let p = h.apply(c)?;
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some(BBox {
        x: lo[0],
        y: lo[1],
        w: hi[0] - lo[0],
        h: hi[1] - lo[1],
        ..*b
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn parse(text: &str) -> Result<Vec<DetectionRecord>> {
        parse_detection_records(text.as_bytes(), Path::new("dets.csv"))
    }

    const HEADER: &str = "frame_index,class,confidence,x,y,w,h\n";

    #[test]
    fn empty_file_is_empty_set() {
        let recs = parse(HEADER).unwrap();
        let got = filter_records(&recs, &DEFAULT_VEHICLE_CLASSES, 0.5);
        assert!(got.detections.is_empty());
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn filter_by_class_and_confidence() {
        let text = format!("{HEADER}0,car,0.9,1,1,4,4\n0,boat,0.8,2,2,4,4\n0,van,0.4,3,3,4,4\n");
        let recs = parse(&text).unwrap();
        let got = filter_records(&recs, &DEFAULT_VEHICLE_CLASSES, 0.5);
        // independent predicate over the raw rows
        let expected: Vec<_> = recs
            .iter()
            .filter(|r| ["car", "pick-up", "van"].contains(&r.class.as_str()) && r.confidence >= 0.5)
            .collect();
        assert_eq!(expected.len(), 1);
        assert_eq!(got.detections.len(), 1);
        let b = got.detections.frame(0)[0];
        assert_eq!((b.x, b.category, b.confidence), (1.0, Category::Vehicle, 0.9));
        assert_eq!(got.unknown_classes.get("boat"), Some(&1));
    }

    #[test]
    fn duplicates_collapse_and_order_is_irrelevant() {
        let rows = [
            "3,car,0.9,1,1,4,4",
            "1,Van,0.7,0,0,2,2",
            "3,car,0.9,1,1,4,4",
            "1,pick-up,0.6,5,5,2,3",
        ];
        let a = parse(&format!("{HEADER}{}\n", rows.join("\n"))).unwrap();
        let mut rev = rows;
        rev.reverse();
        let b = parse(&format!("{HEADER}{}\n", rev.join("\n"))).unwrap();
        let sa = filter_records(&a, &DEFAULT_VEHICLE_CLASSES, 0.25).detections;
        let sb = filter_records(&b, &DEFAULT_VEHICLE_CLASSES, 0.25).detections;
        assert_eq!(sa, sb);
        assert_eq!(sa.len(), 3);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse(&format!("{HEADER}0,car,0.9,1,1,4,4\n0,car,zero,1,1,4,4\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse(&format!("{HEADER}0,car,0.9,1,1,4,4\n0,car,0.9,1,1,0,4\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse(&format!("{HEADER}-1,car,0.9,1,1,4,4\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rasterize_simple() {
        let empty = DetectionSet::new();
        assert!(rasterize_detections(&empty, 0, 4, 4).is_empty());
        let one = DetectionSet::from_boxes([BBox::new(0, 0.0, 0.0, 2.0, 2.0, Category::Vehicle)]);
        let m = rasterize_detections(&one, 0, 4, 4);
        assert_eq!(m.count(), 4);
        assert!(m.get(0, 0) && m.get(1, 1) && !m.get(2, 0));
        assert!(rasterize_detections(&one, 1, 4, 4).is_empty());
        let outside = DetectionSet::from_boxes([BBox::new(0, 10.0, 10.0, 2.0, 2.0, Category::Vehicle)]);
        assert!(rasterize_detections(&outside, 0, 4, 4).is_empty());
    }

    #[test]
    fn rasterize_matches_brute_force_union() {
        let boxes = [
            BBox::new(0, 1.0, 1.0, 5.0, 4.0, Category::Vehicle),
            BBox::new(0, 3.0, 2.0, 6.0, 6.0, Category::Vehicle),
            BBox::new(0, -2.0, 7.0, 4.0, 5.0, Category::Vehicle),
        ];
        let set = DetectionSet::from_boxes(boxes);
        let m = rasterize_detections(&set, 0, 10, 10);
        let brute = BinaryMask::from_fn(10, 10, |x, y| {
            let c = [x as f64 + 0.5, y as f64 + 0.5];
            boxes.iter().any(|b| b.contains_point(c))
        });
        assert_eq!(m, brute);
        // integer boxes: count equals the clamped union area
        assert_eq!(m.count(), 20 + 36 - 9 + 2 * 3);
    }

    #[test]
    fn warp_box_translation() {
        let h = crate::geometry::normalize_homography(&Matrix3::new(
            1.0, 0.0, 3.0, 0.0, 1.0, -2.0, 0.0, 0.0, 1.0,
        ))
        .unwrap();
        let b = warp_box(&BBox::new(0, 1.0, 5.0, 2.0, 3.0, Category::Vehicle), &h).unwrap();
        assert!((b.x - 4.0).abs() < 1e-12 && (b.y - 3.0).abs() < 1e-12);
        assert!((b.w - 2.0).abs() < 1e-12 && (b.h - 3.0).abs() < 1e-12);
    }

    #[test]
    fn categorized_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let set = DetectionSet::from_boxes([
            BBox::new(2, 1.5, 2.25, 3.0, 4.0, Category::MovingVehicle).with_confidence(0.75),
            BBox::new(4, 0.0, 0.0, 30.0, 20.0, Category::Building),
        ]);
        write_detections(&p, &set).unwrap();
        assert_eq!(read_categorized(&p).unwrap(), set);
    }
}
