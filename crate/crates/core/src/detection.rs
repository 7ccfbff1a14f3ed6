//! Bounding boxes, detection categories and per-frame detection sets.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Semantic label attached to a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    /// Motion blob confirmed by appearance.
    MovingVehicle,
    /// Appearance hit without motion: parked vehicle or false detection.
    StationaryVehicleOrFalse,
    /// Small motion blob without appearance support.
    OtherMovingOrFalse,
    /// Large motion blob without appearance support (parallax roof-top).
    Building,
    /// Raw appearance detection after class merging.
    Vehicle,
    GroundTruth,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::MovingVehicle,
        Category::StationaryVehicleOrFalse,
        Category::OtherMovingOrFalse,
        Category::Building,
        Category::Vehicle,
        Category::GroundTruth,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::MovingVehicle => "MovingVehicle",
            Category::StationaryVehicleOrFalse => "StationaryVehicleOrFalse",
            Category::OtherMovingOrFalse => "OtherMovingOrFalse",
            Category::Building => "Building",
            Category::Vehicle => "Vehicle",
            Category::GroundTruth => "GT",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// Axis-aligned box in pixels, anchored at its top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub category: Category,
    pub confidence: f64,
    pub frame_index: usize,
}

impl BBox {
    pub fn new(frame_index: usize, x: f64, y: f64, w: f64, h: f64, category: Category) -> Self {
        Self {
            x,
            y,
            w,
            h,
            category,
            confidence: 1.0,
            frame_index,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = category;
        self
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x + self.w / 2.0, self.y + self.h / 2.0]
    }

    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[0] < self.x2() && p[1] >= self.y && p[1] < self.y2()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2().min(other.x2()) - self.x.max(other.x);
        let h = self.y2().min(other.y2()) - self.y.max(other.y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Smallest box covering both.
    pub fn union_hull(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox {
            x,
            y,
            w: self.x2().max(other.x2()) - x,
            h: self.y2().max(other.y2()) - y,
            ..*self
        }
    }

    /// Clips to `[0,width) x [0,height)`; `None` if nothing remains.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<BBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.x2().min(width as f64);
        let y1 = self.y2().min(height as f64);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            ..*self
        })
    }

    fn canonical_cmp(&self, other: &BBox) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
            .then(self.category.cmp(&other.category))
            .then(self.confidence.total_cmp(&other.confidence))
    }
}

/// Boxes grouped by frame index, each frame's list in canonical order with
/// exact duplicates removed. Insertion order never affects the contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    frames: BTreeMap<usize, Vec<BBox>>,
}

impl DetectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_boxes(boxes: impl IntoIterator<Item = BBox>) -> Self {
        let mut set = Self::new();
        for b in boxes {
            set.push_unsorted(b);
        }
        set.canonicalize();
        set
    }

    fn push_unsorted(&mut self, b: BBox) {
        self.frames.entry(b.frame_index).or_default().push(b);
    }

    fn canonicalize(&mut self) {
        for boxes in self.frames.values_mut() {
            boxes.sort_by(BBox::canonical_cmp);
            boxes.dedup_by(|a, b| a.canonical_cmp(b) == Ordering::Equal);
        }
    }

    pub fn insert(&mut self, b: BBox) {
        self.push_unsorted(b);
        let boxes = self.frames.get_mut(&b.frame_index).expect("just inserted");
        boxes.sort_by(BBox::canonical_cmp);
        boxes.dedup_by(|a, b| a.canonical_cmp(b) == Ordering::Equal);
    }

    pub fn extend(&mut self, boxes: impl IntoIterator<Item = BBox>) {
        for b in boxes {
            self.push_unsorted(b);
        }
        self.canonicalize();
    }

    /// Boxes of one frame; empty for frames without records.
    pub fn frame(&self, index: usize) -> &[BBox] {
        self.frames.get(&index).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BBox> {
        self.frames.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn filter(&self, mut keep: impl FnMut(&BBox) -> bool) -> DetectionSet {
        DetectionSet::from_boxes(self.iter().copied().filter(|b| keep(b)))
    }

    pub fn with_category(&self, category: Category) -> DetectionSet {
        self.filter(|b| b.category == category)
    }

    /// Restricts to frames in `[start, end]`.
    pub fn frame_range(&self, start: usize, end: usize) -> DetectionSet {
        self.filter(|b| (start..=end).contains(&b.frame_index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(0, x, y, w, h, Category::Vehicle)
    }

    #[test]
    fn iou_cases() {
        assert_eq!(bx(0.0, 0.0, 2.0, 2.0).iou(&bx(0.0, 0.0, 2.0, 2.0)), 1.0);
        assert_eq!(bx(0.0, 0.0, 2.0, 2.0).iou(&bx(2.0, 0.0, 2.0, 2.0)), 0.0);
        let v = bx(0.0, 0.0, 2.0, 2.0).iou(&bx(1.0, 0.0, 2.0, 2.0));
        assert!((v - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn clamp() {
        let b = bx(-1.0, -1.0, 3.0, 3.0).clamp_to(4, 4).unwrap();
        assert_eq!((b.x, b.y, b.w, b.h), (0.0, 0.0, 2.0, 2.0));
        assert!(bx(5.0, 0.0, 1.0, 1.0).clamp_to(4, 4).is_none());
    }

    #[test]
    fn set_is_order_independent_and_deduplicated() {
        let a = bx(1.0, 1.0, 2.0, 2.0);
        let b = BBox { frame_index: 2, ..bx(0.0, 0.0, 1.0, 1.0) };
        let c = bx(0.0, 5.0, 1.0, 1.0);
        let s1 = DetectionSet::from_boxes([a, b, c, a]);
        let s2 = DetectionSet::from_boxes([c, a, b]);
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 3);
        assert_eq!(s1.frame(0).len(), 2);
        assert!(s1.frame(1).is_empty());
    }

    #[test]
    fn category_labels_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.label().parse::<Category>().unwrap(), c);
        }
        assert!("boat".parse::<Category>().is_err());
    }
}
