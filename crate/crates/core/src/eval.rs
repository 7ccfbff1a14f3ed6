//! Precision, recall and F-measure with explicit ground-truth matching.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::detection::{BBox, DetectionSet};
use crate::error::{Error, Result};

/// When a detection counts as hitting a ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchCriterion {
    /// IoU at or above the threshold, in (0, 1].
    Iou(f64),
    /// Detection center inside the ground-truth box.
    CentroidInBox,
}

impl MatchCriterion {
    pub fn accepts(&self, gt: &BBox, dt: &BBox) -> bool {
        match *self {
            MatchCriterion::Iou(t) => gt.iou(dt) >= t,
            MatchCriterion::CentroidInBox => gt.contains_point(dt.center()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MatchCriterion::Iou(t) => format!("IoU >= {t:.2}"),
            MatchCriterion::CentroidInBox => "detection centroid inside GT box".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub criterion: MatchCriterion,
    /// Greedy one-to-one assignment; otherwise any accepted pair counts.
    pub one_to_one: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            criterion: MatchCriterion::Iou(0.3),
            one_to_one: true,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if let MatchCriterion::Iou(t) = self.criterion {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidConfig(format!("IoU threshold {t} outside (0,1]")));
            }
        }
        Ok(())
    }
}

/// One accepted GT/DT pair; indices refer to the frame's box slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub frame_index: usize,
    pub gt: usize,
    pub dt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub gt_count: usize,
    pub dt_count: usize,
    pub pairs: Vec<MatchPair>,
}

/// Matches one frame. Returns accepted pairs and the TP count.
pub fn match_frame(gt: &[BBox], dt: &[BBox], cfg: &MatchConfig) -> (Vec<(usize, usize, f64)>, usize) {
    let mut cand: Vec<(usize, usize, f64)> = Vec::new();
    for (g, gb) in gt.iter().enumerate() {
        for (d, db) in dt.iter().enumerate() {
            if cfg.criterion.accepts(gb, db) {
                cand.push((g, d, gb.iou(db)));
            }
        }
    }
    if !cfg.one_to_one {
        let mut gt_hit = vec![false; gt.len()];
        let mut dt_hit = vec![false; dt.len()];
        for &(g, d, _) in &cand {
            gt_hit[g] = true;
            dt_hit[d] = true;
        }
        // TP must not exceed either count for precision to stay a ratio
        let tp = gt_hit.iter().filter(|&&b| b).count().min(dt_hit.iter().filter(|&&b| b).count());
        return (cand, tp);
    }
    cand.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut gt_used = vec![false; gt.len()];
    let mut dt_used = vec![false; dt.len()];
    let mut pairs = Vec::new();
    for (g, d, iou) in cand {
        if gt_used[g] || dt_used[d] {
            continue;
        }
        gt_used[g] = true;
        dt_used[d] = true;
        pairs.push((g, d, iou));
    }
    let tp = pairs.len();
    (pairs, tp)
}

/// Per-frame matching over every frame present in either set.
pub fn match_detections(gt: &DetectionSet, dt: &DetectionSet, cfg: &MatchConfig) -> MatchResult {
    let mut frames: Vec<usize> = gt.frame_indices().chain(dt.frame_indices()).collect();
    frames.sort_unstable();
    frames.dedup();
    let per_frame: Vec<(usize, Vec<(usize, usize, f64)>, usize)> = frames
        .par_iter()
        .map(|&f| {
            let (pairs, tp) = match_frame(gt.frame(f), dt.frame(f), cfg);
            (f, pairs, tp)
        })
        .collect();
    let mut tp = 0;
    let mut pairs = Vec::new();
    for (f, p, t) in per_frame {
        tp += t;
        pairs.extend(p.into_iter().map(|(g, d, iou)| MatchPair {
            frame_index: f,
            gt: g,
            dt: d,
            iou,
        }));
    }
    MatchResult {
        tp,
        gt_count: gt.len(),
        dt_count: dt.len(),
        pairs,
    }
}

/// Scores in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Precision = TP/DT, recall = TP/GT, in percent rounded to 2 decimals.
pub fn metrics(tp: usize, gt_count: usize, dt_count: usize) -> Result<Metrics> {
    if tp > gt_count || tp > dt_count {
        return Err(Error::InconsistentCounts {
            tp,
            gt: gt_count,
            dt: dt_count,
        });
    }
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let p = ratio(tp, dt_count);
    let r = ratio(tp, gt_count);
    Ok(Metrics {
        precision: round2(p),
        recall: round2(r),
        f_measure: round2(f_measure(p, r)),
    })
}

/// A named row of the detection-score table.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScore {
    pub method: String,
    pub tp: usize,
    pub gt_count: usize,
    pub dt_count: usize,
    pub metrics: Metrics,
}

impl MethodScore {
    pub fn evaluate(method: &str, gt: &DetectionSet, dt: &DetectionSet, cfg: &MatchConfig) -> Result<Self> {
        let m = match_detections(gt, dt, cfg);
        Ok(Self {
            method: method.to_string(),
            tp: m.tp,
            gt_count: m.gt_count,
            dt_count: m.dt_count,
            metrics: metrics(m.tp, m.gt_count, m.dt_count)?,
        })
    }
}

/// Aligned text table: method, precision, recall, F-measure and raw counts.
pub fn format_score_table(rows: &[MethodScore], cfg: &MatchConfig) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>9}  {:>7}  {:>9}  {:>6}  {:>6}  {:>6}",
        "Method", "Precision", "Recall", "F-measure", "TP", "GT", "DT"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.2}  {:>7.2}  {:>9.2}  {:>6}  {:>6}  {:>6}",
            r.method, r.metrics.precision, r.metrics.recall, r.metrics.f_measure, r.tp, r.gt_count, r.dt_count
        );
    }
    let _ = writeln!(
        s,
        "matching: {}, {}",
        cfg.criterion.describe(),
        if cfg.one_to_one { "greedy one-to-one" } else { "many-to-many" }
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::Category;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bx(frame: usize, x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(frame, x, y, w, h, Category::GroundTruth)
    }

    #[test]
    fn identical_and_disjoint() {
        let gt = DetectionSet::from_boxes([bx(0, 0.0, 0.0, 4.0, 4.0), bx(1, 5.0, 5.0, 3.0, 3.0)]);
        let cfg = MatchConfig::default();
        assert_eq!(match_detections(&gt, &gt, &cfg).tp, 2);
        let far = DetectionSet::from_boxes([bx(0, 50.0, 0.0, 4.0, 4.0), bx(2, 5.0, 5.0, 3.0, 3.0)]);
        let m = match_detections(&gt, &far, &cfg);
        assert_eq!((m.tp, m.gt_count, m.dt_count), (0, 2, 2));
    }

    #[test]
    fn centroid_criterion_and_many_to_many() {
        let gt = DetectionSet::from_boxes([bx(0, 0.0, 0.0, 10.0, 10.0)]);
        let dt = DetectionSet::from_boxes([bx(0, 4.0, 4.0, 2.0, 2.0), bx(0, 3.0, 3.0, 1.0, 1.0)]);
        let c = MatchConfig {
            criterion: MatchCriterion::CentroidInBox,
            one_to_one: true,
        };
        assert_eq!(match_detections(&gt, &dt, &c).tp, 1);
        assert_eq!(match_detections(&gt, &dt, &MatchConfig::default()).tp, 0);
        let many = MatchConfig { one_to_one: false, ..c };
        let m = match_detections(&gt, &dt, &many);
        assert_eq!(m.tp, 1);
        assert_eq!(m.pairs.len(), 2);
        metrics(m.tp, m.gt_count, m.dt_count).unwrap();
    }

    /// Best achievable TP over all injective GT→DT assignments.
    fn exhaustive(gt: &[BBox], dt: &[BBox], crit: MatchCriterion) -> usize {
        fn rec(g: usize, gt: &[BBox], dt: &[BBox], used: &mut Vec<bool>, crit: MatchCriterion) -> usize {
            if g == gt.len() {
                return 0;
            }
            let mut best = rec(g + 1, gt, dt, used, crit);
            for d in 0..dt.len() {
                if !used[d] && crit.accepts(&gt[g], &dt[d]) {
                    used[d] = true;
                    best = best.max(1 + rec(g + 1, gt, dt, used, crit));
                    used[d] = false;
                }
            }
            best
        }
        rec(0, gt, dt, &mut vec![false; dt.len()], crit)
    }

    #[test]
    fn greedy_against_exhaustive_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cfg = MatchConfig::default();
        let mut disagreements = 0;
        for trial in 0..500 {
            let rand_box = |rng: &mut ChaCha8Rng| {
                bx(0, rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), rng.gen_range(3.0..8.0), rng.gen_range(3.0..8.0))
            };
            let gt: Vec<BBox> = (0..5).map(|_| rand_box(&mut rng)).collect();
            let dt: Vec<BBox> = (0..7).map(|_| rand_box(&mut rng)).collect();
            let (_, greedy) = match_frame(&gt, &dt, &cfg);
            let optimal = exhaustive(&gt, &dt, cfg.criterion);
            assert!(greedy <= optimal);
            // greedy maximal matching is at least half of optimal
            assert!(2 * greedy >= optimal);
            if greedy != optimal {
                disagreements += 1;
                eprintln!("trial {trial}: greedy {greedy} vs optimal {optimal}");
            }
        }
        assert!(disagreements < 50, "{disagreements} disagreements");
    }

    #[test]
    fn table1_f_measures() {
        for (p, r, f) in [
            (26.91, 72.56, 39.26),
            (9.37, 83.15, 16.85),
            (53.09, 71.53, 60.94),
            (69.70, 70.53, 70.12),
        ] {
            assert!((f_measure(p, r) - f).abs() <= 0.01, "{p} {r}");
        }
    }

    #[test]
    fn metric_edge_cases() {
        let m = metrics(10, 10, 10).unwrap();
        assert_eq!((m.precision, m.recall, m.f_measure), (100.0, 100.0, 100.0));
        let m = metrics(0, 5, 0).unwrap();
        assert_eq!((m.precision, m.recall, m.f_measure), (0.0, 0.0, 0.0));
        assert!(matches!(metrics(3, 2, 5), Err(Error::InconsistentCounts { .. })));
        assert!(matches!(metrics(3, 5, 2), Err(Error::InconsistentCounts { .. })));
    }

    #[test]
    fn harmonic_mean_bounds_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(0.0..100.0);
            let r: f64 = rng.gen_range(0.0..100.0);
            let f = f_measure(p, r);
            assert!(f >= p.min(r) - 1e-9 && f <= p.max(r) + 1e-9);
            assert_eq!(f, f_measure(r, p));
        }
    }

    #[test]
    fn extra_unmatched_detection_never_helps() {
        let gt = DetectionSet::from_boxes([bx(0, 0.0, 0.0, 4.0, 4.0), bx(0, 10.0, 0.0, 4.0, 4.0)]);
        let mut dt = DetectionSet::from_boxes([bx(0, 0.0, 0.0, 4.0, 4.0)]);
        let cfg = MatchConfig::default();
        let before = MethodScore::evaluate("a", &gt, &dt, &cfg).unwrap().metrics;
        dt.insert(bx(0, 30.0, 30.0, 2.0, 2.0));
        let after = MethodScore::evaluate("a", &gt, &dt, &cfg).unwrap().metrics;
        assert!(after.precision <= before.precision);
        assert_eq!(after.recall, before.recall);
    }

    #[test]
    fn table_text() {
        let gt = DetectionSet::from_boxes([bx(0, 0.0, 0.0, 4.0, 4.0)]);
        let row = MethodScore::evaluate("Flux", &gt, &gt, &MatchConfig::default()).unwrap();
        let t = format_score_table(&[row], &MatchConfig::default());
        assert!(t.contains("100.00"));
        assert!(t.contains("IoU >= 0.30"));
    }
}
