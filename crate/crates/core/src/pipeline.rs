//! Stage orchestration. Each stage reads its inputs from files and writes its
//! outputs under its own directory of `output_dir`, so any stage can be rerun
//! alone.
//!
//! ```text
//! georeg      stabilized/frame_NNNNN.png, stabilized/valid_NNNNN.png
//! fluxtensor  flux/trace_NNNNN.png (16-bit), flux/trace_scale.csv, flux/motion_NNNNN.png
//! appearance  appearance/vehicles.csv
//! fusion      fusion/categorized.csv, fusion/moving_NNNNN.png, fusion/building_NNNNN.png,
//!             fusion/buildings.csv, fusion/ladder_*.csv
//! semcodec    semcodec/video.svc, semcodec/compression.txt
//! eval        eval/scores.txt
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::appearance::{
    load_detections, rasterize_detections, read_categorized, read_detection_records, write_detections,
    DEFAULT_MIN_CONFIDENCE, DEFAULT_VEHICLE_CLASSES,
};
use crate::config::SequenceConfig;
use crate::detection::{Category, DetectionSet};
use crate::error::{Error, Result};
use crate::eval::{format_score_table, MatchConfig, MatchCriterion, MethodScore};
use crate::fluxtensor::{detect_motion, MotionFrame, TraceField};
use crate::frame::{load_frame, save_frame, Frame};
use crate::fusion::{aggregate_buildings, fuse_with_buildings, write_building_tracks, BuildingTrack, FusionOutput, StreamingFusion};
use crate::geometry::CameraPose;
use crate::georeg::{read_poses, warp_to_plane, PlaneConfig};
use crate::mask::BinaryMask;
use crate::semcodec::{compression_report, encode, lossless_reference_bytes, raw_reference_bytes, DEFAULT_QUALITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppearanceConfig {
    pub classes: Vec<String>,
    pub min_confidence: f64,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        Self {
            classes: DEFAULT_VEHICLE_CLASSES.iter().map(|s| s.to_string()).collect(),
            min_confidence: DEFAULT_MIN_CONFIDENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// IoU needed to link a building box to a track in the previous frame.
    pub building_iou_link: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { building_iou_link: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// JPEG quality of abstract frames; 100 stores them as PNG.
    pub quality: u8,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self { quality: DEFAULT_QUALITY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// `iou:<t>` or `centroid`.
    pub criterion: String,
    pub one_to_one: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            criterion: "iou:0.3".into(),
            one_to_one: true,
        }
    }
}

impl EvalConfig {
    pub fn match_config(&self) -> Result<MatchConfig> {
        let c = self.criterion.trim().to_ascii_lowercase();
        let criterion = if c == "centroid" {
            MatchCriterion::CentroidInBox
        } else if let Some(t) = c.strip_prefix("iou:") {
            MatchCriterion::Iou(
                t.parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad IoU threshold {t:?}")))?,
            )
        } else {
            return Err(Error::InvalidConfig(format!(
                "match criterion {c:?}: expected iou:<t> or centroid"
            )));
        };
        let cfg = MatchConfig {
            criterion,
            one_to_one: self.one_to_one,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_plane() -> PlaneConfig {
    PlaneConfig {
        output_width: 256,
        output_height: 256,
        plane_scale: 0.25,
        plane_origin: [-32.0, -32.0],
    }
}

/// Everything one pipeline run needs. Relative paths in a config file are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frames_dir: PathBuf,
    pub poses: PathBuf,
    pub detections: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub plane: PlaneConfig,
    pub sequence: SequenceConfig,
    pub appearance: AppearanceConfig,
    pub fusion: FusionConfig,
    pub codec: CodecConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frames_dir: "frames".into(),
            poses: "poses.csv".into(),
            detections: "detections.csv".into(),
            ground_truth: None,
            output_dir: "out".into(),
            plane: default_plane(),
            sequence: SequenceConfig::default(),
            appearance: AppearanceConfig::default(),
            fusion: FusionConfig::default(),
            codec: CodecConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.frames_dir);
        fix(&mut self.poses);
        fix(&mut self.detections);
        fix(&mut self.output_dir);
        if let Some(g) = &mut self.ground_truth {
            fix(g);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plane.validate()?;
        self.sequence.validate()?;
        self.eval.match_config()?;
        if !(1..=100).contains(&self.codec.quality) {
            return Err(Error::InvalidConfig(format!("quality {} outside 1..=100", self.codec.quality)));
        }
        if !(0.0..=1.0).contains(&self.appearance.min_confidence) {
            return Err(Error::InvalidConfig("min_confidence outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Pipeline stages in execution order, named after the module doing the work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Georeg,
    Fluxtensor,
    Appearance,
    Fusion,
    Semcodec,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Georeg,
        Stage::Fluxtensor,
        Stage::Appearance,
        Stage::Fusion,
        Stage::Semcodec,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Georeg => "georeg",
            Stage::Fluxtensor => "fluxtensor",
            Stage::Appearance => "appearance",
            Stage::Fusion => "fusion",
            Stage::Semcodec => "semcodec",
            Stage::Eval => "eval",
        }
    }

    /// Output directory below `output_dir`.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Georeg => "stabilized",
            Stage::Fluxtensor => "flux",
            Stage::Appearance => "appearance",
            Stage::Fusion => "fusion",
            Stage::Semcodec => "semcodec",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

// ---------------------------------------------------------------------------
// In-memory building blocks

/// Warps every frame onto the plane raster; returns frames and validity masks.
pub fn stabilize(frames: &[Frame], poses: &[CameraPose], plane: &PlaneConfig) -> Result<(Vec<Frame>, Vec<BinaryMask>)> {
    if frames.len() != poses.len() {
        return Err(Error::DimensionMismatch(format!("{} frames, {} poses", frames.len(), poses.len())));
    }
    let warped = frames
        .par_iter()
        .zip(poses)
        .map(|(f, p)| warp_to_plane(f, p, plane).map(|(w, m)| (w.with_index(f.index), m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(warped.into_iter().unzip())
}

pub fn motion_frames(frames: &[Frame], validity: Option<&[BinaryMask]>, config: &SequenceConfig) -> Result<Vec<MotionFrame>> {
    let mut out = Vec::new();
    detect_motion(frames, validity, config, |m| {
        out.push(m);
        Ok(())
    })?;
    Ok(out)
}

/// Detections of the three method-ladder rungs plus the full fusion output.
#[derive(Debug, Clone)]
pub struct FusedSequence {
    pub outputs: Vec<FusionOutput>,
    /// Every motion blob box.
    pub motion_only: DetectionSet,
    /// Appearance-confirmed motion, without the roof-top filter.
    pub motion_appearance: DetectionSet,
    /// Appearance-confirmed motion outside aggregated building cover.
    pub full: DetectionSet,
    pub tracks: Vec<BuildingTrack>,
}

pub const LADDER_NAMES: [&str; 3] = ["Motion only", "Motion + appearance", "Motion + appearance + building"];

pub fn fuse_sequence(
    motion: &[(usize, BinaryMask)],
    appearance: &DetectionSet,
    config: &SequenceConfig,
    building_iou_link: f64,
) -> Result<FusedSequence> {
    let mut streaming = StreamingFusion::new(config);
    let mut outputs = Vec::with_capacity(motion.len());
    let mut motion_only = Vec::new();
    let mut motion_appearance = Vec::new();
    let mut full = Vec::new();
    for (k, m) in motion {
        let app = rasterize_detections(appearance, *k, m.width(), m.height());
        let plain = fuse_with_buildings(m, &app, *k, config, None)?;
        motion_only.extend(plain.motion_blobs.iter().map(|b| b.with_category(Category::MovingVehicle)));
        motion_appearance.extend(plain.categorized.iter().filter(|b| b.category == Category::MovingVehicle).copied());
        let out = streaming.push(m, &app, *k)?;
        full.extend(out.categorized.iter().filter(|b| b.category == Category::MovingVehicle).copied());
        outputs.push(out);
    }
    let tracks = aggregate_buildings(streaming.building_history(), building_iou_link);
    Ok(FusedSequence {
        outputs,
        motion_only: DetectionSet::from_boxes(motion_only),
        motion_appearance: DetectionSet::from_boxes(motion_appearance),
        full: DetectionSet::from_boxes(full),
        tracks,
    })
}

impl FusedSequence {
    pub fn ladder(&self) -> [(&'static str, &DetectionSet); 3] {
        [
            (LADDER_NAMES[0], &self.motion_only),
            (LADDER_NAMES[1], &self.motion_appearance),
            (LADDER_NAMES[2], &self.full),
        ]
    }

    pub fn frame_indices(&self) -> Vec<usize> {
        self.outputs.iter().map(|o| o.frame_index).collect()
    }
}

/// Scores ladder detections against ground truth restricted to `frames`.
pub fn ladder_scores(
    gt: &DetectionSet,
    ladder: &[(&str, &DetectionSet)],
    frames: &[usize],
    cfg: &MatchConfig,
) -> Result<Vec<MethodScore>> {
    let mut frames = frames.to_vec();
    frames.sort_unstable();
    let gt = gt.filter(|b| frames.binary_search(&b.frame_index).is_ok());
    ladder
        .iter()
        .map(|(name, dt)| MethodScore::evaluate(name, &gt, dt, cfg))
        .collect()
}

// ---------------------------------------------------------------------------
// File conventions

pub fn indexed_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:05}.png")
}

fn trailing_index(stem: &str) -> Option<usize> {
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    digits.chars().rev().collect::<String>().parse().ok()
}

/// PNG files in `dir` whose names start with `prefix`, keyed by the trailing
/// number of the file stem.
pub fn list_indexed(dir: &Path, prefix: &str) -> Result<BTreeMap<usize, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if !is_png || !stem.starts_with(prefix) {
            continue;
        }
        let index = trailing_index(stem).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 0,
            reason: "file name carries no frame number".into(),
        })?;
        if let Some(prev) = out.insert(index, path.clone()) {
            return Err(Error::InvalidConfig(format!(
                "frame {index} appears twice: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Stores a trace as 16-bit gray scaled by its maximum; returns the scale.
pub fn save_trace_png(trace: &TraceField, path: &Path) -> Result<f64> {
    let scale = trace.max();
    let pixels: Vec<u16> = trace
        .values
        .iter()
        .map(|&v| if scale > 0.0 { (v / scale * 65535.0).round() as u16 } else { 0 })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(trace.width as u32, trace.height as u32, pixels).expect("buffer matches size");
    img.save(path)
        .map_err(|e| Error::Encode(format!("{}: {e}", path.display())))?;
    Ok(scale)
}

fn load_indexed_frames(files: &BTreeMap<usize, PathBuf>) -> Result<Vec<Frame>> {
    files
        .par_iter()
        .map(|(&i, p)| load_frame(p, i))
        .collect()
}

fn load_indexed_masks(files: &BTreeMap<usize, PathBuf>) -> Result<Vec<(usize, BinaryMask)>> {
    files
        .par_iter()
        .map(|(&i, p)| BinaryMask::load_png(p).map(|m| (i, m)))
        .collect()
}

// ---------------------------------------------------------------------------
// Stages

fn stage_dir(cfg: &PipelineConfig, stage: Stage) -> PathBuf {
    cfg.output_dir.join(stage.dir())
}

pub fn run_georeg(cfg: &PipelineConfig) -> Result<()> {
    let out = stage_dir(cfg, Stage::Georeg);
    let files = list_indexed(&cfg.frames_dir, "")?;
    if files.is_empty() {
        return Err(Error::EmptySequence);
    }
    let poses: BTreeMap<usize, CameraPose> = read_poses(&cfg.poses)?.into_iter().collect();
    create_dir(&out)?;
    files.par_iter().try_for_each(|(&i, path)| {
        let pose = poses.get(&i).ok_or_else(|| {
            Error::InvalidPose(format!("no pose for frame {i} in {}", cfg.poses.display()))
        })?;
        let frame = load_frame(path, i)?;
        let (warped, valid) = warp_to_plane(&frame, pose, &cfg.plane)?;
        save_frame(&warped, out.join(indexed_name("frame", i)))?;
        valid.save_png(out.join(indexed_name("valid", i)))
    })
}

pub fn run_fluxtensor(cfg: &PipelineConfig) -> Result<()> {
    let src = stage_dir(cfg, Stage::Georeg);
    let out = stage_dir(cfg, Stage::Fluxtensor);
    let frames = load_indexed_frames(&list_indexed(&src, "frame")?)?;
    let valid: Vec<BinaryMask> = load_indexed_masks(&list_indexed(&src, "valid")?)?
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    create_dir(&out)?;
    let mut sidecar = String::from("frame_index,scale,threshold,degenerate\n");
    detect_motion(&frames, Some(&valid), &cfg.sequence, |m| {
        let i = m.frame_index;
        let scale = save_trace_png(&m.flux, &out.join(indexed_name("trace", i)))?;
        m.threshold.mask.save_png(out.join(indexed_name("motion", i)))?;
        if m.threshold.degenerate {
            log::warn!("frame {i}: constant trace, motion mask left empty");
        }
        sidecar.push_str(&format!("{i},{scale:e},{:e},{}\n", m.threshold.threshold, m.threshold.degenerate));
        Ok(())
    })?;
    write_text(&out.join("trace_scale.csv"), &sidecar)
}

pub fn run_appearance(cfg: &PipelineConfig) -> Result<()> {
    let out = stage_dir(cfg, Stage::Appearance);
    let classes: Vec<&str> = cfg.appearance.classes.iter().map(String::as_str).collect();
    let ingested = load_detections(&cfg.detections, &classes, cfg.appearance.min_confidence)?;
    create_dir(&out)?;
    write_detections(out.join("vehicles.csv"), &ingested.detections)
}

pub fn run_fusion(cfg: &PipelineConfig) -> Result<()> {
    let out = stage_dir(cfg, Stage::Fusion);
    let motion = load_indexed_masks(&list_indexed(&stage_dir(cfg, Stage::Fluxtensor), "motion")?)?;
    let appearance = read_categorized(stage_dir(cfg, Stage::Appearance).join("vehicles.csv"))?;
    let fused = fuse_sequence(&motion, &appearance, &cfg.sequence, cfg.fusion.building_iou_link)?;
    create_dir(&out)?;
    fused.outputs.par_iter().try_for_each(|o| {
        o.moving_vehicle_mask.save_png(out.join(indexed_name("moving", o.frame_index)))?;
        o.building_mask.save_png(out.join(indexed_name("building", o.frame_index)))
    })?;
    let categorized = DetectionSet::from_boxes(fused.outputs.iter().flat_map(|o| o.categorized.iter().copied()));
    write_detections(out.join("categorized.csv"), &categorized)?;
    write_building_tracks(out.join("buildings.csv"), &fused.tracks)?;
    for (file, set) in [
        ("ladder_motion_only.csv", &fused.motion_only),
        ("ladder_motion_appearance.csv", &fused.motion_appearance),
        ("ladder_full.csv", &fused.full),
    ] {
        write_detections(out.join(file), set)?;
    }
    Ok(())
}

/// Encodes every stabilized frame; frames without a fusion mask (the ends of
/// the sequence the temporal window cannot reach) get an empty ROI.
pub fn run_semcodec(cfg: &PipelineConfig) -> Result<()> {
    let out = stage_dir(cfg, Stage::Semcodec);
    let mut masks: BTreeMap<usize, BinaryMask> = load_indexed_masks(&list_indexed(&stage_dir(cfg, Stage::Fusion), "moving")?)?
        .into_iter()
        .collect();
    let frames = load_indexed_frames(&list_indexed(&stage_dir(cfg, Stage::Georeg), "frame")?)?;
    if let Some(i) = masks.keys().find(|i| !frames.iter().any(|f| f.index == **i)) {
        return Err(Error::InvalidConfig(format!("no stabilized frame for mask {i}")));
    }
    let masks: Vec<BinaryMask> = frames
        .iter()
        .map(|f| masks.remove(&f.index).unwrap_or_else(|| BinaryMask::new(f.width(), f.height())))
        .collect();
    let container = encode(&frames, &masks, cfg.codec.quality)?;
    create_dir(&out)?;
    container.write(out.join("video.svc"))?;
    let report = compression_report(&container, lossless_reference_bytes(&frames)?, raw_reference_bytes(&frames))?;
    write_text(&out.join("compression.txt"), &report.table("Semantic container", frames.len()))
}

pub fn run_eval(cfg: &PipelineConfig) -> Result<()> {
    let out = stage_dir(cfg, Stage::Eval);
    let fusion = stage_dir(cfg, Stage::Fusion);
    let match_cfg = cfg.eval.match_config()?;
    create_dir(&out)?;
    let Some(gt_path) = &cfg.ground_truth else {
        return write_text(&out.join("scores.txt"), "no ground truth configured\n");
    };
    let gt = DetectionSet::from_boxes(
        read_detection_records(gt_path)?
            .iter()
            .map(|r| r.to_bbox(Category::GroundTruth)),
    );
    let frames: Vec<usize> = list_indexed(&fusion, "moving")?.into_keys().collect();
    let sets = [
        read_categorized(fusion.join("ladder_motion_only.csv"))?,
        read_categorized(fusion.join("ladder_motion_appearance.csv"))?,
        read_categorized(fusion.join("ladder_full.csv"))?,
    ];
    let ladder: Vec<(&str, &DetectionSet)> = LADDER_NAMES.iter().copied().zip(sets.iter()).collect();
    let rows = ladder_scores(&gt, &ladder, &frames, &match_cfg)?;
    write_text(&out.join("scores.txt"), &format_score_table(&rows, &match_cfg))
}

pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> std::result::Result<(), StageError> {
    let marker = cfg.output_dir.join(format!("{}.partial", stage.dir()));
    let fail = |source: Error| StageError { stage, source };
    create_dir(&cfg.output_dir).map_err(fail)?;
    write_text(&marker, "running\n").map_err(fail)?;
    let result = match stage {
        Stage::Georeg => run_georeg(cfg),
        Stage::Fluxtensor => run_fluxtensor(cfg),
        Stage::Appearance => run_appearance(cfg),
        Stage::Fusion => run_fusion(cfg),
        Stage::Semcodec => run_semcodec(cfg),
        Stage::Eval => run_eval(cfg),
    };
    match result {
        Ok(()) => fs::remove_file(&marker).map_err(|e| fail(Error::io(&marker, e))),
        Err(e) => {
            // best effort: the marker already exists
            let _ = write_text(&marker, &format!("{e}\n"));
            Err(fail(e))
        }
    }
}

/// Every file under `dir` with its size, sorted by relative path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<(String, u64)>,
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

impl Manifest {
    pub fn scan(dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
                let entry = entry.map_err(|e| Error::io(&d, e))?;
                let path = entry.path();
                let meta = entry.metadata().map_err(|e| Error::io(&path, e))?;
                if meta.is_dir() {
                    stack.push(path);
                    continue;
                }
                let rel = path
                    .strip_prefix(dir)
                    .expect("walk stays below root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                if rel != MANIFEST_NAME {
                    entries.push((rel, meta.len()));
                }
            }
        }
        entries.sort();
        Ok(Self { entries })
    }

    pub fn to_tsv(&self) -> String {
        self.entries.iter().map(|(p, n)| format!("{p}\t{n}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_tsv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn contains(&self, rel: &str) -> bool {
        self.entries.iter().any(|(p, _)| p == rel)
    }
}

/// Runs every stage in order and writes `manifest.tsv` into `output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<Manifest, StageError> {
    cfg.validate().map_err(|source| StageError {
        stage: Stage::Georeg,
        source,
    })?;
    for stage in Stage::ALL {
        log::info!("running stage {stage}");
        run_stage(cfg, stage)?;
    }
    let finish = || -> Result<Manifest> {
        let m = Manifest::scan(&cfg.output_dir)?;
        m.write(&cfg.output_dir.join(MANIFEST_NAME))?;
        Ok(m)
    };
    finish().map_err(|source| StageError {
        stage: Stage::Eval,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = PipelineConfig::from_toml("output_dir = \"o\"\n[sequence]\nthreshold = \"fixed:0.02\"\n").unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("o"));
        assert_eq!(cfg.sequence.threshold, crate::ThresholdMode::Fixed(0.02));
        assert_eq!(cfg.codec.quality, DEFAULT_QUALITY);
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn eval_criterion_parsing() {
        let mut e = EvalConfig::default();
        assert_eq!(e.match_config().unwrap().criterion, MatchCriterion::Iou(0.3));
        e.criterion = "centroid".into();
        assert_eq!(e.match_config().unwrap().criterion, MatchCriterion::CentroidInBox);
        e.criterion = "iou:1.5".into();
        assert!(e.match_config().is_err());
    }

    #[test]
    fn indexed_listing() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["frame_00002.png", "frame_00010.png", "valid_00002.png", "notes.txt"] {
            fs::write(dir.path().join(name), b"x").unwrap();
        }
        let frames = list_indexed(dir.path(), "frame").unwrap();
        assert_eq!(frames.keys().copied().collect::<Vec<_>>(), vec![2, 10]);
        assert_eq!(list_indexed(dir.path(), "valid").unwrap().len(), 1);
        assert!(list_indexed(dir.path(), "").is_err());
        fs::write(dir.path().join("frame_2.png"), b"x").unwrap();
        assert!(list_indexed(dir.path(), "frame").is_err());
    }

    #[test]
    fn manifest_sorted_with_sizes() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("b")).unwrap();
        fs::write(dir.path().join("b/z.txt"), b"12345").unwrap();
        fs::write(dir.path().join("a.txt"), b"1").unwrap();
        fs::write(dir.path().join(MANIFEST_NAME), b"old").unwrap();
        let m = Manifest::scan(dir.path()).unwrap();
        assert_eq!(m.to_tsv(), "a.txt\t1\nb/z.txt\t5\n");
    }

    #[test]
    fn trace_png_scale() {
        let dir = tempfile::tempdir().unwrap();
        let t = TraceField {
            frame_index: 0,
            width: 2,
            height: 1,
            values: vec![0.5, 2.0],
        };
        let p = dir.path().join("t.png");
        assert_eq!(save_trace_png(&t, &p).unwrap(), 2.0);
        let img = image::open(&p).unwrap().to_luma16();
        assert_eq!(img.as_raw(), &vec![16384u16, 65535]);
    }
}
