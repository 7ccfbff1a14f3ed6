use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fluxfuse::appearance::read_categorized;
use fluxfuse::fusion::{read_building_tracks, render_overlay};
use fluxfuse::pipeline::{indexed_name, list_indexed, run_pipeline, run_stage, PipelineConfig, Stage, MANIFEST_NAME};
use fluxfuse::semcodec::{decode, SemanticContainer};
use fluxfuse::synth::{write_scene, SceneSpec};
use fluxfuse::{load_frame, save_frame, ThresholdMode};

/// Moving-vehicle detection and semantic compression for georegistered
/// aerial video.
#[derive(Parser, Debug)]
#[command(name = "fluxfuse", version)]
struct Cli {
    /// Pipeline config file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the scene seed (synth).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene with ground truth, oracle detections and a pipeline config.
    Synth {
        /// Scene description (TOML).
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Warp frames onto the ground plane.
    Stabilize(Overrides),
    /// Flux-tensor motion masks.
    Flux(Overrides),
    /// Filter appearance detections.
    Ingest(Overrides),
    /// Motion/appearance fusion and building tracks.
    Fuse(Overrides),
    /// Write the semantic container.
    Encode(Overrides),
    /// Decode a container into PNG frames.
    Decode {
        container: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write abstract frames instead of compositing onto the base frame.
        #[arg(long)]
        raw: bool,
    },
    /// Score the method ladder against ground truth.
    Eval(Overrides),
    /// All stages in order, then the manifest.
    Run(Overrides),
    /// Summarize a finished run.
    Report {
        #[command(flatten)]
        overrides: Overrides,
        /// Also draw categorized boxes over the stabilized frames.
        #[arg(long)]
        overlays: bool,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// fixed:<v>, percentile:<p> or otsu.
    #[arg(long)]
    threshold: Option<ThresholdMode>,
    /// Abstract-frame JPEG quality; 100 is lossless.
    #[arg(long)]
    quality: Option<u8>,
    /// iou:<t> or centroid.
    #[arg(long)]
    criterion: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = &self.frames {
            cfg.frames_dir = v.clone();
        }
        if let Some(v) = &self.poses {
            cfg.poses = v.clone();
        }
        if let Some(v) = &self.detections {
            cfg.detections = v.clone();
        }
        if let Some(v) = &self.ground_truth {
            cfg.ground_truth = Some(v.clone());
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.threshold {
            cfg.sequence.threshold = v;
        }
        if let Some(v) = self.quality {
            cfg.codec.quality = v;
        }
        if let Some(v) = &self.criterion {
            cfg.eval.criterion = v.clone();
        }
    }
}

fn pipeline_config(path: Option<&Path>, overrides: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn stage(cli: &Cli, overrides: &Overrides, stage: Stage) -> Result<()> {
    let cfg = pipeline_config(cli.config.as_deref(), overrides)?;
    run_stage(&cfg, stage)?;
    Ok(())
}

fn synth(scene: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = SceneSpec::load(scene)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (seq, _) = write_scene(&spec, out)?;
    println!(
        "{} frames, {} moving and {} parked ground-truth boxes written to {}",
        seq.frames.len(),
        seq.moving_gt.len(),
        seq.parked_gt.len(),
        out.display()
    );
    Ok(())
}

fn decode_cmd(container: &Path, out: &Path, raw: bool) -> Result<()> {
    let c = SemanticContainer::read(container)?;
    let frames = decode(&c, !raw)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for f in &frames {
        save_frame(f, out.join(indexed_name("frame", f.index)))?;
    }
    println!("{} frames decoded to {}", frames.len(), out.display());
    Ok(())
}

fn print_file(path: &Path) -> Result<()> {
    match fs::read_to_string(path) {
        Ok(text) => {
            println!("{}:", path.display());
            print!("{text}");
            println!();
            Ok(())
        }
        Err(e) => bail!("{}: {e}", path.display()),
    }
}

fn report(cfg: &PipelineConfig, overlays: bool) -> Result<()> {
    let out = &cfg.output_dir;
    print_file(&out.join("eval/scores.txt"))?;
    print_file(&out.join("semcodec/compression.txt"))?;
    let tracks = read_building_tracks(out.join("fusion/buildings.csv"))?;
    println!("building tracks: {}", tracks.len());
    for t in &tracks {
        println!(
            "  track {}: frames {}..={}, roof-top spread {:.1} px",
            t.id,
            t.first_frame(),
            t.last_frame(),
            t.spread()
        );
    }
    let manifest = out.join(MANIFEST_NAME);
    if manifest.exists() {
        let n = fs::read_to_string(&manifest)?.lines().count();
        println!("manifest: {n} artifacts");
    }
    if overlays {
        let dets = read_categorized(out.join("fusion/categorized.csv"))?;
        let dir = out.join("report");
        fs::create_dir_all(&dir)?;
        let frames = list_indexed(&out.join("stabilized"), "frame")?;
        for i in dets.frame_indices() {
            let Some(path) = frames.get(&i) else { continue };
            let frame = load_frame(path, i)?;
            let target = dir.join(indexed_name("overlay", i));
            render_overlay(&frame, dets.frame(i))
                .save(&target)
                .with_context(|| format!("writing {}", target.display()))?;
        }
        println!("overlays written to {}", dir.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Synth { scene, out } => synth(scene, out, cli.seed),
        Command::Stabilize(o) => stage(&cli, o, Stage::Georeg),
        Command::Flux(o) => stage(&cli, o, Stage::Fluxtensor),
        Command::Ingest(o) => stage(&cli, o, Stage::Appearance),
        Command::Fuse(o) => stage(&cli, o, Stage::Fusion),
        Command::Encode(o) => stage(&cli, o, Stage::Semcodec),
        Command::Eval(o) => stage(&cli, o, Stage::Eval),
        Command::Decode { container, out, raw } => decode_cmd(container, out, *raw),
        Command::Run(o) => {
            let cfg = pipeline_config(cli.config.as_deref(), o)?;
            let manifest = run_pipeline(&cfg)?;
            println!(
                "{} artifacts listed in {}",
                manifest.entries.len(),
                cfg.output_dir.join(MANIFEST_NAME).display()
            );
            Ok(())
        }
        Command::Report { overrides, overlays } => {
            let cfg = pipeline_config(cli.config.as_deref(), overrides)?;
            report(&cfg, *overlays)
        }
    }
}
