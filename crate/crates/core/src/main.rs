use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flowcut::affinity::{AffinityConfig, DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_TAU};
use flowcut::eval::{
    evaluate, predictions_from_dataset, read_predictions, EvalError, Prediction, DEFAULT_AP_SCORE_THRESH,
    DEFAULT_JF_SCORE_THRESH,
};
use flowcut::maskcut::{MaskCutConfig, MaskCutError, DEFAULT_MAX_MASKS};
use flowcut::matching::{CurateConfig, MatchError, MatchMode, DEFAULT_IOU_THRESH, MAX_GAP};
use flowcut::pipeline::{self, ExtractConfig, OutputSize, PipelineError};
use flowcut::synth::{self, ShapeKind, SynthError, SynthSpec};
use flowcut::tensor_io::{read_dataset, write_dataset, TensorIoError};

#[derive(Parser)]
#[command(
    name = "flowcut",
    version,
    about = "Flow-fused normalized-cut pseudo-labels for video instance segmentation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cut every frame's features into instance masks.
    Extract(ExtractArgs),
    /// Pair frames and keep consistently overlapping instances.
    Curate(CurateArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic feature corpus with ground truth.
    Synth(SynthArgs),
    /// Draw mask boundaries, one PNG per frame.
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct WorkerArgs {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

impl WorkerArgs {
    fn count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    features_dir: PathBuf,
    /// Required unless --alpha is 1.
    #[arg(long)]
    flow_features_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_MASKS)]
    max_masks: usize,
    /// Output pixels per patch side (ignored with --height/--width).
    #[arg(long, default_value_t = 8)]
    patch_px: usize,
    #[arg(long, requires = "width")]
    height: Option<usize>,
    #[arg(long, requires = "height")]
    width: Option<usize>,
    #[command(flatten)]
    workers: WorkerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurateArgs {
    #[arg(long)]
    masks_dir: PathBuf,
    /// Frame gaps to pair, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4])]
    gaps: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESH)]
    iou_thresh: f64,
    /// Never match two masks to the same mask of the other frame.
    #[arg(long)]
    one_to_one: bool,
    #[command(flatten)]
    workers: WorkerArgs,
    /// Directory for dataset.json and report.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth dataset JSON.
    #[arg(long)]
    gt: PathBuf,
    /// Prediction list JSON, or a dataset JSON (scored 1.0).
    #[arg(long)]
    preds: PathBuf,
    /// Score threshold for AP/AR.
    #[arg(long, default_value_t = DEFAULT_AP_SCORE_THRESH)]
    score_thresh: f64,
    /// Score threshold for J/F.
    #[arg(long, default_value_t = DEFAULT_JF_SCORE_THRESH)]
    jf_score_thresh: f64,
    /// Report JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Disc,
    Rectangle,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    videos: usize,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    rows: usize,
    #[arg(long, default_value_t = 16)]
    cols: usize,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    patch_px: usize,
    #[arg(long, default_value_t = 2)]
    objects: usize,
    #[arg(long, value_enum, default_value_t = ShapeArg::Disc)]
    shape: ShapeArg,
    #[arg(long, default_value_t = 0.04)]
    noise_sigma: f64,
    /// Add a static salient rectangle.
    #[arg(long)]
    distractor: bool,
    /// Frame offset the flow features describe; falls back to the negative
    /// offset near the end of a video.
    #[arg(long, default_value_t = 4)]
    flow_gap: usize,
    /// Writes rgb/, flow/ and gt.json here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OverlayArgs {
    /// Dataset JSON; tracks colored by track id.
    #[arg(long, conflicts_with = "masks_dir", required_unless_present = "masks_dir")]
    dataset: Option<PathBuf>,
    /// Output of `extract`; masks colored by index.
    #[arg(long)]
    masks_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit status.
enum Failure {
    Config(String),
    Input(String),
    Empty(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Config(_) => 2,
            Failure::Input(_) => 3,
            Failure::Empty(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Input(m) | Failure::Empty(m) | Failure::Internal(m) => m,
        }
    }
}

fn from_io(e: TensorIoError) -> Failure {
    Failure::Input(e.to_string())
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::Config(_) => Failure::Config(msg),
            PipelineError::Input(e) => from_io(e),
            PipelineError::Frame {
                source: MaskCutError::Spectral(_),
                ..
            } => Failure::Internal(msg),
            PipelineError::Frame { .. } => Failure::Input(msg),
            PipelineError::Empty(_) => Failure::Empty(msg),
            PipelineError::Match(MatchError::Gap(_)) => Failure::Config(msg),
            PipelineError::Match(_) | PipelineError::Internal(_) => Failure::Internal(msg),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(e) => from_io(e),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Spec(_) => Failure::Config(e.to_string()),
            SynthError::Io(e) => Failure::Internal(e.to_string()),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn check_unit(name: &str, v: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Failure::Config(format!("{name} must be in [0, 1], got {v}")))
    }
}

fn cmd_extract(a: &ExtractArgs) -> Result<(), Failure> {
    let cfg = ExtractConfig {
        affinity: AffinityConfig {
            alpha: a.alpha,
            tau: a.tau,
            epsilon: a.epsilon,
        },
        maskcut: MaskCutConfig {
            max_masks: a.max_masks,
            ..Default::default()
        },
        size: match (a.height, a.width) {
            (Some(height), Some(width)) => OutputSize::Fixed { height, width },
            _ => OutputSize::PatchPx(a.patch_px),
        },
    };
    let flow = if cfg.affinity.is_flow_free() {
        if a.flow_features_dir.is_some() {
            log::info!("alpha = 1: flow features are not read");
        }
        None
    } else {
        a.flow_features_dir.as_deref()
    };
    let summary = pipeline::extract_corpus(&a.features_dir, flow, &cfg, &a.out, a.workers.count())?;
    log::info!(
        "extracted {} masks from {} frames in {} videos",
        summary.masks,
        summary.frames,
        summary.videos
    );
    Ok(())
}

fn cmd_curate(a: &CurateArgs) -> Result<(), Failure> {
    check_unit("--iou-thresh", a.iou_thresh)?;
    if a.gaps.is_empty() {
        return Err(Failure::Config("--gaps must not be empty".into()));
    }
    if let Some(g) = a.gaps.iter().find(|&&g| g == 0 || g > MAX_GAP) {
        return Err(Failure::Config(format!("gap {g} outside 1..={MAX_GAP}")));
    }
    let cfg = CurateConfig {
        gaps: &a.gaps,
        iou_thresh: a.iou_thresh,
        mode: if a.one_to_one {
            MatchMode::OneToOne
        } else {
            MatchMode::Greedy
        },
    };
    let (ds, report) = pipeline::curate_corpus(&a.masks_dir, &cfg, a.workers.count())?;
    if ds.videos.is_empty() {
        log::warn!("no frame pair passed the overlap test");
    }
    ensure_dir(&a.out)?;
    write_dataset(&ds, a.out.join("dataset.json")).map_err(|e| Failure::Internal(e.to_string()))?;
    write_json(&report, &a.out.join("report.json"))?;
    log::info!(
        "{} clips with {} tracks from {} candidate pairs",
        ds.videos.len(),
        ds.annotations.len(),
        report.total_candidate_pairs
    );
    Ok(())
}

fn load_preds(path: &Path) -> Result<Vec<Prediction>, Failure> {
    match read_predictions(path) {
        Ok(p) => Ok(p),
        Err(pred_err) => match read_dataset(path) {
            Ok(ds) => Ok(predictions_from_dataset(&ds)),
            Err(_) => Err(pred_err.into()),
        },
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    check_unit("--score-thresh", a.score_thresh)?;
    check_unit("--jf-score-thresh", a.jf_score_thresh)?;
    let gt = read_dataset(&a.gt).map_err(from_io)?;
    let preds = load_preds(&a.preds)?;
    let report = evaluate(&gt, &preds, a.score_thresh, a.jf_score_thresh)?;
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            ensure_dir(dir)?;
        }
        write_json(&report, out)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        seed: a.seed,
        n_videos: a.videos,
        frames_per_video: a.frames,
        rows: a.rows,
        cols: a.cols,
        dim: a.dim,
        patch_px: a.patch_px,
        n_objects: a.objects,
        shape: match a.shape {
            ShapeArg::Disc => ShapeKind::Disc,
            ShapeArg::Rectangle => ShapeKind::Rectangle,
        },
        noise_sigma: a.noise_sigma,
        distractor: a.distractor,
        flow_gap: a.flow_gap,
        ..Default::default()
    };
    spec.validate()?;
    let corpus = synth::generate(&spec)?;
    synth::write_corpus(&corpus, &a.out)?;
    log::info!("wrote {} videos to {}", corpus.videos.len(), a.out.display());
    Ok(())
}

fn cmd_overlay(a: &OverlayArgs) -> Result<(), Failure> {
    let n = match (&a.dataset, &a.masks_dir) {
        (Some(ds), _) => {
            let ds = read_dataset(ds).map_err(from_io)?;
            pipeline::overlay_dataset(&ds, &a.out)?
        }
        (None, Some(dir)) => pipeline::overlay_masks(dir, &a.out)?,
        (None, None) => return Err(Failure::Config("need --dataset or --masks-dir".into())),
    };
    log::info!("wrote {n} images to {}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOWCUT_LOG", "info")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Extract(a) => cmd_extract(a),
        Cmd::Curate(a) => cmd_curate(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Overlay(a) => cmd_overlay(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
