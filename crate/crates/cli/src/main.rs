//! `traje`: trajectory-estimation tracking pipeline.
//!
//! Subcommands: `sim` (synthetic scenarios), `gen-data` (training corpus
//! from ground truth), `train` (recurrent mixture model), `track` (run the
//! tracker over detections), `eval` (CLEAR/identity metrics), `sweep`
//! (bias/beam grids with CSV + SVG summaries).

mod manifest;
mod svg;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use manifest::ManifestBuilder;
use traje_core::data::{
    self, evaluation_tracks, generate_training_set, parse_detections, parse_ground_truth,
    parse_results, read_corpus, write_corpus, FrameDetections, GroundTruthTrack, Scenario,
};
use traje_core::estimator::Strategy;
use traje_core::kalman::KalmanConfig;
use traje_core::metrics::{evaluate_counts, report_csv, EvalCounts};
use traje_core::rnn::{
    init_params, load_model, save_model, train, ModelConfig, ModelParams, TrainConfig, TrainError,
};
use traje_core::tracker::{run_sequence, MotionModel, TrackerConfig};
use traje_core::Real;

pub struct AppError {
    message: String,
    code: u8,
}

impl AppError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }
}

macro_rules! app_error_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for AppError {
            fn from(e: $ty) -> Self {
                AppError { message: e.to_string(), code: 2 }
            }
        }
    )*};
}
app_error_from!(
    std::io::Error,
    data::DataError,
    traje_core::rnn::ModelIoError,
    traje_core::rnn::ModelError,
    traje_core::tracker::TrackerError,
    traje_core::estimator::EstimatorError,
    serde_json::Error
);

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        let code = if matches!(e, TrainError::Diverged { .. }) {
            3
        } else {
            2
        };
        AppError {
            message: e.to_string(),
            code,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "traje",
    version,
    about = "Trajectory-estimation tracking pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario (gt.txt, det.txt, seqinfo.ini)
    Sim(SimArgs),
    /// Sample a training corpus from MOT ground-truth files
    GenData(GenDataArgs),
    /// Train the trajectory model on a corpus
    Train(TrainArgs),
    /// Run the tracker over a detection file
    Track(TrackArgs),
    /// Score a result file against ground truth
    Eval(EvalArgs),
    /// Grid-run track + eval over bias and beam width
    Sweep(sweep::SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Bm,
    Gbs,
    Pbs,
    Kalman,
    Cv,
    None,
}

impl StrategyArg {
    pub fn needs_model(self) -> bool {
        matches!(self, StrategyArg::Bm | StrategyArg::Gbs | StrategyArg::Pbs)
    }

    pub fn motion(self, beam: usize, bias: f64) -> MotionModel {
        match self {
            StrategyArg::Bm => MotionModel::Traje {
                strategy: Strategy::BestMean,
                beam_width: beam,
                bias,
            },
            StrategyArg::Gbs => MotionModel::Traje {
                strategy: Strategy::Greedy,
                beam_width: beam,
                bias,
            },
            StrategyArg::Pbs => MotionModel::Traje {
                strategy: Strategy::Beam,
                beam_width: beam,
                bias,
            },
            StrategyArg::Kalman => MotionModel::Kalman(KalmanConfig::default()),
            StrategyArg::Cv => MotionModel::ConstantVelocity,
            StrategyArg::None => MotionModel::None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyArg::Bm => "bm",
            StrategyArg::Gbs => "gbs",
            StrategyArg::Pbs => "pbs",
            StrategyArg::Kalman => "kalman",
            StrategyArg::Cv => "cv",
            StrategyArg::None => "none",
        }
    }
}

#[derive(Debug, clap::Args)]
struct SimArgs {
    /// Scenario name: cv, turn, cross, occlusion, cross-occ
    #[arg(long)]
    scenario: String,
    /// Detection centroid noise, pixels
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
struct GenDataArgs {
    /// Directory holding gt.txt, or MOT-style sequence directories
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20000)]
    num_train: usize,
    #[arg(long, default_value_t = 2000)]
    num_val: usize,
    #[arg(long, default_value_t = 100)]
    seq_len: usize,
    #[arg(long, default_value_t = 2.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// Corpus file written by gen-data
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    decay: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [15, 40, 80])]
    decay_epochs: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 5)]
    mixtures: usize,
    #[arg(long, default_value_t = 5.0)]
    grad_clip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct TrackArgs {
    /// MOT detection file
    #[arg(long)]
    det: PathBuf,
    /// Model file (required for bm/gbs/pbs)
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long, default_value_t = 1.0)]
    bias: f64,
    #[arg(long, default_value_t = 100)]
    patience: u32,
    /// Reconstruct occlusion gaps from the estimated trajectory
    #[arg(long)]
    occ: bool,
    #[arg(long, default_value_t = 0.4)]
    min_conf: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    /// Ground-truth file (or directory in multi-sequence mode)
    #[arg(long)]
    gt: PathBuf,
    /// Result file (or directory of <name>.txt result files)
    #[arg(long)]
    res: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(args) => run_sim(args),
        Command::GenData(args) => run_gen_data(args),
        Command::Train(args) => run_train(args),
        Command::Track(args) => run_track(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => sweep::run_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Writes ground-truth tracks in MOT gt.txt form.
fn write_gt_file(tracks: &[GroundTruthTrack], path: &Path) -> Result<(), AppError> {
    use std::io::Write as _;
    let mut rows: Vec<(u32, u32, String)> = Vec::new();
    for t in tracks {
        for (i, p) in t.points.iter().enumerate() {
            let flag = if t.eval_flags[i] { 1 } else { 0 };
            let b = p.bbox;
            rows.push((
                p.frame,
                t.id,
                format!(
                    "{},{},{},{},{},{},{flag},{},{}",
                    p.frame, t.id, b.left, b.top, b.width, b.height, t.class_id, t.visibility[i]
                ),
            ));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = Vec::new();
    for (_, _, row) in rows {
        writeln!(out, "{row}")?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes detections in MOT det.txt form.
fn write_det_file(frames: &[FrameDetections], path: &Path) -> Result<(), AppError> {
    use std::io::Write as _;
    let mut out = Vec::new();
    for fd in frames {
        for d in &fd.detections {
            let b = d.bbox;
            writeln!(
                out,
                "{},-1,{},{},{},{},{},-1,-1,-1",
                fd.frame, b.left, b.top, b.width, b.height, d.confidence
            )?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn run_sim(args: SimArgs) -> Result<(), AppError> {
    let scenario = Scenario::by_name(&args.scenario, args.noise)
        .ok_or_else(|| AppError::usage(format!("unknown scenario {:?}", args.scenario)))?;
    let mut manifest = ManifestBuilder::new(
        "sim",
        json!({"scenario": args.scenario, "noise": args.noise}),
        args.seed,
    );
    fs::create_dir_all(&args.out_dir)?;
    let (tracks, frames) = scenario.generate(args.seed);

    let gt_path = args.out_dir.join("gt.txt");
    write_gt_file(&tracks, &gt_path)?;
    let det_path = args.out_dir.join("det.txt");
    write_det_file(&frames, &det_path)?;
    let info_path = args.out_dir.join("seqinfo.ini");
    fs::write(
        &info_path,
        format!(
            "[Sequence]\nname={}\nimDir=img1\nframeRate=30\nseqLength={}\nimWidth={}\nimHeight={}\n",
            scenario.name, scenario.frame_count, scenario.image_width, scenario.image_height
        ),
    )?;
    manifest
        .output(&gt_path)
        .output(&det_path)
        .output(&info_path);
    manifest.write(&args.out_dir)?;
    println!(
        "wrote scenario {:?} to {}",
        scenario.name,
        args.out_dir.display()
    );
    Ok(())
}

/// Finds gt.txt files under a root: either directly, or one level down in
/// MOT layout (`<seq>/gt/gt.txt` or `<seq>/gt.txt`).
fn find_gt_files(root: &Path) -> Result<Vec<PathBuf>, AppError> {
    if !root.is_dir() {
        return Err(AppError::usage(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let mut found = Vec::new();
    let direct = root.join("gt.txt");
    if direct.is_file() {
        found.push(direct);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for dir in subdirs {
        for candidate in [dir.join("gt").join("gt.txt"), dir.join("gt.txt")] {
            if candidate.is_file() {
                found.push(candidate);
                break;
            }
        }
    }
    if found.is_empty() {
        return Err(AppError::usage(format!(
            "no gt.txt found under {}",
            root.display()
        )));
    }
    Ok(found)
}

fn run_gen_data(args: GenDataArgs) -> Result<(), AppError> {
    let mut manifest = ManifestBuilder::new(
        "gen-data",
        json!({
            "num_train": args.num_train, "num_val": args.num_val,
            "seq_len": args.seq_len, "noise_sigma": args.noise_sigma,
        }),
        args.seed,
    );
    let gt_files = find_gt_files(&args.gt_dir)?;
    let mut tracks = Vec::new();
    for file in &gt_files {
        manifest.input(file);
        let (mut parsed, warnings) = parse_ground_truth(file)?;
        for w in warnings {
            eprintln!("{}: {w}", file.display());
        }
        tracks.append(&mut parsed);
    }
    let (train_set, val_set) = generate_training_set(
        &tracks,
        args.num_train,
        args.num_val,
        args.seq_len,
        args.noise_sigma,
        args.seed,
    )?;
    write_corpus(&args.out, &train_set, &val_set)?;
    manifest.output(&args.out);
    manifest.write(&args.out)?;
    println!(
        "sampled {} training and {} validation sequences from {} tracks",
        train_set.len(),
        val_set.len(),
        tracks.len()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), AppError> {
    let mut manifest = ManifestBuilder::new(
        "train",
        json!({
            "epochs": args.epochs, "lr": args.lr, "decay": args.decay,
            "decay_epochs": args.decay_epochs, "hidden": args.hidden,
            "mixtures": args.mixtures, "grad_clip": args.grad_clip,
        }),
        args.seed,
    );
    manifest.input(&args.data);
    let (train_seqs, val_seqs) = read_corpus(&args.data)?;
    let to_offsets = |seqs: &[data::TrainingSequence]| -> Vec<Vec<traje_core::Offset>> {
        seqs.iter().map(|s| s.offsets.clone()).collect()
    };
    let config = ModelConfig::new(args.hidden, args.mixtures)?;
    let tc = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        decay_factor: args.decay,
        decay_epochs: args.decay_epochs.clone(),
        grad_clip_norm: args.grad_clip,
        seed: args.seed,
    };
    let initial = init_params::<Real>(config, args.seed);
    let (params, history) = train(
        initial,
        &to_offsets(&train_seqs),
        &to_offsets(&val_seqs),
        &tc,
    )?;

    let best = history
        .iter()
        .min_by(|a, b| {
            a.val_mean_nll
                .partial_cmp(&b.val_mean_nll)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("history is never empty");
    let meta = json!({
        "epochs": args.epochs,
        "best_epoch": best.epoch,
        "best_val_mean_nll": best.val_mean_nll,
        "train_sequences": train_seqs.len(),
        "val_sequences": val_seqs.len(),
    });
    save_model(&args.out, &params, args.seed, &meta)?;
    manifest.output(&args.out);

    let history_path = args.out.with_extension("history.csv");
    let mut csv = String::from("epoch,learning_rate,train_mean_nll,val_mean_nll\n");
    for h in &history {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.learning_rate, h.train_mean_nll, h.val_mean_nll
        ));
    }
    fs::write(&history_path, csv)?;
    manifest.output(&history_path);
    manifest.write(&args.out)?;
    println!(
        "trained {} epochs; best validation mean NLL {:.4} at epoch {}",
        args.epochs, best.val_mean_nll, best.epoch
    );
    Ok(())
}

/// Loads the model when the strategy needs one.
fn model_for(
    strategy: StrategyArg,
    path: &Option<PathBuf>,
) -> Result<Option<ModelParams<Real>>, AppError> {
    if !strategy.needs_model() {
        return Ok(None);
    }
    let path = path.as_ref().ok_or_else(|| {
        AppError::usage(format!("--strategy {} requires --model", strategy.name()))
    })?;
    Ok(Some(load_model::<Real>(path)?.params))
}

fn run_track(args: TrackArgs) -> Result<(), AppError> {
    if args.beam < 1 {
        return Err(AppError::usage("--beam must be at least 1"));
    }
    if args.bias < 0.0 {
        return Err(AppError::usage("--bias must be nonnegative"));
    }
    let mut manifest = ManifestBuilder::new(
        "track",
        json!({
            "strategy": args.strategy.name(), "beam": args.beam, "bias": args.bias,
            "patience": args.patience, "occ": args.occ, "min_conf": args.min_conf,
        }),
        args.seed,
    );
    manifest.input(&args.det);
    let parsed = parse_detections(&args.det)?;
    for w in &parsed.warnings {
        eprintln!("{}: {w}", args.det.display());
    }
    let model = model_for(args.strategy, &args.model)?;
    if let Some(m) = &args.model {
        manifest.input(m);
    }
    let config = TrackerConfig {
        motion: args.strategy.motion(args.beam, args.bias),
        patience: args.patience,
        occ_reconstruct: args.occ,
        detection_min_confidence: args.min_conf,
        ..TrackerConfig::default()
    };
    let output = run_sequence(&parsed.frames, &config, model.as_ref(), 0, args.seed)?;
    data::emit_results(&output.tracks, &args.out)?;
    manifest.output(&args.out);
    manifest.write(&args.out)?;
    println!(
        "tracked {} identities to {}",
        output.tracks.len(),
        args.out.display()
    );
    Ok(())
}

/// Gathers (name, gt path, res path) sequence pairs for evaluation.
fn eval_pairs(gt: &Path, res: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, AppError> {
    if res.is_file() {
        let gt_path = if gt.is_dir() {
            gt.join("gt.txt")
        } else {
            gt.to_path_buf()
        };
        if !gt_path.is_file() {
            return Err(AppError::usage(format!(
                "ground truth {} not found",
                gt_path.display()
            )));
        }
        let name = res
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        return Ok(vec![(name, gt_path, res.to_path_buf())]);
    }
    if !res.is_dir() {
        return Err(AppError::usage(format!(
            "result path {} not found",
            res.display()
        )));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(res)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    let mut pairs = Vec::new();
    for file in files {
        let name = file
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        let candidates = [
            gt.join(format!("{name}.txt")),
            gt.join(&name).join("gt").join("gt.txt"),
            gt.join(&name).join("gt.txt"),
        ];
        let gt_path = candidates
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| AppError::usage(format!("no ground truth for sequence {name:?}")))?;
        pairs.push((name, gt_path, file));
    }
    if pairs.is_empty() {
        return Err(AppError::usage(format!(
            "no result files in {}",
            res.display()
        )));
    }
    Ok(pairs)
}

fn run_eval(args: EvalArgs) -> Result<(), AppError> {
    let mut manifest = ManifestBuilder::new("eval", json!({"iou": args.iou}), 0);
    let pairs = eval_pairs(&args.gt, &args.res)?;
    let mut rows: Vec<(String, EvalCounts)> = Vec::new();
    for (name, gt_path, res_path) in pairs {
        manifest.input(&gt_path).input(&res_path);
        let (gt_tracks, warnings) = parse_ground_truth(&gt_path)?;
        for w in warnings {
            eprintln!("{}: {w}", gt_path.display());
        }
        let gt_eval = evaluation_tracks(&gt_tracks, None);
        let hyp = parse_results(&res_path)?;
        rows.push((name, evaluate_counts(&gt_eval, &hyp, args.iou)));
    }
    let csv = report_csv(&rows);
    fs::write(&args.out, &csv)?;
    manifest.output(&args.out);
    manifest.write(&args.out)?;
    print!("{csv}");
    Ok(())
}
