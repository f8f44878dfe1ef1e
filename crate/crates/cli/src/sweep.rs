//! Parameter sweep: runs track + eval over a (strategy, bias, beam) grid
//! with repeated seeded runs, writing a CSV of every cell and one SVG per
//! metric with the mean line and min-max band over runs.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::json;

use traje_core::data::{evaluation_tracks, parse_detections, parse_ground_truth};
use traje_core::metrics::evaluate;
use traje_core::rnn::{load_model, ModelParams};
use traje_core::tracker::{run_sequence, TrackerConfig};
use traje_core::Real;

use crate::manifest::ManifestBuilder;
use crate::svg::{line_band_chart, Panel, Series};
use crate::{AppError, StrategyArg};

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// MOT detection file
    #[arg(long)]
    det: PathBuf,
    /// Ground-truth file for scoring
    #[arg(long)]
    gt: PathBuf,
    /// Model file (required when the strategy list contains bm/gbs/pbs)
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyArg::Gbs, StrategyArg::Pbs])]
    strategy_list: Vec<StrategyArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.5, 1.0, 5.0, 10.0])]
    bias_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
    beam_list: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Reconstruct occlusion gaps
    #[arg(long)]
    occ: bool,
    #[arg(long, default_value_t = 100)]
    patience: u32,
    #[arg(long, default_value_t = 0.4)]
    min_conf: f64,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy)]
struct CellScore {
    mota: f64,
    idf1: f64,
    idsw: usize,
}

fn cell_seed(run_seed: u64, si: usize, bi: usize, wi: usize, run: usize) -> u64 {
    let mut z = run_seed
        ^ (si as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (bi as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (wi as u64).wrapping_mul(0x1656_67B1_9E37_79F9)
        ^ (run as u64).wrapping_mul(0x27D4_EB2F_1656_67C5);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn worker_count(cells: usize) -> usize {
    let from_env = std::env::var("TRAJE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    from_env.unwrap_or(hw).clamp(1, cells.max(1))
}

pub fn run_sweep(args: SweepArgs) -> Result<(), AppError> {
    if args.strategy_list.is_empty() || args.bias_list.is_empty() || args.beam_list.is_empty() {
        return Err(AppError::usage(
            "strategy, bias and beam lists must be non-empty",
        ));
    }
    if args.runs < 1 {
        return Err(AppError::usage("--runs must be at least 1"));
    }
    if args.bias_list.iter().any(|b| *b < 0.0) {
        return Err(AppError::usage("bias values must be nonnegative"));
    }
    if args.beam_list.iter().any(|b| *b < 1) {
        return Err(AppError::usage("beam widths must be at least 1"));
    }

    let mut manifest = ManifestBuilder::new(
        "sweep",
        json!({
            "strategies": args.strategy_list.iter().map(|s| s.name()).collect::<Vec<_>>(),
            "bias_list": args.bias_list, "beam_list": args.beam_list,
            "runs": args.runs, "occ": args.occ, "iou": args.iou,
        }),
        args.seed,
    );
    manifest.input(&args.det).input(&args.gt);

    let parsed = parse_detections(&args.det)?;
    for w in &parsed.warnings {
        eprintln!("{}: {w}", args.det.display());
    }
    let (gt_tracks, _) = parse_ground_truth(&args.gt)?;
    let gt_eval = evaluation_tracks(&gt_tracks, None);

    let needs_model = args.strategy_list.iter().any(|s| s.needs_model());
    let model: Option<ModelParams<Real>> = if needs_model {
        let path = args.model.as_ref().ok_or_else(|| {
            AppError::usage("the strategy list includes bm/gbs/pbs: --model is required")
        })?;
        manifest.input(path);
        Some(load_model::<Real>(path)?.params)
    } else {
        None
    };

    // grid order: strategy-major, then bias, then beam, then run
    let mut grid: Vec<(usize, usize, usize, usize)> = Vec::new();
    for si in 0..args.strategy_list.len() {
        for bi in 0..args.bias_list.len() {
            for wi in 0..args.beam_list.len() {
                for run in 0..args.runs {
                    grid.push((si, bi, wi, run));
                }
            }
        }
    }

    let results: Vec<Mutex<Option<CellScore>>> =
        (0..grid.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = worker_count(grid.len());
    let run_cell =
        |(si, bi, wi, run): (usize, usize, usize, usize)| -> Result<CellScore, AppError> {
            let strategy = args.strategy_list[si];
            let config = TrackerConfig {
                motion: strategy.motion(args.beam_list[wi], args.bias_list[bi]),
                patience: args.patience,
                occ_reconstruct: args.occ,
                detection_min_confidence: args.min_conf,
                ..TrackerConfig::default()
            };
            let seed = cell_seed(args.seed, si, bi, wi, run);
            let output = run_sequence(&parsed.frames, &config, model.as_ref(), 0, seed)?;
            let report = evaluate(&gt_eval, &output.tracks, args.iou);
            Ok(CellScore {
                mota: report.mota,
                idf1: report.idf1,
                idsw: report.id_switches,
            })
        };

    let failure: Mutex<Option<AppError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= grid.len() || failure.lock().unwrap().is_some() {
                    break;
                }
                match run_cell(grid[idx]) {
                    Ok(score) => *results[idx].lock().unwrap() = Some(score),
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let scores: Vec<CellScore> = results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("all cells ran"))
        .collect();

    fs::create_dir_all(&args.out_dir)?;
    let csv_path = args.out_dir.join("sweep.csv");
    let mut csv = String::from("strategy,bias,beam,run,MOTA,IDF1,IDSW\n");
    for (idx, &(si, bi, wi, run)) in grid.iter().enumerate() {
        let s = scores[idx];
        csv.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{}\n",
            args.strategy_list[si].name(),
            args.bias_list[bi],
            args.beam_list[wi],
            run + 1,
            s.mota,
            s.idf1,
            s.idsw
        ));
    }
    fs::write(&csv_path, &csv)?;
    manifest.output(&csv_path);

    // one SVG per metric: a panel per beam width, x axis over bias
    let palette = [
        "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
    ];
    let x_ticks: Vec<String> = args.bias_list.iter().map(|b| format!("{b}")).collect();
    type MetricOf = fn(&CellScore) -> f64;
    let metrics: [(&str, MetricOf); 3] = [
        ("MOTA", |s| s.mota),
        ("IDF1", |s| s.idf1),
        ("IDSW", |s| s.idsw as f64),
    ];
    let cell_of = |si: usize, bi: usize, wi: usize, run: usize| -> &CellScore {
        let per_strategy = args.bias_list.len() * args.beam_list.len() * args.runs;
        let idx = si * per_strategy + bi * args.beam_list.len() * args.runs + wi * args.runs + run;
        &scores[idx]
    };
    for (metric, extract) in metrics {
        let panels: Vec<Panel> = args
            .beam_list
            .iter()
            .enumerate()
            .map(|(wi, beam)| Panel {
                title: format!("B={beam}"),
                series: args
                    .strategy_list
                    .iter()
                    .enumerate()
                    .map(|(si, strategy)| {
                        let mut mean = Vec::new();
                        let mut min = Vec::new();
                        let mut max = Vec::new();
                        for bi in 0..args.bias_list.len() {
                            let vals: Vec<f64> = (0..args.runs)
                                .map(|run| extract(cell_of(si, bi, wi, run)))
                                .collect();
                            mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
                            min.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
                            max.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                        }
                        Series {
                            label: strategy.name().to_string(),
                            color: palette[si % palette.len()].to_string(),
                            mean,
                            min,
                            max,
                        }
                    })
                    .collect(),
            })
            .collect();
        let svg = line_band_chart(metric, "Bias", &x_ticks, &panels);
        let path = args.out_dir.join(format!("{metric}.svg"));
        fs::write(&path, svg)?;
        manifest.output(&path);
    }
    manifest.write(&args.out_dir)?;
    println!(
        "swept {} cells ({} workers) into {}",
        grid.len(),
        workers,
        args.out_dir.display()
    );
    Ok(())
}
