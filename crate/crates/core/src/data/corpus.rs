//! Training-corpus generation: fixed-length centroid windows sampled from
//! ground-truth tracks, perturbed with Gaussian noise.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, GroundTruthTrack};
use crate::geom::centroid_of;
use crate::{Centroid, Offset};

/// Shortest admissible window; tracks shorter than the requested length
/// still contribute if they reach this.
pub const MIN_SEQUENCE_LEN: usize = 20;

/// One training window: noisy centroids of a single object over contiguous
/// frames, plus the derived offsets (`offsets[i] = centroids[i+1] -
/// centroids[i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    pub centroids: Vec<Centroid>,
    pub offsets: Vec<Offset>,
}

impl TrainingSequence {
    pub fn from_centroids(centroids: Vec<Centroid>) -> Self {
        let offsets = centroids.windows(2).map(|w| w[1] - w[0]).collect();
        Self { centroids, offsets }
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

/// A sampleable window: contiguous-frame run of one track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Window {
    track: usize,
    start: usize,
    len: usize,
}

fn eligible_windows(tracks: &[GroundTruthTrack], len: usize) -> Vec<Window> {
    let mut windows = Vec::new();
    for (ti, track) in tracks.iter().enumerate() {
        // split into contiguous-frame runs; offsets are per-frame motion
        let mut run_start = 0;
        let mut run_len = 1;
        let flush = |start: usize, n: usize, windows: &mut Vec<Window>| {
            if n >= len {
                for s in 0..=(n - len) {
                    windows.push(Window {
                        track: ti,
                        start: start + s,
                        len,
                    });
                }
            } else if n >= MIN_SEQUENCE_LEN {
                windows.push(Window {
                    track: ti,
                    start,
                    len: n,
                });
            }
        };
        for i in 1..track.points.len() {
            if track.points[i].frame == track.points[i - 1].frame + 1 {
                run_len += 1;
            } else {
                flush(run_start, run_len, &mut windows);
                run_start = i;
                run_len = 1;
            }
        }
        flush(run_start, run_len, &mut windows);
    }
    windows
}

/// Draws `n_train + n_val` windows uniformly (with replacement) over the
/// eligible `(track, start)` pairs, adds i.i.d. Gaussian noise of standard
/// deviation `noise_sigma` to every centroid coordinate (fresh per drawn
/// window), and splits the draws into a training and a validation set.
pub fn generate_training_set(
    tracks: &[GroundTruthTrack],
    n_train: usize,
    n_val: usize,
    len: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Vec<TrainingSequence>, Vec<TrainingSequence>), DataError> {
    let windows = eligible_windows(tracks, len);
    if windows.is_empty() {
        return Err(DataError::NoEligibleTracks);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let w = windows[rng.gen_range(0..windows.len())];
        let centroids: Vec<Centroid> = tracks[w.track].points[w.start..w.start + w.len]
            .iter()
            .map(|p| {
                let c = centroid_of(&p.bbox);
                Centroid::new(
                    c.x + noise_sigma * f64::standard_normal(rng),
                    c.y + noise_sigma * f64::standard_normal(rng),
                )
            })
            .collect();
        TrainingSequence::from_centroids(centroids)
    };
    let train: Vec<TrainingSequence> = (0..n_train).map(|_| draw(&mut rng)).collect();
    let val: Vec<TrainingSequence> = (0..n_val).map(|_| draw(&mut rng)).collect();
    Ok((train, val))
}

use crate::scalar::Scalar;

const CORPUS_HEADER: &str = "trajcorpus v1";

/// Writes a corpus as newline-delimited centroid lists under a versioned
/// header. Each record is `t` or `v` (split tag) followed by `x y` pairs.
pub fn write_corpus(
    path: &Path,
    train: &[TrainingSequence],
    val: &[TrainingSequence],
) -> Result<(), DataError> {
    let mut out = Vec::new();
    writeln!(
        out,
        "{CORPUS_HEADER} train={} val={}",
        train.len(),
        val.len()
    )?;
    for (tag, set) in [("t", train), ("v", val)] {
        for seq in set {
            write!(out, "{tag}")?;
            for c in &seq.centroids {
                write!(out, " {} {}", c.x, c.y)?;
            }
            writeln!(out)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a corpus written by [`write_corpus`].
pub fn read_corpus(
    path: &Path,
) -> Result<(Vec<TrainingSequence>, Vec<TrainingSequence>), DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Parse {
        line: 1,
        message: "empty corpus file".into(),
    })?;
    if !header.starts_with(CORPUS_HEADER) {
        return Err(DataError::Parse {
            line: 1,
            message: format!("bad corpus header {header:?}"),
        });
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_ascii_whitespace();
        let tag = parts.next().unwrap();
        let coords: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| DataError::Parse {
                    line: line_no,
                    message: format!("not a number: {p:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if !coords.len().is_multiple_of(2) || coords.len() < 4 {
            return Err(DataError::Parse {
                line: line_no,
                message: "record must hold at least two x y pairs".into(),
            });
        }
        let centroids = coords
            .chunks(2)
            .map(|c| Centroid::new(c[0], c[1]))
            .collect();
        let seq = TrainingSequence::from_centroids(centroids);
        match tag {
            "t" => train.push(seq),
            "v" => val.push(seq),
            other => {
                return Err(DataError::Parse {
                    line: line_no,
                    message: format!("unknown split tag {other:?}"),
                })
            }
        }
    }
    Ok((train, val))
}
