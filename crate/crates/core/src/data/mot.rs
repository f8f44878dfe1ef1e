//! MOTChallenge text formats: `det.txt`, `gt.txt`, `seqinfo.ini` and result
//! files. Comma-separated rows, 1-based frames, boxes as
//! `left,top,width,height` in (possibly fractional) pixels.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, FrameDetections, GroundTruthTrack};
use crate::geom::Provenance;
use crate::{BoundingBox, Detection, SequenceInfo, Track, TrackPoint, TrackState};

/// Detections grouped per frame, plus warnings for rows that were dropped
/// (non-positive box sizes).
#[derive(Debug, Clone, Default)]
pub struct ParsedDetections {
    pub frames: Vec<FrameDetections>,
    pub warnings: Vec<String>,
}

fn parse_fields(line: &str, line_no: usize, min_fields: usize) -> Result<Vec<f64>, DataError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < min_fields {
        return Err(DataError::Parse {
            line: line_no,
            message: format!(
                "expected at least {min_fields} fields, got {}",
                fields.len()
            ),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("not a number: {f:?}"),
            })
        })
        .collect()
}

fn check_finite(values: &[f64], line_no: usize) -> Result<(), DataError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DataError::Parse {
            line: line_no,
            message: "non-finite value".into(),
        });
    }
    Ok(())
}

struct Row {
    line: usize,
    frame: u32,
    id: i64,
    bbox: BoundingBox,
    rest: Vec<f64>,
}

/// Shared row reader; yields `None` for rows dropped with a warning.
fn parse_row(
    line: &str,
    line_no: usize,
    warnings: &mut Vec<String>,
) -> Result<Option<Row>, DataError> {
    let values = parse_fields(line, line_no, 6)?;
    check_finite(&values, line_no)?;
    let frame = values[0];
    if frame < 1.0 || frame.fract() != 0.0 || frame > u32::MAX as f64 {
        return Err(DataError::Parse {
            line: line_no,
            message: format!("invalid frame index {frame}"),
        });
    }
    let (w, h) = (values[4], values[5]);
    if w <= 0.0 || h <= 0.0 {
        warnings.push(format!(
            "line {line_no}: dropped row with non-positive box {w}x{h}"
        ));
        return Ok(None);
    }
    Ok(Some(Row {
        line: line_no,
        frame: frame as u32,
        id: values[1] as i64,
        bbox: BoundingBox::new(values[2], values[3], w, h).expect("positive checked"),
        rest: values[6..].to_vec(),
    }))
}

fn non_empty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses a `det.txt`: `frame,id,left,top,width,height,conf,...` with the id
/// column ignored. Confidence is clamped to `[0, 1]`. Frames need not be
/// contiguous; the result is sorted by frame.
pub fn parse_detections(path: &Path) -> Result<ParsedDetections, DataError> {
    let text = fs::read_to_string(path)?;
    let mut warnings = Vec::new();
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for (line_no, line) in non_empty_lines(&text) {
        let values = parse_fields(line, line_no, 7)?;
        let Some(row) = parse_row(line, line_no, &mut warnings)? else {
            continue;
        };
        let confidence = values[6].clamp(0.0, 1.0);
        by_frame.entry(row.frame).or_default().push(Detection {
            frame: row.frame,
            bbox: row.bbox,
            confidence,
        });
    }
    let frames = by_frame
        .into_iter()
        .map(|(frame, detections)| FrameDetections { frame, detections })
        .collect();
    Ok(ParsedDetections { frames, warnings })
}

/// Parses a `gt.txt`: `frame,id,left,top,w,h,flag,class,visibility`. Rows
/// with flag 0 are retained but marked excluded from evaluation. Missing
/// trailing columns default to flag 1, class 1, visibility 1.
pub fn parse_ground_truth(path: &Path) -> Result<(Vec<GroundTruthTrack>, Vec<String>), DataError> {
    let text = fs::read_to_string(path)?;
    let mut warnings = Vec::new();
    let mut rows: Vec<Row> = Vec::new();
    for (line_no, line) in non_empty_lines(&text) {
        if let Some(row) = parse_row(line, line_no, &mut warnings)? {
            if row.id < 1 {
                return Err(DataError::Parse {
                    line: line_no,
                    message: format!("ground-truth id must be positive, got {}", row.id),
                });
            }
            rows.push(row);
        }
    }
    rows.sort_by_key(|r| (r.id, r.frame, r.line));

    let mut tracks: Vec<GroundTruthTrack> = Vec::new();
    for row in rows {
        let flag = row.rest.first().copied().unwrap_or(1.0) != 0.0;
        let class_id = row.rest.get(1).copied().unwrap_or(1.0) as u32;
        let visibility = row.rest.get(2).copied().unwrap_or(1.0);
        let point = TrackPoint {
            frame: row.frame,
            bbox: row.bbox,
            provenance: Provenance::Observed,
        };
        match tracks.last_mut() {
            Some(t) if t.id == row.id as u32 => {
                if t.points.last().is_some_and(|p| p.frame == row.frame) {
                    return Err(DataError::Parse {
                        line: row.line,
                        message: format!("duplicate frame {} for id {}", row.frame, row.id),
                    });
                }
                t.points.push(point);
                t.visibility.push(visibility);
                t.eval_flags.push(flag);
            }
            _ => tracks.push(GroundTruthTrack {
                id: row.id as u32,
                class_id,
                points: vec![point],
                visibility: vec![visibility],
                eval_flags: vec![flag],
            }),
        }
    }
    Ok((tracks, warnings))
}

/// Parses a tracker result file (same row layout as detections, with the id
/// column meaningful) into finished tracks.
pub fn parse_results(path: &Path) -> Result<Vec<Track>, DataError> {
    let text = fs::read_to_string(path)?;
    let mut warnings = Vec::new();
    let mut by_id: BTreeMap<u32, Vec<TrackPoint>> = BTreeMap::new();
    for (line_no, line) in non_empty_lines(&text) {
        let Some(row) = parse_row(line, line_no, &mut warnings)? else {
            continue;
        };
        if row.id < 1 {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("result id must be positive, got {}", row.id),
            });
        }
        by_id.entry(row.id as u32).or_default().push(TrackPoint {
            frame: row.frame,
            bbox: row.bbox,
            provenance: Provenance::Observed,
        });
    }
    let mut tracks = Vec::new();
    for (id, mut points) in by_id {
        points.sort_by_key(|p| p.frame);
        if points.windows(2).any(|w| w[0].frame == w[1].frame) {
            return Err(DataError::Parse {
                line: 0,
                message: format!("result id {id} has duplicate frames"),
            });
        }
        tracks.push(Track {
            id,
            state: TrackState::Terminated,
            patience_left: 0,
            points,
            lost_since: None,
        });
    }
    Ok(tracks)
}

/// Parses the `[Sequence]` section of a `seqinfo.ini`.
pub fn parse_seqinfo(path: &Path) -> Result<SequenceInfo, DataError> {
    let text = fs::read_to_string(path)?;
    let mut in_sequence = false;
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            in_sequence = line.eq_ignore_ascii_case("[sequence]");
            continue;
        }
        if in_sequence {
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let get = |key: &'static str| kv.get(key).ok_or(DataError::MissingKey(key));
    let parse_u32 = |key: &'static str| -> Result<u32, DataError> {
        get(key)?
            .parse::<u32>()
            .map_err(|_| DataError::MissingKey(key))
    };
    Ok(SequenceInfo {
        name: get("name")?.clone(),
        frame_count: parse_u32("seqLength")?,
        image_width: parse_u32("imWidth")?,
        image_height: parse_u32("imHeight")?,
        frame_rate: get("frameRate")?
            .parse::<f64>()
            .map_err(|_| DataError::MissingKey("frameRate"))?,
    })
}

/// Writes tracks in the MOT result format, rows
/// `frame,id,left,top,width,height,1,-1,-1,-1` sorted by `(frame, id)`.
/// Estimated points are emitted identically to observed ones.
pub fn emit_results_to<W: Write>(tracks: &[Track], mut out: W) -> std::io::Result<()> {
    let mut rows: Vec<(u32, u32, BoundingBox)> = tracks
        .iter()
        .flat_map(|t| t.points.iter().map(move |p| (p.frame, t.id, p.bbox)))
        .collect();
    rows.sort_by_key(|a| (a.0, a.1));
    for (frame, id, b) in rows {
        writeln!(
            out,
            "{frame},{id},{},{},{},{},1,-1,-1,-1",
            b.left, b.top, b.width, b.height
        )?;
    }
    Ok(())
}

pub fn emit_results(tracks: &[Track], path: &Path) -> Result<(), DataError> {
    let mut buf = Vec::new();
    emit_results_to(tracks, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}
