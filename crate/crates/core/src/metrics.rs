//! CLEAR-MOT and identity metrics.
//!
//! Frame-level matching keeps last frame's correspondences while their IoU
//! stays above threshold, matches the rest by Hungarian on `1 - IoU`, and
//! counts an identity switch whenever a ground-truth object's matched
//! hypothesis id differs from its most recent one. IDF1 comes from a global
//! min-cost matching between ground-truth and hypothesis identities over the
//! whole sequence.

use std::collections::{BTreeMap, HashMap};

use crate::assignment::hungarian;
use crate::data::GroundTruthTrack;
use crate::geom::iou;
use crate::{BoundingBox, Track};

/// IoU below which a ground-truth/hypothesis pair may never match.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

const FORBIDDEN: f64 = 1e9;

/// Raw counts; additive across sequences (sum counts, then recompute the
/// ratios; never average ratios).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub gt_boxes: usize,
    pub hyp_boxes: usize,
    pub matches: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub gt_tracks: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub idtp: usize,
}

impl EvalCounts {
    pub fn merge(&mut self, other: &EvalCounts) {
        self.gt_boxes += other.gt_boxes;
        self.hyp_boxes += other.hyp_boxes;
        self.matches += other.matches;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        self.id_switches += other.id_switches;
        self.gt_tracks += other.gt_tracks;
        self.mostly_tracked += other.mostly_tracked;
        self.mostly_lost += other.mostly_lost;
        self.idtp += other.idtp;
    }

    pub fn report(&self) -> EvalReport {
        let gt = self.gt_boxes;
        let mota = 1.0
            - (self.false_negatives + self.false_positives + self.id_switches) as f64
                / gt.max(1) as f64;
        let idf1_den = self.gt_boxes + self.hyp_boxes;
        let idf1 = if idf1_den == 0 {
            1.0
        } else {
            2.0 * self.idtp as f64 / idf1_den as f64
        };
        let tracks = self.gt_tracks.max(1) as f64;
        EvalReport {
            mota,
            idf1,
            id_switches: self.id_switches,
            false_positives: self.false_positives,
            false_negatives: self.false_negatives,
            mostly_tracked_pct: 100.0 * self.mostly_tracked as f64 / tracks,
            mostly_lost_pct: 100.0 * self.mostly_lost as f64 / tracks,
            gt_count: gt,
        }
    }
}

/// Sequence-level scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mota: f64,
    pub idf1: f64,
    pub id_switches: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub mostly_tracked_pct: f64,
    pub mostly_lost_pct: f64,
    pub gt_count: usize,
}

type FrameBoxes = BTreeMap<u32, Vec<(u32, BoundingBox)>>;

fn gt_frame_boxes(tracks: &[GroundTruthTrack]) -> FrameBoxes {
    let mut map = FrameBoxes::new();
    for t in tracks {
        for p in &t.points {
            map.entry(p.frame).or_default().push((t.id, p.bbox));
        }
    }
    map
}

fn hyp_frame_boxes(tracks: &[Track]) -> FrameBoxes {
    let mut map = FrameBoxes::new();
    for t in tracks {
        for p in &t.points {
            map.entry(p.frame).or_default().push((t.id, p.bbox));
        }
    }
    map
}

/// Full evaluation of one (ground truth, hypothesis) sequence pair.
pub fn evaluate_counts(gt: &[GroundTruthTrack], hyp: &[Track], iou_threshold: f64) -> EvalCounts {
    let gt_frames = gt_frame_boxes(gt);
    let hyp_frames = hyp_frame_boxes(hyp);

    let mut counts = EvalCounts {
        gt_boxes: gt_frames.values().map(Vec::len).sum(),
        hyp_boxes: hyp_frames.values().map(Vec::len).sum(),
        gt_tracks: gt.len(),
        ..EvalCounts::default()
    };

    // CLEAR pass with correspondence persistence
    let mut current: HashMap<u32, u32> = HashMap::new(); // gt id -> hyp id, last frame
    let mut last_match: HashMap<u32, u32> = HashMap::new(); // gt id -> most recent hyp id
    let mut covered: HashMap<u32, usize> = HashMap::new(); // matched frames per gt track
    let empty = Vec::new();

    let mut frames: Vec<u32> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();
    for frame in frames {
        let gts = gt_frames.get(&frame).unwrap_or(&empty);
        let hyps = hyp_frames.get(&frame).unwrap_or(&empty);

        let mut next: HashMap<u32, u32> = HashMap::new();
        let mut hyp_used = vec![false; hyps.len()];
        let mut gt_matched = vec![false; gts.len()];

        // keep last frame's pairs that still overlap
        for (gi, (gid, gbox)) in gts.iter().enumerate() {
            if let Some(&hid) = current.get(gid) {
                if let Some(hi) = hyps.iter().position(|(h, _)| *h == hid) {
                    if !hyp_used[hi] && iou(gbox, &hyps[hi].1) >= iou_threshold {
                        next.insert(*gid, hid);
                        hyp_used[hi] = true;
                        gt_matched[gi] = true;
                    }
                }
            }
        }

        // match the rest by minimum 1 - IoU
        let free_g: Vec<usize> = (0..gts.len()).filter(|&i| !gt_matched[i]).collect();
        let free_h: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_used[i]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let cost: Vec<Vec<f64>> = free_g
                .iter()
                .map(|&gi| {
                    free_h
                        .iter()
                        .map(|&hi| {
                            let v = iou(&gts[gi].1, &hyps[hi].1);
                            if v >= iou_threshold {
                                1.0 - v
                            } else {
                                FORBIDDEN
                            }
                        })
                        .collect()
                })
                .collect();
            let solved = hungarian(&cost);
            for (row, col) in solved.row_to_col.iter().enumerate() {
                if let Some(col) = *col {
                    if cost[row][col] < FORBIDDEN {
                        let (gid, _) = gts[free_g[row]];
                        let (hid, _) = hyps[free_h[col]];
                        if let Some(&prev) = last_match.get(&gid) {
                            if prev != hid {
                                counts.id_switches += 1;
                            }
                        }
                        next.insert(gid, hid);
                        gt_matched[free_g[row]] = true;
                    }
                }
            }
        }

        let matched = next.len();
        counts.matches += matched;
        counts.false_positives += hyps.len() - matched;
        counts.false_negatives += gts.len() - matched;
        for (gid, hid) in &next {
            last_match.insert(*gid, *hid);
            *covered.entry(*gid).or_default() += 1;
        }
        current = next;
    }

    for t in gt {
        let span = t.points.len().max(1);
        let ratio = *covered.get(&t.id).unwrap_or(&0) as f64 / span as f64;
        if ratio >= 0.8 {
            counts.mostly_tracked += 1;
        } else if ratio <= 0.2 {
            counts.mostly_lost += 1;
        }
    }

    counts.idtp = identity_true_positives(&gt_frames, &hyp_frames, iou_threshold);
    counts
}

/// Frames on which a given (gt id, hyp id) pair overlaps at or above the
/// threshold, maximized over a one-to-one identity matching.
fn identity_true_positives(
    gt_frames: &FrameBoxes,
    hyp_frames: &FrameBoxes,
    iou_threshold: f64,
) -> usize {
    let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
    for (frame, gts) in gt_frames {
        let Some(hyps) = hyp_frames.get(frame) else {
            continue;
        };
        for (gid, gbox) in gts {
            for (hid, hbox) in hyps {
                if iou(gbox, hbox) >= iou_threshold {
                    *overlap.entry((*gid, *hid)).or_default() += 1;
                }
            }
        }
    }
    if overlap.is_empty() {
        return 0;
    }
    let mut gt_ids: Vec<u32> = overlap.keys().map(|(g, _)| *g).collect();
    gt_ids.sort_unstable();
    gt_ids.dedup();
    let mut hyp_ids: Vec<u32> = overlap.keys().map(|(_, h)| *h).collect();
    hyp_ids.sort_unstable();
    hyp_ids.dedup();

    // maximize total overlap: minimize the negated counts
    let cost: Vec<Vec<f64>> = gt_ids
        .iter()
        .map(|g| {
            hyp_ids
                .iter()
                .map(|h| -(overlap.get(&(*g, *h)).copied().unwrap_or(0) as f64))
                .collect()
        })
        .collect();
    let solved = hungarian(&cost);
    let mut idtp = 0;
    for (row, col) in solved.row_to_col.iter().enumerate() {
        if let Some(col) = *col {
            idtp += overlap
                .get(&(gt_ids[row], hyp_ids[col]))
                .copied()
                .unwrap_or(0);
        }
    }
    idtp
}

/// CLEAR-MOT family plus IDF1 for one sequence pair.
pub fn evaluate(gt: &[GroundTruthTrack], hyp: &[Track], iou_threshold: f64) -> EvalReport {
    evaluate_counts(gt, hyp, iou_threshold).report()
}

/// Identity F1 alone.
pub fn evaluate_idf1(gt: &[GroundTruthTrack], hyp: &[Track], iou_threshold: f64) -> f64 {
    evaluate(gt, hyp, iou_threshold).idf1
}

/// CSV report: one row per named sequence plus an OVERALL row built from the
/// summed counts. Column order: name,MOTA,IDF1,IDSW,FP,FN,MT,ML,GT.
pub fn report_csv(rows: &[(String, EvalCounts)]) -> String {
    let mut out = String::from("name,MOTA,IDF1,IDSW,FP,FN,MT,ML,GT\n");
    let mut overall = EvalCounts::default();
    let push = |name: &str, counts: &EvalCounts, out: &mut String| {
        let r = counts.report();
        out.push_str(&format!(
            "{name},{:.4},{:.4},{},{},{},{:.1},{:.1},{}\n",
            r.mota,
            r.idf1,
            r.id_switches,
            r.false_positives,
            r.false_negatives,
            r.mostly_tracked_pct,
            r.mostly_lost_pct,
            r.gt_count
        ));
    };
    for (name, counts) in rows {
        push(name, counts, &mut out);
        overall.merge(counts);
    }
    push("OVERALL", &overall, &mut out);
    out
}
