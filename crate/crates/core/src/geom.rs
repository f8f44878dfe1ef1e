//! Geometric and track-domain types shared by the whole pipeline.
//!
//! Boxes follow the MOTChallenge convention: `(left, top, width, height)` in
//! continuous pixel coordinates, frames are 1-based, and boxes may extend
//! outside the image (occlusion fills legitimately can).

use std::ops::{Add, Sub};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("box dimensions must be positive, got {width} x {height}")]
    NonPositiveBox { width: f64, height: f64 },
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<S> {
    pub left: S,
    pub top: S,
    pub width: S,
    pub height: S,
}

impl<S: Scalar> BoundingBox<S> {
    /// Builds a box, rejecting non-positive dimensions.
    pub fn new(left: S, top: S, width: S, height: S) -> Result<Self, GeomError> {
        if width <= S::zero() || height <= S::zero() {
            return Err(GeomError::NonPositiveBox {
                width: width.to_f64().unwrap_or(f64::NAN),
                height: height.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            left,
            top,
            width,
            height,
        })
    }

    pub fn right(&self) -> S {
        self.left + self.width
    }

    pub fn bottom(&self) -> S {
        self.top + self.height
    }

    pub fn area(&self) -> S {
        self.width * self.height
    }

    pub fn centroid(&self) -> Centroid<S> {
        centroid_of(self)
    }
}

/// Center of a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Centroid<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Centroid<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }
}

/// Centroid displacement between consecutive frames; the motion model's
/// input and target unit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Offset<S> {
    pub dx: S,
    pub dy: S,
}

impl<S: Scalar> Offset<S> {
    pub fn new(dx: S, dy: S) -> Self {
        Self { dx, dy }
    }

    pub fn zero() -> Self {
        Self {
            dx: S::zero(),
            dy: S::zero(),
        }
    }

    /// L1 norm, the association distance used by the tracker.
    pub fn l1(&self) -> S {
        self.dx.abs() + self.dy.abs()
    }
}

impl<S: Scalar> Sub for Centroid<S> {
    type Output = Offset<S>;

    fn sub(self, rhs: Self) -> Offset<S> {
        Offset {
            dx: self.x - rhs.x,
            dy: self.y - rhs.y,
        }
    }
}

impl<S: Scalar> Add<Offset<S>> for Centroid<S> {
    type Output = Centroid<S>;

    fn add(self, rhs: Offset<S>) -> Centroid<S> {
        Centroid {
            x: self.x + rhs.dx,
            y: self.y + rhs.dy,
        }
    }
}

/// One detector output: a box on a 1-based frame with a confidence score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<S> {
    pub frame: u32,
    pub bbox: BoundingBox<S>,
    /// Confidence in `[0, 1]`, clamped on ingest.
    pub confidence: f64,
}

/// Whether a track point came from a detection or from the motion model's
/// occlusion reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint<S> {
    pub frame: u32,
    pub bbox: BoundingBox<S>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Lost,
    Terminated,
}

/// One tracked identity: lifecycle state, patience counter and the per-frame
/// boxes accumulated so far. Frames within `points` strictly increase.
#[derive(Debug, Clone)]
pub struct Track<S> {
    pub id: u32,
    pub state: TrackState,
    pub patience_left: u32,
    pub points: Vec<TrackPoint<S>>,
    /// First unobserved frame, set iff the track is lost.
    pub lost_since: Option<u32>,
}

impl<S: Scalar> Track<S> {
    pub fn last_point(&self) -> Option<&TrackPoint<S>> {
        self.points.last()
    }

    /// Last point that came from an actual detection.
    pub fn last_observed(&self) -> Option<&TrackPoint<S>> {
        self.points
            .iter()
            .rev()
            .find(|p| p.provenance == Provenance::Observed)
    }
}

/// Sequence metadata mirroring a MOTChallenge `seqinfo.ini`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInfo {
    pub name: String,
    pub frame_count: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub frame_rate: f64,
}

/// Center of a box: `(left + width/2, top + height/2)`.
pub fn centroid_of<S: Scalar>(bbox: &BoundingBox<S>) -> Centroid<S> {
    let half = S::cast(0.5);
    Centroid {
        x: bbox.left + bbox.width * half,
        y: bbox.top + bbox.height * half,
    }
}

/// Inverse of [`centroid_of`] for the given dimensions.
pub fn box_from_centroid<S: Scalar>(
    c: Centroid<S>,
    width: S,
    height: S,
) -> Result<BoundingBox<S>, GeomError> {
    let half = S::cast(0.5);
    BoundingBox::new(c.x - width * half, c.y - height * half, width, height)
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou<S: Scalar>(a: &BoundingBox<S>, b: &BoundingBox<S>) -> S {
    // areas come from the same edge arithmetic as the intersection, so
    // identical boxes give exactly 1
    let (ar, ab) = (a.right(), a.bottom());
    let (br, bb) = (b.right(), b.bottom());
    let ix = (ar.min(br) - a.left.max(b.left)).max(S::zero());
    let iy = (ab.min(bb) - a.top.max(b.top)).max(S::zero());
    let inter = ix * iy;
    if inter <= S::zero() {
        return S::zero();
    }
    let area_a = (ar - a.left) * (ab - a.top);
    let area_b = (br - b.left) * (bb - b.top);
    inter / (area_a + area_b - inter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(l: f64, t: f64, w: f64, h: f64) -> BoundingBox<f64> {
        BoundingBox::new(l, t, w, h).unwrap()
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(
            centroid_of(&bb(0.0, 0.0, 10.0, 10.0)),
            Centroid::new(5.0, 5.0)
        );
        assert_eq!(
            centroid_of(&bb(5.0, 0.0, 10.0, 10.0)),
            Centroid::new(10.0, 5.0)
        );
        assert_eq!(
            centroid_of(&bb(-3.0, 7.0, 6.0, 2.0)),
            Centroid::new(0.0, 8.0)
        );
    }

    #[test]
    fn box_from_centroid_examples() {
        assert_eq!(
            box_from_centroid(Centroid::new(5.0, 5.0), 10.0, 10.0).unwrap(),
            bb(0.0, 0.0, 10.0, 10.0)
        );
        assert_eq!(
            box_from_centroid(Centroid::new(0.0, 0.0), 2.0, 4.0).unwrap(),
            bb(-1.0, -2.0, 2.0, 4.0)
        );
        assert!(box_from_centroid(Centroid::new(0.0, 0.0), 0.0, 4.0).is_err());
        assert!(box_from_centroid(Centroid::new(0.0, 0.0), 2.0, -1.0).is_err());
    }

    #[test]
    fn iou_examples() {
        assert_eq!(
            iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(0.0, 0.0, 10.0, 10.0)),
            1.0
        );
        assert_eq!(
            iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(20.0, 20.0, 5.0, 5.0)),
            0.0
        );
        // intersection 50, union 150
        let v = iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(5.0, 0.0, 10.0, 10.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn touching_boxes_have_zero_iou() {
        assert_eq!(
            iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(10.0, 0.0, 10.0, 10.0)),
            0.0
        );
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(
            l1 in -50.0..50.0, t1 in -50.0..50.0, w1 in 0.1..40.0, h1 in 0.1..40.0,
            l2 in -50.0..50.0, t2 in -50.0..50.0, w2 in 0.1..40.0, h2 in 0.1..40.0,
        ) {
            let a = bb(l1, t1, w1, h1);
            let b = bb(l2, t2, w2, h2);
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn iou_of_box_with_itself_is_one(
            l in -50.0..50.0, t in -50.0..50.0, w in 0.1..40.0, h in 0.1..40.0,
        ) {
            let a = bb(l, t, w, h);
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn centroid_round_trip(
            x in -500.0f64..500.0, y in -500.0f64..500.0, w in 0.1f64..100.0, h in 0.1f64..100.0,
        ) {
            let c = Centroid::new(x, y);
            let back = centroid_of(&box_from_centroid(c, w, h).unwrap());
            prop_assert!((back.x - c.x).abs() <= 1e-9 * c.x.abs().max(1.0));
            prop_assert!((back.y - c.y).abs() <= 1e-9 * c.y.abs().max(1.0));
        }
    }
}
