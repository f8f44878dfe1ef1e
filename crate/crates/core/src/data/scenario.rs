//! Parametric synthetic scenarios: analytic object paths rendered into
//! ground-truth tracks and noisy detections, with optional occlusion windows
//! during which detections are suppressed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FrameDetections, GroundTruthTrack};
use crate::geom::{box_from_centroid, Provenance};
use crate::scalar::Scalar;
use crate::{Centroid, Detection, Offset, TrackPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionPath {
    ConstantVelocity {
        start: Centroid,
        velocity: Offset,
    },
    /// Circular arc: constant speed, heading rotating by `turn_rate` radians
    /// per frame.
    Turning {
        start: Centroid,
        speed: f64,
        heading: f64,
        turn_rate: f64,
    },
}

impl MotionPath {
    /// Position at a 1-based frame index.
    pub fn position(&self, frame: u32) -> Centroid {
        let t = (frame - 1) as f64;
        match *self {
            MotionPath::ConstantVelocity { start, velocity } => {
                Centroid::new(start.x + velocity.dx * t, start.y + velocity.dy * t)
            }
            MotionPath::Turning {
                start,
                speed,
                heading,
                turn_rate,
            } => {
                if turn_rate.abs() < 1e-12 {
                    return Centroid::new(
                        start.x + speed * heading.cos() * t,
                        start.y + speed * heading.sin() * t,
                    );
                }
                let radius = speed / turn_rate;
                Centroid::new(
                    start.x + radius * ((heading + turn_rate * t).sin() - heading.sin()),
                    start.y - radius * ((heading + turn_rate * t).cos() - heading.cos()),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioObject {
    pub path: MotionPath,
    pub width: f64,
    pub height: f64,
    /// Inclusive frame windows with no detections for this object.
    pub occlusions: Vec<(u32, u32)>,
}

impl ScenarioObject {
    fn occluded(&self, frame: u32) -> bool {
        self.occlusions
            .iter()
            .any(|&(a, b)| (a..=b).contains(&frame))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub objects: Vec<ScenarioObject>,
    pub noise_sigma: f64,
    pub frame_count: u32,
    pub image_width: u32,
    pub image_height: u32,
}

impl Scenario {
    /// One object moving linearly across the image; the unoccluded twin of
    /// [`Scenario::occlusion`].
    pub fn constant_velocity(noise_sigma: f64) -> Self {
        Self {
            name: "cv".into(),
            objects: vec![ScenarioObject {
                path: MotionPath::ConstantVelocity {
                    start: Centroid::new(80.0, 100.0),
                    velocity: Offset::new(10.0, 5.0),
                },
                width: 48.0,
                height: 96.0,
                occlusions: vec![],
            }],
            noise_sigma,
            frame_count: 40,
            image_width: 960,
            image_height: 540,
        }
    }

    /// One object on a circular arc.
    pub fn turning(noise_sigma: f64) -> Self {
        Self {
            name: "turn".into(),
            objects: vec![ScenarioObject {
                path: MotionPath::Turning {
                    start: Centroid::new(120.0, 260.0),
                    speed: 12.0,
                    heading: -0.4,
                    turn_rate: 0.05,
                },
                width: 40.0,
                height: 80.0,
                occlusions: vec![],
            }],
            noise_sigma,
            frame_count: 40,
            image_width: 960,
            image_height: 540,
        }
    }

    /// Two objects whose centroids coincide at frame 16.
    pub fn crossing(noise_sigma: f64) -> Self {
        Self {
            name: "cross".into(),
            objects: vec![
                ScenarioObject {
                    path: MotionPath::ConstantVelocity {
                        start: Centroid::new(50.0, 100.0),
                        velocity: Offset::new(10.0, 4.0),
                    },
                    width: 36.0,
                    height: 72.0,
                    occlusions: vec![],
                },
                ScenarioObject {
                    path: MotionPath::ConstantVelocity {
                        start: Centroid::new(350.0, 160.0),
                        velocity: Offset::new(-10.0, 0.0),
                    },
                    width: 36.0,
                    height: 72.0,
                    occlusions: vec![],
                },
            ],
            noise_sigma,
            frame_count: 36,
            image_width: 960,
            image_height: 540,
        }
    }

    /// One constant-velocity object visible on frames 1-10, hidden 11-15,
    /// visible again 16-40. Over the six-frame association gap the motion
    /// exceeds a stationary model's gate, while a single frame of it still
    /// leaves same-size boxes above 0.5 IoU.
    pub fn occlusion(noise_sigma: f64) -> Self {
        Self {
            name: "occlusion".into(),
            objects: vec![ScenarioObject {
                path: MotionPath::ConstantVelocity {
                    start: Centroid::new(80.0, 100.0),
                    velocity: Offset::new(10.0, 5.0),
                },
                width: 48.0,
                height: 96.0,
                occlusions: vec![(11, 15)],
            }],
            noise_sigma,
            frame_count: 40,
            image_width: 960,
            image_height: 540,
        }
    }

    /// Two crossing objects, one of which is occluded around the crossing
    /// point; the stress case for identity preservation.
    pub fn crossing_occlusion(noise_sigma: f64) -> Self {
        let mut s = Self::crossing(noise_sigma);
        s.name = "cross-occ".into();
        s.frame_count = 60;
        s.objects[0].occlusions = vec![(14, 18)];
        s
    }

    pub fn by_name(name: &str, noise_sigma: f64) -> Option<Self> {
        match name {
            "cv" => Some(Self::constant_velocity(noise_sigma)),
            "turn" => Some(Self::turning(noise_sigma)),
            "cross" => Some(Self::crossing(noise_sigma)),
            "occlusion" => Some(Self::occlusion(noise_sigma)),
            "cross-occ" => Some(Self::crossing_occlusion(noise_sigma)),
            _ => None,
        }
    }

    /// Renders the scenario: full ground-truth tracks (occluded frames
    /// included) and per-frame detections with Gaussian centroid noise,
    /// suppressed inside occlusion windows. Deterministic in the seed.
    pub fn generate(&self, seed: u64) -> (Vec<GroundTruthTrack>, Vec<FrameDetections>) {
        debug_assert!(self.objects.iter().all(|o| {
            o.occlusions.iter().all(|&(a, b)| a >= 1 && a <= b && b <= self.frame_count)
        }));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tracks: Vec<GroundTruthTrack> = Vec::new();
        for (i, obj) in self.objects.iter().enumerate() {
            let points = (1..=self.frame_count)
                .map(|frame| TrackPoint {
                    frame,
                    bbox: box_from_centroid(obj.path.position(frame), obj.width, obj.height)
                        .expect("positive scenario dimensions"),
                    provenance: Provenance::Observed,
                })
                .collect::<Vec<_>>();
            let n = points.len();
            tracks.push(GroundTruthTrack {
                id: i as u32 + 1,
                class_id: 1,
                points,
                visibility: vec![1.0; n],
                eval_flags: vec![true; n],
            });
        }

        let mut frames = Vec::with_capacity(self.frame_count as usize);
        for frame in 1..=self.frame_count {
            let mut detections = Vec::new();
            for obj in &self.objects {
                if obj.occluded(frame) {
                    continue;
                }
                let clean = obj.path.position(frame);
                let noisy = Centroid::new(
                    clean.x + self.noise_sigma * f64::standard_normal(&mut rng),
                    clean.y + self.noise_sigma * f64::standard_normal(&mut rng),
                );
                detections.push(Detection {
                    frame,
                    bbox: box_from_centroid(noisy, obj.width, obj.height)
                        .expect("positive scenario dimensions"),
                    confidence: 1.0,
                });
            }
            frames.push(FrameDetections { frame, detections });
        }
        (tracks, frames)
    }
}

/// Random constant-velocity and turning tracks for synthetic training
/// corpora. `turn_fraction` of the objects follow arcs, the rest move
/// straight; speeds are uniform in `speed_range` pixels per frame.
pub fn synthetic_motion_tracks(
    count: usize,
    frames: u32,
    speed_range: (f64, f64),
    turn_fraction: f64,
    seed: u64,
) -> Vec<GroundTruthTrack> {
    use rand::Rng as _;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let start = Centroid::new(rng.gen_range(100.0..800.0), rng.gen_range(100.0..450.0));
            let speed = rng.gen_range(speed_range.0..speed_range.1);
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let path = if rng.gen_range(0.0..1.0) < turn_fraction {
                let turn_rate = rng.gen_range(0.015..0.06)
                    * if rng.gen_range(0usize..2) == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                MotionPath::Turning {
                    start,
                    speed,
                    heading,
                    turn_rate,
                }
            } else {
                MotionPath::ConstantVelocity {
                    start,
                    velocity: Offset::new(speed * heading.cos(), speed * heading.sin()),
                }
            };
            let points = (1..=frames)
                .map(|frame| TrackPoint {
                    frame,
                    bbox: box_from_centroid(path.position(frame), 40.0, 80.0)
                        .expect("positive dimensions"),
                    provenance: Provenance::Observed,
                })
                .collect::<Vec<_>>();
            let n = points.len();
            GroundTruthTrack {
                id: i as u32 + 1,
                class_id: 1,
                points,
                visibility: vec![1.0; n],
                eval_flags: vec![true; n],
            }
        })
        .collect()
}
