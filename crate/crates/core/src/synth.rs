//! Synthetic landmark traces for each vocabulary gesture.
//!
//! The generator poses a kinematic hand model (wrist, knuckle row, three
//! segments per finger) and animates it. Finger curl bends the distal
//! segments toward the camera, so the PIP angle of every generated frame is
//! exactly the commanded angle when no noise is added. These traces are the
//! ground truth the recognizer is tested against.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gesture::{Direction, ForwardAxis, GestureKind};
use crate::hand::{Finger, HandFrame, Handedness, LandmarkPoint, LANDMARK_COUNT};

pub const DEFAULT_RATE_HZ: f64 = 50.0;

const LEAD_IN: f64 = 0.4;
const EXTENDED: f64 = PI;
const CURLED: f64 = PI / 2.0;
const WRIST: (f64, f64) = (0.4, 0.75);

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid synthetic parameter {field}: {value}")]
pub struct SynthError {
    pub field: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticGestureKind {
    OpenPalmHold,
    FistHold,
    IndexPointHold,
    PalmPush,
    FistPull,
    GraspThenRotate { direction: Direction },
    FingerFlick { finger: Finger },
    FistRotate { direction: Direction },
    WandVerticalFlick,
    WandHorizontalSwish { direction: Direction },
}

impl SyntheticGestureKind {
    /// Every kind with every payload value.
    pub fn all() -> Vec<SyntheticGestureKind> {
        use SyntheticGestureKind as K;
        let mut v = vec![
            K::OpenPalmHold,
            K::FistHold,
            K::IndexPointHold,
            K::PalmPush,
            K::FistPull,
        ];
        for d in [Direction::Left, Direction::Right] {
            v.push(K::GraspThenRotate { direction: d });
        }
        v.extend(Finger::ALL.map(|finger| K::FingerFlick { finger }));
        for d in [Direction::Left, Direction::Right] {
            v.push(K::FistRotate { direction: d });
        }
        v.push(K::WandVerticalFlick);
        for d in [Direction::Left, Direction::Right] {
            v.push(K::WandHorizontalSwish { direction: d });
        }
        v
    }

    /// The event a recognizer should emit for this trace; `None` for holds.
    pub fn intended(self) -> Option<GestureKind> {
        use SyntheticGestureKind as K;
        match self {
            K::OpenPalmHold | K::FistHold | K::IndexPointHold => None,
            K::PalmPush => Some(GestureKind::PalmPush),
            K::FistPull => Some(GestureKind::FistPull),
            K::GraspThenRotate { direction } => Some(GestureKind::GraspRotate { direction }),
            K::FingerFlick { finger } => Some(GestureKind::FingerFlick { finger }),
            K::FistRotate { direction } => Some(GestureKind::FistRotate { direction }),
            K::WandVerticalFlick => Some(GestureKind::WandVerticalFlick),
            K::WandHorizontalSwish { direction } => {
                Some(GestureKind::WandHorizontalSwish { direction })
            }
        }
    }

    /// Default (motion duration s, amplitude) per kind. Amplitude is a
    /// displacement in image units, or a roll angle in radians for rotations.
    fn defaults(self) -> (f64, f64) {
        use SyntheticGestureKind as K;
        match self {
            K::OpenPalmHold | K::FistHold | K::IndexPointHold => (1.0, 0.0),
            K::PalmPush | K::FistPull => (0.25, 0.375),
            K::GraspThenRotate { .. } | K::FistRotate { .. } => (0.5, 0.6),
            K::FingerFlick { .. } => (0.04, 0.12),
            K::WandVerticalFlick => (0.1, 0.2),
            K::WandHorizontalSwish { .. } => (0.15, 0.25),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Motion phase length (hold length for the static kinds).
    pub duration: f64,
    pub amplitude: f64,
    /// Std-dev of per-coordinate Gaussian jitter.
    pub noise: f64,
    pub rate_hz: f64,
    pub forward_axis: ForwardAxis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticGesture {
    kind: SyntheticGestureKind,
    params: SynthParams,
}

impl SyntheticGesture {
    pub fn new(kind: SyntheticGestureKind, params: SynthParams) -> Result<Self, SynthError> {
        let p = params;
        for (field, value, ok) in [
            ("duration", p.duration, p.duration > 0.0),
            ("amplitude", p.amplitude, p.amplitude >= 0.0),
            ("noise", p.noise, p.noise >= 0.0),
            ("rate_hz", p.rate_hz, p.rate_hz > 0.0),
        ] {
            if !(value.is_finite() && ok) {
                return Err(SynthError { field, value });
            }
        }
        Ok(Self { kind, params })
    }

    /// Default parameters with the given noise level.
    pub fn with_noise(kind: SyntheticGestureKind, noise: f64) -> Result<Self, SynthError> {
        let (duration, amplitude) = kind.defaults();
        Self::new(
            kind,
            SynthParams {
                duration,
                amplitude,
                noise,
                rate_hz: DEFAULT_RATE_HZ,
                forward_axis: ForwardAxis::PosX,
            },
        )
    }

    pub fn kind(&self) -> SyntheticGestureKind {
        self.kind
    }

    pub fn params(&self) -> &SynthParams {
        &self.params
    }

    /// Total trace length in seconds.
    pub fn total_duration(&self) -> f64 {
        use SyntheticGestureKind as K;
        let d = self.params.duration;
        match self.kind {
            K::OpenPalmHold | K::FistHold | K::IndexPointHold => d,
            K::GraspThenRotate { .. } => LEAD_IN + GRASP_TIME + d + 0.8,
            K::FingerFlick { .. } => LEAD_IN + d + FLICK_RETURN + 0.4,
            _ => LEAD_IN + d + 0.8,
        }
    }

    /// Hand configuration at time `t`.
    fn shape_at(&self, t: f64) -> HandShape {
        use SyntheticGestureKind as K;
        let p = &self.params;
        let (fx, fy) = p.forward_axis.unit();
        let ramp = |start: f64, len: f64| ((t - start) / len).clamp(0.0, 1.0);
        let motion = ramp(LEAD_IN, p.duration);
        match self.kind {
            K::OpenPalmHold => HandShape::open(),
            K::FistHold => HandShape::fist(),
            K::IndexPointHold => HandShape::index_point(),
            K::PalmPush => HandShape {
                offset: (fx * p.amplitude * motion, fy * p.amplitude * motion),
                ..HandShape::open()
            },
            K::FistPull => HandShape {
                offset: (-fx * p.amplitude * motion, -fy * p.amplitude * motion),
                ..HandShape::fist()
            },
            K::GraspThenRotate { direction } => {
                let curl = ramp(LEAD_IN, GRASP_TIME);
                let angle = EXTENDED + (CURLED - EXTENDED) * curl;
                HandShape {
                    curls: [angle; 5],
                    roll: direction.sign() * p.amplitude * ramp(LEAD_IN + GRASP_TIME, p.duration),
                    ..HandShape::open()
                }
            }
            K::FistRotate { direction } => HandShape {
                roll: direction.sign() * p.amplitude * motion,
                ..HandShape::fist()
            },
            K::FingerFlick { finger } => {
                let out = motion - ramp(LEAD_IN + p.duration, FLICK_RETURN);
                let mut s = HandShape::open();
                s.tip_offset[finger.index()] = (fx * p.amplitude * out, fy * p.amplitude * out);
                s
            }
            K::WandVerticalFlick => HandShape {
                offset: (0.0, -p.amplitude * motion),
                ..HandShape::index_point()
            },
            K::WandHorizontalSwish { direction } => HandShape {
                offset: (direction.sign() * p.amplitude * motion, 0.0),
                ..HandShape::index_point()
            },
        }
    }

    /// Generates the trace; identical inputs give identical frames.
    pub fn generate(&self, seed: u64) -> Vec<HandFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = (self.params.noise > 0.0)
            .then(|| Normal::new(0.0, self.params.noise).expect("noise validated"));
        let n = (self.total_duration() * self.params.rate_hz).round() as usize + 1;
        (0..n)
            .map(|i| {
                let t = i as f64 / self.params.rate_hz;
                let mut pts = self.shape_at(t).landmarks();
                if let Some(dist) = &noise {
                    for p in pts.iter_mut() {
                        p.x += dist.sample(&mut rng);
                        p.y += dist.sample(&mut rng);
                        p.z += dist.sample(&mut rng);
                    }
                }
                HandFrame::new(t, Handedness::Right, pts).expect("generated hand stays in range")
            })
            .collect()
    }
}

const GRASP_TIME: f64 = 0.3;
const FLICK_RETURN: f64 = 0.4;

/// Shorthand for [`SyntheticGesture::with_noise`] followed by `generate`.
pub fn synthesize_gesture_trace(
    kind: SyntheticGestureKind,
    noise: f64,
    seed: u64,
) -> Result<Vec<HandFrame>, SynthError> {
    Ok(SyntheticGesture::with_noise(kind, noise)?.generate(seed))
}

/// Posed hand in image space.
#[derive(Debug, Clone, Copy)]
struct HandShape {
    /// PIP (thumb: IP) angle per finger.
    curls: [f64; 5],
    roll: f64,
    offset: (f64, f64),
    tip_offset: [(f64, f64); 5],
}

// Local hand frame: `a` runs along the knuckle row toward the pinky, `u`
// points from the wrist toward the fingers. Lengths in image units.
const KNUCKLE_A: [f64; 4] = [-0.075, -0.025, 0.025, 0.075];
const KNUCKLE_U: f64 = 0.15;
const FINGER_SEGMENTS: [f64; 3] = [0.06, 0.04, 0.03];
const THUMB_BASE: (f64, f64) = (-0.06, 0.04);
const THUMB_DIR: (f64, f64) = (-0.6, 0.8);
const THUMB_SEGMENTS: [f64; 3] = [0.05, 0.04, 0.035];

impl HandShape {
    fn open() -> Self {
        Self {
            curls: [EXTENDED; 5],
            roll: 0.0,
            offset: (0.0, 0.0),
            tip_offset: [(0.0, 0.0); 5],
        }
    }

    fn fist() -> Self {
        Self {
            curls: [CURLED; 5],
            ..Self::open()
        }
    }

    fn index_point() -> Self {
        let mut s = Self::fist();
        s.curls[Finger::Index.index()] = EXTENDED;
        s
    }

    fn landmarks(&self) -> [LandmarkPoint; LANDMARK_COUNT] {
        let (c, s) = (self.roll.cos(), self.roll.sin());
        // a-axis maps to (cos, sin); u-axis to the rotated image "up" (0, -1).
        let to_image = |a: f64, u: f64, z: f64| {
            LandmarkPoint::new(
                WRIST.0 + self.offset.0 + a * c + u * s,
                WRIST.1 + self.offset.1 + a * s - u * c,
                z,
            )
        };
        let mut pts = [LandmarkPoint::new(0.0, 0.0, 0.0); LANDMARK_COUNT];
        pts[0] = to_image(0.0, 0.0, 0.0);

        // A joint chain from `base` along `dir`; segments after the first
        // `straight` ones bend toward the camera by (pi - curl).
        let chain =
            |base: (f64, f64), dir: (f64, f64), seg: [f64; 3], straight: usize, curl: f64| {
                let bend = PI - curl;
                let bent = (dir.0 * bend.cos(), dir.1 * bend.cos(), -bend.sin());
                let mut joints = [(base.0, base.1, 0.0); 4];
                for k in 0..3 {
                    let d = if k < straight {
                        (dir.0, dir.1, 0.0)
                    } else {
                        bent
                    };
                    let p = joints[k];
                    joints[k + 1] = (p.0 + d.0 * seg[k], p.1 + d.1 * seg[k], p.2 + d.2 * seg[k]);
                }
                joints
            };

        let thumb = chain(THUMB_BASE, THUMB_DIR, THUMB_SEGMENTS, 2, self.curls[0]);
        for (k, j) in thumb.iter().enumerate() {
            pts[1 + k] = to_image(j.0, j.1, j.2);
        }
        for f in 1..5 {
            let j = chain(
                (KNUCKLE_A[f - 1], KNUCKLE_U),
                (0.0, 1.0),
                FINGER_SEGMENTS,
                1,
                self.curls[f],
            );
            for (k, p) in j.iter().enumerate() {
                pts[4 * f + 1 + k] = to_image(p.0, p.1, p.2);
            }
        }

        for f in Finger::ALL {
            let (dx, dy) = self.tip_offset[f.index()];
            let p = &mut pts[f.tip()];
            p.x += dx;
            p.y += dy;
        }
        pts
    }
}
