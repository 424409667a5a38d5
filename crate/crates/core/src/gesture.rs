//! Gesture recognition: finger extension with hysteresis, static hand poses,
//! and windowed motion detectors that turn a frame stream into discrete
//! [`GestureEvent`]s.
//!
//! The recognizer is a single-threaded state machine. Each detector follows
//! the same shape: it qualifies while its window condition holds, keeps the
//! strongest candidate, and emits once the condition lapses. Motion that fed
//! an emitted event is consumed so it cannot fire twice.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand::{Finger, HandFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry at landmark {0}")]
    Degenerate(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("gesture.{field}: {reason}")]
pub struct GestureConfigError {
    pub field: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn from_sign(v: f64) -> Direction {
        if v >= 0.0 {
            Direction::Right
        } else {
            Direction::Left
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Right => 1.0,
            Direction::Left => -1.0,
        }
    }

    pub fn flip(self) -> Direction {
        match self {
            Direction::Right => Direction::Left,
            Direction::Left => Direction::Right,
        }
    }
}

/// Image axis treated as "forward" for pushes, pulls and flicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForwardAxis {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
}

impl ForwardAxis {
    pub fn unit(self) -> (f64, f64) {
        match self {
            ForwardAxis::PosX => (1.0, 0.0),
            ForwardAxis::NegX => (-1.0, 0.0),
            ForwardAxis::PosY => (0.0, 1.0),
            ForwardAxis::NegY => (0.0, -1.0),
        }
    }

    fn project(self, x: f64, y: f64) -> f64 {
        let (ux, uy) = self.unit();
        x * ux + y * uy
    }
}

/// Recognizer thresholds. Distances are in normalized image units, speeds in
/// units per second, angles in radians, durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GestureConfig {
    pub forward_axis: ForwardAxis,
    pub extension_on: f64,
    pub extension_off: f64,
    pub push_speed: f64,
    pub push_min_displacement: f64,
    pub push_min_duration: f64,
    pub flick_peak_speed: f64,
    pub flick_window: f64,
    pub flick_min_displacement: f64,
    pub flick_refractory: f64,
    pub roll_threshold: f64,
    pub roll_window: f64,
    /// Moving-average span applied to wrist roll before the rotation detector.
    pub roll_smoothing: f64,
    pub grasp_window: f64,
    pub grasp_link_window: f64,
    pub wand_vflick_displacement: f64,
    pub wand_vflick_window: f64,
    pub wand_hswish_displacement: f64,
    pub wand_hswish_window: f64,
}

impl Default for GestureConfig {
    fn default() -> Self {
        Self {
            forward_axis: ForwardAxis::PosX,
            extension_on: 160f64.to_radians(),
            extension_off: 120f64.to_radians(),
            push_speed: 0.8,
            push_min_displacement: 0.15,
            push_min_duration: 0.15,
            flick_peak_speed: 2.0,
            flick_window: 0.12,
            flick_min_displacement: 0.06,
            flick_refractory: 0.3,
            roll_threshold: 0.5,
            roll_window: 0.7,
            roll_smoothing: 0.1,
            grasp_window: 0.5,
            grasp_link_window: 1.0,
            wand_vflick_displacement: 0.12,
            wand_vflick_window: 0.2,
            wand_hswish_displacement: 0.15,
            wand_hswish_window: 0.3,
        }
    }
}

impl GestureConfig {
    pub fn validate(&self) -> Result<(), GestureConfigError> {
        let fields: [(&'static str, f64); 18] = [
            ("extension_on", self.extension_on),
            ("extension_off", self.extension_off),
            ("push_speed", self.push_speed),
            ("push_min_displacement", self.push_min_displacement),
            ("push_min_duration", self.push_min_duration),
            ("flick_peak_speed", self.flick_peak_speed),
            ("flick_window", self.flick_window),
            ("flick_min_displacement", self.flick_min_displacement),
            ("flick_refractory", self.flick_refractory),
            ("roll_threshold", self.roll_threshold),
            ("roll_window", self.roll_window),
            ("roll_smoothing", self.roll_smoothing),
            ("grasp_window", self.grasp_window),
            ("grasp_link_window", self.grasp_link_window),
            ("wand_vflick_displacement", self.wand_vflick_displacement),
            ("wand_vflick_window", self.wand_vflick_window),
            ("wand_hswish_displacement", self.wand_hswish_displacement),
            ("wand_hswish_window", self.wand_hswish_window),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(GestureConfigError {
                    field,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if self.extension_on > PI {
            return Err(GestureConfigError {
                field: "extension_on",
                reason: "must not exceed pi".into(),
            });
        }
        if self.extension_on <= self.extension_off {
            return Err(GestureConfigError {
                field: "extension_off",
                reason: "must be below extension_on".into(),
            });
        }
        Ok(())
    }

    /// History span the recognizer keeps, never less than one second.
    fn history_span(&self) -> f64 {
        [
            1.0,
            self.roll_window + self.roll_smoothing,
            self.flick_window,
            self.wand_vflick_window,
            self.wand_hswish_window,
        ]
        .into_iter()
        .fold(0.0, f64::max)
            + 0.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerState {
    pub finger: Finger,
    pub pip_angle: f64,
    pub extended: bool,
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> Option<f64> {
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    Some((dot / (na * nb)).clamp(-1.0, 1.0).acos())
}

/// Extension state of one finger, with hysteresis against `prev`.
pub fn finger_state(
    frame: &HandFrame,
    finger: Finger,
    prev: Option<&FingerState>,
    cfg: &GestureConfig,
) -> Result<FingerState, GeometryError> {
    let (p, m, tip) = finger.angle_joints();
    let mid = frame.point(m);
    let pip_angle = angle_between(frame.point(p).sub(mid), frame.point(tip).sub(mid))
        .ok_or(GeometryError::Degenerate(m))?;
    let extended = if pip_angle >= cfg.extension_on {
        true
    } else if pip_angle <= cfg.extension_off {
        false
    } else {
        prev.is_some_and(|s| s.extended)
    };
    Ok(FingerState {
        finger,
        pip_angle,
        extended,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandPose {
    OpenPalm,
    Fist,
    IndexPoint,
    Other,
}

/// Pose from per-finger extension bits, precedence OpenPalm > Fist > IndexPoint.
pub fn pose_from_states(states: &[FingerState; 5]) -> HandPose {
    let ext = |f: Finger| states[f.index()].extended;
    let others_curled = !ext(Finger::Middle) && !ext(Finger::Ring) && !ext(Finger::Pinky);
    if Finger::ALL.iter().all(|&f| ext(f)) {
        HandPose::OpenPalm
    } else if !ext(Finger::Index) && others_curled {
        HandPose::Fist
    } else if ext(Finger::Index) && others_curled {
        HandPose::IndexPoint
    } else {
        HandPose::Other
    }
}

/// Classifies a frame. Fingers with degenerate geometry keep their previous
/// state; the returned flag reports whether that happened.
pub fn classify_pose(
    frame: &HandFrame,
    prev: Option<&[FingerState; 5]>,
    cfg: &GestureConfig,
) -> ([FingerState; 5], HandPose, bool) {
    let mut degenerate = false;
    let states = Finger::ALL.map(|f| {
        let p = prev.map(|s| &s[f.index()]);
        finger_state(frame, f, p, cfg).unwrap_or_else(|_| {
            degenerate = true;
            p.copied().unwrap_or(FingerState {
                finger: f,
                pip_angle: 0.0,
                extended: false,
            })
        })
    });
    let pose = pose_from_states(&states);
    (states, pose, degenerate)
}

/// Orientation of the index-MCP to pinky-MCP knuckle line in the image plane.
pub fn wrist_roll(frame: &HandFrame) -> Result<f64, GeometryError> {
    let a = frame.point(5);
    let b = frame.point(17);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::Degenerate(17));
    }
    Ok(dy.atan2(dx))
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GestureKind {
    PalmPush,
    FistPull,
    GraspRotate { direction: Direction },
    FingerFlick { finger: Finger },
    FistRotate { direction: Direction },
    WandVerticalFlick,
    WandHorizontalSwish { direction: Direction },
}

impl GestureKind {
    /// Co-firing rank, lower wins.
    pub fn priority(&self) -> u8 {
        match self {
            GestureKind::GraspRotate { .. } => 0,
            GestureKind::FistRotate { .. } => 1,
            GestureKind::PalmPush => 2,
            GestureKind::FistPull => 3,
            GestureKind::WandVerticalFlick => 4,
            GestureKind::WandHorizontalSwish { .. } => 5,
            GestureKind::FingerFlick { .. } => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GestureKind::PalmPush => "palm_push",
            GestureKind::FistPull => "fist_pull",
            GestureKind::GraspRotate { .. } => "grasp_rotate",
            GestureKind::FingerFlick { .. } => "finger_flick",
            GestureKind::FistRotate { .. } => "fist_rotate",
            GestureKind::WandVerticalFlick => "wand_vertical_flick",
            GestureKind::WandHorizontalSwish { .. } => "wand_horizontal_swish",
        }
    }

    /// Every kind with every payload value.
    pub fn all() -> Vec<GestureKind> {
        let mut v = vec![GestureKind::PalmPush, GestureKind::FistPull];
        for d in [Direction::Left, Direction::Right] {
            v.push(GestureKind::GraspRotate { direction: d });
        }
        v.extend(Finger::ALL.map(|finger| GestureKind::FingerFlick { finger }));
        for d in [Direction::Left, Direction::Right] {
            v.push(GestureKind::FistRotate { direction: d });
        }
        v.push(GestureKind::WandVerticalFlick);
        for d in [Direction::Left, Direction::Right] {
            v.push(GestureKind::WandHorizontalSwish { direction: d });
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureEvent {
    #[serde(flatten)]
    pub kind: GestureKind,
    pub t: f64,
    pub strength: f64,
}

/// Per-frame recognizer state for the debug stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameDebug {
    pub t: f64,
    pub pose: HandPose,
    pub pip_angles: [f64; 5],
    pub extended: [bool; 5],
    pub roll: f64,
    pub degenerate: bool,
    pub grasp_at: Option<f64>,
    pub pending: Vec<&'static str>,
    pub events: Vec<GestureEvent>,
}

#[derive(Debug, Clone)]
struct Sample {
    t: f64,
    pose: HandPose,
    /// Palm centroid projected on the forward axis.
    palm_fwd: f64,
    /// Tip minus palm centroid, per finger.
    tip_rel: [[f64; 3]; 5],
    /// Speed of `tip_rel` since the previous sample.
    tip_rel_speed: [f64; 5],
    index_tip: (f64, f64),
    index_tip_speed: f64,
    roll: f64,
    roll_smooth: f64,
}

#[derive(Debug, Clone, Copy)]
struct Run {
    start_t: f64,
    start_pos: f64,
    last_t: f64,
    last_pos: f64,
    peak: f64,
}

/// Sustained-velocity detector for pushes and pulls.
#[derive(Debug, Default, Clone)]
struct RunDetector {
    active: Option<Run>,
}

impl RunDetector {
    fn feed(
        &mut self,
        (prev_t, prev_pos): (f64, f64),
        (t, pos): (f64, f64),
        pose_ok: bool,
        cfg: &GestureConfig,
    ) -> Option<f64> {
        let v = (pos - prev_pos) / (t - prev_t);
        if pose_ok && v >= cfg.push_speed {
            let run = self.active.get_or_insert(Run {
                start_t: prev_t,
                start_pos: prev_pos,
                last_t: t,
                last_pos: pos,
                peak: v,
            });
            run.last_t = t;
            run.last_pos = pos;
            run.peak = run.peak.max(v);
            None
        } else {
            self.finish(cfg)
        }
    }

    fn finish(&mut self, cfg: &GestureConfig) -> Option<f64> {
        let run = self.active.take()?;
        (run.last_t - run.start_t >= cfg.push_min_duration
            && run.last_pos - run.start_pos >= cfg.push_min_displacement)
            .then_some(run.peak)
    }

    fn is_active(&self) -> bool {
        self.active.is_some()
    }
}

#[derive(Debug, Clone, Copy)]
struct RollCandidate {
    delta: f64,
    onset: f64,
}

#[derive(Debug, Clone, Copy)]
struct WandCandidate {
    delta: f64,
    peak: f64,
}

/// Frame-stream gesture recognizer.
#[derive(Debug, Clone)]
pub struct Recognizer {
    cfg: GestureConfig,
    history: VecDeque<Sample>,
    states: Option<[FingerState; 5]>,
    last_pose: Option<HandPose>,
    last_open_t: Option<f64>,
    grasp_at: Option<f64>,
    push: RunDetector,
    pull: RunDetector,
    roll_pending: Option<RollCandidate>,
    roll_consumed: f64,
    flick_pending: BTreeMap<Finger, f64>,
    flick_consumed: [f64; 5],
    flick_last_emit: [Option<f64>; 5],
    vflick_pending: Option<WandCandidate>,
    vflick_consumed: f64,
    swish_pending: Option<WandCandidate>,
    swish_consumed: f64,
    debug: Option<FrameDebug>,
}

impl Recognizer {
    pub fn new(cfg: GestureConfig) -> Result<Self, GestureConfigError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            history: VecDeque::new(),
            states: None,
            last_pose: None,
            last_open_t: None,
            grasp_at: None,
            push: RunDetector::default(),
            pull: RunDetector::default(),
            roll_pending: None,
            roll_consumed: f64::NEG_INFINITY,
            flick_pending: BTreeMap::new(),
            flick_consumed: [f64::NEG_INFINITY; 5],
            flick_last_emit: [None; 5],
            vflick_pending: None,
            vflick_consumed: f64::NEG_INFINITY,
            swish_pending: None,
            swish_consumed: f64::NEG_INFINITY,
            debug: None,
        })
    }

    pub fn config(&self) -> &GestureConfig {
        &self.cfg
    }

    /// Debug record of the most recent frame.
    pub fn last_debug(&self) -> Option<&FrameDebug> {
        self.debug.as_ref()
    }

    /// Feeds one frame. Frames that do not advance time are ignored.
    pub fn update(&mut self, frame: &HandFrame) -> Vec<GestureEvent> {
        let t = frame.t();
        if self.history.back().is_some_and(|s| t <= s.t) {
            return Vec::new();
        }
        let (states, pose, degenerate) = classify_pose(frame, self.states.as_ref(), &self.cfg);
        self.states = Some(states);

        self.track_grasp(t, pose);
        let sample = self.sample(frame, pose);
        let prev = self.history.back().cloned();
        self.history.push_back(sample);
        let span = self.cfg.history_span();
        while self.history.front().is_some_and(|s| s.t < t - span) {
            self.history.pop_front();
        }

        let mut candidates = Vec::new();
        if let Some(prev) = prev {
            let cur = self.history.back().expect("just pushed").clone();
            if let Some(peak) = self.push.feed(
                (prev.t, prev.palm_fwd),
                (t, cur.palm_fwd),
                pose == HandPose::OpenPalm,
                &self.cfg,
            ) {
                candidates.push((GestureKind::PalmPush, peak));
            }
            if let Some(peak) = self.pull.feed(
                (prev.t, -prev.palm_fwd),
                (t, -cur.palm_fwd),
                pose == HandPose::Fist,
                &self.cfg,
            ) {
                candidates.push((GestureKind::FistPull, peak));
            }
            candidates.extend(self.roll_step(t, false));
            candidates.extend(self.vflick_step(t, false));
            candidates.extend(self.swish_step(t, false));
            candidates.extend(self.flick_step(t, pose, false));
        }

        let events = self.arbitrate(t, candidates);
        self.debug = Some(FrameDebug {
            t,
            pose,
            pip_angles: states.map(|s| s.pip_angle),
            extended: states.map(|s| s.extended),
            roll: self.history.back().map(|s| s.roll).unwrap_or(0.0),
            degenerate,
            grasp_at: self.grasp_at,
            pending: self.pending_names(),
            events: events.clone(),
        });
        events
    }

    /// Completes any detector still holding a candidate at end of stream.
    pub fn flush(&mut self) -> Vec<GestureEvent> {
        let Some(t) = self.history.back().map(|s| s.t) else {
            return Vec::new();
        };
        let mut candidates = Vec::new();
        if let Some(peak) = self.push.finish(&self.cfg) {
            candidates.push((GestureKind::PalmPush, peak));
        }
        if let Some(peak) = self.pull.finish(&self.cfg) {
            candidates.push((GestureKind::FistPull, peak));
        }
        candidates.extend(self.roll_step(t, true));
        candidates.extend(self.vflick_step(t, true));
        candidates.extend(self.swish_step(t, true));
        candidates.extend(self.flick_step(t, HandPose::Other, true));
        self.arbitrate(t, candidates)
    }

    fn arbitrate(&mut self, t: f64, mut candidates: Vec<(GestureKind, f64)>) -> Vec<GestureEvent> {
        candidates.sort_by_key(|(k, _)| k.priority());
        let Some((kind, strength)) = candidates.into_iter().next() else {
            return Vec::new();
        };
        if let GestureKind::FingerFlick { finger } = kind {
            self.flick_last_emit[finger.index()] = Some(t);
        }
        vec![GestureEvent { kind, t, strength }]
    }

    fn pending_names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.push.is_active() {
            v.push("palm_push");
        }
        if self.pull.is_active() {
            v.push("fist_pull");
        }
        if self.roll_pending.is_some() {
            v.push("rotate");
        }
        if self.vflick_pending.is_some() {
            v.push("wand_vertical_flick");
        }
        if self.swish_pending.is_some() {
            v.push("wand_horizontal_swish");
        }
        if !self.flick_pending.is_empty() {
            v.push("finger_flick");
        }
        v
    }

    fn track_grasp(&mut self, t: f64, pose: HandPose) {
        if pose == HandPose::Fist && self.last_pose != Some(HandPose::Fist) {
            if let Some(open) = self.last_open_t {
                if t - open <= self.cfg.grasp_window {
                    self.grasp_at = Some(t);
                }
            }
        }
        if pose == HandPose::OpenPalm {
            self.last_open_t = Some(t);
        }
        self.last_pose = Some(pose);
    }

    fn sample(&self, frame: &HandFrame, pose: HandPose) -> Sample {
        let t = frame.t();
        let mut c = [0.0; 3];
        for i in [5, 9, 13, 17] {
            let p = frame.point(i);
            c[0] += p.x / 4.0;
            c[1] += p.y / 4.0;
            c[2] += p.z / 4.0;
        }
        let tip_rel = Finger::ALL.map(|f| {
            let p = frame.point(f.tip());
            [p.x - c[0], p.y - c[1], p.z - c[2]]
        });
        let it = frame.point(Finger::Index.tip());
        let prev = self.history.back();
        let dt = prev.map(|p| t - p.t);
        let tip_rel_speed = std::array::from_fn(|i| match (prev, dt) {
            (Some(p), Some(dt)) => {
                let d = [
                    tip_rel[i][0] - p.tip_rel[i][0],
                    tip_rel[i][1] - p.tip_rel[i][1],
                    tip_rel[i][2] - p.tip_rel[i][2],
                ];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() / dt
            }
            _ => 0.0,
        });
        let index_tip_speed = match (prev, dt) {
            (Some(p), Some(dt)) => (it.x - p.index_tip.0).hypot(it.y - p.index_tip.1) / dt,
            _ => 0.0,
        };
        let roll = match (wrist_roll(frame), prev) {
            (Ok(r), Some(p)) => p.roll + wrap_angle(r - p.roll),
            (Ok(r), None) => r,
            (Err(_), Some(p)) => p.roll,
            (Err(_), None) => 0.0,
        };
        let window_start = t - self.cfg.roll_smoothing;
        let (sum, n) = self
            .history
            .iter()
            .rev()
            .take_while(|s| s.t > window_start)
            .fold((roll, 1.0), |(sum, n), s| (sum + s.roll, n + 1.0));
        Sample {
            t,
            pose,
            palm_fwd: self.cfg.forward_axis.project(c[0], c[1]),
            tip_rel,
            tip_rel_speed,
            index_tip: (it.x, it.y),
            index_tip_speed,
            roll,
            roll_smooth: sum / n,
        }
    }

    fn roll_step(&mut self, t: f64, flush: bool) -> Option<(GestureKind, f64)> {
        let best = if flush {
            None
        } else {
            let cur = self.history.back()?;
            let mut best: Option<RollCandidate> = None;
            if cur.pose == HandPose::Fist {
                for s in self.history.iter().rev().skip(1) {
                    if t - s.t > self.cfg.roll_window
                        || s.t < self.roll_consumed
                        || s.pose != HandPose::Fist
                    {
                        break;
                    }
                    let delta = cur.roll_smooth - s.roll_smooth;
                    if delta.abs() >= self.cfg.roll_threshold
                        && best.is_none_or(|b| delta.abs() > b.delta.abs())
                    {
                        best = Some(RollCandidate { delta, onset: s.t });
                    }
                }
            }
            best
        };
        match (best, self.roll_pending) {
            (Some(b), Some(p)) => {
                if b.delta.abs() > p.delta.abs() {
                    self.roll_pending = Some(b);
                }
                None
            }
            (Some(b), None) => {
                self.roll_pending = Some(b);
                None
            }
            (None, Some(p)) => {
                self.roll_pending = None;
                self.roll_consumed = t;
                let direction = Direction::from_sign(p.delta);
                let linked = self
                    .grasp_at
                    .is_some_and(|g| g <= p.onset && p.onset - g <= self.cfg.grasp_link_window);
                let kind = if linked {
                    self.grasp_at = None;
                    GestureKind::GraspRotate { direction }
                } else {
                    GestureKind::FistRotate { direction }
                };
                Some((kind, p.delta.abs()))
            }
            (None, None) => None,
        }
    }

    fn wand_best(
        &self,
        t: f64,
        window: f64,
        consumed: f64,
        vertical: bool,
        min: f64,
    ) -> Option<WandCandidate> {
        let cur = self.history.back()?;
        if cur.pose != HandPose::IndexPoint {
            return None;
        }
        let mut best: Option<WandCandidate> = None;
        let mut peak = cur.index_tip_speed;
        for s in self.history.iter().rev().skip(1) {
            if t - s.t > window || s.t < consumed || s.pose != HandPose::IndexPoint {
                break;
            }
            let dx = cur.index_tip.0 - s.index_tip.0;
            let dy = cur.index_tip.1 - s.index_tip.1;
            let (along, across) = if vertical { (dy, dx) } else { (dx, dy) };
            if along.abs() >= min
                && along.abs() >= 2.0 * across.abs()
                && best.is_none_or(|b| along.abs() > b.delta.abs())
            {
                best = Some(WandCandidate { delta: along, peak });
            }
            peak = peak.max(s.index_tip_speed);
        }
        best
    }

    fn vflick_step(&mut self, t: f64, flush: bool) -> Option<(GestureKind, f64)> {
        let best = if flush {
            None
        } else {
            self.wand_best(
                t,
                self.cfg.wand_vflick_window,
                self.vflick_consumed,
                true,
                self.cfg.wand_vflick_displacement,
            )
        };
        let done = resolve_wand(&mut self.vflick_pending, best)?;
        self.vflick_consumed = t;
        Some((GestureKind::WandVerticalFlick, done.peak))
    }

    fn swish_step(&mut self, t: f64, flush: bool) -> Option<(GestureKind, f64)> {
        let best = if flush {
            None
        } else {
            self.wand_best(
                t,
                self.cfg.wand_hswish_window,
                self.swish_consumed,
                false,
                self.cfg.wand_hswish_displacement,
            )
        };
        let done = resolve_wand(&mut self.swish_pending, best)?;
        self.swish_consumed = t;
        Some((
            GestureKind::WandHorizontalSwish {
                direction: Direction::from_sign(done.delta),
            },
            done.peak,
        ))
    }

    fn flick_step(&mut self, t: f64, pose: HandPose, flush: bool) -> Option<(GestureKind, f64)> {
        let mut any = false;
        if !flush && pose != HandPose::IndexPoint {
            let cur = self.history.back()?.clone();
            let axis = self.cfg.forward_axis;
            for f in Finger::ALL {
                let i = f.index();
                if self.flick_last_emit[i].is_some_and(|e| t - e < self.cfg.flick_refractory) {
                    continue;
                }
                let cur_fwd = axis.project(cur.tip_rel[i][0], cur.tip_rel[i][1]);
                let mut peak = cur.tip_rel_speed[i];
                let mut best: Option<f64> = None;
                for s in self.history.iter().rev().skip(1) {
                    if t - s.t > self.cfg.flick_window || s.t < self.flick_consumed[i] {
                        break;
                    }
                    let d = cur_fwd - axis.project(s.tip_rel[i][0], s.tip_rel[i][1]);
                    if d >= self.cfg.flick_min_displacement && peak >= self.cfg.flick_peak_speed {
                        best = Some(best.map_or(peak, |b: f64| b.max(peak)));
                    }
                    peak = peak.max(s.tip_rel_speed[i]);
                }
                if let Some(p) = best {
                    any = true;
                    let e = self.flick_pending.entry(f).or_insert(p);
                    *e = e.max(p);
                }
            }
        }
        if any || self.flick_pending.is_empty() {
            return None;
        }
        let pending = std::mem::take(&mut self.flick_pending);
        for f in pending.keys() {
            self.flick_consumed[f.index()] = t;
        }
        let (finger, peak) = pending
            .into_iter()
            .filter(|(f, _)| {
                self.flick_last_emit[f.index()].is_none_or(|e| t - e >= self.cfg.flick_refractory)
            })
            .fold(None, |acc: Option<(Finger, f64)>, (f, p)| match acc {
                Some((_, bp)) if bp >= p => acc,
                _ => Some((f, p)),
            })?;
        Some((GestureKind::FingerFlick { finger }, peak))
    }
}

fn resolve_wand(
    pending: &mut Option<WandCandidate>,
    best: Option<WandCandidate>,
) -> Option<WandCandidate> {
    match (best, pending.as_mut()) {
        (Some(b), Some(p)) => {
            if b.delta.abs() > p.delta.abs() {
                p.delta = b.delta;
            }
            p.peak = p.peak.max(b.peak);
            None
        }
        (Some(b), None) => {
            *pending = Some(b);
            None
        }
        (None, Some(_)) => pending.take(),
        (None, None) => None,
    }
}

/// Runs a whole trace through a fresh recognizer, flushing at the end.
pub fn recognize_all(
    frames: &[HandFrame],
    cfg: &GestureConfig,
) -> Result<Vec<GestureEvent>, GestureConfigError> {
    let mut r = Recognizer::new(cfg.clone())?;
    let mut out: Vec<GestureEvent> = frames.iter().flat_map(|f| r.update(f)).collect();
    out.extend(r.flush());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{Handedness, LandmarkPoint};
    use proptest::prelude::*;

    fn frame_with(points: &[(usize, [f64; 3])]) -> HandFrame {
        let mut pts = [LandmarkPoint::new(0.5, 0.5, 0.0); 21];
        for &(i, p) in points {
            pts[i] = LandmarkPoint::new(p[0], p[1], p[2]);
        }
        HandFrame::new(0.0, Handedness::Right, pts).unwrap()
    }

    fn index_finger(tip: [f64; 3]) -> HandFrame {
        // MCP at origin-ish, shifted into the image
        let o = [0.5, 0.5, 0.0];
        let at = |d: [f64; 3]| [o[0] + d[0], o[1] + d[1], o[2] + d[2]];
        frame_with(&[
            (5, at([0.0, 0.0, 0.0])),
            (6, at([0.0, -0.1, 0.0])),
            (8, at(tip)),
        ])
    }

    #[test]
    fn collinear_finger_is_extended() {
        let cfg = GestureConfig::default();
        let s = finger_state(&index_finger([0.0, -0.2, 0.0]), Finger::Index, None, &cfg).unwrap();
        assert!((s.pip_angle - PI).abs() < 1e-12);
        assert!(s.extended);
    }

    #[test]
    fn right_angle_finger_is_curled() {
        let cfg = GestureConfig::default();
        let s = finger_state(&index_finger([0.1, -0.1, 0.0]), Finger::Index, None, &cfg).unwrap();
        assert!((s.pip_angle - PI / 2.0).abs() < 1e-12);
        assert!(!s.extended);
    }

    #[test]
    fn hysteresis_holds_prior_state() {
        let cfg = GestureConfig::default();
        let a = 140f64.to_radians();
        // tip direction making 140 degrees with (MCP - PIP) = +y
        let tip = [0.1 * (PI - a).sin(), -0.1 - 0.1 * (PI - a).cos(), 0.0];
        let f = index_finger(tip);
        let on = FingerState {
            finger: Finger::Index,
            pip_angle: PI,
            extended: true,
        };
        let s = finger_state(&f, Finger::Index, Some(&on), &cfg).unwrap();
        assert!((s.pip_angle - a).abs() < 1e-9);
        assert!(s.extended);
        let off = FingerState {
            extended: false,
            ..on
        };
        assert!(
            !finger_state(&f, Finger::Index, Some(&off), &cfg)
                .unwrap()
                .extended
        );
        assert!(
            !finger_state(&f, Finger::Index, None, &cfg)
                .unwrap()
                .extended
        );
    }

    #[test]
    fn degenerate_finger() {
        let cfg = GestureConfig::default();
        let f = index_finger([0.0, -0.1, 0.0]);
        assert_eq!(
            finger_state(&f, Finger::Index, None, &cfg),
            Err(GeometryError::Degenerate(6))
        );
    }

    #[test]
    fn wrist_roll_cardinal_directions() {
        let roll = |a: [f64; 3], b: [f64; 3]| wrist_roll(&frame_with(&[(5, a), (17, b)])).unwrap();
        assert!(roll([0.4, 0.5, 0.0], [0.6, 0.5, 0.0]).abs() < 1e-12);
        assert!((roll([0.5, 0.4, 0.0], [0.5, 0.6, 0.0]) - PI / 2.0).abs() < 1e-12);
        assert!((roll([0.6, 0.5, 0.0], [0.4, 0.5, 0.0]) - PI).abs() < 1e-12);
        assert!(wrist_roll(&frame_with(&[])).is_err());
    }

    #[test]
    fn pose_precedence() {
        let st = |bits: [bool; 5]| {
            let mut i = 0;
            Finger::ALL.map(|finger| {
                i += 1;
                FingerState {
                    finger,
                    pip_angle: 0.0,
                    extended: bits[i - 1],
                }
            })
        };
        assert_eq!(pose_from_states(&st([true; 5])), HandPose::OpenPalm);
        assert_eq!(
            pose_from_states(&st([true, false, false, false, false])),
            HandPose::Fist
        );
        assert_eq!(pose_from_states(&st([false; 5])), HandPose::Fist);
        assert_eq!(
            pose_from_states(&st([false, true, false, false, false])),
            HandPose::IndexPoint
        );
        assert_eq!(
            pose_from_states(&st([true, true, false, false, false])),
            HandPose::IndexPoint
        );
        assert_eq!(
            pose_from_states(&st([false, true, true, false, false])),
            HandPose::Other
        );
    }

    #[test]
    fn config_validation() {
        assert!(GestureConfig::default().validate().is_ok());
        let bad = GestureConfig {
            extension_off: 170f64.to_radians(),
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "extension_off");
        let bad = GestureConfig {
            push_speed: -1.0,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "push_speed");
    }

    #[test]
    fn gesture_json_shape() {
        let e = GestureEvent {
            kind: GestureKind::FingerFlick {
                finger: Finger::Index,
            },
            t: 1.0,
            strength: 2.5,
        };
        let j = serde_json::to_value(e).unwrap();
        assert_eq!(j["kind"], "finger_flick");
        assert_eq!(j["finger"], "index");
        let k: GestureKind =
            serde_json::from_str(r#"{"kind":"grasp_rotate","direction":"left"}"#).unwrap();
        assert_eq!(
            k,
            GestureKind::GraspRotate {
                direction: Direction::Left
            }
        );
        assert!(serde_json::from_str::<GestureKind>(r#"{"kind":"nonsense"}"#).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn hysteresis_band_never_flips(start in any::<bool>(), angles in prop::collection::vec(121.0f64..159.0, 1..40)) {
            let cfg = GestureConfig::default();
            let mut prev = FingerState { finger: Finger::Index, pip_angle: PI, extended: start };
            for deg in angles {
                let a = deg.to_radians();
                let tip = [0.1 * (PI - a).sin(), -0.1 - 0.1 * (PI - a).cos(), 0.0];
                let s = finger_state(&index_finger(tip), Finger::Index, Some(&prev), &cfg).unwrap();
                prop_assert_eq!(s.extended, start);
                prev = s;
            }
        }

        #[test]
        fn wrist_roll_is_rotation_equivariant(
            phi in -PI..PI,
            base in -PI..PI,
            len in 0.05f64..0.3,
        ) {
            // knuckle line through the frame center, rotated about the center
            let c = (0.5, 0.5);
            let pt = |ang: f64, r: f64| [c.0 + r * ang.cos(), c.1 + r * ang.sin(), 0.0];
            let a = frame_with(&[(5, pt(base + PI, len / 2.0)), (17, pt(base, len / 2.0))]);
            let b = frame_with(&[(5, pt(base + phi + PI, len / 2.0)), (17, pt(base + phi, len / 2.0))]);
            let diff = wrap_angle(wrist_roll(&b).unwrap() - wrist_roll(&a).unwrap() - phi);
            prop_assert!(diff.abs() < 1e-9);
        }
    }
}
