//! Hand-landmark frames: validation, the JSON-Lines trace format, and timed replay.
//!
//! A frame carries the 21 standard hand keypoints in normalized camera
//! coordinates (+x right, +y down, z relative depth, negative toward the
//! camera):
//!
//! | index | landmark                         |
//! |-------|----------------------------------|
//! | 0     | wrist                            |
//! | 1–4   | thumb CMC, MCP, IP, TIP          |
//! | 5–8   | index MCP, PIP, DIP, TIP         |
//! | 9–12  | middle MCP, PIP, DIP, TIP        |
//! | 13–16 | ring MCP, PIP, DIP, TIP          |
//! | 17–20 | pinky MCP, PIP, DIP, TIP         |

use std::io::BufRead;
use std::sync::mpsc::{Receiver, SyncSender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LANDMARK_COUNT: usize = 21;

/// Accepted coordinate range for x and y. Trackers report landmarks slightly
/// outside the image, so this is wider than [0, 1].
pub const COORD_MIN: f64 = -0.5;
pub const COORD_MAX: f64 = 1.5;

pub const WRIST: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("expected 21 landmarks, got {0}")]
    BadLandmarkCount(usize),
    #[error("landmark {index} coordinate {value} outside accepted range")]
    OutOfRange { index: usize, value: f64 },
    #[error("timestamp {t} does not follow previous {prev}")]
    NonMonotonicTime { prev: f64, t: f64 },
    #[error("replay speed must be positive")]
    BadSpeed,
    #[error("empty trace")]
    EmptyTrace,
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LandmarkPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(self, other: Self) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Finger> {
        Self::ALL.get(i).copied()
    }

    /// Landmark indices of the (proximal, middle, tip) joints used for the
    /// extension angle. For the thumb the middle joint is the IP joint.
    pub fn angle_joints(self) -> (usize, usize, usize) {
        match self {
            Finger::Thumb => (2, 3, 4),
            f => {
                let base = 1 + 4 * f.index();
                (base, base + 1, base + 3)
            }
        }
    }

    pub fn tip(self) -> usize {
        4 + 4 * self.index()
    }
}

/// One timestamped sample of 21 landmarks. Serializes as a trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TraceRecord", into = "TraceRecord")]
pub struct HandFrame {
    t: f64,
    handedness: Handedness,
    points: [LandmarkPoint; LANDMARK_COUNT],
}

impl HandFrame {
    pub fn new(
        t: f64,
        handedness: Handedness,
        points: [LandmarkPoint; LANDMARK_COUNT],
    ) -> Result<Self, StreamError> {
        if !t.is_finite() || t < 0.0 {
            return Err(StreamError::MalformedRecord(format!("bad timestamp {t}")));
        }
        for (index, p) in points.iter().enumerate() {
            for value in [p.x, p.y] {
                if !value.is_finite() || !(COORD_MIN..=COORD_MAX).contains(&value) {
                    return Err(StreamError::OutOfRange { index, value });
                }
            }
            if !p.z.is_finite() {
                return Err(StreamError::OutOfRange { index, value: p.z });
            }
        }
        Ok(Self {
            t,
            handedness,
            points,
        })
    }

    pub fn from_slice(
        t: f64,
        handedness: Handedness,
        points: &[LandmarkPoint],
    ) -> Result<Self, StreamError> {
        let arr: [LandmarkPoint; LANDMARK_COUNT] = points
            .try_into()
            .map_err(|_| StreamError::BadLandmarkCount(points.len()))?;
        Self::new(t, handedness, arr)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    pub fn points(&self) -> &[LandmarkPoint; LANDMARK_COUNT] {
        &self.points
    }

    pub fn point(&self, i: usize) -> LandmarkPoint {
        self.points[i]
    }

    /// Copy of this frame with a different timestamp.
    pub fn with_time(&self, t: f64) -> Result<Self, StreamError> {
        Self::new(t, self.handedness, self.points)
    }
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    t: f64,
    hand: Handedness,
    pts: Vec<[f64; 3]>,
}

impl TryFrom<TraceRecord> for HandFrame {
    type Error = StreamError;

    fn try_from(rec: TraceRecord) -> Result<Self, StreamError> {
        if rec.pts.len() != LANDMARK_COUNT {
            return Err(StreamError::BadLandmarkCount(rec.pts.len()));
        }
        let points: Vec<LandmarkPoint> = rec
            .pts
            .iter()
            .map(|p| LandmarkPoint::new(p[0], p[1], p[2]))
            .collect();
        HandFrame::from_slice(rec.t, rec.hand, &points)
    }
}

impl From<HandFrame> for TraceRecord {
    fn from(frame: HandFrame) -> Self {
        TraceRecord {
            t: frame.t,
            hand: frame.handedness,
            pts: frame.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }
}

/// Parses one JSON-Lines trace record.
pub fn parse_trace_line(line: &str) -> Result<HandFrame, StreamError> {
    let rec: TraceRecord =
        serde_json::from_str(line).map_err(|e| StreamError::MalformedRecord(e.to_string()))?;
    HandFrame::try_from(rec)
}

pub fn serialize_trace_line(frame: &HandFrame) -> String {
    serde_json::to_string(frame).expect("trace record serializes")
}

/// Checks that timestamps strictly increase.
pub fn check_monotonic(frames: &[HandFrame]) -> Result<(), StreamError> {
    for w in frames.windows(2) {
        if w[1].t <= w[0].t {
            return Err(StreamError::NonMonotonicTime {
                prev: w[0].t,
                t: w[1].t,
            });
        }
    }
    Ok(())
}

/// Reads a whole trace, validating every record and the time ordering.
/// Blank lines are skipped.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<HandFrame>, StreamError> {
    let mut frames: Vec<HandFrame> = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| StreamError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = parse_trace_line(&line)?;
        if let Some(prev) = frames.last() {
            if frame.t <= prev.t {
                return Err(StreamError::NonMonotonicTime {
                    prev: prev.t,
                    t: frame.t,
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_trace<W: std::io::Write>(mut w: W, frames: &[HandFrame]) -> std::io::Result<()> {
    for f in frames {
        writeln!(w, "{}", serialize_trace_line(f))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    Factor(f64),
    /// As fast as possible.
    Max,
}

impl std::str::FromStr for ReplaySpeed {
    type Err = StreamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(ReplaySpeed::Max);
        }
        let f: f64 = s
            .parse()
            .map_err(|_| StreamError::MalformedRecord(format!("bad speed {s:?}")))?;
        ReplaySpeed::factor(f)
    }
}

impl ReplaySpeed {
    pub fn factor(f: f64) -> Result<Self, StreamError> {
        if f.is_finite() && f > 0.0 {
            Ok(ReplaySpeed::Factor(f))
        } else if f == f64::INFINITY {
            Ok(ReplaySpeed::Max)
        } else {
            Err(StreamError::BadSpeed)
        }
    }
}

/// Emission offsets (relative to the first frame) for a replay at `speed`.
pub fn replay_schedule(
    trace: &[HandFrame],
    speed: ReplaySpeed,
) -> Result<Vec<Duration>, StreamError> {
    let first = trace.first().ok_or(StreamError::EmptyTrace)?;
    check_monotonic(trace)?;
    let factor = match speed {
        ReplaySpeed::Max => return Ok(vec![Duration::ZERO; trace.len()]),
        ReplaySpeed::Factor(f) if f > 0.0 && f.is_finite() => f,
        ReplaySpeed::Factor(_) => return Err(StreamError::BadSpeed),
    };
    Ok(trace
        .iter()
        .map(|f| Duration::from_secs_f64((f.t - first.t) / factor))
        .collect())
}

/// Plays `trace` into a bounded queue on its own thread. The receiver sees
/// frames spaced by `(t[i+1] - t[i]) / speed` of wall-clock time.
pub fn replay(
    trace: Vec<HandFrame>,
    speed: ReplaySpeed,
    capacity: usize,
) -> Result<(Receiver<HandFrame>, JoinHandle<()>), StreamError> {
    let schedule = replay_schedule(&trace, speed)?;
    let (tx, rx) = std::sync::mpsc::sync_channel(capacity.max(1));
    let handle = std::thread::spawn(move || play(trace, schedule, tx));
    Ok((rx, handle))
}

fn play(trace: Vec<HandFrame>, schedule: Vec<Duration>, tx: SyncSender<HandFrame>) {
    let start = Instant::now();
    for (frame, offset) in trace.into_iter().zip(schedule) {
        let due = start + offset;
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        if tx.send(frame).is_err() {
            return;
        }
    }
}
