//! Gesture-driven robot theater: hand-landmark streams, gesture recognition,
//! role-based command mapping, a deterministic stage simulator, the robot
//! datagram protocol and timed cue sequences.

pub mod command;
pub mod config;
pub mod cue;
pub mod engine;
pub mod gesture;
pub mod hand;
pub mod link;
pub mod roles;
pub mod stage;
pub mod synth;

pub use command::{Action, Address, AddressedCommand, CommandError, LedMode, Limits, RobotId};
pub use config::{ConfigError, EngineConfig};
pub use cue::{Cue, CueAction, CueError, CueSequence};
pub use engine::{Engine, EngineError, Input, Record};
pub use gesture::{Direction, GestureConfig, GestureEvent, GestureKind, HandPose, Recognizer};
pub use hand::{Finger, HandFrame, Handedness, LandmarkPoint, StreamError};
pub use roles::{FingerMap, Role, RoleController, RoleError, RoleParams};
pub use stage::{Pose, Stage, StageConfig, StageSnapshot};
pub use synth::{synthesize_gesture_trace, SyntheticGesture, SyntheticGestureKind};
