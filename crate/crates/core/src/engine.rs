//! The performance pipeline: frames through the recognizer, gestures through
//! the active role, commands into the stage simulation and an optional
//! network sink. Everything advances on the simulator's tick, so a run is
//! reproducible from its logged inputs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::command::{AddressedCommand, RobotId};
use crate::config::EngineConfig;
use crate::cue::{CueAction, CueSequence, Scheduler};
use crate::gesture::{FrameDebug, GestureConfigError, GestureEvent, GestureKind, Recognizer};
use crate::hand::HandFrame;
use crate::roles::{FingerMap, Role, RoleController, RoleError, MAPPED_GROUP};
use crate::stage::{Stage, StageError, StageSnapshot};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Gesture(#[from] GestureConfigError),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("run log line {line}: {reason}")]
    BadLog { line: usize, reason: String },
    #[error("run log: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything that can change the engine's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Frame(HandFrame),
    /// Marks the end of a landmark stream; completes pending detections.
    EndOfStream,
    Gesture(GestureKind),
    Role(Role),
    FingerMap(FingerMap),
    Command(AddressedCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureSource {
    Recognizer,
    Injected,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Input {
        tick: u64,
        input: Input,
    },
    Gesture {
        tick: u64,
        source: GestureSource,
        #[serde(flatten)]
        event: GestureEvent,
    },
    Command {
        tick: u64,
        #[serde(flatten)]
        command: AddressedCommand,
    },
    Snapshot(StageSnapshot),
    Error {
        tick: u64,
        message: String,
    },
    Debug(FrameDebug),
}

impl Record {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Receives every command applied to the simulation, with the robots its
/// address resolved to.
pub trait CommandSink: Send {
    fn deliver(&mut self, cmd: &AddressedCommand, targets: &[RobotId]);
}

impl CommandSink for crate::link::RobotLink {
    fn deliver(&mut self, cmd: &AddressedCommand, targets: &[RobotId]) {
        if let Err(e) = self.send(cmd, targets) {
            tracing::warn!("link send failed: {e}");
        }
    }
}

pub struct Engine {
    recognizer: Recognizer,
    roles: RoleController,
    stage: Stage,
    sequences: Vec<Scheduler>,
    snapshot_every: u64,
    debug: bool,
    sink: Option<Box<dyn CommandSink>>,
    outbox: Vec<Record>,
}

impl Engine {
    pub fn new(cfg: &EngineConfig) -> Result<Self, EngineError> {
        let recognizer = Recognizer::new(cfg.gesture.clone())?;
        let mut stage = Stage::new(cfg.stage.clone())?;
        let mut roles = RoleController::new(cfg.roles.params.clone(), &cfg.stage.limits())?;
        stage.set_group(MAPPED_GROUP, Vec::new());
        if let Some(map) = &cfg.roles.finger_map {
            stage.set_group(MAPPED_GROUP, map.robots().collect());
            roles.set_finger_map(map.clone());
        }
        if cfg.roles.initial != Role::Director {
            roles.set_role(cfg.roles.initial, 0.0)?;
        }
        Ok(Self {
            recognizer,
            roles,
            stage,
            sequences: Vec::new(),
            snapshot_every: cfg.snapshot_every(),
            debug: false,
            sink: None,
            outbox: Vec::new(),
        })
    }

    /// Adds per-frame recognizer state to the output.
    pub fn with_debug(mut self, on: bool) -> Self {
        self.debug = on;
        self
    }

    pub fn with_sink(mut self, sink: Box<dyn CommandSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn tick(&self) -> u64 {
        self.stage.tick()
    }

    pub fn sim_time(&self) -> f64 {
        self.stage.sim_time()
    }

    pub fn stage(&self) -> &Stage {
        &self.stage
    }

    pub fn role(&self) -> Role {
        self.roles.role()
    }

    pub fn finger_map(&self) -> Option<&FingerMap> {
        self.roles.finger_map()
    }

    pub fn snapshot(&self) -> StageSnapshot {
        self.stage.snapshot()
    }

    /// True while any started sequence still has cues to dispatch.
    pub fn sequences_pending(&self) -> bool {
        self.sequences.iter().any(|s| !s.is_done())
    }

    /// Takes the records produced since the last call.
    pub fn drain(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.outbox)
    }

    /// Applies one input at the current tick. The input is logged whether or
    /// not it succeeds; failures are also logged as error records.
    pub fn submit(&mut self, input: Input) -> Result<(), EngineError> {
        let tick = self.tick();
        self.outbox.push(Record::Input {
            tick,
            input: input.clone(),
        });
        let result = self.apply(input);
        if let Err(e) = &result {
            self.outbox.push(Record::Error {
                tick,
                message: e.to_string(),
            });
        }
        result
    }

    fn apply(&mut self, input: Input) -> Result<(), EngineError> {
        match input {
            Input::Frame(frame) => {
                let events = self.recognizer.update(&frame);
                if self.debug {
                    if let Some(d) = self.recognizer.last_debug() {
                        self.outbox.push(Record::Debug(d.clone()));
                    }
                }
                self.dispatch_events(events, GestureSource::Recognizer)
            }
            Input::EndOfStream => {
                let events = self.recognizer.flush();
                self.dispatch_events(events, GestureSource::Recognizer)
            }
            Input::Gesture(kind) => {
                let event = GestureEvent {
                    kind,
                    t: self.sim_time(),
                    strength: 1.0,
                };
                self.dispatch_events(vec![event], GestureSource::Injected)
            }
            Input::Role(role) => {
                let cmds = self.roles.set_role(role, self.sim_time())?;
                self.execute(cmds)
            }
            Input::FingerMap(map) => {
                self.stage.set_group(MAPPED_GROUP, map.robots().collect());
                self.roles.set_finger_map(map);
                Ok(())
            }
            Input::Command(cmd) => self.execute(vec![cmd]),
        }
    }

    fn dispatch_events(
        &mut self,
        events: Vec<GestureEvent>,
        source: GestureSource,
    ) -> Result<(), EngineError> {
        let tick = self.tick();
        let mut first_err = None;
        for event in events {
            self.outbox.push(Record::Gesture {
                tick,
                source,
                event,
            });
            let cmds = self.roles.interpret(&event);
            if let Err(e) = self.execute(cmds) {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    fn execute(&mut self, cmds: Vec<AddressedCommand>) -> Result<(), EngineError> {
        let tick = self.tick();
        let now = self.sim_time();
        let mut first_err = None;
        for mut cmd in cmds {
            cmd.issued_at = now;
            match self.stage.apply_command(&cmd) {
                Ok(()) => {
                    if let Some(sink) = self.sink.as_mut() {
                        let targets = self.stage.resolve(&cmd.address).unwrap_or_default();
                        sink.deliver(&cmd, &targets);
                    }
                    self.outbox.push(Record::Command { tick, command: cmd });
                }
                Err(e) => {
                    first_err.get_or_insert(EngineError::Stage(e));
                }
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    /// Starts a sequence at the current tick. Cues due immediately are
    /// dispatched before returning.
    pub fn run_sequence(&mut self, seq: &CueSequence) {
        self.sequences
            .push(Scheduler::new(seq, self.tick(), self.stage.config().dt));
        self.dispatch_cues();
    }

    fn dispatch_cues(&mut self) {
        let tick = self.tick();
        let mut due = Vec::new();
        for s in &mut self.sequences {
            due.extend(s.due(tick));
        }
        self.sequences.retain(|s| !s.is_done());
        for action in due {
            let input = match action {
                CueAction::InjectGesture(kind) => Input::Gesture(kind),
                CueAction::DirectCommand(cmd) => Input::Command(cmd),
                CueAction::SetRole(role) => Input::Role(role),
            };
            if let Err(e) = self.submit(input) {
                tracing::warn!("cue at tick {tick}: {e}");
            }
        }
    }

    /// Advances the simulation `n` ticks, dispatching cues as they fall due
    /// and emitting snapshots at the configured cadence.
    pub fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.stage.advance(1);
            self.dispatch_cues();
            if self.tick() % self.snapshot_every == 0 {
                self.outbox.push(Record::Snapshot(self.stage.snapshot()));
            }
        }
    }

    pub fn advance_to(&mut self, tick: u64) {
        if tick > self.tick() {
            self.advance(tick - self.tick());
        }
    }

    /// Tick at which a trace frame is due when the trace starts at `start`
    /// and plays at `speed` times real time.
    pub fn frame_tick(&self, start: u64, t: f64, speed: f64) -> u64 {
        start
            + ((t / speed / self.stage.config().dt) - 1e-9)
                .ceil()
                .max(0.0) as u64
    }

    /// Feeds a whole trace in lockstep with the simulation, ends the stream,
    /// then lets the simulation run on for `tail` seconds.
    pub fn run_trace(&mut self, frames: &[HandFrame], speed: f64, tail: f64) {
        let start = self.tick();
        for f in frames {
            self.advance_to(self.frame_tick(start, f.t(), speed));
            // rejected frames are already logged
            let _ = self.submit(Input::Frame(f.clone()));
        }
        let _ = self.submit(Input::EndOfStream);
        self.run_for(tail);
    }

    /// Advances by a duration in seconds (rounded up to whole ticks).
    pub fn run_for(&mut self, seconds: f64) {
        let ticks = ((seconds / self.stage.config().dt) - 1e-9).ceil().max(0.0) as u64;
        self.advance(ticks);
    }

    /// Runs until every started sequence has dispatched and every drive it
    /// started has expired, then `tail` seconds more.
    pub fn run_sequences_to_end(&mut self, tail: f64) {
        while let Some(last) = self.sequences.iter().filter_map(Scheduler::last_tick).max() {
            self.advance_to(last);
        }
        if let Some(end) = self.stage.drives_end_tick() {
            self.advance_to(end);
        }
        self.run_for(tail);
    }
}

/// Command lines of a run log, in order.
pub fn command_log(records: &[Record]) -> Vec<String> {
    records
        .iter()
        .filter(|r| matches!(r, Record::Command { .. }))
        .map(Record::to_json_line)
        .collect()
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

/// Extracts the input records of a run log, skipping every other record type.
pub fn read_inputs<R: BufRead>(reader: R) -> Result<Vec<(u64, Input)>, EngineError> {
    #[derive(Deserialize)]
    struct InputRecord {
        tick: u64,
        input: Input,
    }
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EngineError::BadLog {
            line: i + 1,
            reason,
        };
        let v: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if v.get("type").and_then(Value::as_str) != Some("input") {
            continue;
        }
        let rec: InputRecord = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
        if out.last().is_some_and(|(t, _)| *t > rec.tick) {
            return Err(bad(format!("tick {} goes backwards", rec.tick)));
        }
        out.push((rec.tick, rec.input));
    }
    Ok(out)
}

/// Re-runs logged inputs through a fresh engine, each at its logged tick,
/// and returns everything it produced.
pub fn replay_inputs(
    cfg: &EngineConfig,
    inputs: &[(u64, Input)],
) -> Result<Vec<Record>, EngineError> {
    let mut engine = Engine::new(cfg)?;
    let mut out = Vec::new();
    for (tick, input) in inputs {
        engine.advance_to(*tick);
        let _ = engine.submit(input.clone());
        out.extend(engine.drain());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::{Action, Address, LedMode};
    use crate::cue::builtin_lightning;
    use crate::hand::Finger;

    fn engine() -> Engine {
        Engine::new(&EngineConfig::default()).unwrap()
    }

    fn commands(records: &[Record]) -> Vec<AddressedCommand> {
        records
            .iter()
            .filter_map(|r| match r {
                Record::Command { command, .. } => Some(command.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn injected_push_drives_everyone() {
        let mut e = engine();
        e.submit(Input::Gesture(GestureKind::PalmPush)).unwrap();
        let cmds = commands(&e.drain());
        assert_eq!(cmds.len(), 1);
        assert_eq!(cmds[0].address, Address::Broadcast);
        assert_eq!(
            cmds[0].action,
            Action::Drive {
                v: 0.15,
                omega: 0.0,
                duration: 0.6
            }
        );
        e.run_for(1.0);
        for r in e.snapshot().robots {
            assert!((r.y - (-0.5 + 0.09)).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn puppeteer_needs_map_then_moves_one_robot() {
        let mut e = engine();
        assert!(matches!(
            e.submit(Input::Role(Role::Puppeteer)),
            Err(EngineError::Role(RoleError::MissingFingerMap(_)))
        ));
        assert_eq!(e.role(), Role::Director);
        e.submit(Input::FingerMap(
            FingerMap::from_pairs(&[(Finger::Index, 2)]).unwrap(),
        ))
        .unwrap();
        e.submit(Input::Role(Role::Puppeteer)).unwrap();
        let before = e.snapshot();
        e.submit(Input::Gesture(GestureKind::FingerFlick {
            finger: Finger::Index,
        }))
        .unwrap();
        e.submit(Input::Gesture(GestureKind::FingerFlick {
            finger: Finger::Ring,
        }))
        .unwrap();
        e.run_for(1.0);
        let after = e.snapshot();
        for (b, a) in before.robots.iter().zip(&after.robots) {
            if b.id.get() == 2 {
                assert!((a.y - b.y - 0.04).abs() < 1e-9);
            } else {
                assert_eq!((a.x, a.y, a.theta), (b.x, b.y, b.theta));
            }
        }
    }

    #[test]
    fn hybrid_wand_hits_mapped_group_only() {
        let mut e = engine();
        e.submit(Input::FingerMap(
            FingerMap::from_pairs(&[(Finger::Index, 1)]).unwrap(),
        ))
        .unwrap();
        e.submit(Input::Role(Role::Hybrid)).unwrap();
        e.submit(Input::Gesture(GestureKind::WandVerticalFlick))
            .unwrap();
        let s = e.snapshot();
        let lit: Vec<u8> = s
            .robots
            .iter()
            .filter(|r| r.led.on)
            .map(|r| r.id.get())
            .collect();
        assert_eq!(lit, vec![1]);
    }

    #[test]
    fn lightning_parity() {
        for n in 1..=4 {
            let mut e = engine();
            e.run_sequence(&builtin_lightning(n, 0.4).unwrap());
            e.run_sequences_to_end(0.1);
            let on = e.snapshot().robots.iter().all(|r| r.led.on);
            let off = e.snapshot().robots.iter().all(|r| !r.led.on);
            if n % 2 == 1 {
                assert!(on, "n={n}");
            } else {
                assert!(off, "n={n}");
            }
        }
    }

    #[test]
    fn cue_lands_on_its_tick() {
        let seq = crate::cue::parse_sequence(
            r#"{"name":"t","cues":[{"at":0,"role":"director"},{"at":0.1,"gesture":{"kind":"palm_push"}}]}"#,
        )
        .unwrap();
        let mut e = engine();
        e.run_sequence(&seq);
        e.run_sequences_to_end(0.0);
        let recs = e.drain();
        let drive = recs
            .iter()
            .find_map(|r| match r {
                Record::Command { tick, command }
                    if matches!(command.action, Action::Drive { .. }) =>
                {
                    Some((*tick, command.issued_at))
                }
                _ => None,
            })
            .unwrap();
        assert_eq!(drive.0, 100);
        assert!((drive.1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn snapshot_cadence() {
        let mut e = engine();
        e.advance(100);
        let n = e
            .drain()
            .iter()
            .filter(|r| matches!(r, Record::Snapshot(_)))
            .count();
        assert_eq!(n, 3);
    }

    #[test]
    fn bad_command_is_logged_and_skipped() {
        let mut e = engine();
        let cmd = AddressedCommand::new(
            Address::Robot(RobotId::new(9).unwrap()),
            Action::Led {
                mode: LedMode::Solid,
                rgb: [1, 2, 3],
                period: 0.0,
            },
            0.0,
        );
        assert!(e.submit(Input::Command(cmd)).is_err());
        let recs = e.drain();
        assert!(matches!(recs[0], Record::Input { .. }));
        assert!(matches!(recs[1], Record::Error { .. }));
    }

    #[test]
    fn record_json_shapes() {
        let mut e = engine();
        e.submit(Input::Gesture(GestureKind::GraspRotate {
            direction: crate::gesture::Direction::Left,
        }))
        .unwrap();
        let lines: Vec<Value> = e
            .drain()
            .iter()
            .map(|r| serde_json::from_str(&r.to_json_line()).unwrap())
            .collect();
        assert_eq!(lines[0]["type"], "input");
        assert_eq!(lines[0]["input"]["gesture"]["kind"], "grasp_rotate");
        assert_eq!(lines[1]["type"], "gesture");
        assert_eq!(lines[1]["kind"], "grasp_rotate");
        assert_eq!(lines[1]["direction"], "left");
        assert_eq!(lines[1]["source"], "injected");
        assert_eq!(lines[2]["type"], "command");
        assert_eq!(lines[2]["address"], "broadcast");
    }

    #[test]
    fn replay_from_log_text() {
        let mut e = engine();
        e.submit(Input::Gesture(GestureKind::PalmPush)).unwrap();
        e.advance(250);
        e.submit(Input::Gesture(GestureKind::FistRotate {
            direction: crate::gesture::Direction::Right,
        }))
        .unwrap();
        let recs = e.drain();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let inputs = read_inputs(&buf[..]).unwrap();
        assert_eq!(inputs.len(), 2);
        let again = replay_inputs(&EngineConfig::default(), &inputs).unwrap();
        assert_eq!(command_log(&recs), command_log(&again));
    }
}
