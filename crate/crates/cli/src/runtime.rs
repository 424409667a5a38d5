//! The engine thread: owns the [`Engine`], paces it against the wall clock,
//! serializes every control message into it, and fans its records out to
//! the run log, the debug stream, and API subscribers.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use theater_core::engine::{EngineError, Record};
use theater_core::{CueSequence, Engine, HandFrame, Input, Role, RoleError, StageSnapshot};
use tokio::sync::{broadcast, oneshot, watch};

#[derive(Debug, Clone, PartialEq)]
pub enum SubmitError {
    /// The input is well-formed but conflicts with the engine's mode.
    Conflict(String),
    Rejected(String),
}

pub type Reply = oneshot::Sender<Result<Role, SubmitError>>;

pub enum Control {
    Submit { input: Input, reply: Option<Reply> },
    RunSequence(CueSequence),
    Shutdown,
}

/// Destinations for engine records.
pub struct Outputs {
    pub record: Option<Box<dyn Write + Send>>,
    pub debug: Option<Box<dyn Write + Send>>,
    pub events: broadcast::Sender<String>,
    pub snapshot: watch::Sender<StageSnapshot>,
}

impl Outputs {
    pub fn new(initial: StageSnapshot) -> Self {
        let (events, _) = broadcast::channel(1024);
        let (snapshot, _) = watch::channel(initial);
        Self {
            record: None,
            debug: None,
            events,
            snapshot,
        }
    }

    /// Routes records to their destinations; debug records only go to the
    /// debug stream.
    pub fn publish(&mut self, records: Vec<Record>) -> std::io::Result<()> {
        for r in records {
            let line = r.to_json_line();
            if let Record::Debug(_) = r {
                if let Some(w) = self.debug.as_mut() {
                    writeln!(w, "{line}")?;
                }
                continue;
            }
            if let Some(w) = self.record.as_mut() {
                writeln!(w, "{line}")?;
            }
            match r {
                Record::Snapshot(s) => {
                    self.snapshot.send_replace(s);
                    let _ = self.events.send(line);
                }
                Record::Gesture { .. } | Record::Command { .. } | Record::Error { .. } => {
                    let _ = self.events.send(line);
                }
                Record::Input { .. } | Record::Debug(_) => {}
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        if let Some(w) = self.record.as_mut() {
            w.flush()?;
        }
        if let Some(w) = self.debug.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

pub struct RuntimeOptions {
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Trace to feed in lockstep with the simulation.
    pub trace: Vec<HandFrame>,
    /// Once the trace has ended, stop this many seconds later.
    pub exit_after_trace: Option<f64>,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        Self {
            speed: 1.0,
            trace: Vec::new(),
            exit_after_trace: None,
        }
    }
}

fn classify(e: &EngineError) -> SubmitError {
    match e {
        EngineError::Role(RoleError::MissingFingerMap(_)) => SubmitError::Conflict(e.to_string()),
        _ => SubmitError::Rejected(e.to_string()),
    }
}

/// Starts the engine thread. It runs until it receives [`Control::Shutdown`],
/// every sender is dropped, or a configured trace has finished.
pub fn spawn(
    engine: Engine,
    opts: RuntimeOptions,
    outputs: Outputs,
) -> (Sender<Control>, JoinHandle<std::io::Result<()>>) {
    let (tx, rx) = std::sync::mpsc::channel();
    let handle = std::thread::Builder::new()
        .name("engine".into())
        .spawn(move || run(engine, rx, opts, outputs))
        .expect("spawn engine thread");
    (tx, handle)
}

fn run(
    mut engine: Engine,
    rx: Receiver<Control>,
    opts: RuntimeOptions,
    mut out: Outputs,
) -> std::io::Result<()> {
    let dt = engine.stage().config().dt;
    let start = Instant::now();
    let start_tick = engine.tick();
    let has_trace = !opts.trace.is_empty();
    let mut frames: VecDeque<(u64, HandFrame)> = opts
        .trace
        .into_iter()
        .map(|f| (engine.frame_tick(start_tick, f.t(), 1.0), f))
        .collect();
    let mut end_tick = None;
    out.publish(vec![Record::Snapshot(engine.snapshot())])?;

    loop {
        let mut shutdown = false;
        let first = rx.recv_timeout(Duration::from_millis(1));
        let msgs = match first {
            Ok(m) => std::iter::once(m).chain(rx.try_iter()).collect(),
            Err(RecvTimeoutError::Timeout) => Vec::new(),
            Err(RecvTimeoutError::Disconnected) => {
                shutdown = true;
                Vec::new()
            }
        };
        for m in msgs {
            match m {
                Control::Submit { input, reply } => {
                    let result = engine
                        .submit(input)
                        .map(|_| engine.role())
                        .map_err(|e| classify(&e));
                    if let Some(r) = reply {
                        let _ = r.send(result);
                    }
                }
                Control::RunSequence(seq) => engine.run_sequence(&seq),
                Control::Shutdown => shutdown = true,
            }
        }

        let target = start_tick + (start.elapsed().as_secs_f64() * opts.speed / dt) as u64;
        loop {
            while frames.front().is_some_and(|(t, _)| *t <= engine.tick()) {
                let (_, f) = frames.pop_front().expect("front exists");
                let _ = engine.submit(Input::Frame(f));
            }
            if engine.tick() >= target {
                break;
            }
            let next = frames.front().map_or(target, |(t, _)| (*t).min(target));
            engine.advance_to(next.max(engine.tick() + 1));
        }
        if has_trace && frames.is_empty() && end_tick.is_none() {
            let _ = engine.submit(Input::EndOfStream);
            if let Some(tail) = opts.exit_after_trace {
                end_tick = Some(engine.tick() + ((tail / dt) - 1e-9).ceil().max(0.0) as u64);
            }
        }
        out.publish(engine.drain())?;
        if shutdown || end_tick.is_some_and(|t| engine.tick() >= t) {
            break;
        }
    }
    out.flush()
}
