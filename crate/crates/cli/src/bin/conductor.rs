use std::fs::File;
use std::io::IsTerminal;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use theater_cli::api::{self, AppState};
use theater_cli::landmarks;
use theater_cli::runtime::{self, Control, Outputs, RuntimeOptions};
use theater_core::cue::{builtin, load_sequence, BUILTIN_NAMES};
use theater_core::engine::{read_inputs, Record};
use theater_core::hand::{read_trace, write_trace, ReplaySpeed};
use theater_core::link::RobotLink;
use theater_core::synth::SynthError;
use theater_core::{Engine, EngineConfig, HandFrame, SyntheticGesture, SyntheticGestureKind};

/// Gesture-driven robot theater conductor.
#[derive(Parser)]
#[command(name = "conductor", version)]
struct Cli {
    /// Engine config (YAML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the run log (JSON Lines) here.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    /// Override `api.http_port`.
    #[arg(long, global = true)]
    http_port: Option<u16>,
    /// Write per-frame recognizer features here.
    #[arg(long, global = true)]
    debug_gestures: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulated stage with the operator API and no hand input.
    Simulate,
    /// Like `simulate`, plus a TCP listener for live landmark frames.
    Live {
        #[arg(long)]
        listen_landmarks: Option<u16>,
    },
    /// Re-run a recorded trace or run log.
    Replay(ReplayArgs),
    /// Run cue sequences headless.
    #[command(subcommand)]
    Script(ScriptCommand),
    /// Write a synthetic gesture trace.
    Synth {
        /// e.g. `palm_push`, `grasp_then_rotate:left`, `finger_flick:index`.
        kind: String,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(multiple = false, id = "source")]
struct ReplayArgs {
    /// Landmark trace (JSON Lines). Defaults to `input.trace`.
    #[arg(long, group = "source")]
    trace: Option<PathBuf>,
    /// Run log whose input records are replayed.
    #[arg(long, group = "source")]
    log: Option<PathBuf>,
    /// `max` runs headless in lockstep; a factor paces against the clock.
    #[arg(long, default_value = "max")]
    trace_speed: String,
    /// Seconds simulated after the last input.
    #[arg(long, default_value_t = 1.0)]
    tail: f64,
}

#[derive(Subcommand)]
enum ScriptCommand {
    /// Run a built-in sequence by name or a sequence file.
    Run {
        sequence: String,
        #[arg(long, default_value_t = 1.0)]
        tail: f64,
    },
    /// List built-in sequences.
    List,
}

#[derive(Debug)]
enum Fail {
    Usage(String),
    Runtime(String),
}

type Result<T> = std::result::Result<T, Fail>;

fn usage(e: impl std::fmt::Display) -> Fail {
    Fail::Usage(e.to_string())
}

fn fatal(e: impl std::fmt::Display) -> Fail {
    Fail::Runtime(e.to_string())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Fail::Runtime(e)) => {
            eprintln!("fatal: {e}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => EngineConfig::load(p).map_err(usage)?,
        None => EngineConfig::default(),
    };
    if let Some(port) = cli.http_port {
        cfg.api.http_port = port;
    }
    match cli.command {
        Command::Simulate => serve(
            &cli.record,
            &cli.debug_gestures,
            &cfg,
            None,
            RuntimeOptions::default(),
        ),
        Command::Live { listen_landmarks } => {
            let port = listen_landmarks.unwrap_or(cfg.input.landmark_port);
            let opts = RuntimeOptions::default();
            serve(&cli.record, &cli.debug_gestures, &cfg, Some(port), opts)
        }
        Command::Replay(args) => replay(&cli.record, &cli.debug_gestures, &cfg, args),
        Command::Script(ScriptCommand::List) => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Script(ScriptCommand::Run { sequence, tail }) => {
            let seq = if BUILTIN_NAMES.contains(&sequence.as_str()) {
                builtin(&sequence, &cfg.stage, &cfg.roles.params)
            } else {
                load_sequence(Path::new(&sequence))
            }
            .map_err(usage)?;
            let mut engine = build_engine(&cfg, cli.debug_gestures.is_some())?;
            engine.run_sequence(&seq);
            engine.run_sequences_to_end(tail);
            let records = engine.drain();
            finish(&cli.record, &cli.debug_gestures, &engine, records)
        }
        Command::Synth {
            kind,
            noise,
            seed,
            out,
        } => {
            let kind = parse_synth_kind(&kind).map_err(usage)?;
            let frames = SyntheticGesture::with_noise(kind, noise)
                .map_err(|e: SynthError| usage(e))?
                .generate(seed);
            match out {
                Some(p) => {
                    let f = File::create(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    write_trace(BufWriter::new(f), &frames).map_err(fatal)
                }
                None => write_trace(std::io::stdout().lock(), &frames).map_err(fatal),
            }
        }
    }
}

/// `name` or `name:payload`, where the payload is a direction or a finger.
fn parse_synth_kind(s: &str) -> std::result::Result<SyntheticGestureKind, String> {
    let (kind, payload) = match s.split_once(':') {
        Some((k, p)) => (k, Some(p)),
        None => (s, None),
    };
    let mut v = json!({ "kind": kind });
    if let Some(p) = payload {
        let field = if kind == "finger_flick" {
            "finger"
        } else {
            "direction"
        };
        v[field] = json!(p);
    }
    serde_json::from_value(v).map_err(|e| format!("bad synthetic gesture {s:?}: {e}"))
}

fn build_engine(cfg: &EngineConfig, debug: bool) -> Result<Engine> {
    let mut engine = Engine::new(cfg).map_err(usage)?.with_debug(debug);
    let roster = cfg.link.remote_roster().map_err(usage)?;
    if !roster.is_empty() {
        let bind: SocketAddr = cfg.link.bind.parse().map_err(usage)?;
        let (link, telemetry) = RobotLink::bind(bind, roster).map_err(fatal)?;
        tracing::info!("robot link on {}", link.local_addr().map_err(fatal)?);
        std::thread::spawn(move || {
            for t in telemetry {
                tracing::debug!(?t, "telemetry");
            }
        });
        engine = engine.with_sink(Box::new(link));
    }
    Ok(engine)
}

fn create(path: &Option<PathBuf>) -> Result<Option<Box<dyn Write + Send>>> {
    path.as_ref()
        .map(|p| {
            File::create(p)
                .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write + Send>)
                .map_err(|e| usage(format!("{}: {e}", p.display())))
        })
        .transpose()
}

fn outputs(record: &Option<PathBuf>, debug: &Option<PathBuf>, engine: &Engine) -> Result<Outputs> {
    let mut out = Outputs::new(engine.snapshot());
    out.record = create(record)?;
    out.debug = create(debug)?;
    Ok(out)
}

/// Writes a headless run's records and prints a one-line summary.
fn finish(
    record: &Option<PathBuf>,
    debug: &Option<PathBuf>,
    engine: &Engine,
    records: Vec<Record>,
) -> Result<()> {
    let count = |f: fn(&Record) -> bool| records.iter().filter(|r| f(r)).count();
    let summary = json!({
        "ticks": engine.tick(),
        "gestures": count(|r| matches!(r, Record::Gesture { .. })),
        "commands": count(|r| matches!(r, Record::Command { .. })),
        "errors": count(|r| matches!(r, Record::Error { .. })),
        "final": engine.snapshot(),
    });
    let mut out = outputs(record, debug, engine)?;
    out.publish(records).map_err(fatal)?;
    out.flush().map_err(fatal)?;
    println!("{summary}");
    Ok(())
}

fn load_trace(path: &Path) -> Result<Vec<HandFrame>> {
    let f = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    read_trace(BufReader::new(f)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn replay(
    record: &Option<PathBuf>,
    debug: &Option<PathBuf>,
    cfg: &EngineConfig,
    args: ReplayArgs,
) -> Result<()> {
    if let Some(path) = args.log {
        let f = File::open(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let inputs = read_inputs(BufReader::new(f)).map_err(usage)?;
        let mut engine = build_engine(cfg, debug.is_some())?;
        for (tick, input) in inputs {
            engine.advance_to(tick);
            let _ = engine.submit(input);
        }
        engine.run_for(args.tail);
        let records = engine.drain();
        return finish(record, debug, &engine, records);
    }
    let path = args
        .trace
        .or_else(|| cfg.input.trace.as_ref().map(PathBuf::from))
        .ok_or_else(|| usage("replay needs --trace, --log or input.trace in the config"))?;
    let frames = load_trace(&path)?;
    let speed: ReplaySpeed = args.trace_speed.parse().map_err(usage)?;
    match speed {
        ReplaySpeed::Max => {
            let mut engine = build_engine(cfg, debug.is_some())?;
            engine.run_trace(&frames, 1.0, args.tail);
            let records = engine.drain();
            finish(record, debug, &engine, records)
        }
        ReplaySpeed::Factor(speed) => {
            let opts = RuntimeOptions {
                speed,
                trace: frames,
                exit_after_trace: Some(args.tail),
            };
            serve(record, debug, cfg, None, opts)
        }
    }
}

/// Runs the paced engine thread behind the HTTP API until Ctrl-C or, for a
/// trace replay, until the trace and its tail are done.
fn serve(
    record: &Option<PathBuf>,
    debug: &Option<PathBuf>,
    cfg: &EngineConfig,
    landmark_port: Option<u16>,
    opts: RuntimeOptions,
) -> Result<()> {
    let engine = build_engine(cfg, debug.is_some())?;
    let out = outputs(record, debug, &engine)?;
    let snapshot = out.snapshot.subscribe();
    let events = out.events.clone();
    let (control, handle) = runtime::spawn(engine, opts, out);

    let rt = tokio::runtime::Runtime::new().map_err(fatal)?;
    rt.block_on(async {
        let http = tokio::net::TcpListener::bind(("0.0.0.0", cfg.api.http_port))
            .await
            .map_err(|e| fatal(format!("http port {}: {e}", cfg.api.http_port)))?;
        tracing::info!("operator api on {}", http.local_addr().map_err(fatal)?);
        if let Some(port) = landmark_port {
            let l = tokio::net::TcpListener::bind(("0.0.0.0", port))
                .await
                .map_err(|e| fatal(format!("landmark port {port}: {e}")))?;
            tracing::info!("landmarks on {}", l.local_addr().map_err(fatal)?);
            tokio::spawn(landmarks::serve(l, control.clone()));
        }
        let state = AppState {
            control: control.clone(),
            snapshot,
            events,
            config: Arc::new(cfg.clone()),
        };
        let (done_tx, done_rx) = tokio::sync::oneshot::channel::<()>();
        let waiter = std::thread::spawn(move || {
            let r = handle.join();
            let _ = done_tx.send(());
            r
        });
        let shutdown = async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => tracing::info!("interrupted"),
                _ = done_rx => tracing::info!("engine finished"),
            }
        };
        axum::serve(http, api::router(state))
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(fatal)?;
        let _ = control.send(Control::Shutdown);
        match waiter.join() {
            Ok(Ok(r)) => r.map_err(fatal),
            _ => Err(fatal("engine thread panicked")),
        }
    })
}
