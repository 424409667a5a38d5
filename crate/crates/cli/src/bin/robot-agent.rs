use std::io::IsTerminal;
use std::net::SocketAddr;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::Parser;
use theater_core::link::agent::{AgentConfig, RobotAgent};
use theater_core::link::AGENT_BASE_PORT;
use theater_core::{Pose, RobotId};

/// Simulated robot speaking the wire protocol over UDP.
#[derive(Parser)]
#[command(name = "robot-agent", version)]
struct Cli {
    #[arg(long)]
    id: u8,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Defaults to 7410 + id.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value_t = 1.0)]
    tick_ms: f64,
    #[arg(long, default_value_t = 100)]
    telemetry_ms: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    y: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
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
    let id = match RobotId::new(cli.id) {
        Ok(id) => id,
        Err(e) => {
            eprintln!("error: --id {}: {e}", cli.id);
            return ExitCode::from(2);
        }
    };
    if !(cli.tick_ms.is_finite() && cli.tick_ms > 0.0) {
        eprintln!("error: --tick-ms must be positive");
        return ExitCode::from(2);
    }
    let port = cli.port.unwrap_or(AGENT_BASE_PORT + u16::from(cli.id));
    let bind: SocketAddr = match format!("{}:{port}", cli.host).parse() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: --host {}: {e}", cli.host);
            return ExitCode::from(2);
        }
    };
    let mut cfg = AgentConfig::new(id, bind);
    cfg.tick = Duration::from_secs_f64(cli.tick_ms / 1e3);
    cfg.telemetry_every = Duration::from_millis(cli.telemetry_ms);
    cfg.start = Pose::new(cli.x, cli.y, cli.theta);
    let mut agent = match RobotAgent::bind(cfg) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("fatal: {e}");
            return ExitCode::from(3);
        }
    };
    match agent.local_addr() {
        Ok(addr) => println!("robot-agent {} listening on {addr}", id.get()),
        Err(e) => {
            eprintln!("fatal: {e}");
            return ExitCode::from(3);
        }
    }
    let stop = AtomicBool::new(false);
    agent.run(&stop);
    ExitCode::SUCCESS
}
