//! Simulated robot speaking the datagram protocol: one robot, the stage
//! kinematics, PING replies and periodic STATE telemetry.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::command::{Address, AddressedCommand, LedMode, RobotId};
use crate::stage::{Pose, RobotSpawn, Stage, StageConfig, StageError};

use super::codec::{decode, Body, Telemetry};

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub id: RobotId,
    pub bind: SocketAddr,
    pub tick: Duration,
    pub telemetry_every: Duration,
    pub start: Pose,
    /// Stage bounds and limits. The robot list and `dt` come from this config.
    pub stage: StageConfig,
}

impl AgentConfig {
    pub fn new(id: RobotId, bind: SocketAddr) -> Self {
        Self {
            id,
            bind,
            tick: Duration::from_millis(1),
            telemetry_every: Duration::from_millis(100),
            start: Pose::new(0.0, 0.0, 0.0),
            stage: StageConfig::default(),
        }
    }
}

#[derive(Debug, Default)]
pub struct AgentStats {
    pub applied: AtomicU64,
    pub ignored: AtomicU64,
    pub malformed: AtomicU64,
    pub telemetry_sent: AtomicU64,
}

pub struct RobotAgent {
    id: RobotId,
    socket: UdpSocket,
    stage: Stage,
    telemetry_every: Duration,
    stats: Arc<AgentStats>,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("bind failed: {0}")]
    Bind(io::Error),
    #[error(transparent)]
    Stage(#[from] StageError),
}

impl RobotAgent {
    pub fn bind(cfg: AgentConfig) -> Result<RobotAgent, AgentError> {
        let socket = UdpSocket::bind(cfg.bind).map_err(AgentError::Bind)?;
        socket
            .set_read_timeout(Some(cfg.tick.max(Duration::from_micros(100))))
            .map_err(AgentError::Bind)?;
        let stage = Stage::new(StageConfig {
            robots: vec![RobotSpawn {
                id: cfg.id,
                x: cfg.start.x,
                y: cfg.start.y,
                theta: cfg.start.theta,
            }],
            dt: cfg.tick.as_secs_f64(),
            ..cfg.stage
        })?;
        Ok(RobotAgent {
            id: cfg.id,
            socket,
            stage,
            telemetry_every: cfg.telemetry_every,
            stats: Arc::new(AgentStats::default()),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn stats(&self) -> Arc<AgentStats> {
        self.stats.clone()
    }

    fn telemetry(&self) -> Telemetry {
        let r = self.stage.robot(self.id).expect("agent robot exists");
        let led_mode = if r.led.on {
            r.led.mode.wire()
        } else {
            LedMode::Off.wire()
        };
        Telemetry {
            robot_id: self.id.get(),
            x: r.pose.x,
            y: r.pose.y,
            theta: r.pose.theta,
            led_mode,
        }
    }

    fn send_state(&self, to: SocketAddr) {
        match self.telemetry().to_packet() {
            Ok(p) => {
                if self.socket.send_to(&p.encode(), to).is_ok() {
                    self.stats.telemetry_sent.fetch_add(1, Ordering::Relaxed);
                }
            }
            Err(e) => tracing::warn!("state not representable: {e}"),
        }
    }

    fn handle(&mut self, bytes: &[u8], from: SocketAddr) {
        let packet = match decode(bytes) {
            Ok(p) => p,
            Err(e) => {
                self.stats.malformed.fetch_add(1, Ordering::Relaxed);
                tracing::debug!("agent {}: malformed datagram from {from}: {e}", self.id);
                return;
            }
        };
        if !packet.is_for(self.id) {
            self.stats.ignored.fetch_add(1, Ordering::Relaxed);
            return;
        }
        match packet.body {
            Body::Ping => self.send_state(from),
            Body::State { .. } => {
                self.stats.ignored.fetch_add(1, Ordering::Relaxed);
            }
            _ => {
                let action = packet
                    .to_command(0.0)
                    .expect("command bodies convert")
                    .action;
                let cmd =
                    AddressedCommand::new(Address::Robot(self.id), action, self.stage.sim_time());
                match self.stage.apply_command(&cmd) {
                    Ok(()) => {
                        self.stats.applied.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        self.stats.malformed.fetch_add(1, Ordering::Relaxed);
                        tracing::warn!("agent {}: rejected command: {e}", self.id);
                    }
                }
            }
        }
    }

    /// Serves until `stop` is set. The internal simulator follows wall-clock
    /// time in whole ticks; commands apply at the tick boundary they arrive on.
    pub fn run(&mut self, stop: &AtomicBool) {
        let start = Instant::now();
        let dt = self.stage.config().dt;
        let mut last_telemetry = Instant::now();
        let mut peer: Option<SocketAddr> = None;
        let mut buf = [0u8; 64];
        let catch_up = |stage: &mut Stage| {
            let due = (start.elapsed().as_secs_f64() / dt) as u64;
            if due > stage.tick() {
                stage.advance(due - stage.tick());
            }
        };
        while !stop.load(Ordering::Relaxed) {
            match self.socket.recv_from(&mut buf) {
                Ok((n, from)) => {
                    catch_up(&mut self.stage);
                    peer = Some(from);
                    self.handle(&buf[..n], from);
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) => {}
                Err(e) => tracing::debug!("agent {}: recv error {e}", self.id),
            }
            catch_up(&mut self.stage);
            if let Some(p) = peer {
                if last_telemetry.elapsed() >= self.telemetry_every {
                    last_telemetry = Instant::now();
                    self.send_state(p);
                }
            }
        }
    }
}
