//! Datagram link to remote robots: packet codec, host-side transport, and a
//! simulated robot agent that speaks the same protocol.

pub mod agent;
pub mod codec;

use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::command::{Address, AddressedCommand, RobotId};
pub use codec::{decode, encode, Body, DecodeError, EncodeError, Packet, Telemetry};

pub const DEFAULT_HOST_PORT: u16 = 7402;
pub const AGENT_BASE_PORT: u16 = 7410;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("socket: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Default)]
pub struct LinkStats {
    pub sent: AtomicU64,
    pub received: AtomicU64,
    pub malformed: AtomicU64,
}

/// Host side of the link: sends commands to the roster and collects STATE
/// telemetry on a background receiver.
pub struct RobotLink {
    socket: UdpSocket,
    roster: BTreeMap<RobotId, SocketAddr>,
    stats: Arc<LinkStats>,
    shutdown: Arc<AtomicBool>,
    receiver: Option<JoinHandle<()>>,
}

impl RobotLink {
    pub fn bind(
        bind: SocketAddr,
        roster: BTreeMap<RobotId, SocketAddr>,
    ) -> Result<(RobotLink, Receiver<Telemetry>), LinkError> {
        let socket = UdpSocket::bind(bind)?;
        let rx_socket = socket.try_clone()?;
        rx_socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let stats = Arc::new(LinkStats::default());
        let shutdown = Arc::new(AtomicBool::new(false));
        let (tx, rx) = std::sync::mpsc::channel();
        let receiver = {
            let stats = stats.clone();
            let shutdown = shutdown.clone();
            std::thread::spawn(move || receive_loop(rx_socket, tx, stats, shutdown))
        };
        Ok((
            RobotLink {
                socket,
                roster,
                stats,
                shutdown,
                receiver: Some(receiver),
            },
            rx,
        ))
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    pub fn roster(&self) -> &BTreeMap<RobotId, SocketAddr> {
        &self.roster
    }

    fn send_packet(&self, to: SocketAddr, p: &Packet) -> Result<(), LinkError> {
        self.socket.send_to(&p.encode(), to)?;
        self.stats.sent.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Sends one command. Broadcasts fan out one datagram per roster entry
    /// with the broadcast id; `group` gives the expansion of a group address.
    /// Robots outside the roster are skipped.
    pub fn send(&self, cmd: &AddressedCommand, group: &[RobotId]) -> Result<usize, LinkError> {
        let mut n = 0;
        match &cmd.address {
            Address::Broadcast => {
                let p = Packet::from_command(cmd)?;
                for addr in self.roster.values() {
                    self.send_packet(*addr, &p)?;
                    n += 1;
                }
            }
            Address::Robot(id) => {
                if let Some(addr) = self.roster.get(id) {
                    self.send_packet(*addr, &Packet::from_command(cmd)?)?;
                    n += 1;
                }
            }
            Address::Group(_) => {
                for id in group {
                    let Some(addr) = self.roster.get(id) else {
                        continue;
                    };
                    let single =
                        AddressedCommand::new(Address::Robot(*id), cmd.action, cmd.issued_at);
                    self.send_packet(*addr, &Packet::from_command(&single)?)?;
                    n += 1;
                }
            }
        }
        Ok(n)
    }

    pub fn ping(&self, id: RobotId) -> Result<(), LinkError> {
        if let Some(addr) = self.roster.get(&id) {
            self.send_packet(*addr, &Packet::new(id.get(), Body::Ping))?;
        }
        Ok(())
    }
}

impl Drop for RobotLink {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(h) = self.receiver.take() {
            let _ = h.join();
        }
    }
}

fn receive_loop(
    socket: UdpSocket,
    tx: Sender<Telemetry>,
    stats: Arc<LinkStats>,
    shutdown: Arc<AtomicBool>,
) {
    let mut buf = [0u8; 64];
    while !shutdown.load(Ordering::Relaxed) {
        let n = match socket.recv_from(&mut buf) {
            Ok((n, _)) => n,
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                continue
            }
            Err(_) => continue,
        };
        match decode(&buf[..n]) {
            Ok(p) => {
                if let Some(t) = Telemetry::from_packet(&p) {
                    stats.received.fetch_add(1, Ordering::Relaxed);
                    // receiver may have hung up
                    let _ = tx.send(t);
                }
            }
            Err(e) => {
                stats.malformed.fetch_add(1, Ordering::Relaxed);
                tracing::debug!("dropping malformed datagram: {e}");
            }
        }
    }
}
