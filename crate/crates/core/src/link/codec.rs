//! Packet layout (one packet per datagram, multi-byte fields big-endian):
//!
//! ```text
//! +-------+---------+----------+-----+-----------+----------+
//! | magic | version | robot_id | cmd | payload   | checksum |
//! | 0xA5  | 0x01    | 0xFF=all |     | per cmd   | XOR      |
//! +-------+---------+----------+-----+-----------+----------+
//! ```
//!
//! | cmd  | name    | payload                                             |
//! |------|---------|-----------------------------------------------------|
//! | 0x01 | DRIVE   | v i16 mm/s, omega i16 mrad/s, duration u16 ms (6)   |
//! | 0x02 | LED_SET | mode u8, r u8, g u8, b u8, period u16 ms (6)        |
//! | 0x03 | STOP    | (0)                                                 |
//! | 0x04 | PING    | (0)                                                 |
//! | 0x81 | STATE   | x i16 mm, y i16 mm, theta i16 mrad, led_mode u8 (7) |
//!
//! The checksum is the XOR of every preceding byte.

use thiserror::Error;

use crate::command::{Action, Address, AddressedCommand, LedMode, RobotId};

pub const MAGIC: u8 = 0xA5;
pub const VERSION: u8 = 0x01;
pub const BROADCAST: u8 = RobotId::BROADCAST_WIRE;
pub const HEADER_LEN: usize = 4;

pub const CMD_DRIVE: u8 = 0x01;
pub const CMD_LED_SET: u8 = 0x02;
pub const CMD_STOP: u8 = 0x03;
pub const CMD_PING: u8 = 0x04;
pub const CMD_STATE: u8 = 0x81;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("bad length {got} (expected {expected})")]
    BadLength { got: usize, expected: usize },
    #[error("checksum mismatch: computed {computed:#04x}, carried {carried:#04x}")]
    BadChecksum { computed: u8, carried: u8 },
    #[error("unknown command {0:#04x}")]
    UnknownCmd(u8),
    #[error("invalid LED mode {0}")]
    BadLedMode(u8),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("{field} value {value} not representable on the wire")]
    UnrepresentableValue { field: &'static str, value: f64 },
    #[error("group address {0:?} must be expanded to robot ids before encoding")]
    GroupAddress(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Body {
    Drive {
        v_mm_s: i16,
        omega_mrad_s: i16,
        duration_ms: u16,
    },
    LedSet {
        mode: LedMode,
        rgb: [u8; 3],
        period_ms: u16,
    },
    Stop,
    Ping,
    State {
        x_mm: i16,
        y_mm: i16,
        theta_mrad: i16,
        led_mode: u8,
    },
}

impl Body {
    pub fn cmd(&self) -> u8 {
        match self {
            Body::Drive { .. } => CMD_DRIVE,
            Body::LedSet { .. } => CMD_LED_SET,
            Body::Stop => CMD_STOP,
            Body::Ping => CMD_PING,
            Body::State { .. } => CMD_STATE,
        }
    }
}

pub fn payload_len(cmd: u8) -> Option<usize> {
    match cmd {
        CMD_DRIVE | CMD_LED_SET => Some(6),
        CMD_STATE => Some(7),
        CMD_STOP | CMD_PING => Some(0),
        _ => None,
    }
}

pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Packet {
    pub robot_id: u8,
    pub body: Body,
}

impl Packet {
    pub fn new(robot_id: u8, body: Body) -> Self {
        Self { robot_id, body }
    }

    pub fn is_for(&self, id: RobotId) -> bool {
        self.robot_id == BROADCAST || self.robot_id == id.get()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8);
        out.extend_from_slice(&[MAGIC, VERSION, self.robot_id, self.body.cmd()]);
        match self.body {
            Body::Drive {
                v_mm_s,
                omega_mrad_s,
                duration_ms,
            } => {
                out.extend_from_slice(&v_mm_s.to_be_bytes());
                out.extend_from_slice(&omega_mrad_s.to_be_bytes());
                out.extend_from_slice(&duration_ms.to_be_bytes());
            }
            Body::LedSet {
                mode,
                rgb,
                period_ms,
            } => {
                out.push(mode.wire());
                out.extend_from_slice(&rgb);
                out.extend_from_slice(&period_ms.to_be_bytes());
            }
            Body::Stop | Body::Ping => {}
            Body::State {
                x_mm,
                y_mm,
                theta_mrad,
                led_mode,
            } => {
                out.extend_from_slice(&x_mm.to_be_bytes());
                out.extend_from_slice(&y_mm.to_be_bytes());
                out.extend_from_slice(&theta_mrad.to_be_bytes());
                out.push(led_mode);
            }
        }
        out.push(checksum(&out));
        out
    }

    /// SI command to wire packet. Group addresses are rejected.
    pub fn from_command(cmd: &AddressedCommand) -> Result<Packet, EncodeError> {
        let robot_id = match &cmd.address {
            Address::Robot(id) => id.get(),
            Address::Broadcast => BROADCAST,
            Address::Group(g) => return Err(EncodeError::GroupAddress(g.clone())),
        };
        let body = match cmd.action {
            Action::Drive { v, omega, duration } => Body::Drive {
                v_mm_s: milli_i16("v", v)?,
                omega_mrad_s: milli_i16("omega", omega)?,
                duration_ms: milli_u16("duration", duration)?,
            },
            Action::Led { mode, rgb, period } => Body::LedSet {
                mode,
                rgb,
                period_ms: milli_u16("period", period)?,
            },
            Action::Stop => Body::Stop,
        };
        Ok(Packet { robot_id, body })
    }

    /// Wire packet back to an SI command; `None` for PING and STATE.
    pub fn to_command(&self, issued_at: f64) -> Option<AddressedCommand> {
        let address = match RobotId::new(self.robot_id) {
            Ok(id) => Address::Robot(id),
            Err(_) => Address::Broadcast,
        };
        let action = match self.body {
            Body::Drive {
                v_mm_s,
                omega_mrad_s,
                duration_ms,
            } => Action::Drive {
                v: v_mm_s as f64 / 1000.0,
                omega: omega_mrad_s as f64 / 1000.0,
                duration: duration_ms as f64 / 1000.0,
            },
            Body::LedSet {
                mode,
                rgb,
                period_ms,
            } => Action::Led {
                mode,
                rgb,
                period: period_ms as f64 / 1000.0,
            },
            Body::Stop => Action::Stop,
            Body::Ping | Body::State { .. } => return None,
        };
        Some(AddressedCommand::new(address, action, issued_at))
    }
}

/// Robot-to-host pose report in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Telemetry {
    pub robot_id: u8,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub led_mode: u8,
}

impl Telemetry {
    pub fn to_packet(&self) -> Result<Packet, EncodeError> {
        Ok(Packet::new(
            self.robot_id,
            Body::State {
                x_mm: milli_i16("x", self.x)?,
                y_mm: milli_i16("y", self.y)?,
                theta_mrad: milli_i16("theta", self.theta)?,
                led_mode: self.led_mode,
            },
        ))
    }

    pub fn from_packet(p: &Packet) -> Option<Telemetry> {
        match p.body {
            Body::State {
                x_mm,
                y_mm,
                theta_mrad,
                led_mode,
            } => Some(Telemetry {
                robot_id: p.robot_id,
                x: x_mm as f64 / 1000.0,
                y: y_mm as f64 / 1000.0,
                theta: theta_mrad as f64 / 1000.0,
                led_mode,
            }),
            _ => None,
        }
    }
}

fn milli(field: &'static str, value: f64) -> Result<f64, EncodeError> {
    let m = (value * 1000.0).round();
    if m.is_finite() {
        Ok(m)
    } else {
        Err(EncodeError::UnrepresentableValue { field, value })
    }
}

fn milli_i16(field: &'static str, value: f64) -> Result<i16, EncodeError> {
    let m = milli(field, value)?;
    if m < i16::MIN as f64 || m > i16::MAX as f64 {
        return Err(EncodeError::UnrepresentableValue { field, value });
    }
    Ok(m as i16)
}

fn milli_u16(field: &'static str, value: f64) -> Result<u16, EncodeError> {
    let m = milli(field, value)?;
    if m < 0.0 || m > u16::MAX as f64 {
        return Err(EncodeError::UnrepresentableValue { field, value });
    }
    Ok(m as u16)
}

/// Encodes an SI command (robot or broadcast address).
pub fn encode(cmd: &AddressedCommand) -> Result<Vec<u8>, EncodeError> {
    Ok(Packet::from_command(cmd)?.encode())
}

/// Decodes one datagram. Checks run in order: length floor, magic, version,
/// checksum, command, exact length, field values.
pub fn decode(bytes: &[u8]) -> Result<Packet, DecodeError> {
    if bytes.len() < HEADER_LEN + 1 {
        return Err(DecodeError::BadLength {
            got: bytes.len(),
            expected: HEADER_LEN + 1,
        });
    }
    if bytes[0] != MAGIC {
        return Err(DecodeError::BadMagic(bytes[0]));
    }
    if bytes[1] != VERSION {
        return Err(DecodeError::BadVersion(bytes[1]));
    }
    let (body, carried) = bytes.split_at(bytes.len() - 1);
    let computed = checksum(body);
    if computed != carried[0] {
        return Err(DecodeError::BadChecksum {
            computed,
            carried: carried[0],
        });
    }
    let cmd = bytes[3];
    let len = payload_len(cmd).ok_or(DecodeError::UnknownCmd(cmd))?;
    let expected = HEADER_LEN + len + 1;
    if bytes.len() != expected {
        return Err(DecodeError::BadLength {
            got: bytes.len(),
            expected,
        });
    }
    let p = &bytes[HEADER_LEN..HEADER_LEN + len];
    let i16_at = |i: usize| i16::from_be_bytes([p[i], p[i + 1]]);
    let u16_at = |i: usize| u16::from_be_bytes([p[i], p[i + 1]]);
    let body = match cmd {
        CMD_DRIVE => Body::Drive {
            v_mm_s: i16_at(0),
            omega_mrad_s: i16_at(2),
            duration_ms: u16_at(4),
        },
        CMD_LED_SET => Body::LedSet {
            mode: LedMode::from_wire(p[0]).ok_or(DecodeError::BadLedMode(p[0]))?,
            rgb: [p[1], p[2], p[3]],
            period_ms: u16_at(4),
        },
        CMD_STOP => Body::Stop,
        CMD_PING => Body::Ping,
        CMD_STATE => Body::State {
            x_mm: i16_at(0),
            y_mm: i16_at(2),
            theta_mrad: i16_at(4),
            led_mode: p[6],
        },
        _ => unreachable!("payload_len filtered unknown commands"),
    };
    Ok(Packet {
        robot_id: bytes[2],
        body,
    })
}
