//! Engine configuration: one YAML document with a section per module.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::RobotId;
use crate::gesture::GestureConfig;
use crate::roles::{FingerMap, Role, RoleError, RoleParams};
use crate::stage::{StageConfig, StageError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("{section}.{field}: {reason}")]
    Invalid {
        section: &'static str,
        field: String,
        reason: String,
    },
}

fn invalid(
    section: &'static str,
    field: impl Into<String>,
    reason: impl Into<String>,
) -> ConfigError {
    ConfigError::Invalid {
        section,
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolesSection {
    pub initial: Role,
    pub finger_map: Option<FingerMap>,
    pub params: RoleParams,
}

/// Where a robot's commands go besides the local simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotEndpoint {
    Sim,
    Remote(SocketAddr),
}

impl std::str::FromStr for RobotEndpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "sim" {
            return Ok(RobotEndpoint::Sim);
        }
        s.parse()
            .map(RobotEndpoint::Remote)
            .map_err(|_| format!("expected \"sim\" or host:port, got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    /// Local address for the host datagram socket.
    pub bind: String,
    pub robots: BTreeMap<RobotId, String>,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            bind: format!("0.0.0.0:{}", crate::link::DEFAULT_HOST_PORT),
            robots: BTreeMap::new(),
        }
    }
}

impl LinkSection {
    /// Robots reached over the network.
    pub fn remote_roster(&self) -> Result<BTreeMap<RobotId, SocketAddr>, ConfigError> {
        let mut out = BTreeMap::new();
        for (id, ep) in &self.robots {
            match ep.parse::<RobotEndpoint>() {
                Ok(RobotEndpoint::Sim) => {}
                Ok(RobotEndpoint::Remote(addr)) => {
                    out.insert(*id, addr);
                }
                Err(e) => return Err(invalid("link", format!("robots.{id}"), e)),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub trace: Option<String>,
    pub landmark_port: u16,
}

impl Default for InputSection {
    fn default() -> Self {
        Self {
            trace: None,
            landmark_port: 7401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiSection {
    pub http_port: u16,
    pub snapshot_hz: f64,
}

impl Default for ApiSection {
    fn default() -> Self {
        Self {
            http_port: 7400,
            snapshot_hz: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub gesture: GestureConfig,
    pub roles: RolesSection,
    pub stage: StageConfig,
    pub link: LinkSection,
    pub input: InputSection,
    pub api: ApiSection,
}

impl EngineConfig {
    pub fn from_yaml(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = if text.trim().is_empty() {
            EngineConfig::default()
        } else {
            serde_yaml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_yaml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gesture
            .validate()
            .map_err(|e| invalid("gesture", e.field, e.reason))?;
        match self.stage.validate() {
            Ok(()) => {}
            Err(StageError::Config { field, reason }) => {
                return Err(invalid("stage", field, reason))
            }
            Err(e) => return Err(invalid("stage", "robots", e.to_string())),
        }
        match self.roles.params.validate(&self.stage.limits()) {
            Ok(()) => {}
            Err(RoleError::BadParams { field, source }) => {
                return Err(invalid(
                    "roles",
                    format!("params.{field}"),
                    source.to_string(),
                ))
            }
            Err(e) => return Err(invalid("roles", "params", e.to_string())),
        }
        if self.roles.initial.needs_finger_map() && self.roles.finger_map.is_none() {
            return Err(invalid(
                "roles",
                "initial",
                format!("{} requires roles.finger_map", self.roles.initial),
            ));
        }
        self.link.remote_roster()?;
        if self.link.bind.parse::<SocketAddr>().is_err() {
            return Err(invalid(
                "link",
                "bind",
                format!("not a socket address: {:?}", self.link.bind),
            ));
        }
        if !(self.api.snapshot_hz > 0.0 && self.api.snapshot_hz.is_finite()) {
            return Err(invalid("api", "snapshot_hz", "must be positive"));
        }
        Ok(())
    }

    /// Simulator ticks between published snapshots.
    pub fn snapshot_every(&self) -> u64 {
        ((1.0 / (self.api.snapshot_hz * self.stage.dt)).round() as u64).max(1)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = EngineConfig::from_yaml("").unwrap();
        assert_eq!(cfg, EngineConfig::default());
        assert_eq!(cfg.api.http_port, 7400);
        assert_eq!(cfg.snapshot_every(), 33);
        assert_eq!(cfg.roles.initial, Role::Director);
    }

    #[test]
    fn partial_sections() {
        let cfg = EngineConfig::from_yaml(
            "gesture:\n  push_speed: 0.8\n  forward_axis: \"-x\"\nroles:\n  finger_map: {index: 1, middle: 2}\n  params:\n    puppeteer_v: 0.05\nlink:\n  robots:\n    1: sim\n    2: \"127.0.0.1:7412\"\n",
        )
        .unwrap();
        assert_eq!(cfg.gesture.push_speed, 0.8);
        assert_eq!(cfg.roles.params.puppeteer_v, 0.05);
        let map = cfg.roles.finger_map.unwrap();
        assert_eq!(
            map.get(crate::hand::Finger::Middle),
            Some(RobotId::new(2).unwrap())
        );
        let roster = cfg.link.remote_roster().unwrap();
        assert_eq!(roster.len(), 1);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = EngineConfig::from_yaml("gesture:\n  push_sped: 1\n").unwrap_err();
        assert!(e.to_string().contains("push_sped"), "{e}");
        let e = EngineConfig::from_yaml("gesture:\n  push_speed: -1\n").unwrap_err();
        assert!(e.to_string().starts_with("gesture.push_speed"), "{e}");
        let e = EngineConfig::from_yaml("stage:\n  width: 0\n").unwrap_err();
        assert!(e.to_string().starts_with("stage.width"), "{e}");
        let e = EngineConfig::from_yaml("link:\n  robots:\n    1: nowhere\n").unwrap_err();
        assert!(e.to_string().starts_with("link.robots.1"), "{e}");
        let e = EngineConfig::from_yaml("roles:\n  initial: puppeteer\n").unwrap_err();
        assert!(e.to_string().starts_with("roles.initial"), "{e}");
        let e = EngineConfig::from_yaml("api:\n  snapshot_hz: 0\n").unwrap_err();
        assert!(e.to_string().starts_with("api.snapshot_hz"), "{e}");
        let e =
            EngineConfig::from_yaml("roles:\n  finger_map: {index: 1, middle: 1}\n").unwrap_err();
        assert!(e.to_string().contains("roles"), "{e}");
    }

    #[test]
    fn yaml_round_trip() {
        let cfg = EngineConfig::default();
        assert_eq!(EngineConfig::from_yaml(&cfg.to_yaml()).unwrap(), cfg);
    }
}
