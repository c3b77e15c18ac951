//! TOML scenario description: topology, workload, sniffers, faults, marker
//! scans and the expected outcome.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::WarningKind;
use crate::codec::MacAddress;
use crate::sim::{
    derive_signing_key, FaultKind, FaultSpec, Firmware, NodeId, Position, Role, SimConfig, SimNode,
};
use crate::verifier::SpoofCase;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn default_drain() -> f64 {
    5.0
}
fn default_epsilon_ms() -> f64 {
    5.0
}
fn default_hop_delay_ms() -> f64 {
    10.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    /// Seconds during which clients originate requests.
    pub duration: f64,
    /// Extra seconds simulated after the workload so replies complete.
    #[serde(default = "default_drain")]
    pub drain: f64,
    pub link_range: f64,
    #[serde(default = "default_epsilon_ms")]
    pub epsilon_ms: f64,
    #[serde(default = "default_hop_delay_ms")]
    pub hop_delay_ms: f64,
    #[serde(default)]
    pub loss: f64,
    /// Nodes sign their payloads; keys of non-malicious nodes are provisioned.
    #[serde(default)]
    pub secure: bool,
    /// Scan every node's marker at t = 0, placement = node name.
    #[serde(default = "yes")]
    pub scan_all: bool,
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeConfig>,
    #[serde(default, rename = "sniffer")]
    pub sniffers: Vec<SnifferConfig>,
    #[serde(default, rename = "fault")]
    pub faults: Vec<FaultConfig>,
    #[serde(default, rename = "scan")]
    pub scans: Vec<ScanConfig>,
    #[serde(default)]
    pub expect: Expectations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    #[serde(default)]
    pub mac: Option<MacAddress>,
    pub x: f64,
    pub y: f64,
    pub role: Role,
    #[serde(default)]
    pub firmware: Option<Firmware>,
    #[serde(default)]
    pub tx_interval: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnifferConfig {
    pub id: String,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    /// Reception radius in metres; absent means the whole network is in range.
    #[serde(default)]
    pub range: Option<f64>,
    #[serde(default)]
    pub skew_ms: f64,
    /// Time-stamped positions of a moving (handheld) sniffer.
    #[serde(default)]
    pub path: Vec<Waypoint>,
}

impl SnifferConfig {
    pub fn skew_us(&self) -> i64 {
        (self.skew_ms * 1000.0).round() as i64
    }

    /// Position at `t` seconds, interpolating along the path.
    pub fn position_at(&self, t: f64) -> Position {
        let Some(first) = self.path.first() else {
            return Position::new(self.x, self.y);
        };
        if t <= first.t {
            return Position::new(first.x, first.y);
        }
        for pair in self.path.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.t {
                let f = if b.t > a.t {
                    (t - a.t) / (b.t - a.t)
                } else {
                    1.0
                };
                return Position::new(a.x, a.y).lerp(&Position::new(b.x, b.y), f);
            }
        }
        let last = self.path[self.path.len() - 1];
        Position::new(last.x, last.y)
    }

    pub fn hears(&self, at: Position, t: f64) -> bool {
        self.range
            .is_none_or(|r| self.position_at(t).distance(&at) <= r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultName {
    NodeDeath,
    MarkerDuplicate,
    MarkerForge,
    AddressCopy,
    Silence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub at: f64,
    pub kind: FaultName,
    pub subject: String,
    #[serde(default)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Physical node whose marker is scanned.
    pub node: String,
    #[serde(default)]
    pub at: f64,
    #[serde(default)]
    pub placement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeExpectation {
    pub src: String,
    pub dst: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    /// IP-view edges by node name.
    #[serde(default)]
    pub ip_edges: Vec<EdgeExpectation>,
    /// Subject → case. A subject is a node name, or `marker:<node>` for the
    /// MAC embedded in that node's marker at the end of the run.
    #[serde(default)]
    pub classifications: BTreeMap<String, SpoofCase>,
    /// Every subject not listed must classify as NO_FINDING.
    #[serde(default)]
    pub exclusive_classifications: bool,
    #[serde(default)]
    pub warnings: Vec<WarningKind>,
    #[serde(default)]
    pub stored_transmissions: Option<u64>,
    #[serde(default)]
    pub witnesses: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn node_id(&self, name: &str) -> Result<NodeId, ConfigError> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(NodeId)
            .ok_or_else(|| ConfigError::UnknownNode(name.to_string()))
    }

    pub fn epsilon_us(&self) -> u64 {
        (self.epsilon_ms * 1000.0).round() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if (self.duration.is_nan() || self.duration < 0.0)
            || (self.drain.is_nan() || self.drain < 0.0)
        {
            return invalid("duration and drain must be non-negative".into());
        }
        if self.link_range.is_nan() || self.link_range <= 0.0 {
            return invalid("link_range must be positive".into());
        }
        if (self.epsilon_ms.is_nan() || self.epsilon_ms <= 0.0)
            || (self.hop_delay_ms.is_nan() || self.hop_delay_ms < 0.0)
        {
            return invalid("epsilon_ms must be positive and hop_delay_ms non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return invalid("loss must lie in [0, 1]".into());
        }
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return invalid(format!("duplicate node name {:?}", n.name));
            }
        }
        let servers = self.nodes.iter().filter(|n| n.role == Role::Server).count();
        if !self.nodes.is_empty() && servers != 1 {
            return invalid(format!("exactly one server required, found {servers}"));
        }
        let mut ids = BTreeSet::new();
        for s in &self.sniffers {
            if !ids.insert(s.id.as_str()) {
                return invalid(format!("duplicate sniffer id {:?}", s.id));
            }
            if s.path.windows(2).any(|w| w[1].t < w[0].t) {
                return invalid(format!("sniffer {:?} path is not time-ordered", s.id));
            }
        }
        for f in &self.faults {
            self.node_id(&f.subject)?;
            let needs_target =
                matches!(f.kind, FaultName::MarkerDuplicate | FaultName::AddressCopy);
            match (&f.target, needs_target) {
                (Some(t), true) => {
                    self.node_id(t)?;
                }
                (None, true) => return invalid(format!("{:?} fault needs a target", f.kind)),
                (Some(_), false) => return invalid(format!("{:?} fault takes no target", f.kind)),
                (None, false) => {}
            }
            if f.at.is_nan() || f.at < 0.0 {
                return invalid("fault times must be non-negative".into());
            }
        }
        for s in &self.scans {
            self.node_id(&s.node)?;
        }
        Ok(())
    }

    /// Simulator configuration and fault schedule.
    pub fn build(&self) -> Result<(SimConfig, Vec<FaultSpec>), ConfigError> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let mut node = SimNode::new(NodeId(i), n.name.clone(), n.role, Position::new(n.x, n.y));
            if let Some(mac) = n.mac {
                node.mac = mac;
                node.marker.embedded_mac = mac;
            }
            if let Some(fw) = n.firmware {
                node.firmware = fw;
            }
            if let Some(iv) = n.tx_interval {
                node.tx_interval = iv;
            }
            if self.secure {
                node.signing_key = Some(derive_signing_key(self.seed, node.id));
            }
            nodes.push(node);
        }
        let macs: BTreeSet<MacAddress> = nodes.iter().map(|n| n.mac).collect();
        if macs.len() != nodes.len() {
            return Err(ConfigError::Invalid(
                "node MAC addresses must be unique".into(),
            ));
        }
        let mut sim = SimConfig::new(nodes, self.link_range);
        sim.seed = self.seed;
        sim.hop_delay_us = (self.hop_delay_ms * 1000.0).round() as u64;
        sim.loss = self.loss;
        sim.workload_end = Some(self.duration);

        let faults = self
            .faults
            .iter()
            .map(|f| {
                let subject = self.node_id(&f.subject)?;
                let target = || self.node_id(f.target.as_deref().unwrap_or_default());
                let kind = match f.kind {
                    FaultName::NodeDeath => FaultKind::NodeDeath,
                    FaultName::MarkerDuplicate => FaultKind::MarkerDuplicate(target()?),
                    FaultName::MarkerForge => FaultKind::MarkerForge,
                    FaultName::AddressCopy => FaultKind::AddressCopy(target()?),
                    FaultName::Silence => FaultKind::Silence,
                };
                Ok(FaultSpec {
                    at: f.at,
                    kind,
                    subject,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok((sim, faults))
    }

    /// All marker scans, explicit ones plus the implicit initial sweep, by time.
    pub fn scan_plan(&self) -> Vec<ScanConfig> {
        let mut plan: Vec<ScanConfig> = Vec::new();
        if self.scan_all {
            plan.extend(self.nodes.iter().map(|n| ScanConfig {
                node: n.name.clone(),
                at: 0.0,
                placement: None,
            }));
        }
        plan.extend(self.scans.iter().cloned());
        plan.sort_by(|a, b| a.at.total_cmp(&b.at));
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        id = "t"
        duration = 20
        link_range = 15

        [[node]]
        name = "server"
        x = 0
        y = 0
        role = "server"

        [[node]]
        name = "c1"
        x = 10
        y = 0
        role = "client"
        tx_interval = 5

        [[sniffer]]
        id = "s1"
        path = [{ t = 0, x = 0, y = 0 }, { t = 10, x = 10, y = 0 }]
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.epsilon_us(), 5_000);
        assert!(cfg.scan_all);
        let (sim, faults) = cfg.build().unwrap();
        assert_eq!(sim.nodes[1].tx_interval, 5.0);
        assert_eq!(sim.hop_delay_us, 10_000);
        assert!(faults.is_empty());
        assert!(sim.nodes.iter().all(|n| n.signing_key.is_none()));
    }

    #[test]
    fn sniffer_path_interpolation() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let s = &cfg.sniffers[0];
        assert_eq!(s.position_at(-1.0), Position::new(0.0, 0.0));
        assert_eq!(s.position_at(5.0), Position::new(5.0, 0.0));
        assert_eq!(s.position_at(99.0), Position::new(10.0, 0.0));
        assert!(s.hears(Position::new(1e6, 0.0), 0.0));
    }

    #[test]
    fn rejects_bad_references() {
        let bad =
            format!("{MINIMAL}\n[[fault]]\nat = 1\nkind = \"node_death\"\nsubject = \"ghost\"\n");
        assert!(matches!(
            ScenarioConfig::from_toml(&bad),
            Err(ConfigError::UnknownNode(_))
        ));
        let bad =
            format!("{MINIMAL}\n[[fault]]\nat = 1\nkind = \"address_copy\"\nsubject = \"c1\"\n");
        assert!(matches!(
            ScenarioConfig::from_toml(&bad),
            Err(ConfigError::Invalid(_))
        ));
        let bad = MINIMAL.replace("role = \"server\"", "role = \"client\"");
        assert!(matches!(
            ScenarioConfig::from_toml(&bad),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_toml("id = 3"),
            Err(ConfigError::Toml(_))
        ));
    }

    #[test]
    fn faults_resolve_names() {
        let text = format!("{MINIMAL}\n[[fault]]\nat = 2\nkind = \"marker_duplicate\"\nsubject = \"c1\"\ntarget = \"server\"\n");
        let (_, faults) = ScenarioConfig::from_toml(&text).unwrap().build().unwrap();
        assert_eq!(
            faults,
            vec![FaultSpec {
                at: 2.0,
                kind: FaultKind::MarkerDuplicate(NodeId(0)),
                subject: NodeId(1)
            }]
        );
    }

    #[test]
    fn scan_plan_orders_by_time() {
        let text = format!("{MINIMAL}\n[[scan]]\nnode = \"c1\"\nat = 3\nplacement = \"desk\"\n");
        let plan = ScenarioConfig::from_toml(&text).unwrap().scan_plan();
        assert_eq!(plan.len(), 3);
        assert_eq!(plan[2].placement.as_deref(), Some("desk"));
    }
}
