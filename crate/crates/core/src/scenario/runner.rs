use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::distributions::{Alphanumeric, DistString};
use thiserror::Error;

use super::config::{ConfigError, ScenarioConfig};
use super::report::{collect, ExpectationResult, Ingestion, Names, ScenarioReport};
use crate::backend::{AppState, BackendHandle, CredentialStore, ManualClock, Role, Store, View};
use crate::client::{ApiClient, ClientError, HttpUplink};
use crate::codec::{mac_to_ipv6, MacAddress};
use crate::sim::{to_us, RadioEvent, RoutingTable, SimError, SimNode, Simulation};
use crate::sniffer::{BatchPolicy, PipelineStats, RawCapture, Sniffer, SnifferPipeline};
use crate::verifier::SpoofCase;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("backend failed to start: {0}")]
    Backend(#[from] std::io::Error),
    #[error("backend query failed: {0}")]
    Client(#[from] ClientError),
    #[error("sniffer {id} stopped uploading: {reason}")]
    Sniffer { id: String, reason: String },
    #[error("scenario {0} did not meet its expectations")]
    Failed(String),
}

/// A finished run. The backend stays up until this value is dropped.
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub backend: BackendHandle,
    pub operator: ApiClient,
    pub events: Vec<RadioEvent>,
    pub nodes: Vec<SimNode>,
    pub initial_routes: Option<RoutingTable>,
    pub final_routes: Option<RoutingTable>,
    pub sniffers: BTreeMap<String, PipelineStats>,
    pub names: Names,
    pub elapsed: Duration,
}

fn secret() -> String {
    Alphanumeric.sample_string(&mut rand::thread_rng(), 24)
}

/// Labels: owners by their original MAC, foreign marker MACs as `marker:<node>`.
fn names_for(nodes: &[SimNode], sim: Option<&Simulation>) -> Names {
    let mut names = BTreeMap::new();
    for n in nodes {
        names.insert(n.mac, n.name.clone());
    }
    if let Some(sim) = sim {
        for n in nodes {
            let mac = sim.marker(n.id).map(|m| m.scan()).unwrap_or(n.mac);
            names
                .entry(mac)
                .or_insert_with(|| format!("marker:{}", n.name));
        }
    }
    Names(names)
}

/// Boots a private backend, runs the simulation through the configured
/// sniffers, scans markers, and collects the report.
pub fn run(config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    let started = Instant::now();
    config.validate()?;
    let (sim_config, faults) = config.build()?;

    let operator_secret = secret();
    let mut creds = CredentialStore::new();
    creds
        .add("operator", &operator_secret, Role::Operator)
        .expect("fresh store");
    let mut sniffer_secrets = BTreeMap::new();
    for s in &config.sniffers {
        let pw = secret();
        creds
            .add(&format!("sniffer-{}", s.id), &pw, Role::Sniffer)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        sniffer_secrets.insert(s.id.clone(), pw);
    }
    let clock = Arc::new(ManualClock::new(0));
    let state = AppState::new(Store::new(config.epsilon_us()), creds, clock.clone());
    let backend = BackendHandle::spawn(state, SocketAddr::from((Ipv4Addr::LOCALHOST, 0)))?;
    let operator = ApiClient::new(&backend.url(), "operator", &operator_secret);

    if config.secure {
        for n in sim_config
            .nodes
            .iter()
            .filter(|n| n.role != crate::sim::Role::Malicious)
        {
            if let Some(key) = n.verifying_key() {
                operator.register_key(n.mac, &key, false)?;
            }
        }
    }

    let mut pipelines: Vec<SnifferPipeline> = config
        .sniffers
        .iter()
        .map(|s| {
            let client = ApiClient::new(
                &backend.url(),
                &format!("sniffer-{}", s.id),
                &sniffer_secrets[&s.id],
            );
            SnifferPipeline::spawn(
                Sniffer::new(&s.id, s.skew_us()),
                Box::new(HttpUplink(client)),
                BatchPolicy::default(),
            )
        })
        .collect();

    let nodes = sim_config.nodes.clone();
    let mut events = Vec::new();
    let mut sim = if nodes.is_empty() {
        None
    } else {
        Some(Simulation::new(sim_config.clone())?)
    };
    let initial_routes = sim.as_ref().and_then(|s| s.routing_table().cloned());

    if let Some(sim) = sim.as_mut() {
        for f in faults {
            sim.inject_fault(f)?;
        }
        let radio = sim_config.radio;
        let mut feed = |batch: Vec<RadioEvent>, pipelines: &mut Vec<SnifferPipeline>| {
            for e in &batch {
                let bytes = e.bytes();
                for (cfg, p) in config.sniffers.iter().zip(pipelines.iter_mut()) {
                    let t = e.time();
                    if !cfg.hears(e.origin_position, t) {
                        continue;
                    }
                    let rssi = radio.rssi_at(cfg.position_at(t), e);
                    p.capture(RawCapture {
                        time_us: e.time_us,
                        bytes: bytes.clone(),
                        rssi: Some(rssi),
                    });
                }
            }
            events.extend(batch);
        };
        for scan in config.scan_plan() {
            feed(sim.step(scan.at), &mut pipelines);
            let id = config.node_id(&scan.node)?;
            let mac = sim.marker(id).expect("validated node").scan();
            let placement = scan.placement.clone().unwrap_or_else(|| scan.node.clone());
            clock.set(to_us(scan.at));
            operator.scan_marker(mac, &placement, Some(to_us(scan.at)))?;
        }
        let end = config.duration + config.drain;
        feed(sim.step(end), &mut pipelines);
        clock.set(to_us(end));
    }

    let mut sniffers = BTreeMap::new();
    let mut ingestion = Ingestion {
        transmissions: events.len() as u64,
        ..Default::default()
    };
    for (cfg, p) in config.sniffers.iter().zip(pipelines) {
        let stats = p.finish();
        if let Some(e) = &stats.error {
            return Err(ScenarioError::Sniffer {
                id: cfg.id.clone(),
                reason: e.to_string(),
            });
        }
        ingestion.captured += stats.captured;
        ingestion.admitted += stats.acked.admitted;
        ingestion.duplicate += stats.acked.duplicate;
        ingestion.corrupt += stats.acked.corrupt;
        ingestion.undelivered += stats.undelivered;
        sniffers.insert(cfg.id.clone(), stats);
    }
    {
        let store = backend
            .state()
            .store
            .read()
            .unwrap_or_else(|e| e.into_inner());
        ingestion.stored = store.transmission_count() as u64;
        ingestion.witnesses = store.witness_count() as u64;
    }

    let names = names_for(&nodes, sim.as_ref());
    let mut report = collect(&operator, &config.id, config.seed, &names)?;
    report.ingestion = Some(ingestion);
    report.expectations = check_expectations(config, &report, &nodes, sim.as_ref());
    report.passed = report.expectations.iter().all(|e| e.passed);

    Ok(ScenarioRun {
        report,
        backend,
        operator,
        events,
        nodes,
        initial_routes,
        final_routes: sim.as_ref().and_then(|s| s.routing_table().cloned()),
        sniffers,
        names,
        elapsed: started.elapsed(),
    })
}

/// Ground truth only: every radio event of the scenario, faults applied, no backend.
pub fn simulate(config: &ScenarioConfig) -> Result<Vec<RadioEvent>, ScenarioError> {
    config.validate()?;
    let (sim_config, faults) = config.build()?;
    if sim_config.nodes.is_empty() {
        return Ok(Vec::new());
    }
    let mut sim = Simulation::new(sim_config)?;
    for f in faults {
        sim.inject_fault(f)?;
    }
    Ok(sim.step(config.duration + config.drain))
}

/// Runs a scenario and fails when its expectations are not met.
pub fn run_checked(config: &ScenarioConfig) -> Result<ScenarioReport, ScenarioError> {
    let run = run(config)?;
    if !run.report.passed {
        return Err(ScenarioError::Failed(config.id.clone()));
    }
    Ok(run.report)
}

fn resolve_subject(
    subject: &str,
    nodes: &[SimNode],
    sim: Option<&Simulation>,
) -> Option<MacAddress> {
    match subject.strip_prefix("marker:") {
        Some(name) => {
            let n = nodes.iter().find(|n| n.name == name)?;
            sim?.marker(n.id).map(|m| m.scan())
        }
        None => nodes.iter().find(|n| n.name == subject).map(|n| n.mac),
    }
}

fn check_expectations(
    config: &ScenarioConfig,
    report: &ScenarioReport,
    nodes: &[SimNode],
    sim: Option<&Simulation>,
) -> Vec<ExpectationResult> {
    let ex = &config.expect;
    let mut out = Vec::new();
    let mut push = |check: String, passed: bool, detail: String| {
        out.push(ExpectationResult {
            check,
            passed,
            detail,
        })
    };

    for e in &ex.ip_edges {
        let ip = |name: &str| {
            nodes
                .iter()
                .find(|n| n.name == name)
                .map(|n| mac_to_ipv6(n.mac).to_string())
        };
        let got = match (ip(&e.src), ip(&e.dst)) {
            (Some(s), Some(d)) => report
                .edges
                .ip
                .iter()
                .find(|x| x.src == s && x.dst == d)
                .map_or(0, |x| x.count),
            _ => 0,
        };
        push(
            format!("ip_edge {} -> {}", e.src, e.dst),
            got == e.count,
            format!("expected {}, got {got}", e.count),
        );
    }

    let mut expected_subjects = Vec::new();
    for (subject, case) in &ex.classifications {
        let mac = resolve_subject(subject, nodes, sim);
        expected_subjects.extend(mac);
        let got = mac.and_then(|m| report.classification(m));
        push(
            format!("classification {subject}"),
            got == Some(*case),
            format!(
                "expected {case:?}, got {}",
                got.map_or("nothing".to_string(), |c| format!("{c:?}"))
            ),
        );
    }
    if ex.exclusive_classifications {
        let extra: Vec<String> = report
            .findings()
            .filter(|c| !expected_subjects.contains(&c.subject))
            .map(|c| {
                format!(
                    "{} {:?}",
                    c.name.clone().unwrap_or_else(|| c.subject.to_string()),
                    c.case
                )
            })
            .collect();
        push(
            "no other findings".into(),
            extra.is_empty(),
            format!("unexpected: [{}]", extra.join(", ")),
        );
    }

    for kind in &ex.warnings {
        let present = report.warnings.iter().any(|w| w.kind == *kind);
        push(
            format!("warning {kind:?}"),
            present,
            format!("present: {present}"),
        );
    }

    let ingestion = report.ingestion.clone().unwrap_or_default();
    if let Some(n) = ex.stored_transmissions {
        push(
            "stored transmissions".into(),
            ingestion.stored == n,
            format!("expected {n}, got {}", ingestion.stored),
        );
    }
    if let Some(n) = ex.witnesses {
        push(
            "witnesses".into(),
            ingestion.witnesses == n,
            format!("expected {n}, got {}", ingestion.witnesses),
        );
    }
    out
}

impl ScenarioRun {
    /// Directed MAC-layer links of a routing tree, both directions.
    pub fn tree_links(&self, table: &RoutingTable) -> Vec<(MacAddress, MacAddress)> {
        let mac = |id: crate::sim::NodeId| self.nodes[id.0].mac;
        let mut links: Vec<(MacAddress, MacAddress)> = table
            .links()
            .flat_map(|(c, p)| [(mac(c), mac(p)), (mac(p), mac(c))])
            .collect();
        links.sort();
        links
    }

    pub fn node_named(&self, name: &str) -> Option<&SimNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// MAC-view edges in a window, as (src, dst, count).
    pub fn mac_edges(
        &self,
        window: Option<crate::backend::Window>,
    ) -> Result<Vec<(MacAddress, MacAddress, u64)>, ClientError> {
        Ok(self
            .operator
            .edges(View::Mac, window)?
            .into_iter()
            .filter_map(|e| Some((e.src.parse().ok()?, e.dst.parse().ok()?, e.count)))
            .collect())
    }

    pub fn findings(&self) -> Vec<(String, SpoofCase)> {
        self.report
            .findings()
            .map(|c| {
                (
                    c.name.clone().unwrap_or_else(|| c.subject.to_string()),
                    c.case,
                )
            })
            .collect()
    }
}
