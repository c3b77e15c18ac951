//! Scripted end-to-end runs: simulator, sniffers and a private backend,
//! plus PCAP replay into a running backend.

mod config;
mod replay;
mod report;
mod runner;

pub use config::{
    ConfigError, EdgeExpectation, Expectations, FaultConfig, FaultName, NodeConfig, ScanConfig,
    ScenarioConfig, SnifferConfig, Waypoint,
};
pub use replay::{replay, replay_file, ReplayError, ReplaySummary};
pub use report::{
    collect, ExpectationResult, Ingestion, Names, ReportClassification, ReportEdge, ReportEdges,
    ReportWarning, ScenarioReport,
};
pub use runner::{run, run_checked, simulate, ScenarioError, ScenarioRun};

/// Scenario files shipped with the crate, by id.
pub const BUNDLED: &[(&str, &str)] = &[
    ("testbed6", include_str!("../../scenarios/testbed6.toml")),
    ("line-hops", include_str!("../../scenarios/line-hops.toml")),
    ("dedup", include_str!("../../scenarios/dedup.toml")),
    (
        "node-death",
        include_str!("../../scenarios/node-death.toml"),
    ),
    (
        "spoof-case-1",
        include_str!("../../scenarios/spoof-case-1.toml"),
    ),
    (
        "spoof-case-2",
        include_str!("../../scenarios/spoof-case-2.toml"),
    ),
    (
        "spoof-case-3",
        include_str!("../../scenarios/spoof-case-3.toml"),
    ),
    (
        "spoof-case-4",
        include_str!("../../scenarios/spoof-case-4.toml"),
    ),
    (
        "spoof-case-5",
        include_str!("../../scenarios/spoof-case-5.toml"),
    ),
    ("control", include_str!("../../scenarios/control.toml")),
    ("handheld", include_str!("../../scenarios/handheld.toml")),
];

pub fn bundled(id: &str) -> Option<Result<ScenarioConfig, ConfigError>> {
    BUNDLED
        .iter()
        .find(|(name, _)| *name == id)
        .map(|(_, text)| ScenarioConfig::from_toml(text))
}

/// A bundled scenario id or a path to a TOML file.
pub fn load(name_or_path: &str) -> Result<ScenarioConfig, ConfigError> {
    match bundled(name_or_path) {
        Some(cfg) => cfg,
        None => ScenarioConfig::load(std::path::Path::new(name_or_path)),
    }
}
