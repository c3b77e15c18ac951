use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use wsnscope::backend::{
    parse_credential_pair, AppState, BackendHandle, CredentialStore, Role, Store, SystemClock,
};
use wsnscope::client::{ApiClient, HttpUplink};
use wsnscope::codec::write_pcap;
use wsnscope::scenario::{
    self, collect, replay_file, Names, ScenarioConfig, SnifferConfig, BUNDLED,
};
use wsnscope::sim::events_to_pcap;
use wsnscope::sniffer::{BatchPolicy, RawCapture, Sniffer, SnifferPipeline};

/// Passive monitoring for 6LoWPAN sensor networks.
#[derive(Debug, Parser)]
#[command(name = "wsnscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the backend until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Deduplication window in milliseconds.
        #[arg(long, default_value_t = 5.0)]
        epsilon_ms: f64,
        /// Initial operator account, as user:secret.
        #[arg(long, env = "WSNSCOPE_OPERATOR", hide_env_values = true)]
        operator: String,
    },
    /// Capture from the simulator or a PCAP file and upload to a backend.
    Sniff {
        #[arg(long, value_enum)]
        source: Source,
        /// Capture file, for --source pcap.
        #[arg(long)]
        pcap: Option<PathBuf>,
        /// Scenario driving the simulator, for --source sim.
        #[arg(long, default_value = "testbed6")]
        scenario: String,
        #[arg(long)]
        sniffer_id: String,
        #[command(flatten)]
        remote: Remote,
        /// Clock offset added to every capture timestamp.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        skew_ms: f64,
        /// Replay speed factor for --source pcap; 0 uploads as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
    },
    /// Write the ground-truth radio traffic of a scenario as PCAP.
    Sim {
        /// Bundled scenario id or path to a TOML file.
        scenario: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a scenario end to end and print its report.
    RunScenario {
        /// Bundled scenario id or path to a TOML file.
        scenario: Option<String>,
        /// Also write the report here.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// List bundled scenarios instead.
        #[arg(long)]
        list: bool,
    },
    /// Feed a PCAP file through one sniffer into a running backend.
    Replay {
        pcap: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        #[arg(long, default_value = "replay")]
        sniffer_id: String,
        #[command(flatten)]
        remote: Remote,
    },
    /// Print a report of what a running backend currently knows.
    Report {
        #[command(flatten)]
        remote: Remote,
        /// Label written into the report.
        #[arg(long, default_value = "live")]
        label: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Source {
    Sim,
    Pcap,
}

#[derive(Debug, Args)]
struct Remote {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    backend_url: String,
    /// user:secret
    #[arg(long, env = "WSNSCOPE_CREDENTIALS", hide_env_values = true)]
    credentials: String,
}

impl Remote {
    fn client(&self) -> Result<ApiClient> {
        let (user, secret) = parse_credential_pair(&self.credentials)
            .ok_or_else(|| anyhow!("credentials must look like user:secret"))?;
        Ok(ApiClient::new(&self.backend_url, &user, &secret))
    }
}

fn load(name: &str) -> Result<ScenarioConfig> {
    scenario::load(name).with_context(|| format!("loading scenario {name}"))
}

fn serve(bind: SocketAddr, epsilon_ms: f64, operator: &str) -> Result<()> {
    let (user, secret) = parse_credential_pair(operator)
        .ok_or_else(|| anyhow!("operator must look like user:secret"))?;
    if epsilon_ms.is_nan() || epsilon_ms <= 0.0 {
        bail!("epsilon must be positive");
    }
    let mut creds = CredentialStore::new();
    creds.add(&user, &secret, Role::Operator)?;
    let store = Store::new((epsilon_ms * 1000.0).round() as u64);
    let backend = BackendHandle::spawn(AppState::new(store, creds, Arc::new(SystemClock)), bind)
        .with_context(|| format!("binding {bind}"))?;
    eprintln!("backend listening on {}", backend.url());
    loop {
        std::thread::park();
    }
}

fn sniff_sim(scenario: &str, sniffer: Sniffer, client: ApiClient) -> Result<()> {
    let config = load(scenario)?;
    let (sim_config, _) = config.build()?;
    let placement = config
        .sniffers
        .iter()
        .find(|s| s.id == sniffer.id)
        .cloned()
        .unwrap_or_else(|| SnifferConfig {
            id: sniffer.id.clone(),
            x: 0.0,
            y: 0.0,
            range: None,
            skew_ms: 0.0,
            path: vec![],
        });
    let events = scenario::simulate(&config)?;
    let mut pipeline = SnifferPipeline::spawn(
        sniffer,
        Box::new(HttpUplink(client)),
        BatchPolicy::default(),
    );
    for e in &events {
        let t = e.time();
        if placement.hears(e.origin_position, t) {
            let rssi = sim_config.radio.rssi_at(placement.position_at(t), e);
            pipeline.capture(RawCapture {
                time_us: e.time_us,
                bytes: e.bytes(),
                rssi: Some(rssi),
            });
        }
    }
    let stats = pipeline.finish();
    println!("{}", serde_json::to_string_pretty(&stats)?);
    match stats.error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn replay(pcap: &Path, sniffer: Sniffer, client: ApiClient, speed: f64) -> Result<()> {
    let summary = replay_file(pcap, sniffer, Box::new(HttpUplink(client)), speed)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run_scenario(name: &str, out: Option<&PathBuf>) -> Result<bool> {
    let run = scenario::run(&load(name)?)?;
    let json = run.report.to_canonical_json();
    print!("{json}");
    if let Some(path) = out {
        std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    for e in run.report.expectations.iter().filter(|e| !e.passed) {
        eprintln!("unmet: {} ({})", e.check, e.detail);
    }
    Ok(run.report.passed)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Serve {
            bind,
            epsilon_ms,
            operator,
        } => serve(bind, epsilon_ms, &operator).map(|_| true),
        Command::Sniff {
            source,
            pcap,
            scenario,
            sniffer_id,
            remote,
            skew_ms,
            speed,
        } => {
            let sniffer = Sniffer::new(&sniffer_id, (skew_ms * 1000.0).round() as i64);
            let client = remote.client()?;
            match source {
                Source::Sim => sniff_sim(&scenario, sniffer, client)?,
                Source::Pcap => {
                    let path = pcap.ok_or_else(|| anyhow!("--source pcap needs --pcap"))?;
                    replay(&path, sniffer, client, speed)?
                }
            }
            Ok(true)
        }
        Command::Sim { scenario, out } => {
            let events = scenario::simulate(&load(&scenario)?)?;
            let bytes = write_pcap(&events_to_pcap(&events))?;
            std::fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{} frames written to {}", events.len(), out.display());
            Ok(true)
        }
        Command::RunScenario { list: true, .. } => {
            for (id, _) in BUNDLED {
                println!("{id}");
            }
            Ok(true)
        }
        Command::RunScenario { scenario, out, .. } => {
            let name = scenario.ok_or_else(|| anyhow!("a scenario id or path is required"))?;
            run_scenario(&name, out.as_ref())
        }
        Command::Replay {
            pcap,
            speed,
            sniffer_id,
            remote,
        } => {
            replay(&pcap, Sniffer::new(&sniffer_id, 0), remote.client()?, speed)?;
            Ok(true)
        }
        Command::Report { remote, label } => {
            let report = collect(&remote.client()?, &label, 0, &Names::default())?;
            print!("{}", report.to_canonical_json());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
