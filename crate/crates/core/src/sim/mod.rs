//! Deterministic discrete-event simulator of a 6LoWPAN mesh running the UDP
//! echo workload, with fault and attack injection.
//!
//! Time is kept in integer microseconds. Every client sends a request to the
//! server each `tx_interval` (first send one interval after start); the
//! server answers with the same counter. Datagrams are forwarded hop by hop
//! along the current routing tree, one [`RadioEvent`] per transmission.

mod radio;
mod routing;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::net::Ipv6Addr;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::payload::{append_trailer, split_trailer, EchoKind, EchoMessage};
use crate::codec::{
    encode_datagram, encode_frame, mac_to_ipv6, CodecError, Datagram6LoWPAN, Frame802154,
    MacAddress, PcapCapture,
};
use crate::verifier::signed_message;

pub use radio::RadioModel;
pub use routing::{build_routes, Partitioned, RoutingTable};

pub const CLIENT_PORT: u16 = 8765;
pub const SERVER_PORT: u16 = 5678;
pub const INITIAL_HOP_LIMIT: u8 = 64;
pub const DEFAULT_PAN_ID: u16 = 0xabcd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Position, f: f64) -> Position {
        Position::new(
            self.x + (other.x - self.x) * f,
            self.y + (other.y - self.y) * f,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Server,
    Malicious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Firmware {
    EchoClient,
    EchoServer,
    Silent,
}

/// The optical marker stuck on a node. Scanning it always yields the embedded MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkerToken {
    pub embedded_mac: MacAddress,
}

impl MarkerToken {
    pub fn scan(&self) -> MacAddress {
        self.embedded_mac
    }
}

#[derive(Debug, Clone)]
pub struct SimNode {
    pub id: NodeId,
    pub name: String,
    pub mac: MacAddress,
    pub position: Position,
    pub role: Role,
    pub firmware: Firmware,
    /// Seconds between client requests.
    pub tx_interval: f64,
    pub signing_key: Option<SigningKey>,
    pub marker: MarkerToken,
}

impl SimNode {
    /// Node with a MAC derived from its id, default firmware for its role,
    /// a 10 s interval, no key, and a marker carrying its own MAC.
    pub fn new(id: NodeId, name: String, role: Role, position: Position) -> Self {
        let n = (id.0 as u32 + 1).to_be_bytes();
        let mac = MacAddress([0x00, 0x12, 0x4b, 0x00, n[0], n[1], n[2], n[3]]);
        let firmware = match role {
            Role::Client => Firmware::EchoClient,
            Role::Server => Firmware::EchoServer,
            Role::Malicious => Firmware::Silent,
        };
        SimNode {
            id,
            name,
            mac,
            position,
            role,
            firmware,
            tx_interval: 10.0,
            signing_key: None,
            marker: MarkerToken { embedded_mac: mac },
        }
    }

    pub fn ip(&self) -> Ipv6Addr {
        mac_to_ipv6(self.mac)
    }

    pub fn verifying_key(&self) -> Option<VerifyingKey> {
        self.signing_key.as_ref().map(|k| k.verifying_key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "snake_case")]
pub enum FaultKind {
    NodeDeath,
    /// The subject's marker is replaced by a copy of the target's marker.
    MarkerDuplicate(NodeId),
    /// The subject's marker is replaced by one embedding a MAC no node owns.
    MarkerForge,
    /// The subject transmits with the target's MAC and IPv6 address.
    AddressCopy(NodeId),
    /// The subject stops originating traffic but keeps forwarding.
    Silence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// Simulation time in seconds.
    pub at: f64,
    pub kind: FaultKind,
    pub subject: NodeId,
}

/// One over-the-air transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioEvent {
    pub time_us: u64,
    pub frame: Frame802154,
    pub origin_position: Position,
    /// Ground truth, not visible to sniffers.
    pub transmitter: NodeId,
    pub receiver: NodeId,
}

impl RadioEvent {
    pub fn time(&self) -> f64 {
        self.time_us as f64 / 1e6
    }

    pub fn bytes(&self) -> Vec<u8> {
        encode_frame(&self.frame).expect("simulator frames fit the MTU")
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation needs exactly one server, found {0}")]
    ServerCount(usize),
    #[error("client {0:?} has a non-positive transmit interval")]
    BadInterval(NodeId),
    #[error("node ids must equal their index, {0:?} is out of place")]
    NodeOrder(NodeId),
    #[error("unknown node {0:?}")]
    UnknownSubject(NodeId),
    #[error("fault time {0} is negative")]
    BadFaultTime(f64),
    #[error("node {0:?} has no signing key")]
    NoKey(NodeId),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub nodes: Vec<SimNode>,
    pub link_range: f64,
    pub seed: u64,
    pub pan_id: u16,
    pub hop_delay_us: u64,
    /// Independent per-hop loss probability.
    pub loss: f64,
    pub radio: RadioModel,
    /// Clients stop originating requests after this time (seconds).
    pub workload_end: Option<f64>,
}

impl SimConfig {
    pub fn new(nodes: Vec<SimNode>, link_range: f64) -> Self {
        SimConfig {
            nodes,
            link_range,
            seed: 0,
            pan_id: DEFAULT_PAN_ID,
            hop_delay_us: 10_000,
            loss: 0.0,
            radio: RadioModel::default(),
            workload_end: None,
        }
    }
}

/// Deterministic 32-byte signing key for a node.
pub fn derive_signing_key(seed: u64, node: NodeId) -> SigningKey {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_0000_0000 ^ (node.0 as u64).rotate_left(32));
    SigningKey::from_bytes(&rng.gen())
}

/// Signs `(src_ip, dst_ip, body)` with the node's key.
pub fn sign_payload(
    node: &SimNode,
    src_ip: &Ipv6Addr,
    dst_ip: &Ipv6Addr,
    body: &[u8],
) -> Result<[u8; 64], SimError> {
    let key = node.signing_key.as_ref().ok_or(SimError::NoKey(node.id))?;
    Ok(key.sign(&signed_message(src_ip, dst_ip, body)).to_bytes())
}

pub fn to_us(seconds: f64) -> u64 {
    (seconds * 1e6).round().max(0.0) as u64
}

#[derive(Debug, Clone)]
struct InFlight {
    datagram: Datagram6LoWPAN,
    origin: NodeId,
    target: NodeId,
    holder: NodeId,
}

#[derive(Debug, Clone)]
enum Action {
    Send(NodeId),
    Hop(InFlight),
    Fault(FaultSpec),
}

#[derive(Debug)]
struct Scheduled {
    at: u64,
    /// Faults sort before traffic scheduled for the same instant.
    class: u8,
    order: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.class, self.order) == (other.at, other.class, other.order)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.class, self.order).cmp(&(other.at, other.class, other.order))
    }
}

pub struct Simulation {
    config: SimConfig,
    now_us: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    order: u64,
    rng: ChaCha8Rng,
    alive: Vec<bool>,
    silenced: Vec<bool>,
    /// MAC each node puts in frames it transmits and in datagrams it originates.
    tx_mac: Vec<MacAddress>,
    markers: Vec<MarkerToken>,
    mac_seq: Vec<u8>,
    app_seq: Vec<u32>,
    routes: Result<RoutingTable, Partitioned>,
    server: NodeId,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let servers: Vec<&SimNode> = config
            .nodes
            .iter()
            .filter(|n| n.role == Role::Server)
            .collect();
        if servers.len() != 1 {
            return Err(SimError::ServerCount(servers.len()));
        }
        let server = servers[0].id;
        for (i, n) in config.nodes.iter().enumerate() {
            if n.id != NodeId(i) {
                return Err(SimError::NodeOrder(n.id));
            }
            if n.firmware == Firmware::EchoClient
                && (n.tx_interval.is_nan() || n.tx_interval <= 0.0)
            {
                return Err(SimError::BadInterval(n.id));
            }
        }
        let count = config.nodes.len();
        let routes = build_routes(&config.nodes, config.link_range);
        let mut sim = Simulation {
            now_us: 0,
            queue: BinaryHeap::new(),
            order: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            alive: vec![true; count],
            silenced: vec![false; count],
            tx_mac: config.nodes.iter().map(|n| n.mac).collect(),
            markers: config.nodes.iter().map(|n| n.marker).collect(),
            mac_seq: vec![0; count],
            app_seq: vec![0; count],
            routes,
            server,
            config,
        };
        for i in 0..count {
            if sim.config.nodes[i].firmware == Firmware::EchoClient {
                let first = to_us(sim.config.nodes[i].tx_interval);
                sim.schedule(first, Action::Send(NodeId(i)));
            }
        }
        Ok(sim)
    }

    fn schedule(&mut self, at: u64, action: Action) {
        self.order += 1;
        let class = u8::from(!matches!(action, Action::Fault(_)));
        self.queue.push(Reverse(Scheduled {
            at,
            class,
            order: self.order,
            action,
        }));
    }

    pub fn now(&self) -> f64 {
        self.now_us as f64 / 1e6
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.config.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&SimNode> {
        self.config.nodes.get(id.0)
    }

    pub fn node_by_name(&self, name: &str) -> Option<&SimNode> {
        self.config.nodes.iter().find(|n| n.name == name)
    }

    pub fn server(&self) -> NodeId {
        self.server
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive.get(id.0).copied().unwrap_or(false)
    }

    pub fn marker(&self, id: NodeId) -> Option<MarkerToken> {
        self.markers.get(id.0).copied()
    }

    pub fn transmit_mac(&self, id: NodeId) -> Option<MacAddress> {
        self.tx_mac.get(id.0).copied()
    }

    /// Current routing state; `Err` carries the partial tree and isolated nodes.
    pub fn routes(&self) -> &Result<RoutingTable, Partitioned> {
        &self.routes
    }

    pub fn routing_table(&self) -> Option<&RoutingTable> {
        match &self.routes {
            Ok(t) => Some(t),
            Err(p) => p.partial.as_ref(),
        }
    }

    /// Schedules a fault at `spec.at` (or immediately if that time has passed).
    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<(), SimError> {
        let count = self.config.nodes.len();
        if spec.subject.0 >= count {
            return Err(SimError::UnknownSubject(spec.subject));
        }
        if let FaultKind::MarkerDuplicate(t) | FaultKind::AddressCopy(t) = spec.kind {
            if t.0 >= count {
                return Err(SimError::UnknownSubject(t));
            }
        }
        if spec.at.is_nan() || spec.at < 0.0 {
            return Err(SimError::BadFaultTime(spec.at));
        }
        let at = to_us(spec.at).max(self.now_us);
        self.schedule(at, Action::Fault(spec));
        Ok(())
    }

    fn apply_fault(&mut self, spec: FaultSpec) {
        let s = spec.subject.0;
        match spec.kind {
            FaultKind::NodeDeath => {
                self.alive[s] = false;
                self.rebuild_routes();
            }
            FaultKind::MarkerDuplicate(target) => {
                self.markers[s] = MarkerToken {
                    embedded_mac: self.config.nodes[target.0].mac,
                };
            }
            FaultKind::MarkerForge => {
                let mut mac = [0x00, 0x12, 0x4b, 0xf0, 0, 0, 0, 0];
                self.rng.fill(&mut mac[4..]);
                self.markers[s] = MarkerToken {
                    embedded_mac: MacAddress(mac),
                };
            }
            FaultKind::AddressCopy(target) => {
                self.tx_mac[s] = self.config.nodes[target.0].mac;
            }
            FaultKind::Silence => self.silenced[s] = true,
        }
    }

    fn rebuild_routes(&mut self) {
        let live = self.config.nodes.iter().filter(|n| self.alive[n.id.0]);
        self.routes = build_routes(live, self.config.link_range);
    }

    /// Runs the event loop up to and including `until` seconds.
    pub fn step(&mut self, until: f64) -> Vec<RadioEvent> {
        let until_us = to_us(until).max(self.now_us);
        let mut out = Vec::new();
        while let Some(Reverse(next)) = self.queue.peek() {
            if next.at > until_us {
                break;
            }
            let Reverse(next) = self.queue.pop().expect("peeked");
            self.now_us = next.at;
            match next.action {
                Action::Send(node) => self.originate(node, &mut out),
                Action::Hop(flight) => self.forward(flight, &mut out),
                Action::Fault(spec) => self.apply_fault(spec),
            }
        }
        self.now_us = until_us;
        out
    }

    fn originate(&mut self, node: NodeId, out: &mut Vec<RadioEvent>) {
        let interval = to_us(self.config.nodes[node.0].tx_interval);
        let next = self.now_us + interval;
        let within_workload = |t: u64| self.config.workload_end.is_none_or(|end| t <= to_us(end));
        if within_workload(next) {
            self.schedule(next, Action::Send(node));
        }
        if !self.alive[node.0] || self.silenced[node.0] {
            return;
        }
        self.app_seq[node.0] += 1;
        let msg = EchoMessage {
            kind: EchoKind::Request,
            seq: self.app_seq[node.0],
        };
        let src_ip = mac_to_ipv6(self.tx_mac[node.0]);
        let dst_ip = self.config.nodes[self.server.0].ip();
        let datagram = self.build_datagram(node, src_ip, dst_ip, CLIENT_PORT, SERVER_PORT, &msg);
        let flight = InFlight {
            datagram,
            origin: node,
            target: self.server,
            holder: node,
        };
        self.forward(flight, out);
    }

    fn build_datagram(
        &self,
        signer: NodeId,
        src_ip: Ipv6Addr,
        dst_ip: Ipv6Addr,
        src_port: u16,
        dst_port: u16,
        msg: &EchoMessage,
    ) -> Datagram6LoWPAN {
        let body = msg.encode();
        let payload = match sign_payload(&self.config.nodes[signer.0], &src_ip, &dst_ip, &body) {
            Ok(sig) => append_trailer(&body, &sig),
            Err(_) => body,
        };
        Datagram6LoWPAN {
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            hop_limit: INITIAL_HOP_LIMIT,
            payload,
        }
    }

    fn next_hop(&self, holder: NodeId, target: NodeId) -> Option<NodeId> {
        let table = self.routing_table()?;
        if !table.contains(holder) {
            return None;
        }
        if target == table.root {
            table.parent.get(&holder).copied()
        } else {
            table.next_hop_down(holder, target)
        }
    }

    /// Live node answering for `ip`; legitimate routers win over impostors.
    fn resolve(&self, ip: &Ipv6Addr) -> Option<NodeId> {
        let table = self.routing_table()?;
        self.config
            .nodes
            .iter()
            .filter(|n| {
                self.alive[n.id.0]
                    && table.contains(n.id)
                    && mac_to_ipv6(self.tx_mac[n.id.0]) == *ip
            })
            .min_by_key(|n| (n.role == Role::Malicious, n.id))
            .map(|n| n.id)
    }

    fn forward(&mut self, mut flight: InFlight, out: &mut Vec<RadioEvent>) {
        let holder = flight.holder;
        if !self.alive[holder.0] {
            return;
        }
        let Some(next) = self.next_hop(holder, flight.target) else {
            return;
        };
        if holder != flight.origin {
            flight.datagram.hop_limit = flight.datagram.hop_limit.saturating_sub(1);
            if flight.datagram.hop_limit == 0 {
                return;
            }
        }
        let src_mac = self.tx_mac[holder.0];
        let dst_mac = self.tx_mac[next.0];
        let payload = encode_datagram(&flight.datagram, src_mac, dst_mac)
            .expect("simulator datagrams are valid");
        let seq = self.mac_seq[holder.0];
        self.mac_seq[holder.0] = seq.wrapping_add(1);
        let frame = Frame802154::new(seq, src_mac, dst_mac, self.config.pan_id, payload)
            .expect("simulator payloads fit the frame budget");
        out.push(RadioEvent {
            time_us: self.now_us,
            frame,
            origin_position: self.config.nodes[holder.0].position,
            transmitter: holder,
            receiver: next,
        });

        if !self.alive[next.0]
            || (self.config.loss > 0.0 && self.rng.gen::<f64>() < self.config.loss)
        {
            return;
        }
        let at = self.now_us + self.config.hop_delay_us;
        if next != flight.target {
            flight.holder = next;
            self.schedule(at, Action::Hop(flight));
            return;
        }
        if next == self.server {
            self.reply(flight, at);
        }
    }

    fn reply(&mut self, request: InFlight, at: u64) {
        let (body, _) = split_trailer(&request.datagram.payload);
        let Some(msg) = EchoMessage::decode(body) else {
            return;
        };
        let Some(dest) = self.resolve(&request.datagram.src_ip) else {
            return;
        };
        let reply = EchoMessage {
            kind: EchoKind::Reply,
            seq: msg.seq,
        };
        let src_ip = self.config.nodes[self.server.0].ip();
        let datagram = self.build_datagram(
            self.server,
            src_ip,
            request.datagram.src_ip,
            SERVER_PORT,
            CLIENT_PORT,
            &reply,
        );
        let flight = InFlight {
            datagram,
            origin: self.server,
            target: dest,
            holder: self.server,
        };
        self.schedule(at, Action::Hop(flight));
    }
}

/// Ground-truth capture of an event stream, timestamped with simulation time.
pub fn events_to_pcap(events: &[RadioEvent]) -> PcapCapture {
    let mut cap = PcapCapture::default();
    for e in events {
        cap.push(e.time_us, e.bytes());
    }
    cap
}
