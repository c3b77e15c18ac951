//! One line per acceptance criterion. Exits non-zero if any fails.

use std::collections::BTreeSet;
use std::net::Ipv6Addr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wsnscope::backend::{Admission, Store, View, Window, DEFAULT_EPSILON_US};
use wsnscope::codec::{
    decode_datagram, decode_frame, encode_datagram, encode_frame, fcs, ipv6_to_mac, mac_to_ipv6,
    read_pcap, write_pcap, Datagram6LoWPAN, Frame802154, MacAddress, PcapCapture,
};
use wsnscope::scenario::{bundled, run, ScenarioConfig, ScenarioRun};
use wsnscope::sim::{RadioEvent, SimNode};
use wsnscope::sniffer::{extract_hop, upload_record, RawCapture, Sniffer, UploadRecord};
use wsnscope::verifier::{verify_message, KeyRegistry, SignatureStatus, SpoofCase};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn scenario(id: &str) -> ScenarioConfig {
    bundled(id)
        .expect("bundled scenario")
        .expect("valid scenario")
}

fn run_id(id: &str) -> Result<ScenarioRun, String> {
    run(&scenario(id)).map_err(|e| format!("{id}: {e}"))
}

fn ip_count(r: &ScenarioRun, src: &str, dst: &str) -> u64 {
    let ip = |n: &str| mac_to_ipv6(r.node_named(n).unwrap().mac).to_string();
    let (s, d) = (ip(src), ip(dst));
    r.report
        .edges
        .ip
        .iter()
        .find(|e| e.src == s && e.dst == d)
        .map_or(0, |e| e.count)
}

fn testbed() -> Outcome {
    let started = Instant::now();
    let r = run_id("testbed6")?;
    let elapsed = started.elapsed();
    let mut bad = Vec::new();
    for c in ["c1", "c2", "c3", "c4", "c5"] {
        let (req, rep) = (ip_count(&r, c, "server"), ip_count(&r, "server", c));
        if (req, rep) != (12, 12) {
            bad.push(format!("{c}: {req}/{rep}"));
        }
    }
    if r.report.edges.ip.len() != 10 {
        bad.push(format!("{} ip edges", r.report.edges.ip.len()));
    }
    let detail = format!(
        "10 edges at 12/12, {:.2} s wall-clock",
        elapsed.as_secs_f64()
    );
    match (bad.is_empty(), elapsed.as_secs_f64() < 5.0) {
        (true, true) => Ok(detail),
        _ => Err(format!("{detail}; mismatches: {bad:?}")),
    }
}

fn hop_view() -> Outcome {
    let r = run_id("line-hops")?;
    let tree = r.initial_routes.clone().ok_or("no routing tree")?;
    let expected: BTreeSet<(MacAddress, MacAddress)> = r.tree_links(&tree).into_iter().collect();
    let edges = r.mac_edges(None).map_err(|e| e.to_string())?;
    let got: BTreeSet<(MacAddress, MacAddress)> = edges.iter().map(|(s, d, _)| (*s, *d)).collect();
    let total: u64 = edges.iter().map(|e| e.2).sum();
    let far = r.node_named("far").unwrap().id;
    let path_len = tree.hops(far).ok_or("far node unrouted")? as u64;
    let datagrams = ip_count(&r, "far", "server") + ip_count(&r, "server", "far");
    let oracle = path_len * datagrams;
    let detail = format!(
        "{} links, {total} hops = {path_len} x {datagrams}",
        got.len()
    );
    if got == expected && total == oracle && r.events.len() as u64 == oracle {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; expected {} links, oracle {oracle}",
            expected.len()
        ))
    }
}

fn records_for(events: &[RadioEvent], sniffers: &[Sniffer]) -> Vec<(String, UploadRecord)> {
    let mut out = Vec::new();
    for s in sniffers {
        for e in events {
            let p = s.capture(RawCapture {
                time_us: e.time_us,
                bytes: e.bytes(),
                rssi: None,
            });
            out.push((s.id.clone(), upload_record(&p)));
        }
    }
    out
}

fn store_state(records: &[(String, UploadRecord)]) -> String {
    let mut store = Store::new(DEFAULT_EPSILON_US);
    for (id, r) in records {
        store.admit(id, r);
    }
    let edges = (
        store.edges(View::Ip, Window::ALL),
        store.edges(View::Mac, Window::ALL),
    );
    serde_json::to_string(&(store.transmissions(), edges)).expect("serializable")
}

fn dedup() -> Outcome {
    let r = run_id("dedup")?;
    let ing = r.report.ingestion.clone().unwrap_or_default();
    let counts = format!(
        "{} transmissions, {} stored, {} witnesses",
        ing.transmissions, ing.stored, ing.witnesses
    );
    if (ing.transmissions, ing.stored, ing.witnesses) != (500, 500, 1000) {
        return Err(counts);
    }
    let sniffers = [Sniffer::new("east", 1_000), Sniffer::new("west", -1_000)];
    let mut records = records_for(&r.events, &sniffers);
    let reference = store_state(&records);
    let mut rng = ChaCha8Rng::seed_from_u64(551);
    for i in 0..100 {
        records.shuffle(&mut rng);
        if store_state(&records) != reference {
            return Err(format!("{counts}; shuffle {i} diverged"));
        }
    }
    Ok(format!("{counts}; 100 shuffled orders identical"))
}

fn epsilon_boundary() -> Outcome {
    let r = run_id("control").map(|r| r.events)?;
    let s = Sniffer::new("a", 0);
    let base = upload_record(&s.capture(RawCapture {
        time_us: r[0].time_us,
        bytes: r[0].bytes(),
        rssi: None,
    }));
    let eps = DEFAULT_EPSILON_US;
    let mut results = Vec::new();
    for (delta, expected) in [
        (eps as i64 - 1, Admission::Duplicate),
        (eps as i64 + 1, Admission::Admitted),
    ] {
        for sign in [1i64, -1] {
            let mut store = Store::new(eps);
            store.admit("a", &base);
            let mut other = base.clone();
            other.ts = (base.ts as i64 + sign * delta) as u64;
            let got = store.admit("b", &other);
            results.push((sign * delta, got, got == expected));
        }
    }
    let detail = results
        .iter()
        .map(|(d, a, _)| format!("{d:+} us: {a:?}"))
        .collect::<Vec<_>>()
        .join(", ");
    if results.iter().all(|r| r.2) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spoof_matrix() -> Outcome {
    let cases = [
        ("spoof-case-1", "c1", SpoofCase::CopiedIdChatty),
        ("spoof-case-2", "c1", SpoofCase::CopiedIdSilent),
        ("spoof-case-3", "c1", SpoofCase::CopiedMarkerNewAddr),
        ("spoof-case-4", "c1", SpoofCase::ForgedMarkerCopiedAddr),
        ("spoof-case-5", "marker:m", SpoofCase::ForgedBoth),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (id, subject, case) in cases {
        let r = run_id(id)?;
        let findings = r.findings();
        let pass = findings == vec![(subject.to_string(), case)];
        ok &= pass;
        parts.push(format!("{id} {findings:?}"));
    }
    let control = run_id("control")?.findings();
    ok &= control.is_empty();
    parts.push(format!("control {} findings", control.len()));
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn registry(nodes: &[SimNode]) -> KeyRegistry {
    let mut reg = KeyRegistry::new();
    for n in nodes {
        if let Some(k) = n.verifying_key() {
            reg.register(n.mac, k, false).expect("distinct nodes");
        }
    }
    reg
}

fn status_of(bytes: &[u8], reg: &KeyRegistry) -> Result<SignatureStatus, String> {
    let p = Sniffer::new("s", 0).capture(RawCapture {
        time_us: 1,
        bytes: bytes.to_vec(),
        rssi: None,
    });
    let hop = extract_hop(&p).map_err(|e| e.to_string())?;
    let d = p.decoded.as_ref().map_err(|e| e.to_string())?;
    Ok(verify_message(&hop, &d.payload, reg))
}

fn signature_sensitivity() -> Outcome {
    let r = run_id("control")?;
    let reg = registry(&r.nodes);
    let frames: Vec<Vec<u8>> = r.events.iter().map(RadioEvent::bytes).collect();
    // Tail of every signed frame: body (7) | length (2) | signature (64) | FCS (2).
    const TAIL: usize = 7 + 2 + 64 + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(554);
    let mut invalid = 0;
    for _ in 0..1000 {
        let mut f = frames.choose(&mut rng).unwrap().clone();
        if status_of(&f, &reg)? != SignatureStatus::Valid {
            return Err("unmodified frame does not verify".into());
        }
        let start = f.len() - TAIL;
        let mut at = rng.gen_range(0..7 + 64);
        if at >= 7 {
            at += 2;
        }
        f[start + at] ^= 1 << rng.gen_range(0..8);
        let n = f.len() - 2;
        let crc = fcs(&f[..n]);
        f[n..].copy_from_slice(&crc.to_le_bytes());
        if status_of(&f, &reg)? == SignatureStatus::Invalid {
            invalid += 1;
        }
    }
    let detail = format!("{invalid}/1000 invalid");
    if invalid == 1000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn node_death() -> Outcome {
    let r = run_id("node-death")?;
    let a = r.node_named("a").unwrap().mac.to_string();
    let snaps = r
        .operator
        .timeline(View::Mac, 10_000_000, Some(0))
        .map_err(|e| e.to_string())?;
    let touches =
        |s: &wsnscope::backend::Snapshot| s.edges.iter().any(|e| e.src == a || e.dst == a);
    let before: Vec<bool> = snaps
        .iter()
        .filter(|s| s.t1 <= 60_000_000 && !s.edges.is_empty())
        .map(touches)
        .collect();
    let after: Vec<bool> = snaps
        .iter()
        .filter(|s| s.t0 >= 60_000_000)
        .map(touches)
        .collect();
    let tree = r.final_routes.clone().ok_or("no tree after the fault")?;
    let expected: BTreeSet<(MacAddress, MacAddress)> = r.tree_links(&tree).into_iter().collect();
    let window = Window::new(60_000_000, u64::MAX).map_err(|e| e.to_string())?;
    let got: BTreeSet<(MacAddress, MacAddress)> = r
        .mac_edges(Some(window))
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(s, d, _)| (s, d))
        .collect();
    let c = r.node_named("c").unwrap().id;
    let rerouted = r.initial_routes.as_ref().and_then(|t| t.parent.get(&c)) != tree.parent.get(&c);
    let detail = format!(
        "{}/{} pre-fault snapshots with a, {}/{} post-fault without, post-fault links {} vs tree {}, c re-routed: {rerouted}",
        before.iter().filter(|x| **x).count(),
        before.len(),
        after.iter().filter(|x| !**x).count(),
        after.len(),
        got.len(),
        expected.len()
    );
    let ok = !before.is_empty()
        && before.iter().all(|x| *x)
        && !after.is_empty()
        && after.iter().all(|x| !x);
    if ok && got == expected && rerouted {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_mac(rng: &mut ChaCha8Rng) -> MacAddress {
    MacAddress(rng.gen())
}

fn random_ip(rng: &mut ChaCha8Rng, link: MacAddress) -> Ipv6Addr {
    match rng.gen_range(0..3) {
        0 => mac_to_ipv6(link),
        1 => mac_to_ipv6(random_mac(rng)),
        _ => Ipv6Addr::from(rng.gen::<u128>() | 1 << 127),
    }
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(556);
    let mut cap = PcapCapture::default();
    let mut ts = 0u64;
    for i in 0..1000 {
        let (src, dst) = (random_mac(&mut rng), random_mac(&mut rng));
        let d = Datagram6LoWPAN {
            src_ip: random_ip(&mut rng, src),
            dst_ip: random_ip(&mut rng, dst),
            src_port: rng.gen_range(1..=u16::MAX),
            dst_port: rng.gen_range(1..=u16::MAX),
            hop_limit: rng.gen(),
            payload: (0..rng.gen_range(0..=55)).map(|_| rng.gen()).collect(),
        };
        let lowpan = encode_datagram(&d, src, dst).map_err(|e| format!("frame {i}: {e}"))?;
        let frame = Frame802154::new(rng.gen(), src, dst, rng.gen(), lowpan)
            .map_err(|e| format!("frame {i}: {e}"))?;
        let bytes = encode_frame(&frame).map_err(|e| e.to_string())?;
        let back = decode_frame(&bytes).map_err(|e| format!("frame {i}: {e}"))?;
        if back != frame || encode_frame(&back).ok().as_ref() != Some(&bytes) {
            return Err(format!("frame {i} changed in a round trip"));
        }
        if decode_datagram(&back.payload, back.src_mac, back.dst_mac)
            .ok()
            .as_ref()
            != Some(&d)
        {
            return Err(format!("datagram {i} changed in a round trip"));
        }
        ts += rng.gen_range(0..5_000_000);
        cap.push(ts, bytes);
    }
    let file = write_pcap(&cap).map_err(|e| e.to_string())?;
    let back = read_pcap(&file).map_err(|e| e.to_string())?;
    if back != cap || write_pcap(&back).ok().as_ref() != Some(&file) {
        return Err("pcap changed in a round trip".into());
    }

    let macs: Vec<MacAddress> = (0..1000).map(|_| random_mac(&mut rng)).collect();
    let ips: BTreeSet<Ipv6Addr> = macs.iter().map(|m| mac_to_ipv6(*m)).collect();
    let distinct: BTreeSet<MacAddress> = macs.iter().copied().collect();
    let inverse = macs
        .iter()
        .all(|m| ipv6_to_mac(mac_to_ipv6(*m)).ok() == Some(*m));
    let forward = ips
        .iter()
        .all(|ip| ipv6_to_mac(*ip).map(mac_to_ipv6).ok() == Some(*ip));
    if !(inverse && forward && ips.len() == distinct.len()) {
        return Err("MAC/IPv6 mapping is not a bijection".into());
    }
    Ok(format!(
        "1000 frames and a {}-byte pcap byte-exact; 1000 addresses bijective",
        file.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("testbed reproduction", testbed),
        ("hop view", hop_view),
        ("dedup exactness", dedup),
        ("epsilon boundary", epsilon_boundary),
        ("spoofing matrix", spoof_matrix),
        ("signature sensitivity", signature_sensitivity),
        ("node-death timeline", node_death),
        ("codec round-trips", codec),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
