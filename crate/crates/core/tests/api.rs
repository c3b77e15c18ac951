use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;

use wsnscope::backend::{
    allowed, basic_header, AppState, BackendHandle, CredentialStore, Endpoint, ErrorBody,
    ManualClock, NodePatch, Role, Store, View, Window,
};
use wsnscope::client::{ApiClient, ClientError};
use wsnscope::codec::MacAddress;
use wsnscope::sim::{
    derive_signing_key, NodeId, Position, Role as NodeRole, SimConfig, SimNode, Simulation,
};
use wsnscope::sniffer::{upload_record, RawCapture, Sniffer, UploadBatch};

const USERS: [(&str, Role); 3] = [
    ("op", Role::Operator),
    ("sn", Role::Sniffer),
    ("tr", Role::Trainee),
];

fn start() -> BackendHandle {
    let mut creds = CredentialStore::new();
    for (u, r) in USERS {
        creds.add(u, &format!("{u}-secret"), r).unwrap();
    }
    let state = AppState::new(Store::new(5_000), creds, Arc::new(ManualClock::new(1_000)));
    BackendHandle::spawn(state, SocketAddr::from((Ipv4Addr::LOCALHOST, 0))).unwrap()
}

fn client(b: &BackendHandle, user: &str) -> ApiClient {
    ApiClient::new(&b.url(), user, &format!("{user}-secret"))
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

fn raw(
    b: &BackendHandle,
    method: &str,
    path: &str,
    auth: Option<&str>,
    body: &str,
) -> (u16, String) {
    let url = format!("{}{path}", b.url());
    let a = agent();
    let resp = match method {
        "GET" => {
            let mut r = a.get(&url);
            if let Some(h) = auth {
                r = r.header("Authorization", h);
            }
            r.call()
        }
        "DELETE" => {
            let mut r = a.delete(&url);
            if let Some(h) = auth {
                r = r.header("Authorization", h);
            }
            r.call()
        }
        "POST" | "PATCH" => {
            let mut r = if method == "POST" {
                a.post(&url)
            } else {
                a.patch(&url)
            };
            r = r.header("Content-Type", "application/json");
            if let Some(h) = auth {
                r = r.header("Authorization", h);
            }
            r.send(body)
        }
        other => panic!("unexpected method {other}"),
    };
    let mut resp = resp.expect("transport");
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap_or_default())
}

const A: &str = "00:12:4b:00:00:00:00:02";

fn concrete(e: Endpoint) -> (String, String) {
    let path = e.path().replace("{mac}", A).replace("{username}", "nobody");
    let path = match e {
        Endpoint::GetTimeline => format!("{path}?step=1000000"),
        Endpoint::GetRssi => format!("{path}?mac={A}"),
        _ => path,
    };
    let body = match e {
        Endpoint::PostPackets => r#"{"sniffer_id":"s","records":[]}"#.to_string(),
        Endpoint::PostNodes => format!(r#"{{"mac":"{A}","placement":"p"}}"#),
        Endpoint::PatchNode => r#"{"name":"n","location":null}"#.to_string(),
        Endpoint::ResolveNode => r#"{"placement":"p"}"#.to_string(),
        Endpoint::PostKeys => format!(
            r#"{{"mac":"{A}","public_key":"{}"}}"#,
            hex::encode([0u8; 31]) + "00"
        ),
        Endpoint::PostCredentials => {
            r#"{"username":"fresh","secret":"s","role":"trainee"}"#.to_string()
        }
        _ => String::new(),
    };
    (path, body)
}

#[test]
fn access_matrix_is_total() {
    let b = start();
    let mut rows = Vec::new();
    for e in Endpoint::ALL {
        let (path, body) = concrete(e);
        for (u, role) in USERS {
            let (status, text) = raw(
                &b,
                e.method(),
                &path,
                Some(&basic_header(u, &format!("{u}-secret"))),
                &body,
            );
            assert_ne!(status, 401, "{e:?} as {u}");
            if allowed(e, role) {
                assert_ne!(status, 403, "{e:?} as {u}: {text}");
            } else {
                assert_eq!(status, 403, "{e:?} as {u}: {text}");
                let err: ErrorBody = serde_json::from_str(&text).unwrap();
                assert_eq!(err.error, "forbidden");
            }
            rows.push((e, role, status));
        }
        let (status, _) = raw(&b, e.method(), &path, None, &body);
        assert_eq!(status, 401, "{e:?} without credentials");
        let (status, _) = raw(
            &b,
            e.method(),
            &path,
            Some(&basic_header("op", "wrong")),
            &body,
        );
        assert_eq!(status, 401, "{e:?} with a wrong secret");
    }
    assert_eq!(rows.len(), 14 * 3);
}

#[test]
fn roles_follow_the_matrix() {
    for e in Endpoint::ALL {
        assert!(allowed(e, Role::Operator));
        assert_eq!(allowed(e, Role::Sniffer), e == Endpoint::PostPackets);
        assert_eq!(allowed(e, Role::Trainee), e.method() == "GET");
    }
}

#[test]
fn revoked_credential_is_refused_immediately() {
    let b = start();
    let op = client(&b, "op");
    op.add_credential("field", "pw", Role::Sniffer).unwrap();
    let field = ApiClient::new(&b.url(), "field", "pw");
    let empty = UploadBatch {
        sniffer_id: "field".into(),
        records: vec![],
    };
    field.upload(&empty).unwrap();
    op.revoke_credential("field").unwrap();
    assert!(matches!(
        field.upload(&empty),
        Err(ClientError::Unauthorized(_))
    ));
    assert!(matches!(
        op.revoke_credential("ghost"),
        Err(ClientError::NotFound(_))
    ));
    assert!(matches!(
        op.add_credential("op", "x", Role::Trainee),
        Err(ClientError::Conflict(_))
    ));
}

#[test]
fn duplicate_marker_locks_until_resolved() {
    let b = start();
    let op = client(&b, "op");
    let mac: MacAddress = A.parse().unwrap();
    let first = op.scan_marker(mac, "desk", Some(10)).unwrap();
    assert!(first.warning.is_none());
    let patch = NodePatch {
        name: Some("front door".into()),
        location: None,
    };
    op.update_node(mac, &patch).unwrap();
    let second = op.scan_marker(mac, "window", Some(20)).unwrap();
    assert!(second.node.locked);
    assert!(second.warning.is_some());
    assert!(matches!(
        op.update_node(mac, &patch),
        Err(ClientError::Locked(_))
    ));
    assert!(matches!(
        op.resolve(mac, "attic"),
        Err(ClientError::Rejected { status: 400, .. })
    ));
    let resolved = op.resolve(mac, "desk").unwrap();
    assert!(!resolved.locked);
    assert_eq!(resolved.placements, vec!["desk".to_string()]);
    assert_eq!(op.update_node(mac, &patch).unwrap().name, "front door");
    assert!(matches!(
        op.node(MacAddress([9; 8]), None),
        Err(ClientError::NotFound(_))
    ));
}

#[test]
fn scan_status_codes() {
    let b = start();
    let op = basic_header("op", "op-secret");
    let body = format!(r#"{{"mac":"{A}","placement":"desk"}}"#);
    assert_eq!(raw(&b, "POST", "/api/nodes", Some(&op), &body).0, 201);
    assert_eq!(raw(&b, "POST", "/api/nodes", Some(&op), &body).0, 200);
    assert_eq!(raw(&b, "POST", "/api/nodes", Some(&op), "{").0, 400);
    assert_eq!(raw(&b, "GET", "/api/nodes/not-a-mac", Some(&op), "").0, 400);
    assert_eq!(raw(&b, "GET", "/api/timeline", Some(&op), "").0, 400);
    assert_eq!(raw(&b, "GET", "/api/edges?t0=5&t1=1", Some(&op), "").0, 400);
}

fn traffic() -> (SimConfig, Vec<wsnscope::sim::RadioEvent>) {
    let nodes = vec![
        SimNode::new(
            NodeId(0),
            "server".into(),
            NodeRole::Server,
            Position::new(0.0, 0.0),
        ),
        SimNode::new(
            NodeId(1),
            "c1".into(),
            NodeRole::Client,
            Position::new(10.0, 0.0),
        ),
    ];
    let mut cfg = SimConfig::new(nodes, 15.0);
    cfg.workload_end = Some(30.0);
    let mut sim = Simulation::new(cfg.clone()).unwrap();
    (cfg, sim.step(40.0))
}

#[test]
fn uploads_drive_every_read_endpoint() {
    let b = start();
    let (cfg, events) = traffic();
    assert_eq!(events.len(), 6);
    let s = Sniffer::new("s1", 0);
    let records = events
        .iter()
        .map(|e| {
            upload_record(&s.capture(RawCapture {
                time_us: e.time_us,
                bytes: e.bytes(),
                rssi: Some(-60.0),
            }))
        })
        .collect();
    let batch = UploadBatch {
        sniffer_id: "s1".into(),
        records,
    };
    let ack = client(&b, "sn").upload(&batch).unwrap();
    assert_eq!((ack.admitted, ack.duplicate, ack.corrupt), (6, 0, 0));
    let again = client(&b, "sn").upload(&batch).unwrap();
    assert_eq!((again.admitted, again.duplicate), (0, 6));

    let tr = client(&b, "tr");
    let c1 = cfg.nodes[1].mac;
    let ip = tr.edges(View::Ip, None).unwrap();
    assert_eq!(ip.len(), 2);
    assert!(ip.iter().all(|e| e.count == 3));
    let mac = tr
        .edges(View::Mac, Some(Window::new(0, 20_000_000).unwrap()))
        .unwrap();
    assert_eq!(mac.iter().map(|e| e.count).sum::<u64>(), 2);
    let info = tr.node(c1, None).unwrap();
    assert_eq!((info.sent, info.received), (3, 3));
    let snaps = tr.timeline(View::Mac, 10_000_000, Some(0)).unwrap();
    assert_eq!(
        snaps
            .iter()
            .map(|s| s.edges.iter().map(|e| e.count).sum::<u64>())
            .sum::<u64>(),
        6
    );
    let rssi = tr.rssi(c1, Some("s1")).unwrap();
    assert_eq!(rssi.samples.len(), 3);
    assert!(tr.warnings(None).unwrap().is_empty());
    assert!(tr.nodes().unwrap().len() >= 2);
    tr.spoof(c1).unwrap();
    assert!(matches!(
        tr.resolve(c1, "x"),
        Err(ClientError::Forbidden(_))
    ));
}

#[test]
fn mismatched_digest_rejects_the_batch() {
    let b = start();
    let (_, events) = traffic();
    let s = Sniffer::new("s1", 0);
    let mut rec = upload_record(&s.capture(RawCapture {
        time_us: events[0].time_us,
        bytes: events[0].bytes(),
        rssi: None,
    }));
    rec.frame = hex::encode(events[1].bytes());
    let batch = UploadBatch {
        sniffer_id: "s1".into(),
        records: vec![rec],
    };
    assert!(matches!(
        client(&b, "sn").upload(&batch),
        Err(ClientError::Rejected { status: 422, .. })
    ));
    let store = b.state().store.read().unwrap();
    assert_eq!(store.transmission_count(), 0);
}

#[test]
fn key_registration_conflicts_without_replace() {
    let b = start();
    let op = client(&b, "op");
    let mac: MacAddress = A.parse().unwrap();
    let k1 = derive_signing_key(1, NodeId(1)).verifying_key();
    let k2 = derive_signing_key(2, NodeId(1)).verifying_key();
    op.register_key(mac, &k1, false).unwrap();
    op.register_key(mac, &k1, false).unwrap();
    assert!(matches!(
        op.register_key(mac, &k2, false),
        Err(ClientError::Conflict(_))
    ));
    op.register_key(mac, &k2, true).unwrap();
}
