//! Capture → upload staging. Capture pushes into an ordered queue and never
//! touches the network; a worker thread batches and uploads, retrying
//! transport failures (at-least-once; the backend deduplicates).

use std::collections::VecDeque;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{upload_record, CapturedPacket, Digest, HopRecord, RawCapture, Sniffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadRecord {
    /// Captured frame bytes, lowercase hex.
    pub frame: String,
    pub digest: Digest,
    pub ts: u64,
    pub rssi: Option<f64>,
    /// Absent for captures that failed to decode.
    pub hop: Option<HopRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadBatch {
    pub sniffer_id: String,
    pub records: Vec<UploadRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UploadAck {
    pub admitted: u64,
    pub duplicate: u64,
    pub corrupt: u64,
}

impl UploadAck {
    pub fn total(&self) -> u64 {
        self.admitted + self.duplicate + self.corrupt
    }

    pub fn add(&mut self, other: UploadAck) {
        self.admitted += other.admitted;
        self.duplicate += other.duplicate;
        self.corrupt += other.corrupt;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum FlushError {
    #[error("backend rejected credentials: {0}")]
    Unauthorized(String),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend refused batch: {0}")]
    Rejected(String),
}

/// Destination of sniffer uploads.
pub trait Uplink: Send {
    fn upload(&mut self, batch: &UploadBatch) -> Result<UploadAck, FlushError>;
}

impl<F> Uplink for F
where
    F: FnMut(&UploadBatch) -> Result<UploadAck, FlushError> + Send,
{
    fn upload(&mut self, batch: &UploadBatch) -> Result<UploadAck, FlushError> {
        self(batch)
    }
}

/// Batches waiting for acknowledgement, oldest first.
#[derive(Debug, Default)]
pub struct Outbox {
    pending: VecDeque<UploadBatch>,
}

impl Outbox {
    pub fn push(&mut self, batch: UploadBatch) {
        if !batch.records.is_empty() {
            self.pending.push_back(batch);
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Sends pending batches in order; a failed batch stays queued.
    pub fn flush(&mut self, uplink: &mut dyn Uplink) -> Result<UploadAck, FlushError> {
        let mut ack = UploadAck::default();
        while let Some(batch) = self.pending.front() {
            ack.add(uplink.upload(batch)?);
            self.pending.pop_front();
        }
        Ok(ack)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchPolicy {
    pub max_records: usize,
    pub max_delay: Duration,
    pub retry_backoff: Duration,
    pub max_retries: u32,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy {
            max_records: 64,
            max_delay: Duration::from_millis(200),
            retry_backoff: Duration::from_millis(50),
            max_retries: 40,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineStats {
    pub captured: u64,
    pub corrupt: u64,
    pub batches: u64,
    pub retries: u64,
    pub acked: UploadAck,
    /// Records never acknowledged because the pipeline gave up.
    pub undelivered: u64,
    pub error: Option<FlushError>,
}

/// A running sniffer: capture on the caller's thread, upload on a worker.
pub struct SnifferPipeline {
    sniffer: Sniffer,
    tx: Option<Sender<super::UploadRecord>>,
    worker: Option<JoinHandle<PipelineStats>>,
    captured: u64,
    corrupt: u64,
}

impl SnifferPipeline {
    pub fn spawn(sniffer: Sniffer, uplink: Box<dyn Uplink>, policy: BatchPolicy) -> Self {
        let (tx, rx) = mpsc::channel::<UploadRecord>();
        let id = sniffer.id.clone();
        let worker = std::thread::Builder::new()
            .name(format!("uplink-{id}"))
            .spawn(move || upload_loop(id, rx, uplink, policy))
            .expect("spawn uplink worker");
        SnifferPipeline {
            sniffer,
            tx: Some(tx),
            worker: Some(worker),
            captured: 0,
            corrupt: 0,
        }
    }

    pub fn sniffer(&self) -> &Sniffer {
        &self.sniffer
    }

    pub fn capture(&mut self, raw: RawCapture) -> CapturedPacket {
        let packet = self.sniffer.capture(raw);
        self.captured += 1;
        if packet.is_corrupt() {
            self.corrupt += 1;
        }
        if let Some(tx) = &self.tx {
            // a closed channel means the worker gave up; stats report it
            let _ = tx.send(upload_record(&packet));
        }
        packet
    }

    /// Drains the queue, waits for the worker and returns its statistics.
    pub fn finish(mut self) -> PipelineStats {
        drop(self.tx.take());
        let mut stats = self
            .worker
            .take()
            .map(|w| w.join().expect("uplink worker panicked"))
            .unwrap_or_default();
        stats.captured = self.captured;
        stats.corrupt = self.corrupt;
        stats
    }
}

fn upload_loop(
    sniffer_id: String,
    rx: mpsc::Receiver<UploadRecord>,
    mut uplink: Box<dyn Uplink>,
    policy: BatchPolicy,
) -> PipelineStats {
    let mut stats = PipelineStats::default();
    let mut outbox = Outbox::default();
    let mut current: Vec<UploadRecord> = Vec::new();
    let mut deadline = Instant::now() + policy.max_delay;
    let mut closed = false;

    while !closed {
        let wait = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(wait) {
            Ok(rec) => current.push(rec),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => closed = true,
        }
        let due = current.len() >= policy.max_records || Instant::now() >= deadline || closed;
        if !due {
            continue;
        }
        if !current.is_empty() {
            outbox.push(UploadBatch {
                sniffer_id: sniffer_id.clone(),
                records: std::mem::take(&mut current),
            });
            stats.batches += 1;
        }
        deadline = Instant::now() + policy.max_delay;

        let mut attempts = 0;
        loop {
            match outbox.flush(uplink.as_mut()) {
                Ok(ack) => {
                    stats.acked.add(ack);
                    break;
                }
                Err(FlushError::Unreachable(msg)) if attempts < policy.max_retries => {
                    attempts += 1;
                    stats.retries += 1;
                    tracing::debug!(sniffer = %sniffer_id, %msg, "upload failed, retrying");
                    std::thread::sleep(policy.retry_backoff);
                    // keep capturing order: only retry while nothing else is due
                    if !closed {
                        break;
                    }
                }
                Err(e) => {
                    tracing::warn!(sniffer = %sniffer_id, error = %e, "upload abandoned");
                    stats.undelivered = outbox
                        .pending
                        .iter()
                        .map(|b| b.records.len() as u64)
                        .sum::<u64>()
                        + rx.try_iter().count() as u64;
                    stats.error = Some(e);
                    return stats;
                }
            }
        }
    }
    if !outbox.is_empty() {
        stats.undelivered = outbox.pending.iter().map(|b| b.records.len() as u64).sum();
        stats
            .error
            .get_or_insert(FlushError::Unreachable("retries exhausted".into()));
    }
    stats
}
