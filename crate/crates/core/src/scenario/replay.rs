use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{read_pcap, CodecError, PcapCapture};
use crate::sniffer::{BatchPolicy, FlushError, RawCapture, Sniffer, SnifferPipeline, Uplink};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read capture: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pcap(#[from] CodecError),
    #[error("upload failed: {0}")]
    Upload(FlushError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub frames: u64,
    pub admitted: u64,
    pub duplicate: u64,
    pub corrupt: u64,
}

/// Feeds a capture through one sniffer. Record timestamps are kept; `speed`
/// scales the pacing between frames (0 or infinity means no pacing).
pub fn replay(
    capture: &PcapCapture,
    sniffer: Sniffer,
    uplink: Box<dyn Uplink>,
    speed: f64,
) -> Result<ReplaySummary, ReplayError> {
    let mut pipeline = SnifferPipeline::spawn(sniffer, uplink, BatchPolicy::default());
    let paced = speed.is_finite() && speed > 0.0;
    let mut last = capture.records.first().map(|r| r.ts_us);
    for r in &capture.records {
        if let (true, Some(prev)) = (paced, last) {
            let gap = r.ts_us.saturating_sub(prev) as f64 / speed;
            std::thread::sleep(Duration::from_micros(gap as u64));
        }
        last = Some(r.ts_us);
        pipeline.capture(RawCapture {
            time_us: r.ts_us,
            bytes: r.data.clone(),
            rssi: None,
        });
    }
    let stats = pipeline.finish();
    if let Some(e) = stats.error {
        return Err(ReplayError::Upload(e));
    }
    Ok(ReplaySummary {
        frames: stats.captured,
        admitted: stats.acked.admitted,
        duplicate: stats.acked.duplicate,
        corrupt: stats.acked.corrupt,
    })
}

pub fn replay_file(
    path: &std::path::Path,
    sniffer: Sniffer,
    uplink: Box<dyn Uplink>,
    speed: f64,
) -> Result<ReplaySummary, ReplayError> {
    let capture = read_pcap(&std::fs::read(path)?)?;
    replay(&capture, sniffer, uplink, speed)
}
