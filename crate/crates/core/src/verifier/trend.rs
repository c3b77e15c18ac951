use serde::{Deserialize, Serialize};

/// Slopes within ±0.5 dB per sample count as flat.
pub const TREND_DEAD_BAND_DB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RssiTrend {
    Increasing,
    Decreasing,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("need at least 3 RSSI samples, got {0}")]
pub struct TooFewSamples(pub usize);

/// Ordinary least-squares slope of `values` against their index.
pub fn least_squares_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let (num, den) = values
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(num, den), (i, y)| {
            let dx = i as f64 - mean_x;
            (num + dx * (y - mean_y), den + dx * dx)
        });
    num / den
}

/// Direction of signal strength over time-ordered samples of one transmitter.
pub fn rssi_trend(samples: &[f64]) -> Result<RssiTrend, TooFewSamples> {
    if samples.len() < 3 {
        return Err(TooFewSamples(samples.len()));
    }
    let slope = least_squares_slope(samples);
    Ok(if slope > TREND_DEAD_BAND_DB {
        RssiTrend::Increasing
    } else if slope < -TREND_DEAD_BAND_DB {
        RssiTrend::Decreasing
    } else {
        RssiTrend::Flat
    })
}
