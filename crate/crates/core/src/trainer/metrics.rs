//! Per-epoch metrics, moving-window averages and CSV output.

use std::io::Write;

use serde::Serialize;

use crate::Result;

/// Summary of one training epoch's forward trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Undiscounted sum of rewards.
    pub episode_return: f64,
    pub success: bool,
    /// Mean remaining-distance ratio over executed steps.
    pub avg_distance: f64,
    /// Mean deflection over executed steps, radians.
    pub avg_deflection: f64,
    pub steps: usize,
    pub backward_trial: bool,
    /// Mean critic loss of this epoch's updates; zero when no update ran.
    pub loss: f64,
    pub wall_time_s: f64,
}

impl EpochMetrics {
    /// Same epoch data with the wall-clock field cleared, for reproducibility checks.
    pub fn deterministic(&self) -> Self {
        Self { wall_time_s: 0.0, ..*self }
    }
}

/// Trailing moving average; the first `window - 1` entries average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, v) in series.iter().enumerate() {
        sum += v;
        if i >= w {
            sum -= series[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Means of consecutive non-overlapping blocks; a trailing partial block is dropped.
pub fn block_averages(series: &[f64], window: usize) -> Vec<f64> {
    series
        .chunks_exact(window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

/// First index at which the series reaches `threshold`.
pub fn first_reaching(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|v| *v >= threshold)
}

/// Moving averages of the metric columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowedSeries {
    pub episode_return: Vec<f64>,
    pub success: Vec<f64>,
    pub avg_distance: Vec<f64>,
    pub avg_deflection: Vec<f64>,
    pub steps: Vec<f64>,
}

impl WindowedSeries {
    pub fn new(metrics: &[EpochMetrics], window: usize) -> Self {
        let col = |f: fn(&EpochMetrics) -> f64| moving_average(&metrics.iter().map(f).collect::<Vec<_>>(), window);
        Self {
            episode_return: col(|m| m.episode_return),
            success: col(|m| if m.success { 1.0 } else { 0.0 }),
            avg_distance: col(|m| m.avg_distance),
            avg_deflection: col(|m| m.avg_deflection),
            steps: col(|m| m.steps as f64),
        }
    }
}

pub const METRICS_HEADER: &str =
    "epoch,return,success,avg_distance,avg_deflection,steps,backward_trial,loss,wall_time_s";
pub const WINDOWED_HEADER: &str = "epoch,return,success,avg_distance,avg_deflection,steps";

pub fn write_metrics_row<W: Write>(w: &mut W, m: &EpochMetrics) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{:.6}",
        m.epoch,
        m.episode_return,
        m.success as u8,
        m.avg_distance,
        m.avg_deflection,
        m.steps,
        m.backward_trial as u8,
        m.loss,
        m.wall_time_s
    )?;
    Ok(())
}

pub fn write_metrics<W: Write>(mut w: W, metrics: &[EpochMetrics]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in metrics {
        write_metrics_row(&mut w, m)?;
    }
    Ok(())
}

pub fn write_windowed<W: Write>(mut w: W, metrics: &[EpochMetrics], window: usize) -> Result<()> {
    let s = WindowedSeries::new(metrics, window);
    writeln!(w, "{WINDOWED_HEADER}")?;
    for (i, m) in metrics.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.epoch, s.episode_return[i], s.success[i], s.avg_distance[i], s.avg_deflection[i], s.steps[i]
        )?;
    }
    Ok(())
}
