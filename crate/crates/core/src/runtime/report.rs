//! Run reports: JSON documents and side-by-side comparison.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricsReport;

use super::config::Mode;
use super::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    /// Processed blocks per camera, in camera order.
    pub blocks: Vec<u32>,
    /// Modeled bytes sent by all cameras.
    pub bytes: f64,
    /// Modeled compute time of the busiest camera.
    pub compute_ms: f64,
    /// Modeled time of the slowest camera link.
    pub transmission_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub config_digest: String,
    pub seed: u64,
    pub k: usize,
    pub cameras: Vec<u32>,
    pub frames: u64,
    /// False when the run stopped early.
    pub complete: bool,
    pub dropped_frames: Vec<u64>,
    /// Mean processed fraction per camera.
    pub processed_fraction: Vec<f64>,
    pub scores: MetricsReport,
    pub series: Vec<FrameRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Report(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RunError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Mean over frames of the processed fraction, all cameras pooled.
    pub fn mean_processed_fraction(&self) -> f64 {
        self.processed_fraction.iter().sum::<f64>() / self.processed_fraction.len().max(1) as f64
    }

    pub fn mean_compute_ms(&self) -> f64 {
        self.series.iter().map(|f| f.compute_ms).sum::<f64>() / self.series.len().max(1) as f64
    }

    /// Compute plus transmission, with no overlap between the two.
    pub fn mean_frame_ms(&self) -> f64 {
        self.mean_compute_ms() + self.mean_transmission_ms()
    }

    pub fn mean_transmission_ms(&self) -> f64 {
        self.series.iter().map(|f| f.transmission_ms).sum::<f64>() / self.series.len().max(1) as f64
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

/// Plain-text table of the headline numbers of two runs.
pub fn compare_reports(a: &RunReport, b: &RunReport) -> String {
    let rows: Vec<(&str, String, String, Option<f64>)> = {
        let opt = |name, x: Option<f64>, y: Option<f64>| {
            let delta = x.zip(y).map(|(x, y)| y - x);
            (name, fmt_opt(x), fmt_opt(y), delta)
        };
        let num = |name, x: f64, y: f64| (name, format!("{x:.4}"), format!("{y:.4}"), Some(y - x));
        vec![
            ("mode", a.mode.to_string(), b.mode.to_string(), None),
            ("frames", a.frames.to_string(), b.frames.to_string(), None),
            opt("MODA", a.scores.moda, b.scores.moda),
            opt("MODP", a.scores.modp, b.scores.modp),
            opt("precision", a.scores.precision, b.scores.precision),
            opt("recall", a.scores.recall, b.scores.recall),
            opt("MOTA", a.scores.mota, b.scores.mota),
            opt("IDF1", a.scores.idf1, b.scores.idf1),
            num(
                "blocks/frame",
                a.scores.blocks_per_frame,
                b.scores.blocks_per_frame,
            ),
            num("MB/frame", a.scores.mb_per_frame, b.scores.mb_per_frame),
            num("compute ms", a.mean_compute_ms(), b.mean_compute_ms()),
            num(
                "transmission ms",
                a.mean_transmission_ms(),
                b.mean_transmission_ms(),
            ),
            num("frame ms", a.mean_frame_ms(), b.mean_frame_ms()),
        ]
    };
    let mut out = format!("{:<16} {:>12} {:>12} {:>10}\n", "metric", "a", "b", "b - a");
    for (name, x, y, d) in rows {
        let d = d.map_or_else(String::new, |d| format!("{d:+.4}"));
        out.push_str(&format!("{name:<16} {x:>12} {y:>12} {d:>10}\n"));
    }
    if a.scores.blocks_per_frame > 0.0 {
        out.push_str(&format!(
            "{:<16} {:>12} {:>12.4}\n",
            "blocks ratio",
            "",
            b.scores.blocks_per_frame / a.scores.blocks_per_frame
        ));
    }
    if a.scores.mb_per_frame > 0.0 {
        out.push_str(&format!(
            "{:<16} {:>12} {:>12.4}\n",
            "bytes ratio",
            "",
            b.scores.mb_per_frame / a.scores.mb_per_frame
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(mode: Mode, blocks: u32, bytes: f64) -> RunReport {
        let series: Vec<FrameRecord> = (0..4)
            .map(|frame_id| FrameRecord {
                frame_id,
                blocks: vec![blocks],
                bytes,
                compute_ms: f64::from(blocks),
                transmission_ms: 10.0,
            })
            .collect();
        RunReport {
            mode,
            config_digest: "abc".into(),
            seed: 0,
            k: 3,
            cameras: vec![0],
            frames: 4,
            complete: true,
            dropped_frames: Vec::new(),
            processed_fraction: vec![f64::from(blocks) / 45.0],
            scores: MetricsReport {
                frames: 4,
                moda: Some(0.9),
                modp: None,
                precision: Some(1.0),
                recall: Some(0.9),
                mota: Some(0.8),
                idf1: Some(0.7),
                id_switches: 1,
                blocks_per_frame: f64::from(blocks),
                total_blocks_per_frame: f64::from(blocks),
                mb_per_frame: bytes / 1e6,
            },
            series,
        }
    }

    #[test]
    fn json_round_trip() {
        let r = report(Mode::Full, 45, 1e6);
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
        assert!(RunReport::from_json("{").is_err());
    }

    #[test]
    fn timing_components_add_up() {
        let r = report(Mode::Mvsparse, 20, 5e5);
        assert_eq!(r.mean_compute_ms(), 20.0);
        assert_eq!(r.mean_transmission_ms(), 10.0);
        assert_eq!(r.mean_frame_ms(), 30.0);
    }

    #[test]
    fn comparison_lists_ratios() {
        let table = compare_reports(&report(Mode::Full, 45, 1e6), &report(Mode::Mvsparse, 9, 2e5));
        assert!(table.contains("MODP") && table.contains("n/a"));
        let ratio = |name: &str| -> f64 {
            let line = table.lines().find(|l| l.starts_with(name)).unwrap();
            line.split_whitespace().last().unwrap().parse().unwrap()
        };
        assert_eq!(ratio("blocks ratio"), 0.2);
        assert_eq!(ratio("bytes ratio"), 0.2);
    }
}
