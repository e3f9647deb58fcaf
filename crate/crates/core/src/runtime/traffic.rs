//! Bytes-on-the-wire and link-time model for block updates.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::wire::{update_overhead, BlockUpdate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    /// Raw bytes of one block.
    pub block_bytes: usize,
    /// Ratio between raw and transmitted block pixels.
    pub compression_factor: f64,
    pub bandwidth_bytes_per_s: f64,
    pub latency_ms: f64,
    pub compute_ms_per_block: f64,
}

impl TrafficModel {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            block_bytes: cfg.block_bytes(),
            compression_factor: cfg.compression_factor,
            bandwidth_bytes_per_s: cfg.network.bandwidth_bytes_per_s,
            latency_ms: cfg.network.latency_ms,
            compute_ms_per_block: cfg.network.compute_ms_per_block,
        }
    }

    /// Time to push `bytes` over one link.
    pub fn transmission_ms(&self, bytes: f64) -> f64 {
        bytes / self.bandwidth_bytes_per_s * 1e3 + self.latency_ms
    }

    /// Camera-side time to process `blocks` blocks.
    pub fn compute_ms(&self, blocks: usize) -> f64 {
        blocks as f64 * self.compute_ms_per_block
    }
}

/// Modeled size of an update: framing, bitmap and detection records at
/// their encoded size, plus compressed pixels for every processed block.
/// Does not depend on whether the payload was materialized.
pub fn account_traffic(update: &BlockUpdate, model: &TrafficModel) -> f64 {
    update_overhead(update) as f64
        + (update.actions.popcount() * model.block_bytes) as f64 / model.compression_factor
}
