//! Accuracy against processed blocks for every selection mode.

use mvsparse::runtime::{run_sim, Mode, RunConfig};

fn main() {
    println!(
        "{:<12} {:>8} {:>8} {:>9} {:>8}",
        "mode", "MODA", "blocks", "MB/frame", "link ms"
    );
    for mode in Mode::ALL {
        let r = run_sim(&RunConfig {
            mode,
            frames: 400,
            ..RunConfig::default()
        })
        .unwrap();
        println!(
            "{:<12} {:>8.4} {:>8.2} {:>9.3} {:>8.1}",
            mode.name(),
            r.scores.moda.unwrap(),
            r.scores.blocks_per_frame,
            r.scores.mb_per_frame,
            r.mean_transmission_ms()
        );
    }
}
