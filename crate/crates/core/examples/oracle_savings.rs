//! How many blocks a ground-truth selector needs as K grows, against
//! processing every block.

use mvsparse::runtime::{run_sim, Mode, RunConfig};

fn main() {
    let base = RunConfig {
        frames: 300,
        ..RunConfig::default()
    };
    let full = run_sim(&RunConfig {
        mode: Mode::Full,
        ..base.clone()
    })
    .unwrap();
    println!(
        "full      {:6.2} blocks/frame  MODA {:.4}",
        full.scores.total_blocks_per_frame,
        full.scores.moda.unwrap()
    );
    for k in 1..=3 {
        let r = run_sim(&RunConfig {
            mode: Mode::Oracle,
            k,
            ..base.clone()
        })
        .unwrap();
        println!(
            "oracle K={k} {:6.2} blocks/frame  MODA {:.4}  ({:.0}% of full)",
            r.scores.total_blocks_per_frame,
            r.scores.moda.unwrap(),
            100.0 * r.scores.total_blocks_per_frame / full.scores.total_blocks_per_frame
        );
    }
}
