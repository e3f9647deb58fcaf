//! The learned selector settles at the requested processed fraction on a
//! crowd that stands still.

use mvsparse::runtime::{run_sim, Mode, RunConfig};

fn main() {
    for tau in [0.3, 0.6, 1.0] {
        let mut cfg = RunConfig {
            mode: Mode::Blockcopy,
            blockcopy_tau: tau,
            frames: 600,
            ..RunConfig::default()
        };
        cfg.scene.min_speed = 0.0;
        cfg.scene.max_speed = 0.0;
        let r = run_sim(&cfg).unwrap();
        let windows: Vec<String> = r
            .series
            .chunks(100)
            .map(|w| {
                let on: u32 = w.iter().flat_map(|f| f.blocks.iter()).sum();
                format!(
                    "{:.2}",
                    f64::from(on) / (w.len() * r.cameras.len() * 45) as f64
                )
            })
            .collect();
        println!(
            "target {tau:.1}: processed fraction per 100 frames {}",
            windows.join(" ")
        );
    }
}
