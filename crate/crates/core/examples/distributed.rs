//! A server and two camera nodes over loopback TCP, checked against the
//! single-process run.

use std::thread;

use mvsparse::geometry::CalibrationRecord;
use mvsparse::runtime::config::default_rig;
use mvsparse::runtime::{run_camera_node, run_sim, RunConfig, Server};

fn main() {
    let mut cfg = RunConfig {
        frames: 60,
        cameras: default_rig()[..2]
            .iter()
            .map(CalibrationRecord::from)
            .collect(),
        ..RunConfig::default()
    };
    cfg.network.listen = "127.0.0.1:0".into();
    let server = Server::bind(&cfg).unwrap();
    let addr = server.local_addr().unwrap().to_string();
    println!("server on {addr}");
    let server = thread::spawn(move || server.run());
    let nodes: Vec<_> = [0, 1]
        .into_iter()
        .map(|id| {
            let (cfg, addr) = (cfg.clone(), addr.clone());
            thread::spawn(move || run_camera_node(&cfg, id, &addr))
        })
        .collect();
    for n in nodes {
        let s = n.join().unwrap().unwrap();
        println!("camera {} sent {} frames", s.camera_id, s.frames);
    }
    let remote = server.join().unwrap().unwrap();
    let local = run_sim(&cfg).unwrap();
    println!(
        "MODA {:.4}, {:.2} blocks/frame, identical to local run: {}",
        remote.scores.moda.unwrap(),
        remote.scores.blocks_per_frame,
        remote.to_json() == local.to_json()
    );
}
