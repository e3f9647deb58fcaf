//! Camera nodes and the server over TCP.
//!
//! Each camera holds one connection. The server reads every connection on
//! its own thread and funnels messages into a single loop that owns all
//! fusion, tracking and scoring state. Frames advance in lock step: the
//! server waits for every camera's update (or the frame timeout), then
//! answers each camera before it may start the next frame.

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::policy::BlockFeatures;

use super::config::{ConfigError, RunConfig};
use super::node::{CameraNode, ServerCore};
use super::report::RunReport;
use super::wire::{read_message, write_message, BlockUpdate, EndOfSequence, Hello, Message};
use super::{scene_source, RunError};

fn require_networkable(cfg: &RunConfig) -> Result<(), RunError> {
    cfg.validate()?;
    if cfg.mode.local_only() {
        return Err(ConfigError::Invalid(format!(
            "mode {} only runs in a single process",
            cfg.mode
        ))
        .into());
    }
    Ok(())
}

enum Event {
    Message(u32, Message),
    Closed(u32, String),
}

fn spawn_reader(camera_id: u32, mut stream: TcpStream, tx: Sender<Event>) {
    thread::spawn(move || loop {
        match read_message(&mut stream) {
            Ok(Some(msg)) => {
                let last = matches!(msg, Message::EndOfSequence(_));
                if tx.send(Event::Message(camera_id, msg)).is_err() || last {
                    return;
                }
            }
            Ok(None) => {
                let _ = tx.send(Event::Closed(
                    camera_id,
                    "peer closed the connection".into(),
                ));
                return;
            }
            Err(e) => {
                let _ = tx.send(Event::Closed(camera_id, e.to_string()));
                return;
            }
        }
    });
}

/// A bound server socket waiting for its cameras.
#[derive(Debug)]
pub struct Server {
    cfg: RunConfig,
    listener: TcpListener,
}

impl Server {
    pub fn bind(cfg: &RunConfig) -> Result<Self, RunError> {
        require_networkable(cfg)?;
        let listener = TcpListener::bind(&cfg.network.listen)?;
        Ok(Self {
            cfg: cfg.clone(),
            listener,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, RunError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accept one connection per configured camera.
    fn accept_cameras(&self, expected: &[u32]) -> Result<BTreeMap<u32, TcpStream>, RunError> {
        let digest = self.cfg.digest();
        let handshake = Duration::from_millis(self.cfg.network.frame_timeout_ms.max(1));
        let mut peers = BTreeMap::new();
        while peers.len() < expected.len() {
            let (mut stream, addr) = self.listener.accept()?;
            stream.set_nodelay(true)?;
            stream.set_read_timeout(Some(handshake))?;
            let hello = match read_message(&mut stream) {
                Ok(Some(Message::Hello(h))) => h,
                Ok(other) => {
                    log::warn!("{addr}: expected a hello, got {other:?}");
                    continue;
                }
                Err(e) => {
                    log::warn!("{addr}: handshake failed: {e}");
                    continue;
                }
            };
            if !expected.contains(&hello.camera_id) || peers.contains_key(&hello.camera_id) {
                log::warn!("{addr}: unexpected or duplicate camera {}", hello.camera_id);
                continue;
            }
            if hello.config_digest != digest {
                log::warn!(
                    "{addr}: camera {} runs a different configuration",
                    hello.camera_id
                );
                continue;
            }
            stream.set_read_timeout(None)?;
            log::info!("camera {} connected from {addr}", hello.camera_id);
            peers.insert(hello.camera_id, stream);
        }
        Ok(peers)
    }

    pub fn run(self) -> Result<RunReport, RunError> {
        let mut core = ServerCore::new(&self.cfg)?;
        let ids = core.camera_ids();
        let mut writers = self.accept_cameras(&ids)?;
        let (tx, rx) = mpsc::channel();
        for (&id, stream) in &writers {
            spawn_reader(id, stream.try_clone()?, tx.clone());
        }
        drop(tx);
        let timeout = Duration::from_millis(self.cfg.network.frame_timeout_ms.max(1));
        let lost = |core: &ServerCore, peer: String, reason: String| RunError::ConnectionLost {
            peer,
            reason,
            partial: core.report(false).ok().map(Box::new),
        };

        for scene in scene_source(&self.cfg)?.take(self.cfg.frames as usize) {
            let frame_id = scene.frame_id;
            let mut updates: BTreeMap<u32, BlockUpdate> = BTreeMap::new();
            let deadline = Instant::now() + timeout;
            while updates.len() < ids.len() {
                let wait = deadline.saturating_duration_since(Instant::now());
                match rx.recv_timeout(wait) {
                    Ok(Event::Message(id, Message::BlockUpdate(u)))
                        if u.frame_id == frame_id && u.camera_id == id =>
                    {
                        updates.insert(id, u);
                    }
                    Ok(Event::Message(id, Message::BlockUpdate(u))) if u.frame_id < frame_id => {
                        log::warn!("late update from camera {id} for frame {}", u.frame_id);
                    }
                    Ok(Event::Message(id, other)) => {
                        return Err(lost(
                            &core,
                            format!("camera {id}"),
                            format!("unexpected message {other:?}"),
                        ));
                    }
                    Ok(Event::Closed(id, reason)) => {
                        return Err(lost(&core, format!("camera {id}"), reason))
                    }
                    Err(RecvTimeoutError::Timeout) => break,
                    Err(RecvTimeoutError::Disconnected) => {
                        return Err(lost(
                            &core,
                            "all cameras".into(),
                            "every reader stopped".into(),
                        ))
                    }
                }
            }
            let feedback = if updates.len() == ids.len() {
                core.process(&scene, updates.into_values().collect())?
            } else {
                core.drop_frame(frame_id)
            };
            for fb in feedback {
                let id = fb.camera_id;
                let stream = writers.get_mut(&id).expect("connected camera");
                if let Err(e) = write_message(stream, &Message::ServerFeedback(fb)) {
                    return Err(lost(&core, format!("camera {id}"), e.to_string()));
                }
            }
        }

        let mut finished = 0;
        while finished < ids.len() {
            match rx.recv_timeout(timeout) {
                Ok(Event::Message(_, Message::EndOfSequence(_))) => finished += 1,
                Ok(Event::Message(id, Message::BlockUpdate(u))) => {
                    log::warn!("late update from camera {id} for frame {}", u.frame_id)
                }
                Ok(Event::Message(id, other)) => {
                    return Err(lost(
                        &core,
                        format!("camera {id}"),
                        format!("unexpected message {other:?}"),
                    ))
                }
                Ok(Event::Closed(id, reason)) => {
                    return Err(lost(&core, format!("camera {id}"), reason))
                }
                Err(_) => return Err(lost(&core, "cameras".into(), "no end-of-sequence".into())),
            }
        }
        Ok(core.report(true)?)
    }
}

/// Bind `cfg.network.listen` and serve one run.
pub fn run_server(cfg: &RunConfig) -> Result<RunReport, RunError> {
    Server::bind(cfg)?.run()
}

/// What a camera node knows at the end of its run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSummary {
    pub camera_id: u32,
    pub frames: u64,
    pub weights: Option<BlockFeatures>,
}

fn connect(cfg: &RunConfig, addr: &str) -> Result<TcpStream, RunError> {
    let attempts = cfg.network.connect_attempts.max(1);
    let mut delay = Duration::from_millis(cfg.network.retry_backoff_ms);
    let mut last = String::new();
    for attempt in 1..=attempts {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                log::info!("connect to {addr} failed (attempt {attempt}/{attempts}): {e}");
                last = e.to_string();
            }
        }
        if attempt < attempts {
            thread::sleep(delay);
            delay = (delay * 2).min(Duration::from_secs(5));
        }
    }
    Err(RunError::ConnectionLost {
        peer: addr.into(),
        reason: last,
        partial: None,
    })
}

fn expect_feedback(rx: &mut TcpStream, addr: &str) -> Result<Message, RunError> {
    let lost = |reason: String| RunError::ConnectionLost {
        peer: addr.into(),
        reason,
        partial: None,
    };
    match read_message(rx) {
        Ok(Some(m)) => Ok(m),
        Ok(None) => Err(lost("server closed the connection".into())),
        Err(e) => Err(lost(e.to_string())),
    }
}

/// Run camera `camera_id` against the server at `addr`.
pub fn run_camera_node(
    cfg: &RunConfig,
    camera_id: u32,
    addr: &str,
) -> Result<CameraSummary, RunError> {
    require_networkable(cfg)?;
    let camera = cfg
        .camera_models()?
        .into_iter()
        .find(|c| c.camera_id == camera_id)
        .ok_or_else(|| ConfigError::Invalid(format!("no camera {camera_id} in the rig")))?;
    let mut node = CameraNode::new(cfg, camera).with_payload(true);
    let mut stream = connect(cfg, addr)?;
    stream.set_nodelay(true)?;
    let patience = Duration::from_millis(cfg.network.frame_timeout_ms.saturating_mul(2).max(1000));
    stream.set_read_timeout(Some(patience))?;
    write_message(
        &mut stream,
        &Message::Hello(Hello {
            camera_id,
            config_digest: cfg.digest(),
        }),
    )?;

    let mut frames = 0;
    for scene in scene_source(cfg)?.take(cfg.frames as usize) {
        let update = node.step(&scene, None)?;
        write_message(&mut stream, &Message::BlockUpdate(update)).map_err(|e| {
            RunError::ConnectionLost {
                peer: addr.into(),
                reason: e.to_string(),
                partial: None,
            }
        })?;
        match expect_feedback(&mut stream, addr)? {
            Message::ServerFeedback(fb) if fb.camera_id == camera_id => node.absorb(fb)?,
            other => {
                return Err(RunError::Protocol(format!(
                    "expected feedback, got {other:?}"
                )))
            }
        }
        frames += 1;
    }
    write_message(
        &mut stream,
        &Message::EndOfSequence(EndOfSequence { camera_id, frames }),
    )?;
    Ok(CameraSummary {
        camera_id,
        frames,
        weights: node.weights(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CalibrationRecord;
    use crate::runtime::config::{default_rig, Mode};
    use crate::runtime::sim::run_sim;

    fn small(cams: usize, frames: u64) -> RunConfig {
        let mut cfg = RunConfig {
            frames,
            seed: 11,
            cameras: default_rig()[..cams]
                .iter()
                .map(CalibrationRecord::from)
                .collect(),
            ..RunConfig::default()
        };
        cfg.network.listen = "127.0.0.1:0".into();
        cfg.network.frame_timeout_ms = 20_000;
        cfg
    }

    fn distributed(cfg: &RunConfig) -> (RunReport, Vec<CameraSummary>) {
        let server = Server::bind(cfg).unwrap();
        let addr = server.local_addr().unwrap().to_string();
        let handle = thread::spawn(move || server.run());
        let cams: Vec<_> = cfg
            .camera_models()
            .unwrap()
            .into_iter()
            .map(|c| {
                let (cfg, addr) = (cfg.clone(), addr.clone());
                thread::spawn(move || run_camera_node(&cfg, c.camera_id, &addr))
            })
            .collect();
        let summaries = cams
            .into_iter()
            .map(|h| h.join().unwrap().unwrap())
            .collect();
        (handle.join().unwrap().unwrap(), summaries)
    }

    #[test]
    fn loopback_single_camera_matches_local_run() {
        let cfg = small(1, 10);
        let (remote, summaries) = distributed(&cfg);
        let local = run_sim(&cfg).unwrap();
        assert_eq!(remote.to_json(), local.to_json());
        assert_eq!(summaries[0].frames, 10);
    }

    #[test]
    fn local_only_modes_are_rejected() {
        let cfg = RunConfig {
            mode: Mode::Oracle,
            ..small(1, 1)
        };
        assert!(matches!(Server::bind(&cfg), Err(RunError::Config(_))));
        assert!(matches!(
            run_camera_node(&cfg, 0, "127.0.0.1:1"),
            Err(RunError::Config(_))
        ));
    }

    #[test]
    fn disconnect_reports_partial_run() {
        let cfg = small(1, 50);
        let server = Server::bind(&cfg).unwrap();
        let addr = server.local_addr().unwrap();
        let handle = thread::spawn(move || server.run());
        let mut node = CameraNode::new(&cfg, cfg.camera_models().unwrap().remove(0));
        let mut stream = TcpStream::connect(addr).unwrap();
        write_message(
            &mut stream,
            &Message::Hello(Hello {
                camera_id: 0,
                config_digest: cfg.digest(),
            }),
        )
        .unwrap();
        for scene in scene_source(&cfg).unwrap().take(3) {
            let u = node.step(&scene, None).unwrap();
            write_message(&mut stream, &Message::BlockUpdate(u)).unwrap();
            let Message::ServerFeedback(fb) = read_message(&mut stream).unwrap().unwrap() else {
                panic!("expected feedback")
            };
            node.absorb(fb).unwrap();
        }
        drop(stream);
        match handle.join().unwrap() {
            Err(RunError::ConnectionLost {
                partial: Some(p), ..
            }) => {
                assert_eq!(p.frames, 3);
                assert!(!p.complete);
            }
            other => panic!("expected a lost connection, got {other:?}"),
        }
    }

    #[test]
    fn unreachable_server_gives_up() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let mut cfg = small(1, 1);
        cfg.network.connect_attempts = 2;
        cfg.network.retry_backoff_ms = 1;
        let err = run_camera_node(&cfg, 0, &addr).unwrap_err();
        assert!(matches!(err, RunError::ConnectionLost { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_camera_times_out_frame() {
        let mut cfg = small(2, 2);
        cfg.network.frame_timeout_ms = 200;
        let server = Server::bind(&cfg).unwrap();
        let addr = server.local_addr().unwrap();
        let handle = thread::spawn(move || server.run());
        // Both cameras connect, but camera 1 never sends anything.
        let mut streams = Vec::new();
        for id in 0..2 {
            let mut s = TcpStream::connect(addr).unwrap();
            write_message(
                &mut s,
                &Message::Hello(Hello {
                    camera_id: id,
                    config_digest: cfg.digest(),
                }),
            )
            .unwrap();
            streams.push(s);
        }
        let mut node = CameraNode::new(&cfg, cfg.camera_models().unwrap().remove(0));
        for scene in scene_source(&cfg).unwrap().take(2) {
            let u = node.step(&scene, None).unwrap();
            write_message(&mut streams[0], &Message::BlockUpdate(u)).unwrap();
            let Message::ServerFeedback(fb) = read_message(&mut streams[0]).unwrap().unwrap()
            else {
                panic!("expected feedback")
            };
            assert!(fb.topk.is_empty());
            node.absorb(fb).unwrap();
        }
        for (id, s) in streams.iter_mut().enumerate() {
            write_message(
                s,
                &Message::EndOfSequence(EndOfSequence {
                    camera_id: id as u32,
                    frames: 2,
                }),
            )
            .unwrap();
        }
        // Nothing was scored, so there is no report to finalize.
        assert!(matches!(handle.join().unwrap(), Err(RunError::Metrics(_))));
    }
}
