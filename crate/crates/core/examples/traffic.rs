//! Wire size and link time of block updates as more blocks are sent.

use mvsparse::geometry::BlockMask;
use mvsparse::runtime::traffic::{account_traffic, TrafficModel};
use mvsparse::runtime::wire::{decode_message, encode_message, BlockUpdate, Message};
use mvsparse::runtime::RunConfig;

fn main() {
    let cfg = RunConfig::default();
    let model = TrafficModel::from_config(&cfg);
    for n in [0, 5, 15, 30, 45] {
        let mut actions = BlockMask::zeros(5, 9);
        for idx in BlockMask::ones(5, 9).iter_set().take(n) {
            actions.set(idx, true);
        }
        let update = BlockUpdate {
            frame_id: 7,
            camera_id: 0,
            actions,
            block_bytes: cfg.block_bytes() as u32,
            payload: Vec::new(),
            detections: Vec::new(),
        };
        let bytes = account_traffic(&update, &model);
        let msg = Message::BlockUpdate(update);
        let encoded = encode_message(&msg);
        assert_eq!(decode_message(&encoded).unwrap().0, msg);
        println!(
            "{n:2} blocks: {:9.0} bytes modeled, {:7.1} ms on the link, {:4.0} ms compute",
            bytes,
            model.transmission_ms(bytes),
            model.compute_ms(n)
        );
    }
}
