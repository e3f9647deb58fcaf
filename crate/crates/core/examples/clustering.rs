//! Group detections from three views into identities, then keep the two
//! largest views of each person.

use mvsparse::association::{assign_cameras, cluster_detections};
use mvsparse::detector::{Detection, DetectionSet};
use mvsparse::geometry::{BBox, BlockGrid, GroundPoint};

fn det(camera_id: u32, x: f64, y: f64, height: f64) -> Detection {
    Detection {
        camera_id,
        bbox: BBox::new(
            200.0 * camera_id as f64 + 10.0 * x,
            100.0,
            0.4 * height,
            height,
        ),
        ground: GroundPoint::new(x, y),
        score: 0.9,
        stale: false,
    }
}

fn main() {
    let views = vec![
        DetectionSet {
            camera_id: 0,
            frame_id: 0,
            detections: vec![det(0, 2.0, 3.0, 80.0), det(0, 9.0, 4.0, 60.0)],
        },
        DetectionSet {
            camera_id: 1,
            frame_id: 0,
            detections: vec![det(1, 2.2, 3.1, 150.0), det(1, 9.1, 3.8, 40.0)],
        },
        DetectionSet {
            camera_id: 2,
            frame_id: 0,
            detections: vec![det(2, 1.9, 2.9, 120.0), det(2, 20.0, 1.0, 90.0)],
        },
    ];
    let clusters = cluster_detections(&views, 0.5);
    for (i, c) in clusters.iter().enumerate() {
        let cams: Vec<u32> = c.members.iter().map(|d| d.camera_id).collect();
        println!(
            "person {i}: centre ({:.2}, {:.2}), seen by {cams:?}",
            c.center.x, c.center.y
        );
    }
    let grid = BlockGrid::new(1152, 640, 128);
    let selection = assign_cameras(&clusters, 2, &grid, &[0, 1, 2]);
    for (cam, sel) in &selection.per_camera {
        println!(
            "camera {cam}: {} objects, {} blocks",
            sel.detections.len(),
            sel.mask.popcount()
        );
    }
}
