//! Build the default camera rig, round-trip a ground point through each
//! view and print the calibration document.

use mvsparse::geometry::{parse_calibration, write_calibration, BlockGrid, GroundPoint};
use mvsparse::runtime::config::default_rig;

fn main() {
    let rig = default_rig();
    let p = GroundPoint::new(12.0, 5.0);
    for cam in &rig {
        let grid = BlockGrid::for_camera(cam, 128);
        match cam.project_ground_to_image(p) {
            Ok(q) if cam.in_image(q) => {
                let back = cam.project_image_to_ground(q).unwrap();
                println!(
                    "camera {}: ({:.1}, {:.1}) px, back-projection error {:.1e} m, {}x{} blocks",
                    cam.camera_id,
                    q.u,
                    q.v,
                    back.distance(&p),
                    grid.rows,
                    grid.cols
                );
            }
            _ => println!("camera {}: point not visible", cam.camera_id),
        }
    }
    let doc = write_calibration(&rig);
    assert_eq!(parse_calibration(&doc).unwrap().len(), rig.len());
    println!("\n{doc}");
}
