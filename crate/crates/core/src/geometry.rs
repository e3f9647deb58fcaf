//! Camera models, ground-plane projection and block-grid arithmetic.
//!
//! World frame convention: the ground is the `z = 0` plane and every camera
//! stores its extrinsics as a world-to-camera transform, i.e. a world point
//! `X` maps to camera coordinates `R * X + t`.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point lies behind the camera")]
    BehindCamera,
    #[error("viewing ray is parallel to the ground plane or points away from it")]
    RayParallelToGround,
    #[error("invalid camera {camera_id}: {reason}")]
    InvalidCamera { camera_id: u32, reason: String },
    #[error("calibration file: {0}")]
    Calibration(String),
}

/// Point on the `z = 0` plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Arithmetic mean; `None` for an empty iterator.
    pub fn mean<'a>(points: impl IntoIterator<Item = &'a GroundPoint>) -> Option<GroundPoint> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            sx += p.x;
            sy += p.y;
            n += 1;
        }
        (n > 0).then(|| GroundPoint::new(sx / n as f64, sy / n as f64))
    }
}

/// Pixel coordinates, `u` to the right and `v` down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Axis-aligned pixel box stored as top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Bottom-centre of the box, where a standing person touches the ground.
    pub fn foot(&self) -> ImagePoint {
        ImagePoint::new(self.x + 0.5 * self.w, self.y + self.h)
    }

    pub fn center(&self) -> ImagePoint {
        ImagePoint::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    /// Overlapping region, `None` unless the overlap has positive area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::from_corners(x0, y0, x1, y1))
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clip to `[0, width) x [0, height)`; `None` when nothing remains.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<BBox> {
        self.intersection(&BBox::new(0.0, 0.0, width, height))
    }

    /// Whether the pixel `(col, row)` has its centre inside the box.
    #[inline]
    pub fn contains_pixel(&self, col: usize, row: usize) -> bool {
        let cx = col as f64 + 0.5;
        let cy = row as f64 + 0.5;
        cx >= self.x && cx < self.right() && cy >= self.y && cy < self.bottom()
    }
}

/// Exact area of the union of a set of boxes (coordinate compression).
pub fn union_area(boxes: &[BBox]) -> f64 {
    let boxes: Vec<&BBox> = boxes.iter().filter(|b| b.area() > 0.0).collect();
    match boxes.len() {
        0 => return 0.0,
        1 => return boxes[0].area(),
        _ => {}
    }
    let mut xs: Vec<f64> = boxes.iter().flat_map(|b| [b.x, b.right()]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut total = 0.0;
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(boxes.len());
    for pair in xs.windows(2) {
        let (xa, xb) = (pair[0], pair[1]);
        spans.clear();
        spans.extend(
            boxes
                .iter()
                .filter(|b| b.x <= xa && b.right() >= xb)
                .map(|b| (b.y, b.bottom())),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let (mut lo, mut hi) = spans[0];
        for &(s, e) in &spans[1..] {
            if s > hi {
                covered += hi - lo;
                lo = s;
                hi = e;
            } else if e > hi {
                hi = e;
            }
        }
        covered += hi - lo;
        total += covered * (xb - xa);
    }
    total
}

/// Pinhole camera without lens distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub camera_id: u32,
    pub intrinsics: Matrix3<f64>,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation, meters.
    pub translation: Vector3<f64>,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
    intrinsics_inv: Matrix3<f64>,
}

impl CameraModel {
    pub fn new(
        camera_id: u32,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self, GeometryError> {
        let invalid = |reason: &str| GeometryError::InvalidCamera {
            camera_id,
            reason: reason.to_string(),
        };
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(invalid("image size must be positive"));
        }
        let intrinsics_inv = intrinsics
            .try_inverse()
            .ok_or_else(|| invalid("intrinsics are singular"))?;
        let ortho = rotation.transpose() * rotation - Matrix3::identity();
        if ortho.abs().max() > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(invalid("rotation is not a proper orthonormal matrix"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(invalid("translation is not finite"));
        }
        Ok(Self {
            camera_id,
            intrinsics,
            rotation,
            translation,
            image_size,
            intrinsics_inv,
        })
    }

    /// Camera at `eye` looking at `target` with square pixels and the
    /// principal point at the image centre. World `z` is up.
    pub fn look_at(
        camera_id: u32,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        focal_px: f64,
        image_size: (u32, u32),
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let up = Vector3::z();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(GeometryError::InvalidCamera {
                camera_id,
                reason: "look direction is vertical".into(),
            });
        }
        let right = right.normalize();
        // Image v grows downward.
        let down = forward.cross(&right);
        let rotation =
            Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let intrinsics = Matrix3::new(
            focal_px,
            0.0,
            image_size.0 as f64 / 2.0,
            0.0,
            focal_px,
            image_size.1 as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self::new(camera_id, intrinsics, rotation, translation, image_size)
    }

    pub fn width(&self) -> f64 {
        self.image_size.0 as f64
    }

    pub fn height(&self) -> f64 {
        self.image_size.1 as f64
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, world: &Vector3<f64>) -> f64 {
        (self.rotation * world + self.translation).z
    }

    pub fn project_world(&self, world: &Vector3<f64>) -> Result<ImagePoint, GeometryError> {
        let cam = self.rotation * world + self.translation;
        if cam.z <= 0.0 {
            return Err(GeometryError::BehindCamera);
        }
        let p = self.intrinsics * cam;
        Ok(ImagePoint::new(p.x / p.z, p.y / p.z))
    }

    pub fn project_ground_to_image(&self, p: GroundPoint) -> Result<ImagePoint, GeometryError> {
        self.project_world(&Vector3::new(p.x, p.y, 0.0))
    }

    /// Intersect the viewing ray through `q` with the ground plane.
    pub fn project_image_to_ground(&self, q: ImagePoint) -> Result<GroundPoint, GeometryError> {
        let ray_cam = self.intrinsics_inv * Vector3::new(q.u, q.v, 1.0);
        let dir = self.rotation.transpose() * ray_cam;
        let origin = self.center();
        if dir.z.abs() < 1e-12 {
            return Err(GeometryError::RayParallelToGround);
        }
        let s = -origin.z / dir.z;
        if s <= 0.0 {
            return Err(GeometryError::RayParallelToGround);
        }
        let hit = origin + dir * s;
        Ok(GroundPoint::new(hit.x, hit.y))
    }

    pub fn in_image(&self, q: ImagePoint) -> bool {
        q.u >= 0.0 && q.v >= 0.0 && q.u < self.width() && q.v < self.height()
    }
}

/// Row/column address of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockIndex {
    pub row: usize,
    pub col: usize,
}

/// Tiling of an image into `block_size` squares; edge blocks may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub block_size: u32,
    pub rows: usize,
    pub cols: usize,
    pub width: u32,
    pub height: u32,
}

impl BlockGrid {
    pub fn new(width: u32, height: u32, block_size: u32) -> Self {
        assert!(
            block_size > 0 && width > 0 && height > 0,
            "grid dimensions must be positive"
        );
        Self {
            block_size,
            rows: height.div_ceil(block_size) as usize,
            cols: width.div_ceil(block_size) as usize,
            width,
            height,
        }
    }

    pub fn for_camera(cam: &CameraModel, block_size: u32) -> Self {
        Self::new(cam.image_size.0, cam.image_size.1, block_size)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, idx: BlockIndex) -> usize {
        idx.row * self.cols + idx.col
    }

    pub fn unflat(&self, i: usize) -> BlockIndex {
        BlockIndex {
            row: i / self.cols,
            col: i % self.cols,
        }
    }

    /// Pixel extent of a block, clipped to the image.
    pub fn block_rect(&self, idx: BlockIndex) -> BBox {
        let b = self.block_size as f64;
        let x0 = idx.col as f64 * b;
        let y0 = idx.row as f64 * b;
        BBox::from_corners(
            x0,
            y0,
            (x0 + b).min(self.width as f64),
            (y0 + b).min(self.height as f64),
        )
    }

    /// Integer pixel ranges `(cols, rows)` covered by a block.
    pub fn block_pixels(
        &self,
        idx: BlockIndex,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let b = self.block_size as usize;
        let c0 = idx.col * b;
        let r0 = idx.row * b;
        (
            c0..(c0 + b).min(self.width as usize),
            r0..(r0 + b).min(self.height as usize),
        )
    }

    /// Blocks whose pixel extent overlaps `bbox` with positive area.
    ///
    /// The box is clamped to the image first; a degenerate remainder still
    /// yields the block containing it, so the result is never empty.
    pub fn blocks_for_bbox(&self, bbox: &BBox) -> Vec<BlockIndex> {
        let b = self.block_size as f64;
        let (w, h) = (self.width as f64, self.height as f64);
        let x0 = bbox.x.clamp(0.0, w);
        let x1 = bbox.right().clamp(0.0, w);
        let y0 = bbox.y.clamp(0.0, h);
        let y1 = bbox.bottom().clamp(0.0, h);
        let span = |lo: f64, hi: f64, n: usize| {
            let first = ((lo / b).floor() as usize).min(n - 1);
            let last = if hi > lo {
                ((hi / b).ceil() as usize).saturating_sub(1).min(n - 1)
            } else {
                first
            };
            first..=last.max(first)
        };
        let cols = span(x0, x1, self.cols);
        let rows = span(y0, y1, self.rows);
        rows.flat_map(|row| cols.clone().map(move |col| BlockIndex { row, col }))
            .collect()
    }

    pub fn mask_for_boxes<'a>(&self, boxes: impl IntoIterator<Item = &'a BBox>) -> BlockMask {
        let mut mask = BlockMask::zeros(self.rows, self.cols);
        for b in boxes {
            for idx in self.blocks_for_bbox(b) {
                mask.set(idx, true);
            }
        }
        mask
    }
}

/// Binary `rows x cols` grid over blocks, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BlockMask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn for_grid(grid: &BlockGrid, value: bool) -> Self {
        if value {
            Self::ones(grid.rows, grid.cols)
        } else {
            Self::zeros(grid.rows, grid.cols)
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == rows * cols).then_some(Self { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn matches_grid(&self, grid: &BlockGrid) -> bool {
        self.rows == grid.rows && self.cols == grid.cols
    }

    pub fn get(&self, idx: BlockIndex) -> bool {
        self.bits[idx.row * self.cols + idx.col]
    }

    pub fn set(&mut self, idx: BlockIndex, value: bool) {
        self.bits[idx.row * self.cols + idx.col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &BlockMask) {
        assert_eq!(self.bits.len(), other.bits.len(), "mask dimensions differ");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn is_subset_of(&self, other: &BlockMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    /// Indices of set blocks in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = BlockIndex> + '_ {
        let cols = self.cols;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| BlockIndex {
                row: i / cols,
                col: i % cols,
            })
    }
}

/// One camera entry of a calibration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub camera_id: u32,
    /// Row-major 3x3.
    pub intrinsics: [f64; 9],
    /// Row-major 3x3, world-to-camera.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    /// `[width, height]` in pixels.
    pub image_size: [u32; 2],
}

impl CalibrationRecord {
    pub fn to_camera(&self) -> Result<CameraModel, GeometryError> {
        CameraModel::new(
            self.camera_id,
            Matrix3::from_row_slice(&self.intrinsics),
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from_column_slice(&self.translation),
            (self.image_size[0], self.image_size[1]),
        )
    }
}

impl From<&CameraModel> for CalibrationRecord {
    fn from(cam: &CameraModel) -> Self {
        let row_major = |m: &Matrix3<f64>| {
            let mut out = [0.0; 9];
            for r in 0..3 {
                for c in 0..3 {
                    out[r * 3 + c] = m[(r, c)];
                }
            }
            out
        };
        Self {
            camera_id: cam.camera_id,
            intrinsics: row_major(&cam.intrinsics),
            rotation: row_major(&cam.rotation),
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            image_size: [cam.image_size.0, cam.image_size.1],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct CalibrationDocument {
    #[serde(default)]
    cameras: Vec<CalibrationRecord>,
}

/// Parse a TOML calibration document holding a `[[cameras]]` array.
pub fn parse_calibration(text: &str) -> Result<Vec<CameraModel>, GeometryError> {
    let doc: CalibrationDocument =
        toml::from_str(text).map_err(|e| GeometryError::Calibration(e.to_string()))?;
    doc.cameras
        .iter()
        .map(CalibrationRecord::to_camera)
        .collect()
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<Vec<CameraModel>, GeometryError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| GeometryError::Calibration(format!("{}: {e}", path.as_ref().display())))?;
    parse_calibration(&text)
}

pub fn write_calibration(cameras: &[CameraModel]) -> String {
    let doc = CalibrationDocument {
        cameras: cameras.iter().map(CalibrationRecord::from).collect(),
    };
    toml::to_string(&doc).expect("calibration records always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simple_camera(tz: f64) -> CameraModel {
        CameraModel::new(
            0,
            Matrix3::identity(),
            Matrix3::identity(),
            Vector3::new(0.0, 0.0, tz),
            (640, 480),
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        // Identity rotation looks along world +z; the ground point sits 10 m ahead.
        let cam = simple_camera(10.0);
        let q = cam
            .project_ground_to_image(GroundPoint::new(0.0, 0.0))
            .unwrap();
        assert_abs_diff_eq!(q.u, 0.0);
        assert_abs_diff_eq!(q.v, 0.0);
        let q = cam
            .project_ground_to_image(GroundPoint::new(1.0, 0.0))
            .unwrap();
        assert_abs_diff_eq!(q.u, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(q.v, 0.0);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cam = simple_camera(-1.0);
        assert_eq!(
            cam.project_ground_to_image(GroundPoint::new(0.0, 0.0)),
            Err(GeometryError::BehindCamera)
        );
    }

    #[test]
    fn horizontal_camera_never_hits_ground_at_horizon() {
        let cam = CameraModel::look_at(
            0,
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 10.0, 2.0),
            500.0,
            (640, 480),
        )
        .unwrap();
        // The principal row is the horizon for a level camera.
        assert_eq!(
            cam.project_image_to_ground(ImagePoint::new(320.0, 240.0)),
            Err(GeometryError::RayParallelToGround)
        );
        // Above the horizon points away from the ground.
        assert_eq!(
            cam.project_image_to_ground(ImagePoint::new(320.0, 100.0)),
            Err(GeometryError::RayParallelToGround)
        );
    }

    #[test]
    fn pitched_camera_center_pixel_hits_ground_at_height() {
        // 5 m high, pitched 45 degrees down: the optical axis meets the
        // ground 5 m in front of the footprint.
        let cam = CameraModel::look_at(
            3,
            Vector3::new(1.0, 2.0, 5.0),
            Vector3::new(1.0, 7.0, 0.0),
            800.0,
            (1152, 640),
        )
        .unwrap();
        let g = cam
            .project_image_to_ground(ImagePoint::new(576.0, 320.0))
            .unwrap();
        assert_abs_diff_eq!(g.x, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g.y, 7.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_rotation_and_singular_intrinsics() {
        let bad_r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(
            CameraModel::new(0, Matrix3::identity(), bad_r, Vector3::zeros(), (10, 10)).is_err()
        );
        assert!(CameraModel::new(
            0,
            Matrix3::zeros(),
            Matrix3::identity(),
            Vector3::zeros(),
            (10, 10)
        )
        .is_err());
        assert!(CameraModel::new(
            0,
            Matrix3::identity(),
            Matrix3::identity(),
            Vector3::zeros(),
            (0, 10)
        )
        .is_err());
    }

    #[test]
    fn grid_dimensions() {
        let g = BlockGrid::new(1152, 640, 128);
        assert_eq!((g.rows, g.cols, g.len()), (5, 9, 45));
        let g = BlockGrid::new(1000, 300, 128);
        assert_eq!((g.rows, g.cols), (3, 8));
        assert_eq!(
            g.block_rect(BlockIndex { row: 2, col: 7 }),
            BBox::from_corners(896.0, 256.0, 1000.0, 300.0)
        );
    }

    #[test]
    fn blocks_for_bbox_examples() {
        let g = BlockGrid::new(1152, 640, 128);
        assert_eq!(
            g.blocks_for_bbox(&BBox::new(0.0, 0.0, 127.0, 127.0)),
            vec![BlockIndex { row: 0, col: 0 }]
        );
        let blocks = g.blocks_for_bbox(&BBox::new(100.0, 100.0, 101.0, 201.0));
        assert_eq!(blocks.len(), 6);
        assert!(blocks.iter().all(|b| b.row <= 2 && b.col <= 1));
        assert_eq!(
            g.blocks_for_bbox(&BBox::new(0.0, 0.0, 1152.0, 640.0)).len(),
            45
        );
        // Exactly touching a boundary does not spill into the next block.
        assert_eq!(
            g.blocks_for_bbox(&BBox::new(0.0, 0.0, 128.0, 128.0)).len(),
            1
        );
        // Partially outside the image is clamped.
        assert_eq!(
            g.blocks_for_bbox(&BBox::new(-50.0, 600.0, 100.0, 100.0))
                .len(),
            1
        );
    }

    #[test]
    fn union_area_handles_overlap_and_nesting() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(5.0, 5.0, 10.0, 10.0);
        let c = BBox::new(1.0, 1.0, 2.0, 2.0);
        assert_abs_diff_eq!(union_area(&[a, b]), 175.0);
        assert_abs_diff_eq!(union_area(&[a, c]), 100.0);
        assert_abs_diff_eq!(union_area(&[]), 0.0);
    }

    #[test]
    fn calibration_round_trip() {
        let cam = CameraModel::look_at(
            4,
            Vector3::new(-3.0, -4.0, 6.0),
            Vector3::new(10.0, 6.0, 0.0),
            700.0,
            (1152, 640),
        )
        .unwrap();
        let text = write_calibration(std::slice::from_ref(&cam));
        let back = parse_calibration(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].camera_id, 4);
        assert!((back[0].rotation - cam.rotation).abs().max() < 1e-15);
        assert!((back[0].translation - cam.translation).abs().max() < 1e-12);
    }
}
