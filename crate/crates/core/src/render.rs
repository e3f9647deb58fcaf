//! Synthetic grayscale frames and pixel-wise motion maps.
//!
//! The background is a static texture per camera; people are painted as
//! flat two-tone rectangles from far to near, so pixel differences between
//! consecutive frames appear only where someone moved.

use crate::geometry::{BlockGrid, BlockIndex};
use crate::scene::GtView;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn background(camera_id: u32, width: usize, height: usize) -> Self {
        let mut pixels = vec![0u8; width * height];
        let salt = camera_id as usize * 7;
        for (r, row) in pixels.chunks_exact_mut(width).enumerate() {
            for (c, px) in row.iter_mut().enumerate() {
                let checker = ((c / 16 + r / 16 + salt) % 2) as u8;
                let ripple = ((c * 3 + r * 5 + salt) % 23) as u8;
                *px = 110 + checker * 24 + ripple;
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

fn person_shades(person_id: u32) -> (u8, u8) {
    let h = person_id.wrapping_mul(2_654_435_761);
    if h & 1 == 0 {
        (20 + (h >> 8) as u8 % 40, 40 + (h >> 16) as u8 % 30)
    } else {
        (195 + (h >> 8) as u8 % 40, 180 + (h >> 16) as u8 % 30)
    }
}

/// Paint the annotated people of one view over `background`.
pub fn render_view(background: &GrayFrame, gt: &GtView) -> GrayFrame {
    let mut frame = background.clone();
    let mut order: Vec<_> = gt.entries.iter().collect();
    order.sort_by(|a, b| {
        b.range
            .total_cmp(&a.range)
            .then(a.person_id.cmp(&b.person_id))
    });
    for e in order {
        let (upper, lower) = person_shades(e.person_id);
        let c0 = e.bbox.x.round().max(0.0) as usize;
        let c1 = (e.bbox.right().round() as usize).min(frame.width);
        let r0 = e.bbox.y.round().max(0.0) as usize;
        let r1 = (e.bbox.bottom().round() as usize).min(frame.height);
        let waist = r0 + (r1.saturating_sub(r0)) * 2 / 5;
        for r in r0..r1 {
            let shade = if r < waist { upper } else { lower };
            frame.pixels[r * frame.width + c0..r * frame.width + c1.max(c0)].fill(shade);
        }
    }
    frame
}

/// Absolute per-pixel difference between consecutive frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl MotionMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    pub fn between(prev: &GrayFrame, cur: &GrayFrame) -> Self {
        assert_eq!(
            (prev.width, prev.height),
            (cur.width, cur.height),
            "frame sizes differ"
        );
        let values = prev
            .pixels
            .iter()
            .zip(&cur.pixels)
            .map(|(a, b)| a.abs_diff(*b))
            .collect();
        Self {
            width: cur.width,
            height: cur.height,
            values,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.values[row * self.width + col]
    }

    /// Pixels in a block whose change exceeds `threshold`.
    pub fn count_above(&self, grid: &BlockGrid, idx: BlockIndex, threshold: u8) -> usize {
        let (cols, rows) = grid.block_pixels(idx);
        rows.map(|r| {
            self.values[r * self.width + cols.start..r * self.width + cols.end]
                .iter()
                .filter(|&&v| v > threshold)
                .count()
        })
        .sum()
    }
}
