//! Geometric transforms on binary rasters.
//!
//! All resampling is nearest-neighbor with inverse mapping, so every output
//! stays binary.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryImage, Pose, SherdTemplate};
use crate::math;
use crate::stage1::PoseGrid;

/// Output extent of a raster rotated about its center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RotatedExtent {
    pub width: usize,
    pub height: usize,
    /// Integer anchor pixel of the output canvas, `((width-1)/2, (height-1)/2)`
    /// rounded down. Poses place this pixel on the design.
    pub anchor_x: usize,
    pub anchor_y: usize,
}

impl RotatedExtent {
    pub fn of(width: usize, height: usize, theta: f64) -> Self {
        let (c, s) = math::cos_sin_deg(theta);
        let hw = (width - 1) as f64 / 2.0;
        let hh = (height - 1) as f64 / 2.0;
        let ex = math::abs(c) * hw + math::abs(s) * hh;
        let ey = math::abs(s) * hw + math::abs(c) * hh;
        let ow = math::ceil(2.0 * ex - 1e-9).max(0.0) as usize + 1;
        let oh = math::ceil(2.0 * ey - 1e-9).max(0.0) as usize + 1;
        Self {
            width: ow,
            height: oh,
            anchor_x: (ow - 1) / 2,
            anchor_y: (oh - 1) / 2,
        }
    }
}

/// Inverse nearest-neighbor map from a rotated canvas back to its source.
#[derive(Clone, Copy, Debug)]
pub struct RotationMap {
    pub extent: RotatedExtent,
    c: f64,
    s: f64,
    hw: f64,
    hh: f64,
    ocx: f64,
    ocy: f64,
}

impl RotationMap {
    pub fn new(width: usize, height: usize, theta: f64) -> Self {
        let extent = RotatedExtent::of(width, height, theta);
        let (c, s) = math::cos_sin_deg(theta);
        Self {
            extent,
            c,
            s,
            hw: (width - 1) as f64 / 2.0,
            hh: (height - 1) as f64 / 2.0,
            ocx: (extent.width - 1) as f64 / 2.0,
            ocy: (extent.height - 1) as f64 / 2.0,
        }
    }

    /// Source pixel sampled by canvas pixel `(u, v)`; may lie outside the
    /// source raster.
    #[inline]
    pub fn source(&self, u: usize, v: usize) -> (i64, i64) {
        let dx = u as f64 - self.ocx;
        let dy = v as f64 - self.ocy;
        (
            math::nearest(self.hw + self.c * dx - self.s * dy),
            math::nearest(self.hh + self.s * dx + self.c * dy),
        )
    }

    /// Canvas pixel nearest to where source pixel `(x, y)` lands.
    #[inline]
    pub fn forward(&self, x: usize, y: usize) -> (i64, i64) {
        let dx = x as f64 - self.hw;
        let dy = y as f64 - self.hh;
        (
            math::nearest(self.ocx + self.c * dx + self.s * dy),
            math::nearest(self.ocy - self.s * dx + self.c * dy),
        )
    }
}

/// Rotates counterclockwise (as displayed, rows growing downward) by `theta`
/// degrees about the raster center. The output canvas is the bounding box of
/// the rotated pixel centers.
pub fn rotate(image: &BinaryImage, theta: f64) -> BinaryImage {
    let map = RotationMap::new(image.width(), image.height(), theta);
    BinaryImage::from_fn(map.extent.width, map.extent.height, |u, v| {
        let (sx, sy) = map.source(u, v);
        image.get_or_zero(sx, sy) == 1
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flip {
    None,
    Horizontal,
    Vertical,
}

pub fn flip(image: &BinaryImage, mode: Flip) -> BinaryImage {
    let (w, h) = image.dims();
    match mode {
        Flip::None => image.clone(),
        Flip::Horizontal => BinaryImage::from_fn(w, h, |x, y| image.get(w - 1 - x, y) == 1),
        Flip::Vertical => BinaryImage::from_fn(w, h, |x, y| image.get(x, h - 1 - y) == 1),
    }
}

/// Radial power remap about the raster center.
///
/// An output pixel at normalized radius `r` (1 at the corner pixel centers)
/// samples the input at radius `r^exponent` along the same ray. An exponent
/// of exactly 1 returns a copy.
pub fn fisheye(image: &BinaryImage, exponent: f64) -> Result<BinaryImage> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::arg(format!("fisheye exponent {exponent} must be > 0")));
    }
    if exponent == 1.0 {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    let hw = (w - 1) as f64 / 2.0;
    let hh = (h - 1) as f64 / 2.0;
    let half_diag = math::sqrt(hw * hw + hh * hh);
    if half_diag == 0.0 {
        return Ok(image.clone());
    }
    Ok(BinaryImage::from_fn(w, h, |u, v| {
        let dx = u as f64 - hw;
        let dy = v as f64 - hh;
        let r = math::sqrt(dx * dx + dy * dy) / half_diag;
        let scale = if r == 0.0 {
            0.0
        } else {
            math::powf(r, exponent) / r
        };
        let sx = math::nearest(hw + dx * scale);
        let sy = math::nearest(hh + dy * scale);
        image.get_or_zero(sx, sy) == 1
    }))
}

/// Nearest-neighbor scaling; output pixel `u` reads source
/// `floor((u + 1/2) * W / w)`.
pub fn resize_nearest(image: &BinaryImage, width: usize, height: usize) -> Result<BinaryImage> {
    if width == 0 || height == 0 {
        return Err(Error::arg("resize target must be at least 1x1"));
    }
    let (sw, sh) = image.dims();
    if (sw, sh) == (width, height) {
        return Ok(image.clone());
    }
    Ok(BinaryImage::from_fn(width, height, |u, v| {
        let sx = ((2 * u + 1) * sw) / (2 * width);
        let sy = ((2 * v + 1) * sh) / (2 * height);
        image.get(sx, sy) == 1
    }))
}

/// Template curve and mask rotated together, `I_T^θ` and `M_T^θ`.
#[derive(Clone, Debug)]
pub struct RotatedTemplate {
    pub theta: u32,
    pub extent: RotatedExtent,
    /// Rotated curve, already restricted to the rotated mask.
    pub curve: BinaryImage,
    pub mask: BinaryImage,
}

impl RotatedTemplate {
    pub fn new(template: &SherdTemplate, theta: u32) -> Self {
        let t = theta as f64;
        let curve = rotate(template.curve(), t);
        let mask = rotate(template.mask(), t);
        Self {
            theta,
            extent: RotatedExtent::of(template.width(), template.height(), t),
            curve,
            mask,
        }
    }

    /// Design coordinate of the canvas origin when the anchor sits on `(x, y)`.
    #[inline]
    pub fn origin(&self, x: i64, y: i64) -> (i64, i64) {
        (
            x - self.extent.anchor_x as i64,
            y - self.extent.anchor_y as i64,
        )
    }

    /// `Σ_mask I_T`, the pose-independent part of the matching cost.
    pub fn foreground(&self) -> usize {
        self.curve.count_ones()
    }
}

/// Design patch under the rotated template canvas at `pose`, cleared outside
/// the rotated mask. Pixels beyond the design read as background.
pub fn crop_patch(design: &BinaryImage, pose: Pose, template: &SherdTemplate) -> Result<BinaryImage> {
    let grid = PoseGrid::new(design, template);
    if !grid.contains(pose) {
        return Err(Error::arg(format!(
            "pose {pose:?} outside the valid pose grid {grid:?}"
        )));
    }
    Ok(crop_rotated(design, pose, &RotatedTemplate::new(template, pose.theta)))
}

pub(crate) fn crop_rotated(design: &BinaryImage, pose: Pose, rot: &RotatedTemplate) -> BinaryImage {
    let (ox, oy) = rot.origin(pose.x, pose.y);
    BinaryImage::from_fn(rot.extent.width, rot.extent.height, |u, v| {
        rot.mask.get(u, v) == 1 && design.get_or_zero(ox + u as i64, oy + v as i64) == 1
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BinaryImage {
        BinaryImage::from_fn(w, h, |_, _| rng.gen_bool(p))
    }

    #[test]
    fn rotate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (w, h) in [(1, 1), (4, 7), (31, 17), (10, 10)] {
            let img = random_image(&mut rng, w, h, 0.5);
            assert_eq!(rotate(&img, 0.0), img);
            assert_eq!(rotate(&img, 360.0), img);
        }
    }

    #[test]
    fn quarter_turns_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (w, h) in [(5, 3), (6, 9), (31, 17), (8, 8)] {
            let img = random_image(&mut rng, w, h, 0.4);
            let r90 = rotate(&img, 90.0);
            assert_eq!(r90.dims(), (h, w));
            assert_eq!(rotate(&r90, 270.0), img);
            let mut full = img.clone();
            for _ in 0..4 {
                full = rotate(&full, 90.0);
            }
            assert_eq!(full, img);
            assert_eq!(rotate(&rotate(&img, 180.0), 180.0), img);
        }
    }

    #[test]
    fn rotate_ninety_moves_top_right_to_top_left() {
        // Counterclockwise as displayed: the right column becomes the top row.
        let img = BinaryImage::from_rows(&["001", "000"]).unwrap();
        let r = rotate(&img, 90.0);
        assert_eq!(r, BinaryImage::from_rows(&["10", "00", "00"]).unwrap());
    }

    #[test]
    fn rotate_matches_inverse_map_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let img = random_image(&mut rng, 31, 17, 0.5);
        let theta = 37.0f64;
        let out = rotate(&img, theta);
        // Oracle: rebuild the canvas from the rotated corner coordinates and
        // sample each output pixel by rotating its offset back.
        let rad = theta.to_radians();
        let (c, s) = (rad.cos(), rad.sin());
        let (hw, hh) = (15.0f64, 8.0f64);
        let corners = [(-hw, -hh), (hw, -hh), (-hw, hh), (hw, hh)];
        let xs: Vec<f64> = corners.iter().map(|&(x, y)| c * x + s * y).collect();
        let ys: Vec<f64> = corners.iter().map(|&(x, y)| -s * x + c * y).collect();
        let span = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo - 1e-9).ceil() as usize + 1
        };
        let (ow, oh) = (span(&xs), span(&ys));
        assert_eq!(out.dims(), (ow, oh));
        for v in 0..oh {
            for u in 0..ow {
                let dx = u as f64 - (ow - 1) as f64 / 2.0;
                let dy = v as f64 - (oh - 1) as f64 / 2.0;
                let sx = (hw + c * dx - s * dy + 0.5).floor() as i64;
                let sy = (hh + s * dx + c * dy + 0.5).floor() as i64;
                let expect = if sx >= 0 && sy >= 0 && sx < 31 && sy < 17 {
                    img.get(sx as usize, sy as usize)
                } else {
                    0
                };
                assert_eq!(out.get(u, v), expect, "pixel ({u},{v})");
            }
        }
    }

    #[test]
    fn flip_cases() {
        let img = BinaryImage::from_rows(&["10"]).unwrap();
        assert_eq!(flip(&img, Flip::Horizontal), BinaryImage::from_rows(&["01"]).unwrap());
        assert_eq!(flip(&img, Flip::None), img);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 9, 5, 0.5);
        for m in [Flip::Horizontal, Flip::Vertical] {
            assert_eq!(flip(&flip(&img, m), m), img);
        }
    }

    #[test]
    fn fisheye_identity_and_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 33, 33, 0.5);
        assert_eq!(fisheye(&img, 1.0).unwrap(), img);
        for e in [0.5, 1.25, 1.5, 1.75, 3.0] {
            let out = fisheye(&img, e).unwrap();
            assert_eq!(out.get(16, 16), img.get(16, 16));
        }
        assert!(fisheye(&img, 0.0).is_err());
        assert!(fisheye(&img, -1.0).is_err());
    }

    #[test]
    fn fisheye_matches_radial_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, 33, 33, 0.5);
        let out = fisheye(&img, 1.5).unwrap();
        let half_diag = (16.0f64 * 16.0 * 2.0).sqrt();
        for v in 0..33 {
            for u in 0..33 {
                let (dx, dy) = (u as f64 - 16.0, v as f64 - 16.0);
                let r = (dx * dx + dy * dy).sqrt();
                let (sx, sy) = if r == 0.0 {
                    (16, 16)
                } else {
                    let rn = r / half_diag;
                    let rs = rn.powf(1.5) * half_diag;
                    let ang = dy.atan2(dx);
                    (
                        (16.0 + rs * ang.cos() + 0.5).floor() as i64,
                        (16.0 + rs * ang.sin() + 0.5).floor() as i64,
                    )
                };
                assert_eq!(out.get(u, v), img.get_or_zero(sx, sy), "pixel ({u},{v})");
            }
        }
    }

    #[test]
    fn resize_cases() {
        let one = BinaryImage::from_rows(&["1"]).unwrap();
        assert_eq!(resize_nearest(&one, 3, 3).unwrap(), BinaryImage::ones(3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = random_image(&mut rng, 13, 7, 0.5);
        assert_eq!(resize_nearest(&img, 13, 7).unwrap(), img);
        let up = resize_nearest(&img, 52, 28).unwrap();
        for y in 0..28 {
            for x in 0..52 {
                assert_eq!(up.get(x, y), img.get(x / 4, y / 4));
            }
        }
        assert_eq!(resize_nearest(&up, 13, 7).unwrap(), img);
        assert!(resize_nearest(&img, 0, 3).is_err());
    }

    #[test]
    fn crop_patch_cases() {
        let t = SherdTemplate::full(BinaryImage::ones(5, 5));
        let zeros = BinaryImage::zeros(20, 20);
        let p = crop_patch(&zeros, Pose { x: 10, y: 10, theta: 33 }, &t).unwrap();
        assert_eq!(p.count_ones(), 0);
        let ones = BinaryImage::ones(20, 20);
        let p = crop_patch(&ones, Pose { x: 10, y: 10, theta: 0 }, &t).unwrap();
        assert_eq!(p, BinaryImage::ones(5, 5));
        assert!(crop_patch(&ones, Pose { x: 500, y: 10, theta: 0 }, &t).is_err());
    }
}
