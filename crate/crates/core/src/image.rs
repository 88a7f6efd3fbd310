//! Binary rasters, sherd templates, poses and the design catalog.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major binary raster. `0` is background, `1` is curve.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("empty extent {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Image(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|&p| p > 1) {
            return Err(Error::Image(format!("pixel {i} has value {}", pixels[i])));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// All-background image.
    ///
    /// Panics when either dimension is zero.
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "empty image extent");
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        let mut img = Self::zeros(width, height);
        img.pixels.fill(1);
        img
    }

    /// Builds an image from a predicate over `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut img = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                img.pixels[y * width + x] = f(x, y) as u8;
            }
        }
        img
    }

    /// Parses rows of `0`/`1` characters; whitespace inside rows is ignored.
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let parsed: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| {
                r.chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| if c == '1' { 1 } else { 0 })
                    .collect()
            })
            .collect();
        let width = parsed.first().map_or(0, Vec::len);
        if parsed.iter().any(|r| r.len() != width) {
            return Err(Error::Image("ragged rows".into()));
        }
        Self::new(width, height, parsed.concat())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels, `width * height`.
    #[inline]
    pub fn size(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Reads a pixel, treating everything outside the raster as background.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64) -> u8 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.pixels[y * self.width + x] = value as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    pub fn density(&self) -> f64 {
        self.count_ones() as f64 / self.size() as f64
    }

    /// Pixel-wise AND.
    pub fn and(&self, other: &BinaryImage) -> BinaryImage {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch");
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a & b)
            .collect();
        BinaryImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Number of differing pixels.
    pub fn hamming(&self, other: &BinaryImage) -> usize {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .filter(|(a, b)| a != b)
            .count()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Coordinates of every foreground pixel in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == 1)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryImage {}x{}", self.width, self.height)?;
        if self.size() <= 4096 {
            for row in self.pixels.chunks(self.width) {
                for &p in row {
                    f.write_str(if p == 1 { "#" } else { "." })?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Curve raster `I_T` with its validity mask `M_T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SherdTemplate {
    curve: BinaryImage,
    mask: BinaryImage,
}

impl SherdTemplate {
    pub fn new(curve: BinaryImage, mask: BinaryImage) -> Result<Self> {
        if curve.dims() != mask.dims() {
            return Err(Error::Image(format!(
                "curve {:?} and mask {:?} differ in size",
                curve.dims(),
                mask.dims()
            )));
        }
        if curve
            .pixels()
            .iter()
            .zip(mask.pixels())
            .any(|(&c, &m)| c > m)
        {
            return Err(Error::Image("curve pixel outside mask".into()));
        }
        if mask.count_ones() == 0 {
            return Err(Error::Image("mask has no foreground".into()));
        }
        Ok(Self { curve, mask })
    }

    /// Builds a template, clearing curve pixels that fall outside the mask.
    pub fn new_masked(curve: BinaryImage, mask: BinaryImage) -> Result<Self> {
        if curve.dims() != mask.dims() {
            return Err(Error::Image("curve and mask differ in size".into()));
        }
        let curve = curve.and(&mask);
        Self::new(curve, mask)
    }

    /// Template whose mask covers the whole raster.
    pub fn full(curve: BinaryImage) -> Self {
        let mask = BinaryImage::ones(curve.width(), curve.height());
        Self { curve, mask }
    }

    #[inline]
    pub fn curve(&self) -> &BinaryImage {
        &self.curve
    }

    #[inline]
    pub fn mask(&self) -> &BinaryImage {
        &self.mask
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.curve.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.curve.height()
    }
}

/// Placement of the rotated template canvas on a design.
///
/// `x`, `y` are the design pixel under the canvas anchor pixel and `theta`
/// is a counterclockwise rotation in integer degrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub x: i64,
    pub y: i64,
    pub theta: u32,
}

impl Pose {
    pub fn new(x: i64, y: i64, theta: u32) -> Result<Self> {
        if theta >= 360 {
            return Err(Error::arg(format!("theta {theta} outside [0, 360)")));
        }
        Ok(Self { x, y, theta })
    }
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct DesignId(pub u32);

impl fmt::Display for DesignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{:03}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Design {
    pub id: DesignId,
    pub image: BinaryImage,
}

/// Designs kept sorted by id, ids unique.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Catalog {
    designs: Vec<Design>,
}

impl Catalog {
    pub fn new(mut designs: Vec<Design>) -> Result<Self> {
        designs.sort_by_key(|d| d.id);
        if designs.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::arg("duplicate design id"));
        }
        Ok(Self { designs })
    }

    pub fn designs(&self) -> &[Design] {
        &self.designs
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn get(&self, id: DesignId) -> Option<&Design> {
        self.designs
            .binary_search_by_key(&id, |d| d.id)
            .ok()
            .map(|i| &self.designs[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = DesignId> + '_ {
        self.designs.iter().map(|d| d.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_and_empty() {
        assert!(BinaryImage::new(2, 1, vec![0, 2]).is_err());
        assert!(BinaryImage::new(0, 0, vec![]).is_err());
        assert!(BinaryImage::new(2, 2, vec![0, 1, 1]).is_err());
    }

    #[test]
    fn template_invariants() {
        let curve = BinaryImage::from_rows(&["11", "00"]).unwrap();
        let mask = BinaryImage::from_rows(&["10", "11"]).unwrap();
        assert!(SherdTemplate::new(curve.clone(), mask.clone()).is_err());
        let t = SherdTemplate::new_masked(curve, mask).unwrap();
        assert_eq!(t.curve().pixels(), &[1, 0, 0, 0]);
        let empty = BinaryImage::zeros(2, 2);
        assert!(SherdTemplate::new(empty.clone(), empty).is_err());
    }

    #[test]
    fn catalog_sorted_and_unique() {
        let d = |i| Design {
            id: DesignId(i),
            image: BinaryImage::zeros(1, 1),
        };
        let c = Catalog::new(vec![d(3), d(1), d(2)]).unwrap();
        assert_eq!(c.ids().collect::<Vec<_>>(), vec![DesignId(1), DesignId(2), DesignId(3)]);
        assert!(c.get(DesignId(2)).is_some());
        assert!(Catalog::new(vec![d(1), d(1)]).is_err());
    }

    #[test]
    fn pose_theta_range() {
        assert!(Pose::new(0, 0, 360).is_err());
        assert!(Pose::new(-3, 4, 359).is_ok());
    }
}
