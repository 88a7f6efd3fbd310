//! Synthetic designs and degraded sherds with recorded ground truth.
//!
//! Designs are unions of stroked curve families. A sherd is the design
//! region under a random polygonal mask at a random pose, later degraded by
//! deformation, missing blobs, speckle and boundary noise.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryImage, Design, DesignId, Pose, SherdTemplate};
use crate::math;
use crate::transform::{fisheye, RotationMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationLevel {
    None,
    Mild,
    Heavy,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub level: DegradationLevel,
    /// Missing-curve blobs per sherd.
    pub dropout_blobs: usize,
    /// Blob radius range in pixels.
    pub dropout_radius: (f64, f64),
    /// Per-pixel flip probability inside the mask.
    pub speckle_rate: f64,
    pub fisheye_exponent_range: (f64, f64),
    /// Width of the band along the mask edge whose pixels are randomized.
    pub boundary_erode_px: usize,
}

impl DegradationSpec {
    pub fn none() -> Self {
        Self {
            level: DegradationLevel::None,
            dropout_blobs: 0,
            dropout_radius: (0.0, 0.0),
            speckle_rate: 0.0,
            fisheye_exponent_range: (1.0, 1.0),
            boundary_erode_px: 0,
        }
    }

    pub fn mild() -> Self {
        Self {
            level: DegradationLevel::Mild,
            dropout_blobs: 1,
            dropout_radius: (3.0, 6.0),
            speckle_rate: 0.01,
            fisheye_exponent_range: (1.0, 1.1),
            boundary_erode_px: 1,
        }
    }

    pub fn heavy() -> Self {
        Self {
            level: DegradationLevel::Heavy,
            dropout_blobs: 3,
            dropout_radius: (5.0, 10.0),
            speckle_rate: 0.06,
            fisheye_exponent_range: (1.0, 1.12),
            boundary_erode_px: 3,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Self::none()),
            "mild" => Some(Self::mild()),
            "heavy" => Some(Self::heavy()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.speckle_rate) {
            return Err(Error::Config("speckle rate outside [0, 1]".into()));
        }
        let (lo, hi) = self.fisheye_exponent_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config("fisheye range must be a positive interval".into()));
        }
        let (rlo, rhi) = self.dropout_radius;
        if !(rlo >= 0.0 && rhi >= rlo && rhi.is_finite()) {
            return Err(Error::Config("dropout radius range invalid".into()));
        }
        Ok(())
    }
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self::none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignStyle {
    Waves,
    Arcs,
    Lattice,
    Mixed,
}

impl DesignStyle {
    pub const ALL: [DesignStyle; 4] = [Self::Waves, Self::Arcs, Self::Lattice, Self::Mixed];
}

/// Deterministic 64-bit mixer for deriving per-record seeds.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut z = master
        ^ tag.wrapping_mul(0xd6e8_feb8_6659_fd93)
        ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug)]
enum Element {
    Line { nx: f64, ny: f64, offset: f64, spacing: f64 },
    Ring { cx: f64, cy: f64, r: f64 },
    Wave { ux: f64, uy: f64, offset: f64, amp: f64, k: f64, phase: f64 },
}

impl Element {
    /// Approximate distance from `(x, y)` to the curve.
    fn distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Element::Line {
                nx,
                ny,
                offset,
                spacing,
            } => {
                let t = x * nx + y * ny - offset;
                let m = t - math::floor(t / spacing) * spacing;
                m.min(spacing - m)
            }
            Element::Ring { cx, cy, r } => {
                let d = math::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
                math::abs(d - r)
            }
            Element::Wave {
                ux,
                uy,
                offset,
                amp,
                k,
                phase,
            } => {
                let t = x * ux + y * uy;
                let n = -x * uy + y * ux;
                let arg = k * t + phase;
                let slope = amp * k * math::cos(arg);
                math::abs(n - offset - amp * math::sin(arg)) / math::sqrt(1.0 + slope * slope)
            }
        }
    }
}

fn wave_family(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Vec<Element> {
    let angle = rng.gen_range(0.0..PI);
    let (ux, uy) = (math::cos(angle), math::sin(angle));
    let gap = rng.gen_range(14.0..24.0);
    let amp = rng.gen_range(3.0..10.0);
    let k = 2.0 * PI / rng.gen_range(30.0..80.0);
    let span = math::sqrt(w * w + h * h);
    let start = -span + rng.gen_range(0.0..gap);
    let mut out = Vec::new();
    let mut offset = start;
    while offset < span {
        out.push(Element::Wave {
            ux,
            uy,
            offset,
            amp: amp * rng.gen_range(0.7..1.3),
            k,
            phase: rng.gen_range(0.0..0.8),
        });
        offset += gap;
    }
    out
}

fn ring_family(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Vec<Element> {
    let cx = rng.gen_range(0.0..w);
    let cy = rng.gen_range(0.0..h);
    let step = rng.gen_range(8.0..14.0);
    let count = rng.gen_range(3..7);
    let r0 = rng.gen_range(4.0..12.0);
    (0..count)
        .map(|i| Element::Ring {
            cx,
            cy,
            r: r0 + i as f64 * step,
        })
        .collect()
}

fn line_family(rng: &mut ChaCha8Rng) -> Element {
    let angle = rng.gen_range(0.0..PI);
    Element::Line {
        nx: math::cos(angle),
        ny: math::sin(angle),
        offset: rng.gen_range(0.0..30.0),
        spacing: rng.gen_range(14.0..28.0),
    }
}

fn design_elements(rng: &mut ChaCha8Rng, style: DesignStyle, w: f64, h: f64) -> Vec<Element> {
    match style {
        DesignStyle::Waves => {
            let mut e = wave_family(rng, w, h);
            if rng.gen_bool(0.5) {
                e.extend(wave_family(rng, w, h));
            }
            e
        }
        DesignStyle::Arcs => (0..rng.gen_range(2..5))
            .flat_map(|_| ring_family(rng, w, h))
            .collect(),
        DesignStyle::Lattice => (0..rng.gen_range(2..4)).map(|_| line_family(rng)).collect(),
        DesignStyle::Mixed => {
            let mut e = wave_family(rng, w, h);
            for _ in 0..rng.gen_range(1..3) {
                e.extend(ring_family(rng, w, h));
            }
            e
        }
    }
}

pub const DENSITY_RANGE: (f64, f64) = (0.05, 0.5);

/// Renders a design; retries with perturbed seeds until the foreground
/// density lies in [`DENSITY_RANGE`].
pub fn gen_design(seed: u64, width: usize, height: usize, style: DesignStyle, stroke_px: usize) -> Result<BinaryImage> {
    if width < 64 || height < 64 {
        return Err(Error::Generation(format!("design {width}x{height} smaller than 64x64")));
    }
    if stroke_px == 0 {
        return Err(Error::Generation("stroke must be at least 1 px".into()));
    }
    let half = stroke_px as f64 / 2.0;
    for attempt in 0..=10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, attempt));
        let elements = design_elements(&mut rng, style, width as f64, height as f64);
        let img = BinaryImage::from_fn(width, height, |x, y| {
            let (px, py) = (x as f64, y as f64);
            elements.iter().any(|e| e.distance(px, py) <= half)
        });
        let d = img.density();
        if d >= DENSITY_RANGE.0 && d <= DENSITY_RANGE.1 {
            return Ok(img);
        }
    }
    Err(Error::Generation(format!(
        "design density outside {DENSITY_RANGE:?} after 10 retries (seed {seed})"
    )))
}

/// Fills the polygon through `vertices` (even-odd rule at pixel centers).
fn fill_polygon(width: usize, height: usize, vertices: &[(f64, f64)]) -> BinaryImage {
    BinaryImage::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64, y as f64);
        let mut inside = false;
        let n = vertices.len();
        for i in 0..n {
            let (xi, yi) = vertices[i];
            let (xj, yj) = vertices[(i + n - 1) % n];
            if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                inside = !inside;
            }
        }
        inside
    })
}

/// Random 5–9 vertex polygon on a jittered ellipse filling most of the
/// canvas, resampled while it covers less than 10% (or more than 95%) of it.
pub fn gen_mask(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Result<BinaryImage> {
    let cx = (width - 1) as f64 / 2.0;
    let cy = (height - 1) as f64 / 2.0;
    for _ in 0..=10 {
        let n = rng.gen_range(5..=9);
        let verts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let a = 2.0 * PI * (i as f64 + rng.gen_range(-0.3..0.3)) / n as f64;
                let rx = cx * rng.gen_range(0.75..1.05);
                let ry = cy * rng.gen_range(0.75..1.05);
                (cx + rx * math::cos(a), cy + ry * math::sin(a))
            })
            .collect();
        let mask = fill_polygon(width, height, &verts);
        let frac = mask.density();
        if frac > 0.1 && frac < 0.95 {
            return Ok(mask);
        }
    }
    Err(Error::Generation("degenerate sherd polygon after 10 retries".into()))
}

/// Ground truth and provenance of one generated sherd.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SherdRecord {
    pub id: String,
    pub curve_file: String,
    pub mask_file: String,
    pub design_id: DesignId,
    pub truth_pose: Pose,
    pub degradation: DegradationSpec,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct GeneratedSherd {
    pub template: SherdTemplate,
    /// Curve before any degradation.
    pub clean_curve: BinaryImage,
    pub truth_pose: Pose,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SherdSize {
    pub min: usize,
    pub max: usize,
}

/// Cuts a sherd out of `design` at a random pose and degrades it.
///
/// Truth angles are multiples of `theta_step`. The canvas rotated to the
/// truth pose lies entirely on the design. Mask pixels whose duplicated
/// rotation samples would disagree are cleared, which makes the clean sherd
/// reproduce the design exactly (`φ = 0`) at the truth pose.
pub fn gen_sherd(
    design: &BinaryImage,
    seed: u64,
    size: SherdSize,
    degradation: &DegradationSpec,
    theta_step: u32,
) -> Result<GeneratedSherd> {
    degradation.validate()?;
    if size.min == 0 || size.max < size.min {
        return Err(Error::Generation("invalid sherd size range".into()));
    }
    if theta_step == 0 || 360 % theta_step != 0 {
        return Err(Error::Generation(format!("theta step {theta_step} must divide 360")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(size.min..=size.max);
    let h = rng.gen_range(size.min..=size.max);
    let base_mask = gen_mask(&mut rng, w, h)?;

    const POSE_TRIES: usize = 50;
    let mut clean = None;
    for _ in 0..POSE_TRIES {
        let theta = theta_step * rng.gen_range(0..360 / theta_step);
        let map = RotationMap::new(w, h, theta as f64);
        let ext = map.extent;
        if ext.width > design.width() || ext.height > design.height() {
            return Err(Error::Generation(format!(
                "sherd canvas {}x{} does not fit the design",
                ext.width, ext.height
            )));
        }
        let x = rng.gen_range(ext.anchor_x..=design.width() - ext.width + ext.anchor_x) as i64;
        let y = rng.gen_range(ext.anchor_y..=design.height() - ext.height + ext.anchor_y) as i64;
        let pose = Pose { x, y, theta };
        let (curve, mask) = exact_crop(design, &base_mask, &map, pose);
        let fg = curve.count_ones() as f64 / mask.count_ones().max(1) as f64;
        if mask.count_ones() > 0 && fg >= 0.05 {
            clean = Some((curve, mask, pose));
            break;
        }
    }
    let (clean_curve, mask, truth_pose) =
        clean.ok_or_else(|| Error::Generation("no pose with enough curve content".into()))?;

    let curve = degrade(&clean_curve, &mask, degradation, &mut rng)?;
    Ok(GeneratedSherd {
        template: SherdTemplate::new(curve, mask)?,
        clean_curve,
        truth_pose,
        seed,
    })
}

/// Template-frame curve and mask whose rotation by `pose.theta` matches the
/// design exactly under the mask.
fn exact_crop(design: &BinaryImage, base_mask: &BinaryImage, map: &RotationMap, pose: Pose) -> (BinaryImage, BinaryImage) {
    const UNSEEN: u8 = 2;
    const CONFLICT: u8 = 3;
    let (w, h) = base_mask.dims();
    let ext = map.extent;
    let ox = pose.x - ext.anchor_x as i64;
    let oy = pose.y - ext.anchor_y as i64;
    let mut state = vec![UNSEEN; w * h];
    for v in 0..ext.height {
        for u in 0..ext.width {
            let (sx, sy) = map.source(u, v);
            if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                continue;
            }
            let (sx, sy) = (sx as usize, sy as usize);
            if base_mask.get(sx, sy) == 0 {
                continue;
            }
            let d = design.get_or_zero(ox + u as i64, oy + v as i64);
            let s = &mut state[sy * w + sx];
            *s = match *s {
                UNSEEN => d,
                CONFLICT => CONFLICT,
                prev if prev == d => prev,
                _ => CONFLICT,
            };
        }
    }
    let mut curve = BinaryImage::zeros(w, h);
    let mut mask = BinaryImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            if base_mask.get(x, y) == 0 {
                continue;
            }
            match state[y * w + x] {
                CONFLICT => {}
                UNSEEN => {
                    // Never sampled by the rotation, so free; keep it realistic.
                    let (u, v) = map.forward(x, y);
                    mask.set(x, y, true);
                    curve.set(x, y, design.get_or_zero(ox + u, oy + v) == 1);
                }
                d => {
                    mask.set(x, y, true);
                    curve.set(x, y, d == 1);
                }
            }
        }
    }
    (curve, mask)
}

/// Applies deformation, dropout, speckle and boundary noise, in that order.
pub fn degrade(
    curve: &BinaryImage,
    mask: &BinaryImage,
    spec: &DegradationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<BinaryImage> {
    let (w, h) = curve.dims();
    let (lo, hi) = spec.fisheye_exponent_range;
    let e = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let mut out = fisheye(curve, e)?.and(mask);

    let inside: Vec<(usize, usize)> = mask.foreground().collect();
    for _ in 0..spec.dropout_blobs {
        let &(cx, cy) = inside.choose(rng).expect("mask is nonempty");
        let (rlo, rhi) = spec.dropout_radius;
        let r = if rhi > rlo { rng.gen_range(rlo..rhi) } else { rlo };
        let r2 = r * r;
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx as f64;
                let dy = y as f64 - cy as f64;
                if dx * dx + dy * dy <= r2 {
                    out.set(x, y, false);
                }
            }
        }
    }

    if spec.speckle_rate > 0.0 {
        for &(x, y) in &inside {
            if rng.gen_bool(spec.speckle_rate) {
                let v = out.get(x, y) == 0;
                out.set(x, y, v);
            }
        }
    }

    if spec.boundary_erode_px > 0 {
        let core = erode(mask, spec.boundary_erode_px);
        for &(x, y) in &inside {
            if core.get(x, y) == 0 {
                out.set(x, y, rng.gen_bool(0.5));
            }
        }
    }
    Ok(out)
}

/// `n` rounds of 3×3 erosion; pixels beyond the raster count as background.
pub fn erode(image: &BinaryImage, n: usize) -> BinaryImage {
    let mut cur = image.clone();
    let (w, h) = image.dims();
    for _ in 0..n {
        let prev = cur.clone();
        cur = BinaryImage::from_fn(w, h, |x, y| {
            (-1..=1).all(|dy| {
                (-1..=1).all(|dx| prev.get_or_zero(x as i64 + dx, y as i64 + dy) == 1)
            })
        });
    }
    cur
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub designs: usize,
    pub sherds_per_design: usize,
    pub seed: u64,
    pub design_width: usize,
    pub design_height: usize,
    pub sherd_size: SherdSize,
    pub stroke_px: usize,
    /// `None` cycles through every style.
    pub style: Option<DesignStyle>,
    pub degradation: DegradationSpec,
    pub theta_step: u32,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            designs: 12,
            sherds_per_design: 5,
            seed: 7,
            design_width: 160,
            design_height: 160,
            sherd_size: SherdSize { min: 48, max: 72 },
            stroke_px: 3,
            style: None,
            degradation: DegradationSpec::none(),
            theta_step: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub designs: Vec<Design>,
    pub records: Vec<SherdRecord>,
    pub sherds: Vec<GeneratedSherd>,
}

pub fn sherd_id(index: usize) -> String {
    format!("s{index:04}")
}

pub fn design_seed(config: &CorpusConfig, index: usize) -> u64 {
    derive_seed(config.seed, 0xde5, index as u64)
}

pub fn sherd_seed(config: &CorpusConfig, index: usize) -> u64 {
    derive_seed(config.seed, 0x5e4d, index as u64)
}

pub fn gen_corpus_design(config: &CorpusConfig, index: usize) -> Result<Design> {
    let style = config
        .style
        .unwrap_or(DesignStyle::ALL[index % DesignStyle::ALL.len()]);
    Ok(Design {
        id: DesignId(index as u32),
        image: gen_design(
            design_seed(config, index),
            config.design_width,
            config.design_height,
            style,
            config.stroke_px,
        )?,
    })
}

/// Generates sherd `index`, which belongs to design `index / M`.
pub fn gen_corpus_sherd(config: &CorpusConfig, designs: &[Design], index: usize) -> Result<(SherdRecord, GeneratedSherd)> {
    let design = &designs[index / config.sherds_per_design];
    let seed = sherd_seed(config, index);
    let sherd = gen_sherd(&design.image, seed, config.sherd_size, &config.degradation, config.theta_step)?;
    let id = sherd_id(index);
    let record = SherdRecord {
        curve_file: format!("sherds/{id}_curve.pgm"),
        mask_file: format!("sherds/{id}_mask.pgm"),
        id,
        design_id: design.id,
        truth_pose: sherd.truth_pose,
        degradation: config.degradation.clone(),
        seed,
    };
    Ok((record, sherd))
}

/// The whole corpus, a pure function of `config`.
pub fn gen_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.degradation.validate()?;
    let designs = (0..config.designs)
        .map(|i| gen_corpus_design(config, i))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    let mut sherds = Vec::new();
    for i in 0..config.designs * config.sherds_per_design {
        let (r, s) = gen_corpus_sherd(config, &designs, i)?;
        records.push(r);
        sherds.push(s);
    }
    Ok(Corpus {
        designs,
        records,
        sherds,
    })
}

/// Seeded split stratified by design: each design contributes its share of
/// training sherds, leftover slots go to designs in a seeded order. Both
/// lists come back sorted.
pub fn split_train_test(records: &[SherdRecord], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::arg(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut groups: BTreeMap<DesignId, Vec<String>> = BTreeMap::new();
    for r in records {
        groups.entry(r.design_id).or_default().push(r.id.clone());
    }
    let total = records.len();
    let target = math::round(fraction * total as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quotas: Vec<(DesignId, usize, f64)> = Vec::new();
    for (id, ids) in groups.iter_mut() {
        ids.sort();
        ids.shuffle(&mut rng);
        let exact = fraction * ids.len() as f64;
        let base = math::floor(exact) as usize;
        quotas.push((*id, base, exact - base as f64));
    }
    let mut assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2));
    for &i in &order {
        if assigned >= target {
            break;
        }
        let id = quotas[i].0;
        if quotas[i].1 < groups[&id].len() {
            quotas[i].1 += 1;
            assigned += 1;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (id, n, _) in quotas {
        let ids = &groups[&id];
        train.extend_from_slice(&ids[..n]);
        test.extend_from_slice(&ids[n..]);
    }
    train.sort();
    test.sort();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_are_exact() {
        let records: Vec<SherdRecord> = (0..60)
            .map(|i| SherdRecord {
                id: sherd_id(i),
                curve_file: String::new(),
                mask_file: String::new(),
                design_id: DesignId((i / 5) as u32),
                truth_pose: Pose { x: 0, y: 0, theta: 0 },
                degradation: DegradationSpec::none(),
                seed: 0,
            })
            .collect();
        let (a, b) = split_train_test(&records, 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (30, 30));
        assert!(a.iter().all(|id| !b.contains(id)));
        let mut all: Vec<String> = a.iter().chain(&b).cloned().collect();
        all.sort();
        assert_eq!(all, records.iter().map(|r| r.id.clone()).collect::<Vec<_>>());
        assert_eq!(split_train_test(&records, 0.5, 3).unwrap(), (a, b));
        assert!(split_train_test(&records, 1.0, 3).is_err());
    }

    #[test]
    fn erosion_shrinks_square() {
        let img = BinaryImage::from_fn(7, 7, |x, y| (1..6).contains(&x) && (1..6).contains(&y));
        let e = erode(&img, 1);
        assert_eq!(e.count_ones(), 9);
        assert_eq!(erode(&img, 3).count_ones(), 0);
    }

    #[test]
    fn polygon_fill_of_square() {
        let img = fill_polygon(10, 10, &[(1.5, 1.5), (5.5, 1.5), (5.5, 5.5), (1.5, 5.5)]);
        assert_eq!(img.count_ones(), 16);
    }
}
