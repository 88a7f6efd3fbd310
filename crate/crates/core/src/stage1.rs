//! Exhaustive masked template matching, 3D non-minimum suppression and
//! top-K candidate selection.
//!
//! The matching cost at pose `(x, y, θ)` is
//! `φ = Σ_{M_T^θ} (I_T^θ − I_i)²`, which for binary rasters is the Hamming
//! distance over the rotated mask. It decomposes as `φ = A + B − 2C` with
//! `A = Σ I_T^θ`, `B = M_T^θ ⋆ I_i` and `C = I_T^θ ⋆ I_i`. Both correlations
//! are evaluated at once through a single complex FFT by packing the mask in
//! the real part and the curve in the imaginary part of the template buffer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{smooth_size, Fft2d};
use crate::image::{BinaryImage, Catalog, Design, DesignId, Pose, SherdTemplate};
use crate::math;
use crate::transform::RotatedTemplate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Candidates kept per design.
    pub k: usize,
    /// Degrees between consecutive rotation slices; divides 360.
    pub theta_stride: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            k: 3,
            theta_stride: 1,
        }
    }
}

impl MatchConfig {
    pub fn new(k: usize, theta_stride: u32) -> Result<Self> {
        let c = Self { k, theta_stride };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        if self.theta_stride == 0 || self.theta_stride > 360 || 360 % self.theta_stride != 0 {
            return Err(Error::arg(format!(
                "theta stride {} must divide 360",
                self.theta_stride
            )));
        }
        Ok(())
    }

    pub fn slice_count(&self) -> usize {
        (360 / self.theta_stride) as usize
    }

    pub fn thetas(&self) -> impl Iterator<Item = u32> + '_ {
        (0..360).step_by(self.theta_stride as usize)
    }
}

/// Integer anchor positions searched on one design.
///
/// The design is padded by `R = ceil(diag/2)` background pixels on every
/// side, `diag` being the template diagonal, and the grid holds every anchor
/// for which the unrotated template canvas fits in the padded extent. The
/// grid depends only on the design and template extents, never on θ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseGrid {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
}

impl PoseGrid {
    pub fn new(design: &BinaryImage, template: &SherdTemplate) -> Self {
        Self::from_dims(design.dims(), (template.width(), template.height()))
    }

    pub fn from_dims(design: (usize, usize), template: (usize, usize)) -> Self {
        let (dw, dh) = (design.0 as i64, design.1 as i64);
        let (tw, th) = (template.0 as i64, template.1 as i64);
        let r = padding_radius(template.0, template.1) as i64;
        let (ax, ay) = ((tw - 1) / 2, (th - 1) / 2);
        Self {
            x0: -r + ax,
            x1: dw - 1 + r - (tw - 1 - ax),
            y0: -r + ay,
            y1: dh - 1 + r - (th - 1 - ay),
        }
    }

    pub fn width(&self) -> usize {
        (self.x1 - self.x0 + 1).max(0) as usize
    }

    pub fn height(&self) -> usize {
        (self.y1 - self.y0 + 1).max(0) as usize
    }

    pub fn count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn contains(&self, pose: Pose) -> bool {
        pose.theta < 360
            && (self.x0..=self.x1).contains(&pose.x)
            && (self.y0..=self.y1).contains(&pose.y)
    }

    /// Row-major cell index of `(x, y)`.
    #[inline]
    pub fn index(&self, x: i64, y: i64) -> usize {
        (y - self.y0) as usize * self.width() + (x - self.x0) as usize
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (i64, i64) {
        let w = self.width();
        (self.x0 + (index % w) as i64, self.y0 + (index / w) as i64)
    }
}

/// Smallest `R` with `2R >= sqrt(w² + h²)`.
pub fn padding_radius(w: usize, h: usize) -> usize {
    let d2 = w * w + h * h;
    let mut r = math::ceil(math::sqrt(d2 as f64) / 2.0) as usize;
    while r > 0 && 4 * (r - 1) * (r - 1) >= d2 {
        r -= 1;
    }
    while 4 * r * r < d2 {
        r += 1;
    }
    r
}

/// `φ` over every cell of a [`PoseGrid`] for one rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct CostPlane {
    pub grid: PoseGrid,
    pub theta: u32,
    /// Row-major over the grid.
    pub values: Vec<f64>,
}

impl CostPlane {
    pub fn at(&self, x: i64, y: i64) -> f64 {
        self.values[self.grid.index(x, y)]
    }
}

/// Reference evaluation of `φ` by summing over the rotated mask at every pose.
pub fn cost_plane_direct(design: &BinaryImage, template: &SherdTemplate, theta: u32) -> CostPlane {
    let grid = PoseGrid::new(design, template);
    let rot = RotatedTemplate::new(template, theta);
    direct_plane(design, &rot, grid)
}

fn direct_plane(design: &BinaryImage, rot: &RotatedTemplate, grid: PoseGrid) -> CostPlane {
    let (ow, oh) = (rot.extent.width as i64, rot.extent.height as i64);
    let (ax, ay) = (rot.extent.anchor_x as i64, rot.extent.anchor_y as i64);
    // Pad so that every canvas placed on the grid reads inside the buffer.
    let pad_l = (ax - grid.x0).max(0);
    let pad_t = (ay - grid.y0).max(0);
    let pw = pad_l + (grid.x1 - ax + ow).max(design.width() as i64) + 1;
    let ph = pad_t + (grid.y1 - ay + oh).max(design.height() as i64) + 1;
    let mut padded = vec![0u8; (pw * ph) as usize];
    for y in 0..design.height() {
        let row = (y as i64 + pad_t) * pw + pad_l;
        for x in 0..design.width() {
            padded[(row + x as i64) as usize] = design.get(x, y);
        }
    }
    let taps: Vec<(usize, u8)> = (0..rot.extent.height)
        .flat_map(|v| (0..rot.extent.width).map(move |u| (u, v)))
        .filter(|&(u, v)| rot.mask.get(u, v) == 1)
        .map(|(u, v)| ((v as i64 * pw + u as i64) as usize, rot.curve.get(u, v)))
        .collect();
    let mut values = Vec::with_capacity(grid.count());
    for y in grid.y0..=grid.y1 {
        for x in grid.x0..=grid.x1 {
            let base = ((y - ay + pad_t) * pw + (x - ax + pad_l)) as usize;
            let window = &padded[base..];
            let mut cost = 0u32;
            for &(off, t) in &taps {
                cost += (window[off] ^ t) as u32;
            }
            values.push(cost as f64);
        }
    }
    CostPlane {
        grid,
        theta: rot.theta,
        values,
    }
}

/// FFT evaluation of `φ` for a single rotation; equals
/// [`cost_plane_direct`] cell for cell.
pub fn cost_plane_fft(design: &BinaryImage, template: &SherdTemplate, theta: u32) -> CostPlane {
    let plan = FftPlan::new(design.dims(), template, &[theta], true);
    let spec = plan.design_spectrum(design);
    plan.plane(&spec, 0)
}

/// Unrounded `(A, B, C)` terms of the FFT decomposition, for inspection.
pub fn correlation_terms(
    design: &BinaryImage,
    template: &SherdTemplate,
    theta: u32,
) -> (f64, Vec<f64>, Vec<f64>) {
    let plan = FftPlan::new(design.dims(), template, &[theta], true);
    let spec = plan.design_spectrum(design);
    plan.terms(&spec, 0)
}

/// Precomputed FFT geometry for one template against one design extent.
#[derive(Clone, Debug)]
pub struct FftPlan {
    grid: PoseGrid,
    design_dims: (usize, usize),
    fft: Fft2d,
    /// Placement of the design inside the FFT buffer.
    offset: (usize, usize),
    rotations: Vec<RotatedTemplate>,
    /// `conj(F(M − iT))` per rotation when cached.
    spectra: Vec<Option<Vec<Complex64>>>,
}

impl FftPlan {
    pub fn new(
        design_dims: (usize, usize),
        template: &SherdTemplate,
        thetas: &[u32],
        cache_spectra: bool,
    ) -> Self {
        let rotations: Vec<RotatedTemplate> = thetas
            .iter()
            .map(|&t| RotatedTemplate::new(template, t))
            .collect();
        Self::from_rotations(design_dims, template, rotations, cache_spectra)
    }

    fn from_rotations(
        design_dims: (usize, usize),
        template: &SherdTemplate,
        rotations: Vec<RotatedTemplate>,
        cache_spectra: bool,
    ) -> Self {
        let grid = PoseGrid::from_dims(design_dims, (template.width(), template.height()));
        let (dw, dh) = (design_dims.0 as i64, design_dims.1 as i64);
        let mut px = 0i64;
        let mut py = 0i64;
        for r in &rotations {
            px = px.max(r.extent.anchor_x as i64 - grid.x0);
            py = py.max(r.extent.anchor_y as i64 - grid.y0);
        }
        let mut nx = px + dw;
        let mut ny = py + dh;
        for r in &rotations {
            let (ax, ay) = (r.extent.anchor_x as i64, r.extent.anchor_y as i64);
            nx = nx.max(grid.x1 - ax + px + r.extent.width as i64);
            ny = ny.max(grid.y1 - ay + py + r.extent.height as i64);
        }
        let fft = Fft2d::new(smooth_size(nx as usize), smooth_size(ny as usize));
        let mut plan = Self {
            grid,
            design_dims,
            fft,
            offset: (px as usize, py as usize),
            spectra: vec![None; rotations.len()],
            rotations,
        };
        if cache_spectra {
            for i in 0..plan.rotations.len() {
                plan.spectra[i] = Some(plan.template_spectrum(i));
            }
        }
        plan
    }

    pub fn grid(&self) -> PoseGrid {
        self.grid
    }

    pub fn fft_dims(&self) -> (usize, usize) {
        self.fft.dims()
    }

    pub fn rotations(&self) -> &[RotatedTemplate] {
        &self.rotations
    }

    fn template_spectrum(&self, index: usize) -> Vec<Complex64> {
        let rot = &self.rotations[index];
        let (nx, ny) = self.fft.dims();
        let mut buf = vec![Complex64::new(0.0, 0.0); nx * ny];
        for v in 0..rot.extent.height {
            for u in 0..rot.extent.width {
                let m = rot.mask.get(u, v) as f64;
                let t = rot.curve.get(u, v) as f64;
                buf[v * nx + u] = Complex64::new(m, -t);
            }
        }
        self.fft.forward_rows(&mut buf, 0..rot.extent.height);
        for c in buf.iter_mut() {
            *c = c.conj();
        }
        buf
    }

    pub fn design_spectrum(&self, design: &BinaryImage) -> Vec<Complex64> {
        assert_eq!(design.dims(), self.design_dims, "design extent differs from plan");
        let (nx, ny) = self.fft.dims();
        let (px, py) = self.offset;
        let mut buf = vec![Complex64::new(0.0, 0.0); nx * ny];
        for y in 0..design.height() {
            for x in 0..design.width() {
                buf[(y + py) * nx + x + px] = Complex64::new(design.get(x, y) as f64, 0.0);
            }
        }
        self.fft.forward_rows(&mut buf, py..py + design.height());
        buf
    }

    /// Correlation output buffer plus the mapping into it.
    fn correlate(&self, design_spec: &[Complex64], index: usize) -> Vec<Complex64> {
        let owned;
        let tspec = match &self.spectra[index] {
            Some(s) => s,
            None => {
                owned = self.template_spectrum(index);
                &owned
            }
        };
        let mut buf: Vec<Complex64> = tspec
            .iter()
            .zip(design_spec)
            .map(|(t, d)| t * d)
            .collect();
        let (lo, hi) = self.column_span(index);
        self.fft.inverse_columns(&mut buf, lo..hi + 1);
        buf
    }

    fn column_span(&self, index: usize) -> (usize, usize) {
        let ax = self.rotations[index].extent.anchor_x as i64;
        let px = self.offset.0 as i64;
        (
            (self.grid.x0 - ax + px) as usize,
            (self.grid.x1 - ax + px) as usize,
        )
    }

    fn terms(&self, design_spec: &[Complex64], index: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let buf = self.correlate(design_spec, index);
        let rot = &self.rotations[index];
        let (nx, ny) = self.fft.dims();
        let norm = 1.0 / (nx * ny) as f64;
        let (ax, ay) = (rot.extent.anchor_x as i64, rot.extent.anchor_y as i64);
        let (px, py) = (self.offset.0 as i64, self.offset.1 as i64);
        let mut b = Vec::with_capacity(self.grid.count());
        let mut c = Vec::with_capacity(self.grid.count());
        for y in self.grid.y0..=self.grid.y1 {
            let row = (y - ay + py) as usize * nx;
            for x in self.grid.x0..=self.grid.x1 {
                let v = buf[row + (x - ax + px) as usize] * norm;
                b.push(v.re);
                c.push(v.im);
            }
        }
        (rot.foreground() as f64, b, c)
    }

    /// Design coordinates of FFT buffer pixel `(0, 0)`.
    pub fn buffer_origin(&self) -> (i64, i64) {
        (-(self.offset.0 as i64), -(self.offset.1 as i64))
    }

    /// Spectrum of a real field laid out over the whole FFT buffer
    /// (row-major, `fft_dims()`), in place of a binary design.
    pub fn field_spectrum(&self, field: &[f64]) -> Vec<Complex64> {
        let (nx, ny) = self.fft.dims();
        assert_eq!(field.len(), nx * ny, "field must cover the FFT buffer");
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        buf
    }

    /// Unrounded sum of the spectrum's signal under the rotated mask at
    /// every pose of the grid.
    pub fn mask_sums(&self, spec: &[Complex64], index: usize) -> Vec<f64> {
        self.terms(spec, index).1
    }

    /// Rounded `φ = A + B − 2C` plane for rotation `index`.
    pub fn plane(&self, design_spec: &[Complex64], index: usize) -> CostPlane {
        let (a, b, c) = self.terms(design_spec, index);
        let values = b
            .iter()
            .zip(&c)
            .map(|(b, c)| math::round(a + b - 2.0 * c).max(0.0))
            .collect();
        CostPlane {
            grid: self.grid,
            theta: self.rotations[index].theta,
            values,
        }
    }
}

/// `φ` over the whole `(θ, y, x)` search space of one design.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    pub design_id: DesignId,
    pub theta_stride: u32,
    pub grid: PoseGrid,
    /// One row-major plane per θ index.
    pub slices: Vec<Vec<f64>>,
}

impl CostVolume {
    pub fn new(
        design_id: DesignId,
        theta_stride: u32,
        grid: PoseGrid,
        slices: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if theta_stride == 0 || 360 % theta_stride != 0 {
            return Err(Error::arg("theta stride must divide 360"));
        }
        if slices.len() != (360 / theta_stride) as usize {
            return Err(Error::arg(format!(
                "{} slices for stride {theta_stride}",
                slices.len()
            )));
        }
        if slices.iter().any(|s| s.len() != grid.count()) {
            return Err(Error::arg("slice extent differs from grid"));
        }
        if slices.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("cost must be finite and non-negative"));
        }
        Ok(Self {
            design_id,
            theta_stride,
            grid,
            slices,
        })
    }

    pub fn at(&self, theta_index: usize, x: i64, y: i64) -> f64 {
        self.slices[theta_index][self.grid.index(x, y)]
    }
}

pub fn build_cost_volume(
    design: &Design,
    template: &SherdTemplate,
    config: MatchConfig,
) -> Result<CostVolume> {
    config.validate()?;
    let grid = PoseGrid::new(&design.image, template);
    if grid.is_empty() {
        return Err(Error::TemplateExceedsDesign(design.id));
    }
    let thetas: Vec<u32> = config.thetas().collect();
    let plan = FftPlan::new(design.image.dims(), template, &thetas, false);
    let spec = plan.design_spectrum(&design.image);
    let slices = (0..thetas.len())
        .map(|i| plan.plane(&spec, i).values)
        .collect();
    CostVolume::new(design.id, config.theta_stride, grid, slices)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub pose: Pose,
    pub phi: f64,
}

/// Cells whose cost is `<=` every one of their 26 neighbors, θ wrapping
/// around and out-of-grid spatial neighbors counting as `+∞`. Sorted by
/// `(θ, y, x)`.
pub fn nms_local_minima(volume: &CostVolume) -> Vec<LocalMinimum> {
    let mut stream = NmsStream::new(volume.grid, volume.theta_stride);
    for s in &volume.slices {
        stream.push(s.clone());
    }
    stream.finish()
}

/// Streaming form of [`nms_local_minima`]: slices arrive in θ order and at
/// most the previous, current and next slice plus the two wraparound slices
/// are held.
#[derive(Debug)]
pub struct NmsStream {
    grid: PoseGrid,
    stride: u32,
    first: Option<Vec<f64>>,
    second: Option<Vec<f64>>,
    prev: Option<Vec<f64>>,
    cur: Option<Vec<f64>>,
    pushed: usize,
    found: Vec<LocalMinimum>,
}

impl NmsStream {
    pub fn new(grid: PoseGrid, theta_stride: u32) -> Self {
        Self {
            grid,
            stride: theta_stride,
            first: None,
            second: None,
            prev: None,
            cur: None,
            pushed: 0,
            found: Vec::new(),
        }
    }

    pub fn push(&mut self, slice: Vec<f64>) {
        assert_eq!(slice.len(), self.grid.count(), "slice extent differs from grid");
        let t = self.pushed;
        self.pushed += 1;
        match t {
            0 => self.first = Some(slice),
            1 => self.second = Some(slice),
            _ => {
                // Slice t-1 now has both neighbors.
                {
                    let (prev, cur) = match t {
                        2 => (self.first.as_ref(), self.second.as_ref()),
                        3 => (self.second.as_ref(), self.cur.as_ref()),
                        _ => (self.prev.as_ref(), self.cur.as_ref()),
                    };
                    scan_slice(
                        self.grid,
                        prev.unwrap(),
                        cur.unwrap(),
                        &slice,
                        (t - 1) as u32 * self.stride,
                        &mut self.found,
                    );
                }
                if t >= 3 {
                    self.prev = self.cur.take();
                }
                self.cur = Some(slice);
            }
        }
    }

    pub fn finish(mut self) -> Vec<LocalMinimum> {
        let n = self.pushed;
        let first = self.first.take().expect("no slices pushed");
        match n {
            1 => scan_slice(self.grid, &first, &first, &first, 0, &mut self.found),
            2 => {
                let second = self.second.take().unwrap();
                scan_slice(self.grid, &second, &first, &second, 0, &mut self.found);
                scan_slice(self.grid, &first, &second, &first, self.stride, &mut self.found);
            }
            _ => {
                let second = self.second.take().unwrap();
                let last = self.cur.take().unwrap();
                let before_last = if n == 3 {
                    second.clone()
                } else {
                    self.prev.take().unwrap()
                };
                let last_theta = (n - 1) as u32 * self.stride;
                scan_slice(self.grid, &before_last, &last, &first, last_theta, &mut self.found);
                scan_slice(self.grid, &last, &first, &second, 0, &mut self.found);
            }
        }
        self.found.sort_by_key(|m| (m.pose.theta, m.pose.y, m.pose.x));
        self.found
    }
}

fn scan_slice(
    grid: PoseGrid,
    prev: &[f64],
    cur: &[f64],
    next: &[f64],
    theta: u32,
    out: &mut Vec<LocalMinimum>,
) {
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    for j in 0..h {
        for i in 0..w {
            let v = cur[(j * w + i) as usize];
            let mut is_min = true;
            'scan: for dj in -1..=1 {
                let jj = j + dj;
                if jj < 0 || jj >= h {
                    continue;
                }
                for di in -1..=1 {
                    let ii = i + di;
                    if ii < 0 || ii >= w {
                        continue;
                    }
                    let idx = (jj * w + ii) as usize;
                    if v > prev[idx] || v > next[idx] || ((di, dj) != (0, 0) && v > cur[idx]) {
                        is_min = false;
                        break 'scan;
                    }
                }
            }
            if is_min {
                out.push(LocalMinimum {
                    pose: Pose {
                        x: grid.x0 + i,
                        y: grid.y0 + j,
                        theta,
                    },
                    phi: v,
                });
            }
        }
    }
}

/// A `(design, pose)` pair kept by the first stage, with its costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub design_id: DesignId,
    pub pose: Pose,
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_bar: Option<f64>,
}

fn minimum_order(a: &LocalMinimum, b: &LocalMinimum) -> Ordering {
    a.phi
        .total_cmp(&b.phi)
        .then(a.pose.theta.cmp(&b.pose.theta))
        .then(a.pose.y.cmp(&b.pose.y))
        .then(a.pose.x.cmp(&b.pose.x))
}

/// Chebyshev distance of at most one slice/pixel, θ wrapping.
pub fn adjacent(a: Pose, b: Pose, theta_stride: u32) -> bool {
    let slices = (360 / theta_stride) as i64;
    let ta = (a.theta / theta_stride) as i64;
    let tb = (b.theta / theta_stride) as i64;
    let dt = (ta - tb).rem_euclid(slices);
    let dt = dt.min(slices - dt);
    (a.x - b.x).abs() <= 1 && (a.y - b.y).abs() <= 1 && dt <= 1
}

/// Lowest-cost minima in `(φ, θ, y, x)` order, skipping any pose adjacent to
/// one already taken, up to `config.k`.
pub fn select_candidates(
    minima: &[LocalMinimum],
    config: MatchConfig,
    design_id: DesignId,
) -> Vec<Candidate> {
    let mut sorted = minima.to_vec();
    sorted.sort_by(minimum_order);
    let mut taken: Vec<Candidate> = Vec::with_capacity(config.k);
    for m in sorted {
        if taken.len() == config.k {
            break;
        }
        if taken
            .iter()
            .any(|c| adjacent(c.pose, m.pose, config.theta_stride))
        {
            continue;
        }
        taken.push(Candidate {
            design_id,
            pose: m.pose,
            phi: m.phi,
            psi_bar: None,
        });
    }
    taken
}

/// Per-template state reused across the designs of a catalog.
///
/// Template spectra are cached per distinct design extent while their total
/// size stays under `spectrum_budget` bytes; otherwise they are recomputed
/// for every design.
#[derive(Clone, Debug)]
pub struct Stage1Matcher {
    template: SherdTemplate,
    config: MatchConfig,
    plans: BTreeMap<(usize, usize), FftPlan>,
    spectrum_budget: usize,
}

impl Stage1Matcher {
    pub const DEFAULT_SPECTRUM_BUDGET: usize = 256 << 20;

    pub fn new(template: &SherdTemplate, config: MatchConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            template: template.clone(),
            config,
            plans: BTreeMap::new(),
            spectrum_budget: Self::DEFAULT_SPECTRUM_BUDGET,
        })
    }

    pub fn with_spectrum_budget(mut self, bytes: usize) -> Self {
        self.spectrum_budget = bytes;
        self
    }

    pub fn config(&self) -> MatchConfig {
        self.config
    }

    /// Builds one plan per distinct design extent in `catalog`.
    pub fn prepare(&mut self, catalog: &Catalog) {
        let rotations: Vec<RotatedTemplate> = self
            .config
            .thetas()
            .map(|t| RotatedTemplate::new(&self.template, t))
            .collect();
        let mut used = 0usize;
        for d in catalog.designs() {
            let dims = d.image.dims();
            if self.plans.contains_key(&dims) {
                continue;
            }
            let mut plan = FftPlan::from_rotations(dims, &self.template, rotations.clone(), false);
            let (nx, ny) = plan.fft_dims();
            let bytes = nx * ny * 16 * rotations.len();
            if used + bytes <= self.spectrum_budget {
                for i in 0..rotations.len() {
                    plan.spectra[i] = Some(plan.template_spectrum(i));
                }
                used += bytes;
            }
            self.plans.insert(dims, plan);
        }
    }

    fn plan_for(&self, dims: (usize, usize)) -> alloc::borrow::Cow<'_, FftPlan> {
        match self.plans.get(&dims) {
            Some(p) => alloc::borrow::Cow::Borrowed(p),
            None => {
                let thetas: Vec<u32> = self.config.thetas().collect();
                alloc::borrow::Cow::Owned(FftPlan::new(dims, &self.template, &thetas, false))
            }
        }
    }

    /// Streams the cost volume of one design through NMS and selection.
    pub fn search(&self, design: &Design) -> Result<Vec<Candidate>> {
        let plan = self.plan_for(design.image.dims());
        let grid = plan.grid();
        if grid.is_empty() {
            return Err(Error::TemplateExceedsDesign(design.id));
        }
        let spec = plan.design_spectrum(&design.image);
        let mut nms = NmsStream::new(grid, self.config.theta_stride);
        for i in 0..plan.rotations().len() {
            nms.push(plan.plane(&spec, i).values);
        }
        let minima = nms.finish();
        Ok(select_candidates(&minima, self.config, design.id))
    }

    /// Exhaustive direct-summation search, the slow reference path.
    pub fn search_direct(&self, design: &Design) -> Result<Vec<Candidate>> {
        let grid = PoseGrid::new(&design.image, &self.template);
        if grid.is_empty() {
            return Err(Error::TemplateExceedsDesign(design.id));
        }
        let mut nms = NmsStream::new(grid, self.config.theta_stride);
        for t in self.config.thetas() {
            let rot = RotatedTemplate::new(&self.template, t);
            nms.push(direct_plane(&design.image, &rot, grid).values);
        }
        Ok(select_candidates(&nms.finish(), self.config, design.id))
    }
}

/// Stage-1 candidates for every design, in ascending design id order.
pub fn match_catalog(
    catalog: &Catalog,
    template: &SherdTemplate,
    config: MatchConfig,
) -> Result<Vec<Candidate>> {
    if catalog.is_empty() {
        return Err(Error::arg("empty catalog"));
    }
    let mut matcher = Stage1Matcher::new(template, config)?;
    matcher.prepare(catalog);
    let mut out = Vec::with_capacity(catalog.len() * config.k);
    for d in catalog.designs() {
        let found = matcher.search(d).map_err(|e| Error::Design {
            id: d.id,
            source: alloc::boxed::Box::new(e),
        })?;
        out.extend(found);
    }
    Ok(out)
}
