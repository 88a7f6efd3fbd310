//! CMC scoring and baseline rankers (first-stage cost, nearest neighbor,
//! Chamfer over skeletons).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryImage, Catalog, DesignId, SherdTemplate};
use crate::math;
use crate::stage1::{Candidate, FftPlan, MatchConfig};
use crate::stage2::pair_images;

/// `values[L-1]` is the fraction of queries whose truth is within the top L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub values: Vec<f64>,
}

impl CmcCurve {
    pub fn rank1(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn at(&self, rank: usize) -> f64 {
        self.values[rank - 1]
    }
}

/// Builds the CMC curve from per-query rankings (best first).
pub fn cmc(rankings: &[Vec<DesignId>], truths: &[DesignId]) -> Result<CmcCurve> {
    if rankings.len() != truths.len() {
        return Err(Error::Eval("one truth per ranking required".into()));
    }
    if rankings.is_empty() {
        return Err(Error::Eval("no rankings".into()));
    }
    let n = rankings.iter().map(Vec::len).max().unwrap_or(0);
    let mut hits = vec![0usize; n];
    for (q, (ranking, truth)) in rankings.iter().zip(truths).enumerate() {
        let pos = ranking
            .iter()
            .position(|d| d == truth)
            .ok_or_else(|| Error::Eval(format!("query {q}: truth {truth} missing from ranking")))?;
        hits[pos] += 1;
    }
    let total = rankings.len() as f64;
    let mut acc = 0usize;
    let values = hits
        .iter()
        .map(|&h| {
            acc += h;
            acc as f64 / total
        })
        .collect();
    Ok(CmcCurve { values })
}

fn rank_by_min(costs: impl IntoIterator<Item = (DesignId, f64)>) -> Vec<(DesignId, f64)> {
    let mut best: BTreeMap<DesignId, f64> = BTreeMap::new();
    for (id, c) in costs {
        let e = best.entry(id).or_insert(f64::INFINITY);
        if c < *e {
            *e = c;
        }
    }
    let mut out: Vec<(DesignId, f64)> = best.into_iter().collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

pub fn ids(ranking: &[(DesignId, f64)]) -> Vec<DesignId> {
    ranking.iter().map(|r| r.0).collect()
}

/// Designs ordered by their lowest first-stage cost `φ`, ties by id.
pub fn rank_stage1(candidates: &[Candidate]) -> Vec<(DesignId, f64)> {
    rank_by_min(candidates.iter().map(|c| (c.design_id, c.phi)))
}

/// Sum of absolute differences between the masked template and each
/// candidate's masked patch, reduced per design.
pub fn rank_nearest_neighbor(
    template: &SherdTemplate,
    catalog: &Catalog,
    candidates: &[Candidate],
) -> Result<Vec<(DesignId, f64)>> {
    let mut costs = Vec::with_capacity(candidates.len());
    for c in candidates {
        let d = catalog.get(c.design_id).ok_or(Error::UnknownDesign(c.design_id))?;
        let (a, b) = pair_images(template, &d.image, c.pose);
        let sad: i64 = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(&x, &y)| (x as i64 - y as i64).abs())
            .sum();
        costs.push((c.design_id, sad as f64));
    }
    Ok(rank_by_min(costs))
}

/// One-pixel-wide curve skeleton.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    pub image: BinaryImage,
}

impl Skeleton {
    pub fn points(&self) -> Vec<(i64, i64)> {
        self.image
            .foreground()
            .map(|(x, y)| (x as i64, y as i64))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.image.count_ones() == 0
    }
}

/// Zhang–Suen thinning. Pixels beyond the raster count as background.
pub fn skeletonize(image: &BinaryImage) -> Skeleton {
    let (w, h) = image.dims();
    let mut img = image.clone();
    let mut remove = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            remove.clear();
            for (x, y) in img.foreground() {
                let (xi, yi) = (x as i64, y as i64);
                let p = |dx: i64, dy: i64| img.get_or_zero(xi + dx, yi + dy);
                // P2..P9 clockwise from north.
                let n = [
                    p(0, -1),
                    p(1, -1),
                    p(1, 0),
                    p(1, 1),
                    p(0, 1),
                    p(-1, 1),
                    p(-1, 0),
                    p(-1, -1),
                ];
                let b: u8 = n.iter().sum();
                if !(2..=6).contains(&b) {
                    continue;
                }
                let a = (0..8).filter(|&i| n[i] == 0 && n[(i + 1) % 8] == 1).count();
                if a != 1 {
                    continue;
                }
                let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                let ok = if step == 0 {
                    p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
                } else {
                    p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
                };
                if ok {
                    remove.push((x, y));
                }
            }
            for &(x, y) in &remove {
                img.set(x, y, false);
            }
            changed |= !remove.is_empty();
        }
        if !changed {
            break;
        }
    }
    debug_assert_eq!(img.dims(), (w, h));
    Skeleton { image: img }
}

const FAR: f64 = 1e20;

/// Squared 1D distance transform of sampled function `f` (lower envelope of
/// parabolas).
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            // z[0] is -inf, so this stops at k = 0.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every pixel to the nearest foreground
/// pixel; `f64::INFINITY` everywhere when there is none.
pub fn distance_transform(image: &BinaryImage) -> Vec<f64> {
    let (w, h) = image.dims();
    if image.count_ones() == 0 {
        return vec![f64::INFINITY; w * h];
    }
    let n = w.max(h);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut col = vec![0.0f64; h];
    let mut col_out = vec![0.0f64; h];
    let mut grid: Vec<f64> = image
        .pixels()
        .iter()
        .map(|&p| if p == 1 { 0.0 } else { FAR })
        .collect();
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        dt1d(&col, &mut col_out, &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0f64; w];
    for y in 0..h {
        dt1d(&grid[y * w..(y + 1) * w], &mut row_out, &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid.iter().map(|&d| math::sqrt(d)).collect()
}

/// Distance map over a rectangle of the integer plane.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DistanceMap {
    /// Map of `points` over their bounding box grown to include `extra`.
    pub fn from_points(points: &[(i64, i64)], extra: &[(i64, i64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("distance map of an empty point set"));
        }
        let all = points.iter().chain(extra);
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for &(x, y) in all {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let width = (x1 - x0 + 1) as usize;
        let height = (y1 - y0 + 1) as usize;
        let mut raster = BinaryImage::zeros(width, height);
        for &(x, y) in points {
            raster.set((x - x0) as usize, (y - y0) as usize, true);
        }
        Ok(Self {
            x0,
            y0,
            width,
            height,
            values: distance_transform(&raster),
        })
    }

    pub fn at(&self, x: i64, y: i64) -> Option<f64> {
        let (u, v) = (x - self.x0, y - self.y0);
        if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
            None
        } else {
            Some(self.values[v as usize * self.width + u as usize])
        }
    }
}

/// Directed Chamfer distance `(1/|U|) Σ_u min_v ‖u − v‖` using the distance
/// map of `V`.
pub fn chamfer_with_map(u: &[(i64, i64)], map: &DistanceMap) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::arg("empty point set U"));
    }
    let mut sum = 0.0;
    for &(x, y) in u {
        sum += map
            .at(x, y)
            .ok_or_else(|| Error::arg(format!("point ({x}, {y}) outside the distance map")))?;
    }
    Ok(sum / u.len() as f64)
}

/// Directed Chamfer distance from `u` to `v`.
pub fn chamfer_distance(u: &[(i64, i64)], v: &[(i64, i64)]) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::arg("Chamfer distance needs nonempty point sets"));
    }
    let map = DistanceMap::from_points(v, u)?;
    chamfer_with_map(u, &map)
}

/// Design skeletons computed once for repeated Chamfer ranking.
#[derive(Clone, Debug)]
pub struct ChamferCatalog {
    designs: Vec<(DesignId, (usize, usize), Skeleton)>,
}

impl ChamferCatalog {
    pub fn new(catalog: &Catalog) -> Self {
        Self {
            designs: catalog
                .designs()
                .iter()
                .map(|d| (d.id, d.image.dims(), skeletonize(&d.image)))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChamferRanking {
    pub ranked: Vec<(DesignId, f64)>,
    /// Designs with an empty skeleton, appended to `ranked` with infinite
    /// cost.
    pub skipped: Vec<DesignId>,
}

/// Minimum directed Chamfer distance from the template skeleton to each
/// design skeleton over the first-stage pose grid and θ stride.
pub fn rank_chamfer(catalog: &ChamferCatalog, template: &SherdTemplate, config: MatchConfig) -> Result<ChamferRanking> {
    config.validate()?;
    let skel = skeletonize(template.curve());
    if skel.is_empty() {
        return Err(Error::Eval("template skeleton is empty".into()));
    }
    let skel_template = SherdTemplate::new(skel.image.clone(), skel.image)?;
    let thetas: Vec<u32> = config.thetas().collect();
    let mut plans: BTreeMap<(usize, usize), FftPlan> = BTreeMap::new();
    let mut costs = Vec::new();
    let mut skipped = Vec::new();
    for (id, dims, design_skel) in &catalog.designs {
        if design_skel.is_empty() {
            skipped.push(*id);
            continue;
        }
        let plan = plans
            .entry(*dims)
            .or_insert_with(|| FftPlan::new(*dims, &skel_template, &thetas, true));
        if plan.grid().is_empty() {
            return Err(Error::TemplateExceedsDesign(*id));
        }
        let (nx, ny) = plan.fft_dims();
        let (bx, by) = plan.buffer_origin();
        let placed = BinaryImage::from_fn(nx, ny, |x, y| {
            design_skel.image.get_or_zero(x as i64 + bx, y as i64 + by) == 1
        });
        let field = distance_transform(&placed);
        let spec = plan.field_spectrum(&field);
        let mut best = f64::INFINITY;
        for (i, rot) in plan.rotations().iter().enumerate() {
            let count = rot.mask.count_ones();
            if count == 0 {
                continue;
            }
            let sums = plan.mask_sums(&spec, i);
            for s in sums {
                best = best.min(s.max(0.0) / count as f64);
            }
        }
        costs.push((*id, best));
    }
    let mut ranked = rank_by_min(costs);
    ranked.extend(skipped.iter().map(|&id| (id, f64::INFINITY)));
    Ok(ChamferRanking { ranked, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cmc_small_cases() {
        let c = cmc(&[vec![DesignId(2), DesignId(0), DesignId(1)]], &[DesignId(0)]).unwrap();
        assert_eq!(c.values, vec![0.0, 1.0, 1.0]);
        let c = cmc(&vec![vec![DesignId(0), DesignId(1)]; 3], &[DesignId(0); 3]).unwrap();
        assert_eq!(c.values, vec![1.0, 1.0]);
        assert!(cmc(&[vec![DesignId(1)]], &[DesignId(0)]).is_err());
    }

    #[test]
    fn chamfer_three_four_five() {
        assert_eq!(chamfer_distance(&[(0, 0)], &[(3, 4)]).unwrap(), 5.0);
        let u = [(1, 1), (4, 2), (0, 7)];
        assert_eq!(chamfer_distance(&u, &u).unwrap(), 0.0);
        assert!(chamfer_distance(&[], &u).is_err());
    }

    #[test]
    fn single_pixel_skeleton() {
        let img = BinaryImage::from_rows(&["000", "010", "000"]).unwrap();
        assert_eq!(skeletonize(&img).image, img);
    }

    #[test]
    fn distance_transform_without_foreground() {
        let d = distance_transform(&BinaryImage::zeros(3, 2));
        assert!(d.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn stage1_ranking_keeps_min_per_design() {
        use crate::image::Pose;
        let c = |id, phi| Candidate {
            design_id: DesignId(id),
            pose: Pose { x: 0, y: 0, theta: 0 },
            phi,
            psi_bar: None,
        };
        let r = rank_stage1(&[c(1, 5.0), c(0, 7.0), c(1, 2.0), c(2, 7.0)]);
        assert_eq!(r, vec![(DesignId(1), 2.0), (DesignId(0), 7.0), (DesignId(2), 7.0)]);
    }
}
