//! Second stage: pair construction, augmentation, contrastive training and
//! re-ranking of first-stage candidates by the learned cost `ψ̄`.

use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryImage, Catalog, DesignId, Pose, SherdTemplate};
use crate::net::{contrastive_loss, pair_gradient, EmbeddingNet, Grads, Net, Real};
use crate::stage1::Candidate;
use crate::transform::{crop_rotated, fisheye, flip, resize_nearest, rotate, Flip, RotatedTemplate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
    pub max_iters: usize,
    /// Learning rate multiplier applied every `lr_step` iterations.
    pub lr_decay: f64,
    /// `None` means `max_iters / 4`.
    pub lr_step: Option<usize>,
    /// Negatives kept per positive pair; `None` keeps every false candidate.
    pub neg_pos_cap: Option<usize>,
    pub augment_negatives: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 0.0005,
            base_lr: 1e-4,
            max_iters: 50_000,
            lr_decay: 0.5,
            lr_step: None,
            neg_pos_cap: Some(10),
            augment_negatives: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule for the `tiny` preset: 2,000 iterations with a
    /// larger base rate to make up for random initialization.
    pub fn desk() -> Self {
        Self {
            max_iters: 2_000,
            base_lr: 1e-2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.margin) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !positive(self.base_lr) || !positive(self.lr_decay) {
            return Err(Error::Config("rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("momentum must lie in [0, 1), decay ≥ 0".into()));
        }
        if self.lr_step == Some(0) {
            return Err(Error::Config("lr step must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, iter: usize) -> f64 {
        let step = self.lr_step.unwrap_or(self.max_iters / 4).max(1);
        let mut lr = self.base_lr;
        for _ in 0..iter / step {
            lr *= self.lr_decay;
        }
        lr
    }
}

/// One element of the augmentation product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub rotation: u32,
    pub flip: Flip,
    pub fisheye: f64,
}

impl Augmentation {
    pub const IDENTITY: Self = Self {
        rotation: 0,
        flip: Flip::None,
        fisheye: 1.0,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub rotations: Vec<u32>,
    pub flips: Vec<Flip>,
    pub exponents: Vec<f64>,
}

impl AugmentationSpec {
    /// 8 rotations × 3 flips × 4 fish-eye exponents.
    pub fn full() -> Self {
        Self {
            rotations: (0..8).map(|i| i * 45).collect(),
            flips: vec![Flip::None, Flip::Horizontal, Flip::Vertical],
            exponents: vec![1.0, 1.25, 1.5, 1.75],
        }
    }

    pub fn identity() -> Self {
        Self {
            rotations: vec![0],
            flips: vec![Flip::None],
            exponents: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.rotations.len() * self.flips.len() * self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rotation-major enumeration of the product.
    pub fn elements(&self) -> Vec<Augmentation> {
        let mut out = Vec::with_capacity(self.len());
        for &rotation in &self.rotations {
            for &flip in &self.flips {
                for &fisheye in &self.exponents {
                    out.push(Augmentation {
                        rotation,
                        flip,
                        fisheye,
                    });
                }
            }
        }
        out
    }
}

/// Applies rotation, then flip, then fish-eye.
pub fn augment(image: &BinaryImage, aug: Augmentation) -> Result<BinaryImage> {
    let rotated = if aug.rotation.is_multiple_of(360) {
        image.clone()
    } else {
        rotate(image, aug.rotation as f64)
    };
    fisheye(&flip(&rotated, aug.flip), aug.fisheye)
}

/// Centers the image on a square background canvas, then resizes it to
/// `size × size`.
pub fn to_network_input(image: &BinaryImage, size: usize) -> Result<BinaryImage> {
    let (w, h) = image.dims();
    let side = w.max(h);
    let square = if w == h {
        image.clone()
    } else {
        let (ox, oy) = ((side - w) / 2, (side - h) / 2);
        BinaryImage::from_fn(side, side, |x, y| {
            x >= ox && y >= oy && x < ox + w && y < oy + h && image.get(x - ox, y - oy) == 1
        })
    };
    resize_nearest(&square, size, size)
}

/// Masked template and masked design patch for one pose, both in the frame
/// of the rotated template canvas.
pub fn pair_images(template: &SherdTemplate, design: &BinaryImage, pose: Pose) -> (BinaryImage, BinaryImage) {
    let rot = RotatedTemplate::new(template, pose.theta);
    let patch = crop_rotated(design, pose, &rot);
    (rot.curve, patch)
}

/// Network-ready pair under one augmentation applied to both sides.
pub fn augmented_pair(
    a: &BinaryImage,
    b: &BinaryImage,
    aug: Augmentation,
    size: usize,
) -> Result<(BinaryImage, BinaryImage)> {
    Ok((
        to_network_input(&augment(a, aug)?, size)?,
        to_network_input(&augment(b, aug)?, size)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPair {
    pub a: BinaryImage,
    pub b: BinaryImage,
    pub label: bool,
}

/// A training sherd and, when known, its true design and pose.
#[derive(Clone, Debug)]
pub struct TrainingSherd {
    pub template: SherdTemplate,
    pub truth: Option<(DesignId, Pose)>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub positives: Vec<LabeledPair>,
    pub negatives: Vec<LabeledPair>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> &LabeledPair {
        if index < self.positives.len() {
            &self.positives[index]
        } else {
            &self.negatives[index - self.positives.len()]
        }
    }
}

/// Whether a candidate is the true matching: the true design at a pose at
/// most two pixels and one θ step from the truth.
pub fn is_true_match(candidate: &Candidate, truth: (DesignId, Pose), theta_stride: u32) -> bool {
    let (id, pose) = truth;
    if candidate.design_id != id {
        return false;
    }
    let dt = (candidate.pose.theta as i64 - pose.theta as i64).rem_euclid(360);
    let dt = dt.min(360 - dt);
    (candidate.pose.x - pose.x).abs() <= 2
        && (candidate.pose.y - pose.y).abs() <= 2
        && dt <= theta_stride as i64
}

#[derive(Clone, Debug)]
pub struct TrainingSetOptions {
    pub input_size: usize,
    pub neg_pos_cap: Option<usize>,
    pub augment_negatives: bool,
    pub theta_stride: u32,
    pub seed: u64,
}

/// Positives from every truth pair under every augmentation; negatives from
/// the false first-stage candidates, subsampled to the cap.
pub fn build_training_set(
    catalog: &Catalog,
    sherds: &[TrainingSherd],
    candidates: &[Vec<Candidate>],
    aug: &AugmentationSpec,
    options: &TrainingSetOptions,
) -> Result<TrainingSet> {
    if sherds.len() != candidates.len() {
        return Err(Error::arg("one candidate list per sherd required"));
    }
    let elements = aug.elements();
    let mut set = TrainingSet::default();
    for (i, (sherd, cands)) in sherds.iter().zip(candidates).enumerate() {
        let truth = sherd
            .truth
            .ok_or_else(|| Error::arg(format!("training sherd {i} has no truth")))?;
        let design = catalog.get(truth.0).ok_or(Error::UnknownDesign(truth.0))?;
        let (a, b) = pair_images(&sherd.template, &design.image, truth.1);
        for &e in &elements {
            let (a, b) = augmented_pair(&a, &b, e, options.input_size)?;
            set.positives.push(LabeledPair { a, b, label: true });
        }

        let mut false_ones: Vec<&Candidate> = cands
            .iter()
            .filter(|c| !is_true_match(c, truth, options.theta_stride))
            .collect();
        if let Some(cap) = options.neg_pos_cap {
            let limit = cap * elements.len();
            if false_ones.len() > limit {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                false_ones.shuffle(&mut rng);
                false_ones.truncate(limit);
            }
        }
        let neg_augs: &[Augmentation] = if options.augment_negatives {
            &elements
        } else {
            &[Augmentation::IDENTITY]
        };
        for c in false_ones {
            let d = catalog.get(c.design_id).ok_or(Error::UnknownDesign(c.design_id))?;
            let (a, b) = pair_images(&sherd.template, &d.image, c.pose);
            for &e in neg_augs {
                let (a, b) = augmented_pair(&a, &b, e, options.input_size)?;
                set.negatives.push(LabeledPair { a, b, label: false });
            }
        }
    }
    Ok(set)
}

/// Loss and parameter gradient of one labelled pair.
pub fn labeled_pair_gradient<T: Real>(net: &Net<T>, pair: &LabeledPair, margin: T) -> Result<(T, Grads<T>)> {
    pair_gradient(net, net.input_from(&pair.a)?, net.input_from(&pair.b)?, pair.label, margin)
}

/// Sums per-pair results in order and divides by their count.
pub fn reduce_gradients<T: Real>(net: &Net<T>, parts: Vec<(T, Grads<T>)>) -> (T, Grads<T>) {
    let n = T::from_f64(parts.len().max(1) as f64);
    let mut loss = T::ZERO;
    let mut grads = net.zero_grads();
    for (l, g) in &parts {
        loss += *l;
        grads.add_assign(g);
    }
    grads.scale(T::ONE / n);
    (loss / n, grads)
}

/// Optimizer state for the single-precision network.
#[derive(Clone, Debug)]
pub struct Trainer {
    net: EmbeddingNet,
    velocity: Grads<f32>,
    config: TrainConfig,
    rng: ChaCha8Rng,
    iter: usize,
}

impl Trainer {
    pub fn new(net: EmbeddingNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let velocity = net.zero_grads();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            net,
            velocity,
            config,
            rng,
            iter: 0,
        })
    }

    pub fn net(&self) -> &EmbeddingNet {
        &self.net
    }

    pub fn into_net(self) -> EmbeddingNet {
        self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    /// Draws the next batch of indices into a set of `n` pairs.
    pub fn sample_batch(&mut self, n: usize) -> Vec<usize> {
        (0..self.config.batch_size)
            .map(|_| self.rng.gen_range(0..n))
            .collect()
    }

    /// Applies an averaged batch gradient; `loss` is the batch mean.
    pub fn apply(&mut self, loss: f32, grads: &Grads<f32>) -> Result<f32> {
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss(self.iter));
        }
        let lr = self.config.lr_at(self.iter) as f32;
        self.net.sgd_step(
            grads,
            &mut self.velocity,
            lr,
            self.config.momentum as f32,
            self.config.weight_decay as f32,
        );
        self.iter += 1;
        Ok(loss)
    }

    /// One SGD step on `batch`, returning the batch loss before the update.
    pub fn backward_and_step(&mut self, batch: &[&LabeledPair]) -> Result<f32> {
        if batch.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let margin = self.config.margin as f32;
        let parts = batch
            .iter()
            .map(|p| labeled_pair_gradient(&self.net, p, margin))
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = reduce_gradients(&self.net, parts);
        self.apply(loss, &grads)
    }

    /// Runs the remaining iterations over `set`, returning per-iteration
    /// batch losses.
    pub fn train(&mut self, set: &TrainingSet) -> Result<Vec<f32>> {
        if set.is_empty() {
            return Err(Error::arg("empty training set"));
        }
        let mut losses = Vec::with_capacity(self.config.max_iters.saturating_sub(self.iter));
        while self.iter < self.config.max_iters {
            let idx = self.sample_batch(set.len());
            let batch: Vec<&LabeledPair> = idx.iter().map(|&i| set.get(i)).collect();
            losses.push(self.backward_and_step(&batch)?);
        }
        Ok(losses)
    }
}

/// Mean contrastive loss over every pair of `set`.
pub fn mean_loss(net: &EmbeddingNet, set: &TrainingSet, margin: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    let mut total = 0.0;
    for i in 0..set.len() {
        total += pair_loss(net, set.get(i), margin)?;
    }
    Ok(total / set.len() as f64)
}

/// Contrastive loss of one pair under `net`.
pub fn pair_loss(net: &EmbeddingNet, pair: &LabeledPair, margin: f64) -> Result<f64> {
    let fa = net.forward(&pair.a)?;
    let fb = net.forward(&pair.b)?;
    Ok(contrastive_loss(&fa, &fb, pair.label, margin as f32)?.0 as f64)
}

fn squared_distance<T: Real>(fa: &[T], fb: &[T]) -> f64 {
    fa.iter()
        .zip(fb)
        .map(|(&a, &b)| {
            let d = a.to_f64() - b.to_f64();
            d * d
        })
        .sum()
}

/// `ψ(a, b) = ‖f(a) − f(b)‖²`, resizing both inputs to the network size.
pub fn psi<T: Real>(net: &Net<T>, a: &BinaryImage, b: &BinaryImage) -> Result<f64> {
    let size = net.config().input_size;
    let fa = net.forward(&to_network_input(a, size)?)?;
    let fb = net.forward(&to_network_input(b, size)?)?;
    Ok(squared_distance(&fa, &fb))
}

/// Embeddings of `image` under every augmentation of `spec`.
pub fn augmented_embeddings<T: Real>(net: &Net<T>, image: &BinaryImage, spec: &AugmentationSpec) -> Result<Vec<Vec<T>>> {
    let size = net.config().input_size;
    spec.elements()
        .into_iter()
        .map(|e| net.forward(&to_network_input(&augment(image, e)?, size)?))
        .collect()
}

/// Mean squared distance between corresponding embeddings.
pub fn mean_squared_distance<T: Real>(fa: &[Vec<T>], fb: &[Vec<T>]) -> f64 {
    let sum: f64 = fa.iter().zip(fb).map(|(a, b)| squared_distance(a, b)).sum();
    sum / fa.len() as f64
}

/// Mean of `ψ` over the simultaneously augmented pairs.
pub fn psi_bar<T: Real>(net: &Net<T>, a: &BinaryImage, b: &BinaryImage, spec: &AugmentationSpec) -> Result<f64> {
    if spec.is_empty() {
        return Err(Error::arg("empty augmentation spec"));
    }
    let fa = augmented_embeddings(net, a, spec)?;
    let fb = augmented_embeddings(net, b, spec)?;
    Ok(mean_squared_distance(&fa, &fb))
}

pub fn tta_spec(tta: bool) -> AugmentationSpec {
    if tta {
        AugmentationSpec::full()
    } else {
        AugmentationSpec::identity()
    }
}

/// Fills `psi_bar` on each candidate. Template embeddings are shared among
/// candidates with the same θ.
pub fn score_candidates(
    net: &EmbeddingNet,
    template: &SherdTemplate,
    catalog: &Catalog,
    candidates: &mut [Candidate],
    spec: &AugmentationSpec,
) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::arg("empty augmentation spec"));
    }
    let mut by_theta: BTreeMap<u32, Vec<Vec<f32>>> = BTreeMap::new();
    for c in candidates.iter_mut() {
        let design = catalog.get(c.design_id).ok_or(Error::UnknownDesign(c.design_id))?;
        let (a, b) = pair_images(template, &design.image, c.pose);
        let fa = match by_theta.entry(c.pose.theta) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(augmented_embeddings(net, &a, spec)?),
        };
        let fb = augmented_embeddings(net, &b, spec)?;
        c.psi_bar = Some(mean_squared_distance(fa, &fb));
    }
    Ok(())
}

fn psi_order(a: &Candidate, b: &Candidate) -> Ordering {
    let pa = a.psi_bar.unwrap_or(f64::INFINITY);
    let pb = b.psi_bar.unwrap_or(f64::INFINITY);
    pa.total_cmp(&pb)
        .then(a.phi.total_cmp(&b.phi))
        .then(a.design_id.cmp(&b.design_id))
        .then(a.pose.cmp(&b.pose))
}

/// Keeps the lowest-`ψ̄` candidate of each design and sorts the survivors by
/// `(ψ̄, φ, design id)`.
pub fn best_per_design(candidates: &[Candidate]) -> Vec<Candidate> {
    let mut best: BTreeMap<DesignId, Candidate> = BTreeMap::new();
    for c in candidates {
        match best.get(&c.design_id) {
            Some(b) if psi_order(b, c) != Ordering::Greater => {}
            _ => {
                best.insert(c.design_id, *c);
            }
        }
    }
    let mut out: Vec<Candidate> = best.into_values().collect();
    out.sort_by(psi_order);
    out
}

/// Scores every candidate with `ψ̄` (full augmentation when `tta`, identity
/// otherwise) and ranks one entry per design.
pub fn rerank(
    net: &EmbeddingNet,
    template: &SherdTemplate,
    catalog: &Catalog,
    candidates: &[Candidate],
    tta: bool,
) -> Result<Vec<Candidate>> {
    let mut scored = candidates.to_vec();
    score_candidates(net, template, catalog, &mut scored, &tta_spec(tta))?;
    Ok(best_per_design(&scored))
}
