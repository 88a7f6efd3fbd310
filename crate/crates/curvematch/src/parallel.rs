//! Thread-pool drivers. Every function here merges results in a fixed order,
//! so output does not depend on the number of workers.

use std::collections::BTreeMap;

use curvematch_core::net::EmbeddingNet;
use curvematch_core::stage1::Stage1Matcher;
use curvematch_core::stage2::{
    self, augmented_embeddings, labeled_pair_gradient, reduce_gradients, AugmentationSpec, LabeledPair,
    Trainer, TrainingSet,
};
use curvematch_core::{Candidate, Catalog, Error as CoreError, MatchConfig, SherdTemplate};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "CURVEMATCH_THREADS";

/// Worker count: the explicit flag, then `CURVEMATCH_THREADS`, then the
/// machine's available parallelism.
pub fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        return Ok(n);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))
}

/// Parallel counterpart of `stage1::match_catalog`: one task per design.
pub fn match_catalog_par(
    catalog: &Catalog,
    template: &SherdTemplate,
    config: MatchConfig,
) -> Result<Vec<Candidate>, CoreError> {
    if catalog.is_empty() {
        return Err(CoreError::Argument("empty catalog".into()));
    }
    let mut matcher = Stage1Matcher::new(template, config)?;
    matcher.prepare(catalog);
    let per_design = catalog
        .designs()
        .par_iter()
        .map(|d| {
            matcher.search(d).map_err(|e| CoreError::Design {
                id: d.id,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_design.into_iter().flatten().collect())
}

/// Stage-1 candidates for many templates, one task per template.
pub fn match_many(
    catalog: &Catalog,
    templates: &[&SherdTemplate],
    config: MatchConfig,
) -> Result<Vec<Vec<Candidate>>, CoreError> {
    templates
        .par_iter()
        .map(|t| curvematch_core::stage1::match_catalog(catalog, t, config))
        .collect()
}

/// Parallel counterpart of `stage2::score_candidates`.
pub fn score_candidates_par(
    net: &EmbeddingNet,
    template: &SherdTemplate,
    catalog: &Catalog,
    candidates: &mut [Candidate],
    spec: &AugmentationSpec,
) -> Result<(), CoreError> {
    if spec.is_empty() {
        return Err(CoreError::Argument("empty augmentation spec".into()));
    }
    let mut patches = Vec::with_capacity(candidates.len());
    for c in candidates.iter() {
        let design = catalog.get(c.design_id).ok_or(CoreError::UnknownDesign(c.design_id))?;
        patches.push(stage2::pair_images(template, &design.image, c.pose));
    }
    let mut first_of_theta: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        first_of_theta.entry(c.pose.theta).or_insert(i);
    }
    let firsts: Vec<(u32, usize)> = first_of_theta.into_iter().collect();
    let template_embeddings: BTreeMap<u32, Vec<Vec<f32>>> = firsts
        .par_iter()
        .map(|&(theta, i)| Ok((theta, augmented_embeddings(net, &patches[i].0, spec)?)))
        .collect::<Result<_, CoreError>>()?;
    let scores: Vec<f64> = candidates
        .par_iter()
        .zip(patches.par_iter())
        .map(|(c, (_, b))| {
            let fa = &template_embeddings[&c.pose.theta];
            let fb = augmented_embeddings(net, b, spec)?;
            Ok(stage2::mean_squared_distance(fa, &fb))
        })
        .collect::<Result<_, CoreError>>()?;
    for (c, s) in candidates.iter_mut().zip(scores) {
        c.psi_bar = Some(s);
    }
    Ok(())
}

/// Parallel counterpart of `stage2::rerank`.
pub fn rerank_par(
    net: &EmbeddingNet,
    template: &SherdTemplate,
    catalog: &Catalog,
    candidates: &[Candidate],
    tta: bool,
) -> Result<Vec<Candidate>, CoreError> {
    let mut scored = candidates.to_vec();
    score_candidates_par(net, template, catalog, &mut scored, &stage2::tta_spec(tta))?;
    Ok(stage2::best_per_design(&scored))
}

/// One optimizer step with per-pair gradients computed in parallel. The
/// reduction runs in batch order, so the update matches
/// `Trainer::backward_and_step` bit for bit.
pub fn step_par(trainer: &mut Trainer, batch: &[&LabeledPair]) -> Result<f32, CoreError> {
    if batch.is_empty() {
        return Err(CoreError::Argument("empty batch".into()));
    }
    let margin = trainer.config().margin as f32;
    let net = trainer.net();
    let parts = batch
        .par_iter()
        .map(|p| labeled_pair_gradient(net, p, margin))
        .collect::<Result<Vec<_>, _>>()?;
    let (loss, grads) = reduce_gradients(net, parts);
    trainer.apply(loss, &grads)
}

/// Parallel counterpart of `Trainer::train`; `progress` sees each
/// iteration index and batch loss.
pub fn train_par(
    trainer: &mut Trainer,
    set: &TrainingSet,
    mut progress: impl FnMut(usize, f32),
) -> Result<Vec<f32>, CoreError> {
    if set.is_empty() {
        return Err(CoreError::Argument("empty training set".into()));
    }
    let mut losses = Vec::new();
    while trainer.iteration() < trainer.config().max_iters {
        let idx = trainer.sample_batch(set.len());
        let batch: Vec<&LabeledPair> = idx.iter().map(|&i| set.get(i)).collect();
        let it = trainer.iteration();
        let loss = step_par(trainer, &batch)?;
        progress(it, loss);
        losses.push(loss);
    }
    Ok(losses)
}

/// Mean contrastive loss over a set, one task per pair, summed in order.
pub fn mean_loss_par(net: &EmbeddingNet, set: &TrainingSet, margin: f64) -> Result<f64, CoreError> {
    if set.is_empty() {
        return Err(CoreError::Argument("empty training set".into()));
    }
    let losses = (0..set.len())
        .into_par_iter()
        .map(|i| stage2::pair_loss(net, set.get(i), margin))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(losses.iter().sum::<f64>() / set.len() as f64)
}
