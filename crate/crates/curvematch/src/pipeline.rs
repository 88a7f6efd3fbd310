//! End-to-end workflows shared by the CLI, the ablations and the tests.

use std::fmt;
use std::str::FromStr;

use curvematch_core::corpus::SherdRecord;
use curvematch_core::eval::{self, ChamferCatalog, CmcCurve};
use curvematch_core::net::{EmbeddingNet, NetConfig};
use curvematch_core::stage2::{
    build_training_set, AugmentationSpec, TrainConfig, Trainer, TrainingSet, TrainingSetOptions, TrainingSherd,
};
use curvematch_core::{Candidate, Catalog, DesignId, Error as CoreError, MatchConfig, SherdTemplate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::parallel;

/// A sherd with known provenance.
#[derive(Clone, Debug)]
pub struct LabeledSherd {
    pub record: SherdRecord,
    pub template: SherdTemplate,
}

impl From<(SherdRecord, SherdTemplate)> for LabeledSherd {
    fn from((record, template): (SherdRecord, SherdTemplate)) -> Self {
        Self { record, template }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Stage1,
    Nn,
    Chamfer,
    Rerank,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Self::Stage1, Self::Nn, Self::Chamfer, Self::Rerank];

    pub fn name(self) -> &'static str {
        match self {
            Self::Stage1 => "stage1",
            Self::Nn => "nn",
            Self::Chamfer => "chamfer",
            Self::Rerank => "rerank",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown baseline {s:?} (expected stage1, nn, chamfer or rerank)"))
    }
}

/// Stage-1 candidates of every sherd, in sherd order.
pub fn stage1_candidates(
    catalog: &Catalog,
    sherds: &[LabeledSherd],
    config: MatchConfig,
) -> Result<Vec<Vec<Candidate>>, CoreError> {
    let templates: Vec<&SherdTemplate> = sherds.iter().map(|s| &s.template).collect();
    parallel::match_many(catalog, &templates, config)
}

/// Per-sherd design rankings and the resulting CMC curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub baseline: Baseline,
    pub rankings: Vec<Vec<DesignId>>,
    pub curve: CmcCurve,
}

pub struct EvalInputs<'a> {
    pub catalog: &'a Catalog,
    pub sherds: &'a [LabeledSherd],
    /// Stage-1 candidates per sherd.
    pub candidates: &'a [Vec<Candidate>],
    pub matching: MatchConfig,
}

/// Ranks every sherd with `baseline`. `net` is required for `rerank`.
pub fn evaluate(
    inputs: &EvalInputs<'_>,
    baseline: Baseline,
    net: Option<&EmbeddingNet>,
    tta: bool,
) -> Result<Evaluation, CoreError> {
    if inputs.sherds.len() != inputs.candidates.len() {
        return Err(CoreError::Argument("one candidate list per sherd required".into()));
    }
    if inputs.sherds.is_empty() {
        return Err(CoreError::Argument("no sherds to evaluate".into()));
    }
    let chamfer = (baseline == Baseline::Chamfer).then(|| ChamferCatalog::new(inputs.catalog));
    if baseline == Baseline::Rerank && net.is_none() {
        return Err(CoreError::Argument("rerank needs a model".into()));
    }
    let rankings = inputs
        .sherds
        .par_iter()
        .zip(inputs.candidates.par_iter())
        .map(|(s, cands)| -> Result<Vec<DesignId>, CoreError> {
            Ok(match baseline {
                Baseline::Stage1 => eval::ids(&eval::rank_stage1(cands)),
                Baseline::Nn => eval::ids(&eval::rank_nearest_neighbor(&s.template, inputs.catalog, cands)?),
                Baseline::Chamfer => {
                    let c = chamfer.as_ref().expect("built above");
                    eval::ids(&eval::rank_chamfer(c, &s.template, inputs.matching)?.ranked)
                }
                Baseline::Rerank => {
                    let net = net.expect("checked above");
                    curvematch_core::stage2::rerank(net, &s.template, inputs.catalog, cands, tta)?
                        .iter()
                        .map(|c| c.design_id)
                        .collect()
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let truths: Vec<DesignId> = inputs.sherds.iter().map(|s| s.record.design_id).collect();
    let curve = eval::cmc(&rankings, &truths)?;
    Ok(Evaluation {
        baseline,
        rankings,
        curve,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub net: NetConfig,
    pub net_seed: u64,
    pub train: TrainConfig,
    pub matching: MatchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub positives: usize,
    pub negatives: usize,
    /// Mean loss over the whole training set before the first step.
    pub initial_loss: f64,
    /// Same measure after the last step.
    pub final_loss: f64,
    pub batch_losses: Vec<f32>,
}

/// Training pairs from the truth poses and Stage-1 false candidates of
/// `sherds`.
pub fn training_set(
    catalog: &Catalog,
    sherds: &[LabeledSherd],
    options: &TrainOptions,
) -> Result<TrainingSet, CoreError> {
    let candidates = stage1_candidates(catalog, sherds, options.matching)?;
    let training: Vec<TrainingSherd> = sherds
        .iter()
        .map(|s| TrainingSherd {
            template: s.template.clone(),
            truth: Some((s.record.design_id, s.record.truth_pose)),
        })
        .collect();
    build_training_set(
        catalog,
        &training,
        &candidates,
        &AugmentationSpec::full(),
        &TrainingSetOptions {
            input_size: options.net.input_size,
            neg_pos_cap: options.train.neg_pos_cap,
            augment_negatives: options.train.augment_negatives,
            theta_stride: options.matching.theta_stride,
            seed: options.train.seed,
        },
    )
}

/// Builds the training set, trains a fresh network and measures the mean
/// loss before and after.
pub fn train_model(
    catalog: &Catalog,
    sherds: &[LabeledSherd],
    options: &TrainOptions,
    progress: impl FnMut(usize, f32),
) -> Result<(EmbeddingNet, TrainReport), CoreError> {
    let set = training_set(catalog, sherds, options)?;
    let net = EmbeddingNet::new(options.net.clone(), options.net_seed)?;
    let margin = options.train.margin;
    let initial_loss = parallel::mean_loss_par(&net, &set, margin)?;
    let mut trainer = Trainer::new(net, options.train.clone())?;
    let batch_losses = parallel::train_par(&mut trainer, &set, progress)?;
    let net = trainer.into_net();
    let final_loss = parallel::mean_loss_par(&net, &set, margin)?;
    Ok((
        net,
        TrainReport {
            positives: set.positives.len(),
            negatives: set.negatives.len(),
            initial_loss,
            final_loss,
            batch_losses,
        },
    ))
}
