//! Layer-tap and test-time augmentation study, plus the Stage-1 timing
//! comparison against direct summation.

use std::time::Instant;

use curvematch_core::net::EmbeddingNet;
use curvematch_core::stage1::Stage1Matcher;
use curvematch_core::{Catalog, Error as CoreError, MatchConfig};
use serde::{Deserialize, Serialize};

use crate::pipeline::{self, Baseline, EvalInputs, LabeledSherd};
use crate::report::AblationRow;

pub const TIMING_CONDITION: &str = "stage1_fft_vs_direct";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOneTiming {
    pub sherd: String,
    pub fft_seconds: f64,
    pub direct_seconds: f64,
    /// Both paths returned the same candidates.
    pub identical: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub timing: StageOneTiming,
}

pub fn condition_name(tap: usize, tta: bool) -> String {
    format!("tap{tap}_tta_{}", if tta { "on" } else { "off" })
}

/// Exhaustive Stage 1 of one template over the whole catalog, through the
/// FFT path and through direct summation.
pub fn time_stage1(catalog: &Catalog, sherd: &LabeledSherd, config: MatchConfig) -> Result<StageOneTiming, CoreError> {
    let start = Instant::now();
    let mut matcher = Stage1Matcher::new(&sherd.template, config)?;
    matcher.prepare(catalog);
    let mut fft = Vec::new();
    for d in catalog.designs() {
        fft.extend(matcher.search(d)?);
    }
    let fft_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut direct = Vec::new();
    for d in catalog.designs() {
        direct.extend(matcher.search_direct(d)?);
    }
    let direct_seconds = start.elapsed().as_secs_f64();
    Ok(StageOneTiming {
        sherd: sherd.record.id.clone(),
        fft_seconds,
        direct_seconds,
        identical: fft == direct,
    })
}

/// Rerank Rank-1 for every tappable layer with augmentation on and off,
/// followed by one timing row whose `seconds` is the FFT Stage-1 time on the
/// first sherd (the direct time is in [`StageOneTiming`]).
pub fn run_ablations(
    catalog: &Catalog,
    net: &EmbeddingNet,
    sherds: &[LabeledSherd],
    matching: MatchConfig,
) -> Result<AblationOutcome, CoreError> {
    let first = sherds
        .first()
        .ok_or_else(|| CoreError::Argument("no sherds for ablation".into()))?;
    let candidates = pipeline::stage1_candidates(catalog, sherds, matching)?;
    let inputs = EvalInputs {
        catalog,
        sherds,
        candidates: &candidates,
        matching,
    };
    let mut rows = Vec::new();
    for tap in net.config().tappable_layers() {
        let tapped = net.with_tap(tap)?;
        for tta in [true, false] {
            let start = Instant::now();
            let e = pipeline::evaluate(&inputs, Baseline::Rerank, Some(&tapped), tta)?;
            rows.push(AblationRow {
                condition: condition_name(tap, tta),
                rank1: Some(e.curve.rank1()),
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    let timing = time_stage1(catalog, first, matching)?;
    rows.push(AblationRow {
        condition: TIMING_CONDITION.into(),
        rank1: None,
        seconds: timing.fft_seconds,
    });
    Ok(AblationOutcome { rows, timing })
}
