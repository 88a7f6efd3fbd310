//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use curvematch_core::corpus::{CorpusConfig, DegradationSpec, DesignStyle, SherdRecord, SherdSize};
use curvematch_core::net::EmbeddingNet;
use curvematch_core::stage2::TrainConfig;
use curvematch_core::{Candidate, MatchConfig, SherdTemplate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ablation;
use crate::error::{self, Error, Result};
use crate::model;
use crate::parallel;
use crate::pipeline::{self, Baseline, EvalInputs, LabeledSherd, TrainOptions};
use crate::report::{self, NamedCurve};
use crate::store::{self, CatalogDir, DEFAULT_SPLIT};

#[derive(Debug, Parser)]
#[command(name = "curvematch", version, about = "Identify curve designs from fragmentary binary curve patterns")]
pub struct Cli {
    /// Worker threads; falls back to CURVEMATCH_THREADS, then the CPU count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic catalog with sherds and a train/test split.
    GenCorpus(GenCorpusArgs),
    /// Stage 1: candidate poses of one sherd on every design.
    Match(MatchArgs),
    /// Train an embedding network on a catalog's training split.
    Train(TrainArgs),
    /// Stage 2: re-rank Stage-1 candidates with a trained model.
    Rerank(RerankArgs),
    /// Both stages for one sherd.
    Identify(IdentifyArgs),
    /// CMC curve of one ranking method over a split.
    Eval(EvalArgs),
    /// Merge CMC CSV files into one CSV and an SVG plot.
    Report(ReportArgs),
    /// Layer-tap and augmentation study with the Stage-1 timing row.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenCorpusArgs {
    /// Output catalog directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub designs: usize,
    #[arg(long, default_value_t = 5)]
    pub sherds_per_design: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 160)]
    pub width: usize,
    #[arg(long, default_value_t = 160)]
    pub height: usize,
    #[arg(long, default_value_t = 48)]
    pub sherd_min: usize,
    #[arg(long, default_value_t = 72)]
    pub sherd_max: usize,
    #[arg(long, default_value_t = 3)]
    pub stroke: usize,
    /// waves, arcs, lattice or mixed; cycles through all when omitted.
    #[arg(long)]
    pub style: Option<String>,
    /// none, mild or heavy.
    #[arg(long, default_value = "none")]
    pub degradation: String,
    /// Truth rotations are multiples of this many degrees.
    #[arg(long, default_value_t = 10)]
    pub theta_step: u32,
    /// Fraction of each design's sherds assigned to training.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MatchArgs {
    /// Catalog directory.
    #[arg(long)]
    pub catalog: PathBuf,
    #[command(flatten)]
    pub sherd: SherdArgs,
    #[command(flatten)]
    pub matching: MatchArgsCommon,
    /// Candidate list (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SherdArgs {
    /// Sherd id from the catalog manifest.
    #[arg(long, conflicts_with_all = ["curve", "mask"])]
    pub sherd: Option<String>,
    /// Curve image (PGM).
    #[arg(long, requires = "mask")]
    pub curve: Option<PathBuf>,
    /// Mask image (PGM).
    #[arg(long, requires = "curve")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MatchArgsCommon {
    /// Candidates kept per design.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Rotation step in degrees; must divide 360.
    #[arg(long, default_value_t = 1)]
    pub theta_stride: u32,
}

impl MatchArgsCommon {
    fn config(&self) -> Result<MatchConfig> {
        Ok(MatchConfig::new(self.k, self.theta_stride)?)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = DEFAULT_SPLIT)]
    pub split: String,
    /// Network preset: tiny or paper-alexnet-conv4.
    #[arg(long, default_value = "tiny")]
    pub preset: String,
    /// Layer whose pooled activations form the embedding.
    #[arg(long)]
    pub tap: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    /// Negatives per positive, or "all".
    #[arg(long, default_value = "10")]
    pub neg_cap: String,
    #[arg(long)]
    pub augment_negatives: bool,
    /// Seeds both initialization and batch sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub matching: MatchArgsCommon,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerankArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Candidate list written by `match`.
    #[arg(long)]
    pub candidates: PathBuf,
    #[command(flatten)]
    pub sherd: SherdArgs,
    /// Score with the identity augmentation only.
    #[arg(long)]
    pub no_tta: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub sherd: SherdArgs,
    #[command(flatten)]
    pub matching: MatchArgsCommon,
    #[arg(long)]
    pub no_tta: bool,
    /// Rows printed.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    /// stage1, nn, chamfer or rerank.
    #[arg(long)]
    pub baseline: Baseline,
    /// Required for rerank.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_SPLIT)]
    pub split: String,
    /// train, test or all.
    #[arg(long, default_value = "test")]
    pub part: String,
    #[arg(long)]
    pub no_tta: bool,
    #[command(flatten)]
    pub matching: MatchArgsCommon,
    /// CMC CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// CMC CSV files to merge.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = DEFAULT_SPLIT)]
    pub split: String,
    #[arg(long, default_value = "test")]
    pub part: String,
    #[command(flatten)]
    pub matching: MatchArgsCommon,
    /// Ablation CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance written next to every output.
#[derive(Debug, Serialize)]
struct RunRecord<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: &'a A,
    config: Value,
    outputs: Value,
}

fn write_run<A: Serialize>(path: &Path, command: &'static str, args: &A, config: Value, outputs: Value) -> Result<()> {
    error::write_json(
        path,
        &RunRecord {
            tool: "curvematch",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args,
            config,
            outputs,
        },
    )
}

/// `<out>.run.json` beside a file output.
fn run_path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".run.json");
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = parallel::thread_count(cli.threads)?;
    let pool = parallel::pool(threads)?;
    pool.install(|| match cli.command {
        Command::GenCorpus(a) => gen_corpus(&a),
        Command::Match(a) => match_cmd(&a),
        Command::Train(a) => train(&a),
        Command::Rerank(a) => rerank(&a),
        Command::Identify(a) => identify(&a),
        Command::Eval(a) => eval(&a),
        Command::Report(a) => report_cmd(&a),
        Command::Ablate(a) => ablate(&a),
    })
}

fn gen_corpus(a: &GenCorpusArgs) -> Result<()> {
    let degradation = DegradationSpec::preset(&a.degradation)
        .ok_or_else(|| Error::Usage(format!("unknown degradation {:?} (expected none, mild or heavy)", a.degradation)))?;
    let style = a
        .style
        .as_deref()
        .map(|s| {
            serde_json::from_value::<DesignStyle>(Value::String(s.into()))
                .map_err(|_| Error::Usage(format!("unknown style {s:?} (expected waves, arcs, lattice or mixed)")))
        })
        .transpose()?;
    if !(0.0..=1.0).contains(&a.train_fraction) {
        return Err(Error::Usage("--train-fraction must lie in [0, 1]".into()));
    }
    let config = CorpusConfig {
        designs: a.designs,
        sherds_per_design: a.sherds_per_design,
        seed: a.seed,
        design_width: a.width,
        design_height: a.height,
        sherd_size: SherdSize {
            min: a.sherd_min,
            max: a.sherd_max,
        },
        stroke_px: a.stroke,
        style,
        degradation,
        theta_step: a.theta_step,
    };
    let manifest = store::write_corpus(&a.out, &config, a.train_fraction)?;
    write_run(
        &a.out.join("run.json"),
        "gen-corpus",
        a,
        json!(config),
        json!({ "designs": manifest.designs.len(), "sherds": manifest.sherds.len() }),
    )?;
    println!(
        "wrote {} designs and {} sherds to {}",
        manifest.designs.len(),
        manifest.sherds.len(),
        a.out.display()
    );
    Ok(())
}

fn resolve_sherd(cat: &CatalogDir, s: &SherdArgs) -> Result<(String, SherdTemplate, Option<SherdRecord>)> {
    match (&s.sherd, &s.curve, &s.mask) {
        (Some(id), None, None) => {
            let r = cat.record(id)?;
            Ok((id.clone(), cat.template(r)?, Some(r.clone())))
        }
        (None, Some(c), Some(m)) => Ok((c.display().to_string(), store::load_template(c, m)?, None)),
        _ => Err(Error::Usage("give either --sherd ID or both --curve and --mask".into())),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateFile {
    sherd: String,
    config: MatchConfig,
    candidates: Vec<Candidate>,
}

fn print_table(rows: &[Candidate], top: usize) {
    println!("{:>4}  {:>6}  {:>5}  {:>5}  {:>5}  {:>8}  {:>12}", "rank", "design", "x", "y", "theta", "phi", "psi_bar");
    for (i, c) in rows.iter().take(top).enumerate() {
        let psi = c.psi_bar.map_or_else(|| "-".to_string(), |p| format!("{p:.6}"));
        println!(
            "{:>4}  {:>6}  {:>5}  {:>5}  {:>5}  {:>8}  {:>12}",
            i + 1,
            c.design_id.to_string(),
            c.pose.x,
            c.pose.y,
            c.pose.theta,
            c.phi,
            psi
        );
    }
}

fn match_cmd(a: &MatchArgs) -> Result<()> {
    let cat = CatalogDir::open(&a.catalog)?;
    let (name, template, _) = resolve_sherd(&cat, &a.sherd)?;
    let config = a.matching.config()?;
    let candidates = parallel::match_catalog_par(&cat.catalog, &template, config)?;
    let mut sorted = candidates.clone();
    sorted.sort_by(|x, y| x.phi.total_cmp(&y.phi).then(x.design_id.cmp(&y.design_id)).then(x.pose.cmp(&y.pose)));
    print_table(&sorted, sorted.len());
    if let Some(out) = &a.out {
        let file = CandidateFile {
            sherd: name,
            config,
            candidates,
        };
        error::write_json(out, &file)?;
        write_run(&run_path_for(out), "match", a, json!(config), json!({ "candidates": file.candidates.len() }))?;
    }
    Ok(())
}

fn neg_cap(s: &str) -> Result<Option<usize>> {
    if s == "all" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Usage(format!("--neg-cap must be a count or \"all\", got {s:?}")))
}

fn labeled(cat: &CatalogDir, ids: &[String]) -> Result<Vec<LabeledSherd>> {
    Ok(cat.sherds(ids)?.into_iter().map(LabeledSherd::from).collect())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cat = CatalogDir::open(&a.catalog)?;
    let mut net = model::preset(&a.preset)?;
    if let Some(t) = a.tap {
        net = net.with_tap(t);
    }
    let train = TrainConfig {
        margin: a.margin,
        batch_size: a.batch,
        base_lr: a.lr,
        max_iters: a.iters,
        neg_pos_cap: neg_cap(&a.neg_cap)?,
        augment_negatives: a.augment_negatives,
        seed: a.seed,
        ..TrainConfig::default()
    };
    train.validate()?;
    let options = TrainOptions {
        net,
        net_seed: a.seed,
        train,
        matching: a.matching.config()?,
    };
    let ids = cat.split_ids(&a.split, "train")?;
    let sherds = labeled(&cat, &ids)?;
    let every = (a.iters / 20).max(1);
    let (net, report) = pipeline::train_model(&cat.catalog, &sherds, &options, |it, loss| {
        if it % every == 0 {
            eprintln!("iter {it:>6}  batch loss {loss:.6}");
        }
    })?;
    model::save_model(&net, &a.out)?;
    println!(
        "{} positive and {} negative pairs; mean loss {:.6} -> {:.6}",
        report.positives, report.negatives, report.initial_loss, report.final_loss
    );
    write_run(
        &run_path_for(&a.out),
        "train",
        a,
        json!({ "options": options, "sherds": ids }),
        json!(report),
    )
}

fn load_net(path: &Path) -> Result<EmbeddingNet> {
    model::load_model(path)
}

fn rerank(a: &RerankArgs) -> Result<()> {
    let cat = CatalogDir::open(&a.catalog)?;
    let net = load_net(&a.model)?;
    let (name, template, _) = resolve_sherd(&cat, &a.sherd)?;
    let file: CandidateFile = error::read_json(&a.candidates)?;
    let ranked = parallel::rerank_par(&net, &template, &cat.catalog, &file.candidates, !a.no_tta)?;
    print_table(&ranked, ranked.len());
    if let Some(out) = &a.out {
        error::write_json(out, &json!({ "sherd": name, "tta": !a.no_tta, "ranking": ranked }))?;
        write_run(&run_path_for(out), "rerank", a, json!({ "tta": !a.no_tta }), json!({ "designs": ranked.len() }))?;
    }
    Ok(())
}

fn identify(a: &IdentifyArgs) -> Result<()> {
    let cat = CatalogDir::open(&a.catalog)?;
    let net = load_net(&a.model)?;
    let (name, template, _) = resolve_sherd(&cat, &a.sherd)?;
    let config = a.matching.config()?;
    let candidates = parallel::match_catalog_par(&cat.catalog, &template, config)?;
    let ranked = parallel::rerank_par(&net, &template, &cat.catalog, &candidates, !a.no_tta)?;
    print_table(&ranked, a.top);
    if let Some(out) = &a.out {
        error::write_json(
            out,
            &json!({ "sherd": name, "config": config, "tta": !a.no_tta, "ranking": ranked }),
        )?;
        write_run(
            &run_path_for(out),
            "identify",
            a,
            json!({ "matching": config, "tta": !a.no_tta }),
            json!({ "top": ranked.first().map(|c| c.design_id) }),
        )?;
    }
    Ok(())
}

fn method_name(baseline: Baseline, tta: bool) -> String {
    match (baseline, tta) {
        (Baseline::Rerank, false) => "rerank_notta".into(),
        _ => baseline.name().into(),
    }
}

fn eval(a: &EvalArgs) -> Result<()> {
    let cat = CatalogDir::open(&a.catalog)?;
    let net = match (&a.model, a.baseline) {
        (Some(p), _) => Some(load_net(p)?),
        (None, Baseline::Rerank) => return Err(Error::Usage("--baseline rerank needs --model".into())),
        (None, _) => None,
    };
    let config = a.matching.config()?;
    let ids = cat.split_ids(&a.split, &a.part)?;
    let sherds = labeled(&cat, &ids)?;
    let candidates = pipeline::stage1_candidates(&cat.catalog, &sherds, config)?;
    let e = pipeline::evaluate(
        &EvalInputs {
            catalog: &cat.catalog,
            sherds: &sherds,
            candidates: &candidates,
            matching: config,
        },
        a.baseline,
        net.as_ref(),
        !a.no_tta,
    )?;
    let method = method_name(a.baseline, !a.no_tta);
    error::write(
        &a.out,
        report::cmc_csv(&[NamedCurve {
            method: method.clone(),
            curve: e.curve.clone(),
        }]),
    )?;
    println!("{method}: rank-1 {:.4} over {} sherds", e.curve.rank1(), sherds.len());
    write_run(
        &run_path_for(&a.out),
        "eval",
        a,
        json!({ "matching": config, "sherds": ids }),
        json!({ "rank1": e.curve.rank1() }),
    )
}

fn report_cmd(a: &ReportArgs) -> Result<()> {
    if a.csv.is_none() && a.svg.is_none() {
        return Err(Error::Usage("give --csv and/or --svg".into()));
    }
    let mut curves: Vec<NamedCurve> = Vec::new();
    for p in &a.inputs {
        let text = String::from_utf8(error::read(p)?).map_err(|_| Error::format(p, "not UTF-8"))?;
        for c in report::parse_cmc_csv(&text).map_err(|m| Error::format(p, m))? {
            if curves.iter().any(|x| x.method == c.method) {
                return Err(Error::format(p, format!("method {:?} appears twice", c.method)));
            }
            curves.push(c);
        }
    }
    if let Some(out) = &a.csv {
        error::write(out, report::cmc_csv(&curves))?;
        write_run(&run_path_for(out), "report", a, Value::Null, json!({ "methods": curves.len() }))?;
    }
    if let Some(out) = &a.svg {
        error::write(out, report::cmc_svg(&curves))?;
        write_run(&run_path_for(out), "report", a, Value::Null, json!({ "methods": curves.len() }))?;
    }
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let cat = CatalogDir::open(&a.catalog)?;
    let net = load_net(&a.model)?;
    let config = a.matching.config()?;
    let ids = cat.split_ids(&a.split, &a.part)?;
    let sherds = labeled(&cat, &ids)?;
    let outcome = ablation::run_ablations(&cat.catalog, &net, &sherds, config)?;
    let csv = report::ablation_csv(&outcome.rows);
    print!("{csv}");
    println!(
        "stage 1 on {}: fft {:.3}s, direct {:.3}s, identical {}",
        outcome.timing.sherd, outcome.timing.fft_seconds, outcome.timing.direct_seconds, outcome.timing.identical
    );
    error::write(&a.out, csv)?;
    write_run(
        &run_path_for(&a.out),
        "ablate",
        a,
        json!({ "matching": config, "sherds": ids }),
        json!({ "timing": outcome.timing }),
    )
}
