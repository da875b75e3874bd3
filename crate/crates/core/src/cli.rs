//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analytics;
use crate::baselines::{BprHyper, ConfidenceWeights};
use crate::cooccurrence::{guardian_cooccurrence_counts, sppmi, url_cooccurrence_counts};
use crate::data::{
    align_docs, generate_synthetic, load_docs, load_interactions, load_social_edges, save_docs, save_interactions,
    split_per_guardian, Dataset, IdMap, InteractionFormat, InteractionMatrix, SocialGraph, SplitRatios, SplitTriple,
    SyntheticConfig,
};
use crate::error::Error;
use crate::evaluation::{
    cohort_breakdown, evaluate, fit_config_traced, render_ablation, render_sweep, run_ablation, run_sweep, ApNormalization,
    AblationSpec, CandidatePolicy, CohortSpec, EvalTarget, ExperimentData, ExperimentSpec, ModelConfig, SweepParam,
};
use crate::model::{load_model, save_model, Hyperparams, SavedModel, Terms, Variant};
use crate::seed;
use crate::similarity::{
    cosine_similarity_matrix, load_precomputed_vectors, tfidf_vectors, SimilarityBundle, DEFAULT_TOP_K,
    DEFAULT_VOCAB_SIZE,
};

pub const DEFAULT_SEED: u64 = 20_180_708;

#[derive(Parser, Debug)]
#[command(name = "guardrec", version, about = "Fact-checking URL recommendation for guardians")]
pub struct Cli {
    /// Worker threads for fits and evaluation (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a block-structured synthetic dataset.
    Synth(SynthArgs),
    /// Build matrices, the split and similarity graphs from raw inputs.
    Prepare(PrepareArgs),
    /// Fit one model on a prepared split.
    Train(TrainArgs),
    /// Score a trained model on the prepared test split.
    Evaluate(EvaluateArgs),
    /// Print top-k URLs for guardians.
    Recommend(RecommendArgs),
    /// Compare the model variants over repeated splits.
    Ablate(AblateArgs),
    /// Vary one auxiliary weight of the full model.
    Sweep(SweepArgs),
    /// Descriptive statistics over a tweets file.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub guardians: usize,
    #[arg(long, default_value_t = 100)]
    pub urls: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.8)]
    pub in_rate: f64,
    #[arg(long, default_value_t = 0.02)]
    pub cross_rate: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Raw input files.
#[derive(Args, Debug, Clone, Serialize)]
pub struct InputArgs {
    /// Interaction log (TSV `guardian<TAB>url[<TAB>ts]` or JSONL).
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<InteractionFormat>,
    /// Follow edges, `guardian<TAB>guardian`.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Guardian documents, JSONL `{"id", "text"}`.
    #[arg(long)]
    pub guardian_docs: Option<PathBuf>,
    #[arg(long)]
    pub url_docs: Option<PathBuf>,
    /// Precomputed guardian vectors, `id<TAB>f1...` (used instead of tf-idf).
    #[arg(long)]
    pub guardian_vectors: Option<PathBuf>,
    #[arg(long)]
    pub url_vectors: Option<PathBuf>,
    /// Guardians with fewer distinct URLs are dropped.
    #[arg(long, default_value_t = 3)]
    pub min_urls: usize,
    /// Neighbours kept per row of the similarity graphs.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub topk_sim: usize,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
}

/// Hyperparameters; comma-separated lists form a grid where one is accepted.
#[derive(Args, Debug, Clone, Serialize)]
pub struct HyperArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.04")]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.04")]
    pub beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.04")]
    pub gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "3e-5")]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub shift: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub dim: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.001")]
    pub eta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "500")]
    pub max_iters: Vec<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

impl HyperArgs {
    pub fn grid(&self, terms: Terms) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &dim in &self.dim {
            for &lambda in &self.lambda {
                for &alpha in &self.alpha {
                    for &beta in &self.beta {
                        for &gamma in &self.gamma {
                            for &shift in &self.shift {
                                for &eta in &self.eta {
                                    for &max_iters in &self.max_iters {
                                        out.push(Hyperparams {
                                            dim,
                                            lambda,
                                            alpha,
                                            gamma,
                                            beta,
                                            shift,
                                            eta,
                                            max_iters,
                                            convergence_tol: self.tol,
                                            terms,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn single(&self, terms: Terms) -> anyhow::Result<Hyperparams> {
        let mut g = self.grid(terms);
        if g.len() != 1 {
            bail!("this command takes one value per hyperparameter, got a grid of {} points", g.len());
        }
        Ok(g.remove(0))
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BaselineArgs {
    #[arg(long, default_value_t = 0.05)]
    pub bpr_lr: f64,
    #[arg(long, default_value_t = 200)]
    pub bpr_epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub bpr_reg: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_pos: f64,
    #[arg(long, default_value_t = 0.01)]
    pub c_neg: f64,
}

#[derive(Args, Debug, Clone)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Variant whose inputs must be available.
    #[arg(long, value_enum, default_value = "gau")]
    pub variant: Variant,
    /// SPPMI shift for the stored matrices.
    #[arg(long, default_value_t = 10)]
    pub shift: u32,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Joint,
    Bpr,
    Wmf,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub prepared: PathBuf,
    #[arg(long, value_enum, default_value = "joint")]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value = "gau")]
    pub variant: Variant,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub baseline: BaselineArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub prepared: PathBuf,
    #[arg(long = "model")]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15")]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value = "exclude-seen")]
    pub policy: CandidatePolicy,
    #[arg(long, value_enum, default_value = "min-relevant-k")]
    pub ap_norm: ApNormalization,
    /// Report file (JSON); a text table goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RecommendArgs {
    #[arg(long = "model")]
    pub model: PathBuf,
    /// Guardian ids; repeat or comma-separate.
    #[arg(long, value_delimiter = ',', required = true)]
    pub guardian: Vec<String>,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Exclude URLs each guardian already has in the prepared train/validation split.
    #[arg(long)]
    pub prepared: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    /// Directory written by `prepare`; otherwise the raw input flags are used.
    #[arg(long)]
    pub prepared: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15")]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value = "exclude-seen")]
    pub policy: CandidatePolicy,
    #[arg(long, value_enum, default_value = "min-relevant-k")]
    pub ap_norm: ApNormalization,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct AblateArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Variants to compare (default: all six).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    /// Also report BPR-MF and confidence-weighted MF rows.
    #[arg(long)]
    pub with_baselines: bool,
    #[command(flatten)]
    pub baseline: BaselineArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09")]
    pub values: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    /// JSONL `{"id", "kind": "D"|"S", "ts", "parent_ts"?, "parent_id"?, "text"?}`.
    #[arg(long)]
    pub tweets: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub top_terms: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("building the worker pool")?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Prepare(a) => cmd_prepare(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Recommend(a) => cmd_recommend(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Analyze(a) => cmd_analyze(&a),
    })
}

/// Exit status for an error: 2 usage, 3 input files, 4 data or model
/// problems, 5 numerical divergence, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<clap::Error>().is_some() {
        return 2;
    }
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Io { .. } | Error::Parse { .. } | Error::EmptyInput(_) | Error::Json(_)) => 3,
        Some(Error::Diverged { .. }) => 5,
        Some(Error::InvalidArgument(_)) => 2,
        Some(_) => 4,
        None => 1,
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s)
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let cfg = SyntheticConfig::new(a.guardians, a.urls, a.blocks, a.in_rate, a.cross_rate, a.seed);
    let b = generate_synthetic(&cfg)?;
    create_dir(&a.out)?;
    save_interactions(&b.dataset, &a.out.join("interactions.tsv"), InteractionFormat::Tsv)?;
    let mut edges = String::new();
    for (x, y) in b.social.edges() {
        edges.push_str(&format!("{}\t{}\n", b.dataset.guardians.id(x), b.dataset.guardians.id(y)));
    }
    write_file(&a.out.join("edges.tsv"), edges)?;
    save_docs(&b.guardian_docs, &a.out.join("guardian_docs.jsonl"))?;
    save_docs(&b.url_docs, &a.out.join("url_docs.jsonl"))?;
    let mut blocks = String::from("kind\tid\tblock\n");
    for (i, blk) in b.guardian_blocks.iter().enumerate() {
        blocks.push_str(&format!("guardian\t{}\t{blk}\n", b.dataset.guardians.id(i)));
    }
    for (j, blk) in b.url_blocks.iter().enumerate() {
        blocks.push_str(&format!("url\t{}\t{blk}\n", b.dataset.urls.id(j)));
    }
    write_file(&a.out.join("blocks.tsv"), blocks)?;
    write_json(&a.out.join("synth.json"), &cfg)?;
    log::info!(
        "synthetic: {} guardians, {} urls, {} interactions, {} edges",
        a.guardians,
        a.urls,
        b.dataset.matrix.nnz(),
        b.social.n_edges()
    );
    Ok(())
}

/// Side information loaded from raw files.
struct Loaded {
    dataset: Dataset,
    social: Option<SocialGraph>,
    guardian_similarity: Option<SimilarityBundle>,
    url_similarity: Option<SimilarityBundle>,
}

fn similarity_from(
    docs: Option<&Path>,
    vectors: Option<&Path>,
    ids: &IdMap,
    input: &InputArgs,
    what: &str,
) -> anyhow::Result<Option<SimilarityBundle>> {
    let v = match (vectors, docs) {
        (Some(p), _) => {
            let (v, skipped) = load_precomputed_vectors(p, ids)?;
            if skipped > 0 {
                log::info!("{}: skipped {skipped} vectors with unknown {what} ids", p.display());
            }
            v
        }
        (None, Some(p)) => {
            let (texts, unknown) = align_docs(&load_docs(p)?, ids);
            if unknown > 0 {
                log::info!("{}: skipped {unknown} documents with unknown {what} ids", p.display());
            }
            tfidf_vectors(&texts, input.vocab_size).with_context(|| format!("building {what} tf-idf vectors"))?
        }
        (None, None) => return Ok(None),
    };
    Ok(Some(cosine_similarity_matrix(&v, input.topk_sim, ids.len())?))
}

fn load_inputs(input: &InputArgs, need: Terms) -> anyhow::Result<Loaded> {
    let path = input
        .interactions
        .as_ref()
        .ok_or_else(|| anyhow!("--interactions is required (or pass --prepared)"))?;
    if need.social && input.edges.is_none() {
        bail!("the follow-graph term is enabled but no --edges file was given");
    }
    if need.guardian_content && input.guardian_docs.is_none() && input.guardian_vectors.is_none() {
        bail!("the guardian-content term is enabled but neither --guardian-docs nor --guardian-vectors was given");
    }
    if need.url_content && input.url_docs.is_none() && input.url_vectors.is_none() {
        bail!("the URL-content term is enabled but neither --url-docs nor --url-vectors was given");
    }
    let format = input.format.unwrap_or_else(|| InteractionFormat::from_path(path));
    let raw = load_interactions(path, format)?;
    let dataset = raw.filter_min_urls(input.min_urls)?;
    log::info!(
        "{}: {} guardians x {} urls, {} interactions after filtering",
        path.display(),
        dataset.guardians.len(),
        dataset.urls.len(),
        dataset.matrix.nnz()
    );
    let social = match &input.edges {
        Some(p) => Some(load_social_edges(p, &dataset.guardians)?.0),
        None => None,
    };
    let guardian_similarity = similarity_from(
        input.guardian_docs.as_deref(),
        input.guardian_vectors.as_deref(),
        &dataset.guardians,
        input,
        "guardian",
    )?;
    let url_similarity = similarity_from(input.url_docs.as_deref(), input.url_vectors.as_deref(), &dataset.urls, input, "URL")?;
    Ok(Loaded {
        dataset,
        social,
        guardian_similarity,
        url_similarity,
    })
}

const SPLIT_PARTS: [&str; 3] = ["train", "validation", "test"];

fn write_split(split: &SplitTriple, ds: &Dataset, path: &Path) -> anyhow::Result<()> {
    let mut out = String::new();
    for (part, m) in SPLIT_PARTS.iter().zip([&split.train, &split.validation, &split.test]) {
        for (g, u) in m.iter() {
            out.push_str(&format!("{}\t{}\t{part}\n", ds.guardians.id(g), ds.urls.id(u)));
        }
    }
    write_file(path, out)
}

fn read_split(path: &Path, ds: &Dataset) -> anyhow::Result<SplitTriple> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut parts: [Vec<(usize, usize)>; 3] = Default::default();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::parse(path, i + 1, "expected `guardian<TAB>url<TAB>train|validation|test` with known ids");
        if f.len() != 3 {
            return Err(bad().into());
        }
        let g = ds.guardians.get(f[0]).ok_or_else(bad)?;
        let u = ds.urls.get(f[1]).ok_or_else(bad)?;
        let p = SPLIT_PARTS.iter().position(|&p| p == f[2]).ok_or_else(bad)?;
        parts[p].push((g, u));
    }
    let (n, m) = (ds.guardians.len(), ds.urls.len());
    let [train, validation, test] = parts;
    Ok(SplitTriple {
        train: InteractionMatrix::from_pairs(n, m, train)?,
        validation: InteractionMatrix::from_pairs(n, m, validation)?,
        test: InteractionMatrix::from_pairs(n, m, test)?,
        seed: 0,
    })
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub const ARTIFACTS: [&str; 7] = [
    "interactions.tsv",
    "split.tsv",
    "sppmi_url.tsv",
    "sppmi_guardian.tsv",
    "social.tsv",
    "sim_guardian.tsv",
    "sim_url.tsv",
];

fn cmd_prepare(a: &PrepareArgs) -> anyhow::Result<()> {
    let need = a.variant.terms();
    let loaded = load_inputs(&a.input, need)?;
    let ds = &loaded.dataset;
    create_dir(&a.out)?;
    let split_seed = seed::derive(a.seed, "split", 0);
    let split = split_per_guardian(&ds.matrix, SplitRatios::default(), split_seed)?;

    save_interactions(ds, &a.out.join(ARTIFACTS[0]), InteractionFormat::Tsv)?;
    write_split(&split, ds, &a.out.join(ARTIFACTS[1]))?;
    sppmi(&url_cooccurrence_counts(&split.train), a.shift)?.write_tsv(&a.out.join(ARTIFACTS[2]))?;
    sppmi(&guardian_cooccurrence_counts(&split.train), a.shift)?.write_tsv(&a.out.join(ARTIFACTS[3]))?;
    let mut social = String::new();
    if let Some(s) = &loaded.social {
        for (x, y) in s.edges() {
            social.push_str(&format!("{}\t{}\n", ds.guardians.id(x), ds.guardians.id(y)));
        }
    }
    write_file(&a.out.join(ARTIFACTS[4]), social)?;
    let empty_g = SimilarityBundle::empty(ds.guardians.len());
    let empty_u = SimilarityBundle::empty(ds.urls.len());
    loaded.guardian_similarity.as_ref().unwrap_or(&empty_g).write_tsv(&a.out.join(ARTIFACTS[5]))?;
    loaded.url_similarity.as_ref().unwrap_or(&empty_u).write_tsv(&a.out.join(ARTIFACTS[6]))?;

    let artifacts = ARTIFACTS
        .iter()
        .map(|name| {
            let p = a.out.join(name);
            Ok(json!({ "name": name, "sha256": sha256_file(&p)?, "bytes": fs::metadata(&p)?.len() }))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let manifest = json!({
        "format": "guardrec-prepared",
        "version": 1,
        "config": {
            "input": a.input,
            "variant": a.variant.label(),
            "shift": a.shift,
            "seed": a.seed,
            "split_seed": split_seed,
            "split_ratios": SplitRatios::default(),
        },
        "counts": {
            "guardians": ds.guardians.len(),
            "urls": ds.urls.len(),
            "interactions": ds.matrix.nnz(),
            "train": split.train.nnz(),
            "validation": split.validation.nnz(),
            "test": split.test.nnz(),
            "social_edges": loaded.social.as_ref().map_or(0, |s| s.n_edges()),
            "has_guardian_similarity": loaded.guardian_similarity.is_some(),
            "has_url_similarity": loaded.url_similarity.is_some(),
        },
        "artifacts": artifacts,
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    log::info!("prepared {} artifacts in {}", ARTIFACTS.len(), a.out.display());
    Ok(())
}

struct Prepared {
    dataset: Dataset,
    split: SplitTriple,
    data: ExperimentData,
}

fn load_prepared(dir: &Path) -> anyhow::Result<Prepared> {
    let manifest_path = dir.join("manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?,
    )
    .map_err(Error::from)?;
    let counts = &manifest["counts"];
    let dataset = load_interactions(&dir.join(ARTIFACTS[0]), InteractionFormat::Tsv)?;
    let split = read_split(&dir.join(ARTIFACTS[1]), &dataset)?;
    let social = if counts["social_edges"].as_u64().unwrap_or(0) > 0 {
        Some(load_social_edges(&dir.join(ARTIFACTS[4]), &dataset.guardians)?.0)
    } else {
        None
    };
    let sim = |name: &str, flag: &str, n: usize| -> anyhow::Result<Option<SimilarityBundle>> {
        Ok(if counts[flag].as_bool().unwrap_or(false) {
            Some(SimilarityBundle::read_tsv(&dir.join(name), n)?)
        } else {
            None
        })
    };
    let guardian_similarity = sim(ARTIFACTS[5], "has_guardian_similarity", dataset.guardians.len())?;
    let url_similarity = sim(ARTIFACTS[6], "has_url_similarity", dataset.urls.len())?;
    let data = ExperimentData {
        interactions: dataset.matrix.clone(),
        social,
        guardian_similarity,
        url_similarity,
    };
    Ok(Prepared { dataset, split, data })
}

fn model_config(kind: ModelKind, h: Hyperparams, b: &BaselineArgs) -> ModelConfig {
    match kind {
        ModelKind::Joint => ModelConfig::Joint(h),
        ModelKind::Bpr => ModelConfig::Bpr(BprHyper {
            dim: h.dim,
            learning_rate: b.bpr_lr,
            reg: b.bpr_reg,
            epochs: b.bpr_epochs,
            seed: 0,
        }),
        ModelKind::Wmf => ModelConfig::Wmf {
            h: Hyperparams { terms: Terms::NONE, ..h }.normalized(),
            weights: ConfidenceWeights {
                c_pos: b.c_pos,
                c_neg: b.c_neg,
            },
            url_sppmi: true,
        },
    }
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let p = load_prepared(&a.prepared)?;
    let terms = match a.model {
        ModelKind::Joint => a.variant.terms(),
        _ => Terms::NONE,
    };
    let h = a.hyper.single(terms)?;
    let config = model_config(a.model, h.clone(), &a.baseline);
    let fit_seed = seed::derive(a.seed, "init", 0);
    let (params, trace) = fit_config_traced(&config, &p.data, &p.split.train, fit_seed)?;
    let saved = SavedModel {
        params,
        hyperparams: h,
        guardians: p.dataset.guardians.ids().to_vec(),
        urls: p.dataset.urls.ids().to_vec(),
    };
    if let Some(parent) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_model(&a.out, &saved)?;
    let mut echo = a.out.clone().into_os_string();
    echo.push(".json");
    write_json(
        Path::new(&echo),
        &json!({
            "model": a.model,
            "config": config,
            "seed": a.seed,
            "fit_seed": fit_seed,
            "prepared": a.prepared,
            "trace": trace,
        }),
    )?;
    if let Some(t) = &trace {
        log::info!(
            "{} iterations ({:?}), loss {:.6e} -> {:.6e}",
            t.iterations,
            t.stop,
            t.initial_loss(),
            t.final_loss()
        );
    }
    log::info!("model written to {}", a.out.display());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let p = load_prepared(&a.prepared)?;
    if model.guardians != p.dataset.guardians.ids() || model.urls != p.dataset.urls.ids() {
        return Err(Error::DimensionMismatch("model ids do not match the prepared dataset".into()).into());
    }
    let report = evaluate(&model.params, EvalTarget::test(&p.split, a.policy), &a.k, a.ap_norm)?;
    let cohorts = cohort_breakdown(&report, &p.split.train, &CohortSpec::default())?;
    let mut text = String::new();
    text.push_str(&format!("guardians evaluated: {} (skipped {})\n", report.summary.n_guardians, report.skipped));
    for (c, k) in report.summary.ks.iter().enumerate() {
        text.push_str(&format!(
            "@{k}: recall {:.5}  map {:.5}  ndcg {:.5}\n",
            report.summary.recall[c], report.summary.map[c], report.summary.ndcg[c]
        ));
    }
    for c in &cohorts {
        let r: Vec<String> = c.metrics.recall.iter().map(|v| format!("{v:.5}")).collect();
        text.push_str(&format!("{} ({} guardians): recall {}\n", c.name, c.guardians, r.join(" ")));
    }
    let out = json!({
        "model": a.model,
        "prepared": a.prepared,
        "policy": a.policy,
        "ap_norm": a.ap_norm,
        "summary": report.summary,
        "skipped": report.skipped,
        "cohorts": cohorts,
    });
    if let Some(parent) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(&a.out, &out)?;
    write_file(&a.out.with_extension("txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_recommend(a: &RecommendArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let ids = IdMap::from_ids(model.guardians.iter());
    let seen = match &a.prepared {
        Some(dir) => {
            let p = load_prepared(dir)?;
            if p.dataset.guardians.ids() != model.guardians.as_slice() {
                return Err(Error::DimensionMismatch("model ids do not match the prepared dataset".into()).into());
            }
            Some(p.split.seen())
        }
        None => None,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let multi = a.guardian.len() > 1;
    for gid in &a.guardian {
        let g = ids.get(gid).ok_or_else(|| Error::UnknownGuardian(gid.clone()))?;
        let exclude: &[usize] = seen.as_ref().map_or(&[], |s| s.row(g));
        for (j, score) in model.params.recommend_topk(g, a.k, exclude)? {
            if multi {
                writeln!(out, "{gid}\t{}\t{score:.6}", model.urls[j])?;
            } else {
                writeln!(out, "{}\t{score:.6}", model.urls[j])?;
            }
        }
    }
    Ok(())
}

fn experiment_data(e: &ExperimentArgs, need: Terms) -> anyhow::Result<ExperimentData> {
    match &e.prepared {
        Some(dir) => {
            let p = load_prepared(dir)?;
            let d = p.data;
            if need.social && d.social.is_none() {
                bail!("the follow-graph term is enabled but the prepared data has no social edges (pass --edges to prepare)");
            }
            if need.guardian_content && d.guardian_similarity.is_none() {
                bail!("the guardian-content term is enabled but the prepared data has no guardian similarity");
            }
            if need.url_content && d.url_similarity.is_none() {
                bail!("the URL-content term is enabled but the prepared data has no URL similarity");
            }
            Ok(d)
        }
        None => {
            let l = load_inputs(&e.input, need)?;
            Ok(ExperimentData {
                interactions: l.dataset.matrix,
                social: l.social,
                guardian_similarity: l.guardian_similarity,
                url_similarity: l.url_similarity,
            })
        }
    }
}

fn template(e: &ExperimentArgs) -> ExperimentSpec {
    ExperimentSpec {
        n_repeats: e.repeats,
        ks: e.k.clone(),
        policy: e.policy,
        ap_norm: e.ap_norm,
        ..ExperimentSpec::new("", Vec::new(), e.seed)
    }
}

fn union_terms(variants: &[Variant]) -> Terms {
    variants.iter().fold(Terms::NONE, |acc, v| {
        let t = v.terms();
        Terms {
            url_sppmi: acc.url_sppmi || t.url_sppmi,
            guardian_sppmi: acc.guardian_sppmi || t.guardian_sppmi,
            social: acc.social || t.social,
            guardian_content: acc.guardian_content || t.guardian_content,
            url_content: acc.url_content || t.url_content,
        }
    })
}

fn cmd_ablate(a: &AblateArgs) -> anyhow::Result<()> {
    let variants = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.clone()
    };
    let data = experiment_data(&a.exp, union_terms(&variants))?;
    let grid = a.exp.hyper.grid(Terms::NONE);
    let mut extra = Vec::new();
    if a.with_baselines {
        let bpr: Vec<ModelConfig> = {
            let mut dims = a.exp.hyper.dim.clone();
            dims.dedup();
            dims.iter()
                .map(|&d| model_config(ModelKind::Bpr, Hyperparams { dim: d, ..grid[0].clone() }, &a.baseline))
                .collect()
        };
        let wmf = grid.iter().map(|h| model_config(ModelKind::Wmf, h.clone(), &a.baseline)).collect();
        extra.push(("BPRMF".to_string(), bpr));
        extra.push(("WMF+CSU".to_string(), wmf));
    }
    let spec = AblationSpec {
        variants,
        grid,
        extra,
        template: template(&a.exp),
    };
    let report = run_ablation(&data, &spec)?;
    create_dir(&a.exp.out)?;
    write_json(&a.exp.out.join("ablation.json"), &report)?;
    let text = render_ablation(&report);
    write_file(&a.exp.out.join("ablation.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let data = experiment_data(&a.exp, Terms::ALL)?;
    let base = a.exp.hyper.single(Terms::ALL)?;
    let report = run_sweep(&data, &base, a.param, &a.values, &template(&a.exp))?;
    create_dir(&a.exp.out)?;
    let name = format!("sweep_{:?}", a.param).to_lowercase();
    write_json(&a.exp.out.join(format!("{name}.json")), &report)?;
    let text = render_sweep(&report);
    write_file(&a.exp.out.join(format!("{name}.txt")), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_analyze(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let tweets = analytics::load_tweets(&a.tweets)?;
    let (records, record_stats) = analytics::build_records(&tweets);
    let d_times = if records.iter().any(|r| r.original_post_time.is_some()) {
        Some(analytics::d_response_times(&records)?)
    } else {
        None
    };
    let (s_gaps, s_rejected) = analytics::s_response_times(&records);
    let s_stats = analytics::duration_stats(&s_gaps).ok();
    let inter = analytics::s_inter_posting_pairs(&records);
    let monthly = analytics::monthly_counts(&tweets);
    let texts: Vec<&str> = tweets.iter().filter_map(|t| t.text.as_deref()).collect();
    let terms = if texts.is_empty() {
        Vec::new()
    } else {
        analytics::top_terms(&texts, a.top_terms)?
    };
    create_dir(&a.out)?;
    let report = json!({
        "tweets": a.tweets,
        "records": record_stats,
        "d_response_times": d_times,
        "s_response_times": { "stats": s_stats, "gaps": s_gaps, "rejected": s_rejected },
        "s_inter_posting": inter,
        "monthly": monthly,
        "top_terms": terms,
    });
    write_json(&a.out.join("analytics.json"), &report)?;
    write_file(&a.out.join("monthly.csv"), monthly.to_csv())?;
    let mut pairs = String::from("delta_i,delta_next\n");
    for (x, y) in &inter.pairs {
        pairs.push_str(&format!("{x},{y}\n"));
    }
    write_file(&a.out.join("inter_posting_pairs.csv"), pairs)?;
    if let Some(d) = &d_times {
        println!(
            "D-tweet response time: mean {:.1} s, median {:.1} s, within one day {:.3}",
            d.stats.mean_seconds, d.stats.median_seconds, d.stats.within_one_day
        );
    }
    println!("months: {}, tweets counted: {}, skipped: {}", monthly.months.len(), monthly.total(), monthly.skipped);
    Ok(())
}
