//! Repeated random splits with validation grid search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{
    cohort_breakdown, evaluate, random_recall, ApNormalization, CandidatePolicy, CohortSpec, EvalTarget, MetricSummary,
    COHORT_NAMES, SELECTION_K,
};
use crate::baselines::{fit_bprmf, fit_weighted_mf, BprHyper, ConfidenceWeights};
use crate::cooccurrence::{guardian_cooccurrence_counts, sppmi, url_cooccurrence_counts};
use crate::data::{split_per_guardian, InteractionMatrix, SocialGraph, SplitRatios};
use crate::error::{Error, Result};
use crate::model::{fit, Hyperparams, ModelInputs, ModelParams, TrainTrace};
use crate::seed;
use crate::similarity::SimilarityBundle;

/// The interaction data plus any split-independent side information.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub interactions: InteractionMatrix,
    pub social: Option<SocialGraph>,
    pub guardian_similarity: Option<SimilarityBundle>,
    pub url_similarity: Option<SimilarityBundle>,
}

impl ExperimentData {
    pub fn new(interactions: InteractionMatrix) -> Self {
        ExperimentData {
            interactions,
            social: None,
            guardian_similarity: None,
            url_similarity: None,
        }
    }
}

/// One trainable configuration (a grid point).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    /// The joint model; its term flags select the variant.
    Joint(Hyperparams),
    Bpr(BprHyper),
    /// Confidence-weighted MF, optionally with the URL SPPMI term (shift from `h`).
    Wmf {
        h: Hyperparams,
        weights: ConfidenceWeights,
        url_sppmi: bool,
    },
}

/// Builds the model inputs needed by `h` from the training split and fits it.
/// SPPMI matrices are computed from `train` only.
pub fn fit_config(config: &ModelConfig, data: &ExperimentData, train: &InteractionMatrix, seed: u64) -> Result<ModelParams> {
    Ok(fit_config_traced(config, data, train, seed)?.0)
}

/// Like [`fit_config`], also returning the loss trace of gradient-descent models.
pub fn fit_config_traced(
    config: &ModelConfig,
    data: &ExperimentData,
    train: &InteractionMatrix,
    seed: u64,
) -> Result<(ModelParams, Option<TrainTrace>)> {
    match config {
        ModelConfig::Joint(h) => {
            let t = h.terms;
            let mut inputs = ModelInputs::new(train);
            if t.url_sppmi {
                inputs = inputs.with_url_sppmi(&sppmi(&url_cooccurrence_counts(train), h.shift)?)?;
            }
            if t.guardian_sppmi {
                inputs = inputs.with_guardian_sppmi(&sppmi(&guardian_cooccurrence_counts(train), h.shift)?)?;
            }
            if t.social {
                if let Some(s) = &data.social {
                    inputs = inputs.with_social(s)?;
                }
            }
            if t.guardian_content {
                if let Some(b) = &data.guardian_similarity {
                    inputs = inputs.with_guardian_similarity(b)?;
                }
            }
            if t.url_content {
                if let Some(b) = &data.url_similarity {
                    inputs = inputs.with_url_similarity(b)?;
                }
            }
            let (p, t) = fit(&inputs, h, seed)?;
            Ok((p, Some(t)))
        }
        ModelConfig::Bpr(b) => {
            let b = BprHyper { seed, ..b.clone() };
            Ok((fit_bprmf(train, &b)?, None))
        }
        ModelConfig::Wmf { h, weights, url_sppmi } => {
            let r = if *url_sppmi {
                Some(sppmi(&url_cooccurrence_counts(train), h.shift)?)
            } else {
                None
            };
            let (p, t) = fit_weighted_mf(train, *weights, h, r.as_ref(), seed)?;
            Ok((p, Some(t)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub grid: Vec<ModelConfig>,
    pub n_repeats: usize,
    pub ks: Vec<usize>,
    pub ratios: SplitRatios,
    pub policy: CandidatePolicy,
    pub ap_norm: ApNormalization,
    pub cohorts: Option<CohortSpec>,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, grid: Vec<ModelConfig>, seed: u64) -> Self {
        ExperimentSpec {
            name: name.into(),
            grid,
            n_repeats: 5,
            ks: super::DEFAULT_KS.to_vec(),
            ratios: SplitRatios::default(),
            policy: CandidatePolicy::default(),
            ap_norm: ApNormalization::default(),
            cohorts: Some(CohortSpec::default()),
            seed,
        }
    }
}

/// Mean and 95% Student-t confidence half-width over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub values: Vec<f64>,
}

impl MeanCi {
    /// The half-width is 0 for a single value.
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        };
        MeanCi { mean, ci95, values }
    }
}

/// [`MetricSummary`] aggregated over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub ks: Vec<usize>,
    pub recall: Vec<MeanCi>,
    pub ndcg: Vec<MeanCi>,
    pub map: Vec<MeanCi>,
}

impl SummaryStats {
    pub fn from_summaries(summaries: &[&MetricSummary]) -> Self {
        let ks = summaries[0].ks.clone();
        let column = |f: &dyn Fn(&MetricSummary) -> &Vec<f64>| -> Vec<MeanCi> {
            (0..ks.len())
                .map(|c| MeanCi::from_values(summaries.iter().map(|s| f(s)[c]).collect()))
                .collect()
        };
        SummaryStats {
            recall: column(&|s| &s.recall),
            ndcg: column(&|s| &s.ndcg),
            map: column(&|s| &s.map),
            ks,
        }
    }

    pub fn recall_at(&self, k: usize) -> Option<&MeanCi> {
        self.ks.iter().position(|&x| x == k).map(|i| &self.recall[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub split_seed: u64,
    pub fit_seed: u64,
    /// Validation Recall@10 per grid point; `None` for failed points.
    pub validation: Vec<Option<f64>>,
    pub failed: Vec<GridFailure>,
    pub best_index: usize,
    pub test: MetricSummary,
    pub skipped_guardians: usize,
    pub random_recall: Vec<f64>,
    pub cohorts: Vec<(String, MetricSummary)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub repeats: Vec<RepeatResult>,
    pub metrics: SummaryStats,
    /// Mean over repeats of the analytic random-ranking Recall@k, per cutoff.
    pub random_recall: Vec<f64>,
    pub cohorts: Vec<(String, SummaryStats)>,
    /// Grid point chosen most often across repeats (lowest index on ties).
    pub best: ModelConfig,
}

fn run_repeat(data: &ExperimentData, spec: &ExperimentSpec, repeat: usize) -> Result<RepeatResult> {
    let split_seed = seed::derive(spec.seed, "split", repeat as u64);
    let fit_seed = seed::derive(spec.seed, "init", repeat as u64);
    let split = split_per_guardian(&data.interactions, spec.ratios, split_seed)?;
    let single = spec.grid.len() == 1;

    let fits: Vec<Result<(f64, ModelParams)>> = spec
        .grid
        .par_iter()
        .map(|config| {
            let params = fit_config(config, data, &split.train, fit_seed)?;
            let score = if single {
                0.0
            } else {
                evaluate(&params, EvalTarget::validation(&split), &[SELECTION_K], spec.ap_norm)?.summary.recall[0]
            };
            Ok((score, params))
        })
        .collect();

    let mut validation = Vec::with_capacity(fits.len());
    let mut failed = Vec::new();
    let mut first_error = None;
    let mut best: Option<(usize, f64, ModelParams)> = None;
    for (index, r) in fits.into_iter().enumerate() {
        match r {
            Ok((score, params)) => {
                validation.push(Some(score));
                if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
                    best = Some((index, score, params));
                }
            }
            Err(e) => {
                log::warn!("repeat {repeat}: grid point {index} failed: {e}");
                validation.push(None);
                failed.push(GridFailure {
                    index,
                    message: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    // With every point failed, the first failure is the most useful error.
    let Some((best_index, _, params)) = best else {
        return Err(first_error.unwrap_or_else(|| Error::InvalidArgument("empty grid".into())));
    };

    let target = EvalTarget::test(&split, spec.policy);
    let report = evaluate(&params, target, &spec.ks, spec.ap_norm)?;
    let random = spec
        .ks
        .iter()
        .map(|&k| random_recall(target, data.interactions.n_urls(), k))
        .collect::<Result<Vec<_>>>()?;
    let cohorts = match &spec.cohorts {
        Some(c) => cohort_breakdown(&report, &split.train, c)?
            .into_iter()
            .map(|s| (s.name, s.metrics))
            .collect(),
        None => Vec::new(),
    };
    Ok(RepeatResult {
        repeat,
        split_seed,
        fit_seed,
        validation,
        failed,
        best_index,
        test: report.summary,
        skipped_guardians: report.skipped,
        random_recall: random,
        cohorts,
    })
}

/// For every repeat: draws a fresh split, fits each grid point on the
/// training part, keeps the one with the best validation Recall@10 (first on
/// ties) and evaluates it on the test part. Metrics are averaged over
/// guardians within a repeat, then over repeats.
pub fn run_experiment(data: &ExperimentData, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.grid.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
    }
    if spec.n_repeats == 0 {
        return Err(Error::InvalidArgument("at least one repeat is required".into()));
    }
    super::check_ks(&spec.ks)?;
    let repeats = (0..spec.n_repeats)
        .map(|r| {
            log::info!("{}: repeat {}/{}", spec.name, r + 1, spec.n_repeats);
            run_repeat(data, spec, r)
        })
        .collect::<Result<Vec<_>>>()?;

    let tests: Vec<&MetricSummary> = repeats.iter().map(|r| &r.test).collect();
    let metrics = SummaryStats::from_summaries(&tests);
    let random_recall = (0..spec.ks.len())
        .map(|c| repeats.iter().map(|r| r.random_recall[c]).sum::<f64>() / repeats.len() as f64)
        .collect();
    let cohorts = if spec.cohorts.is_some() {
        (0..COHORT_NAMES.len())
            .map(|c| {
                let s: Vec<&MetricSummary> = repeats.iter().map(|r| &r.cohorts[c].1).collect();
                (COHORT_NAMES[c].to_string(), SummaryStats::from_summaries(&s))
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut votes = vec![0usize; spec.grid.len()];
    for r in &repeats {
        votes[r.best_index] += 1;
    }
    let best_index = (0..votes.len()).max_by_key(|&i| (votes[i], std::cmp::Reverse(i))).unwrap();
    Ok(ExperimentReport {
        spec: spec.clone(),
        best: spec.grid[best_index].clone(),
        repeats,
        metrics,
        random_recall,
        cohorts,
    })
}
