//! Held-out ranking evaluation, repeated-split experiments, activeness cohorts
//! and the ablation / sensitivity harnesses.

mod ablation;
mod experiment;
mod metrics;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, SplitTriple};
use crate::error::{Error, Result};
use crate::model::{rank_topk, ModelParams};

pub use ablation::{
    render_ablation, render_sweep, run_ablation, run_sweep, variant_grid, AblationReport, AblationRow, AblationSpec, SweepParam,
    SweepReport, SweepRow, METRIC_COLUMNS,
};
pub use experiment::{
    fit_config, fit_config_traced, run_experiment, ExperimentData, ExperimentReport, ExperimentSpec, GridFailure, MeanCi, ModelConfig,
    RepeatResult, SummaryStats,
};
pub use metrics::{ap_at_k, map_at_k, ndcg_at_k, recall_at_k, ApNormalization};

pub const DEFAULT_KS: [usize; 3] = [5, 10, 15];
/// Cutoff used to select grid points on the validation split.
pub const SELECTION_K: usize = 10;

/// Anything that scores every URL for a guardian.
pub trait Scorer: Sync {
    fn n_urls(&self) -> usize;
    fn scores(&self, guardian: usize) -> Result<Vec<f64>>;
}

impl Scorer for ModelParams {
    fn n_urls(&self) -> usize {
        ModelParams::n_urls(self)
    }

    fn scores(&self, guardian: usize) -> Result<Vec<f64>> {
        Ok(self.predict_scores(guardian)?.to_vec())
    }
}

/// Which of a guardian's known URLs are removed from the candidate list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum CandidatePolicy {
    /// Drop train and validation URLs.
    #[default]
    ExcludeSeen,
    /// Drop train URLs only.
    ExcludeTrain,
    /// Rank every URL.
    All,
}

/// Evaluation target: which held-out matrix is relevant and which known
/// entries are excluded.
#[derive(Clone, Copy, Debug)]
pub struct EvalTarget<'a> {
    pub relevant: &'a InteractionMatrix,
    pub exclude: [Option<&'a InteractionMatrix>; 2],
}

impl<'a> EvalTarget<'a> {
    pub fn test(split: &'a SplitTriple, policy: CandidatePolicy) -> Self {
        let exclude = match policy {
            CandidatePolicy::ExcludeSeen => [Some(&split.train), Some(&split.validation)],
            CandidatePolicy::ExcludeTrain => [Some(&split.train), None],
            CandidatePolicy::All => [None, None],
        };
        EvalTarget {
            relevant: &split.test,
            exclude,
        }
    }

    /// Validation ranking excludes the training URLs (test URLs stay
    /// candidates, as they are unknown at selection time).
    pub fn validation(split: &'a SplitTriple) -> Self {
        EvalTarget {
            relevant: &split.validation,
            exclude: [Some(&split.train), None],
        }
    }

    fn excluded(&self, guardian: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.exclude.iter().flatten().flat_map(|m| m.row(guardian).iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn n_candidates(&self, guardian: usize, n_urls: usize) -> usize {
        n_urls - self.excluded(guardian).len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardianMetrics {
    pub guardian: usize,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub map: Vec<f64>,
}

/// Per-cutoff means, indexed like `ks`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub map: Vec<f64>,
    pub n_guardians: usize,
}

impl MetricSummary {
    pub fn from_guardians<'a, I>(ks: &[usize], rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a GuardianMetrics>,
    {
        let mut recall = vec![0.0; ks.len()];
        let mut ndcg = vec![0.0; ks.len()];
        let mut map = vec![0.0; ks.len()];
        let mut n = 0usize;
        for g in rows {
            for c in 0..ks.len() {
                recall[c] += g.recall[c];
                ndcg[c] += g.ndcg[c];
                map[c] += g.map[c];
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::InvalidArgument("no guardian has held-out URLs to evaluate".into()));
        }
        let scale = |v: Vec<f64>| v.into_iter().map(|x| x / n as f64).collect();
        Ok(MetricSummary {
            ks: ks.to_vec(),
            recall: scale(recall),
            ndcg: scale(ndcg),
            map: scale(map),
            n_guardians: n,
        })
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: MetricSummary,
    pub per_guardian: Vec<GuardianMetrics>,
    /// Guardians without held-out URLs, left out of every mean.
    pub skipped: usize,
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("cutoffs must be a nonempty list of positive integers".into()));
    }
    Ok(())
}

/// Ranks every candidate URL for each guardian with held-out URLs and
/// averages the metrics over those guardians.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    target: EvalTarget<'_>,
    ks: &[usize],
    ap_norm: ApNormalization,
) -> Result<EvalReport> {
    check_ks(ks)?;
    let n = target.relevant.n_guardians();
    if scorer.n_urls() != target.relevant.n_urls() {
        return Err(Error::DimensionMismatch(format!(
            "scorer covers {} URLs, split has {}",
            scorer.n_urls(),
            target.relevant.n_urls()
        )));
    }
    let k_max = *ks.iter().max().unwrap();
    let rows: Vec<Option<GuardianMetrics>> = (0..n)
        .into_par_iter()
        .map(|g| -> Result<Option<GuardianMetrics>> {
            let relevant = target.relevant.row(g);
            if relevant.is_empty() {
                return Ok(None);
            }
            let scores = scorer.scores(g)?;
            let ranked: Vec<usize> = rank_topk(&scores, k_max, &target.excluded(g))?.into_iter().map(|(j, _)| j).collect();
            let mut m = GuardianMetrics {
                guardian: g,
                recall: Vec::with_capacity(ks.len()),
                ndcg: Vec::with_capacity(ks.len()),
                map: Vec::with_capacity(ks.len()),
            };
            for &k in ks {
                m.recall.push(recall_at_k(&ranked, relevant, k)?);
                m.ndcg.push(ndcg_at_k(&ranked, relevant, k)?);
                m.map.push(ap_at_k(&ranked, relevant, k, ap_norm)?);
            }
            Ok(Some(m))
        })
        .collect::<Result<_>>()?;
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let per_guardian: Vec<GuardianMetrics> = rows.into_iter().flatten().collect();
    let summary = MetricSummary::from_guardians(ks, &per_guardian)?;
    Ok(EvalReport {
        summary,
        per_guardian,
        skipped,
    })
}

/// Expected Recall@k of a uniformly random ranking over each guardian's
/// candidates (`min(k, C)/C` with `C` candidates), averaged like [`evaluate`].
pub fn random_recall(target: EvalTarget<'_>, n_urls: usize, k: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for g in 0..target.relevant.n_guardians() {
        if target.relevant.row(g).is_empty() {
            continue;
        }
        let c = target.n_candidates(g, n_urls);
        total += k.min(c) as f64 / c as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no guardian has held-out URLs to evaluate".into()));
    }
    Ok(total / n as f64)
}

/// Fractions of guardians, sorted by training-URL count ascending, that form
/// the cold-start, warm-start and highly active cohorts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub fractions: [f64; 3],
}

pub const COHORT_NAMES: [&str; 3] = ["cold-start", "warm-start", "highly-active"];

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            fractions: [0.2, 0.6, 0.2],
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("cohort fractions must be nonnegative and sum to 1".into()));
        }
        Ok(())
    }

    /// Guardian indices per cohort. Sizes are `round(f₀n)` and `round(f₂n)`
    /// for the outer cohorts and the remainder in the middle; ties in the
    /// count are broken by guardian index.
    pub fn assign(&self, train: &InteractionMatrix) -> Result<[Vec<usize>; 3]> {
        self.validate()?;
        let n = train.n_guardians();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&g| (train.row(g).len(), g));
        let first = ((self.fractions[0] * n as f64).round() as usize).min(n);
        let last = ((self.fractions[2] * n as f64).round() as usize).min(n - first);
        let middle = n - first - last;
        let cohorts = [
            order[..first].to_vec(),
            order[first..first + middle].to_vec(),
            order[first + middle..].to_vec(),
        ];
        for (c, name) in cohorts.iter().zip(COHORT_NAMES) {
            if c.is_empty() {
                return Err(Error::EmptyCohort(name.to_string()));
            }
        }
        Ok(cohorts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub name: String,
    pub guardians: usize,
    pub metrics: MetricSummary,
}

/// Re-averages a report's per-guardian metrics within each cohort.
pub fn cohort_breakdown(report: &EvalReport, train: &InteractionMatrix, spec: &CohortSpec) -> Result<Vec<CohortSummary>> {
    let cohorts = spec.assign(train)?;
    let mut member = vec![usize::MAX; train.n_guardians()];
    for (c, gs) in cohorts.iter().enumerate() {
        for &g in gs {
            member[g] = c;
        }
    }
    cohorts
        .iter()
        .enumerate()
        .map(|(c, gs)| {
            let rows = report.per_guardian.iter().filter(|m| member[m.guardian] == c);
            let metrics = MetricSummary::from_guardians(&report.summary.ks, rows)
                .map_err(|_| Error::EmptyCohort(COHORT_NAMES[c].to_string()))?;
            Ok(CohortSummary {
                name: COHORT_NAMES[c].to_string(),
                guardians: gs.len(),
                metrics,
            })
        })
        .collect()
}
