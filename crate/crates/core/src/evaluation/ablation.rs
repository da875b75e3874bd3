//! Variant ablation table and one-parameter sensitivity sweeps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentData, ExperimentSpec, MeanCi, ModelConfig, SummaryStats};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, Variant};

/// Column labels in report order: Recall, MAP, NDCG, each at every cutoff.
pub const METRIC_COLUMNS: [&str; 3] = ["Recall", "MAP", "NDCG"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub variants: Vec<Variant>,
    /// Grid shared by all variants; term flags are replaced per variant and
    /// points that become identical are merged.
    pub grid: Vec<Hyperparams>,
    /// Extra rows (label, grid), e.g. BPR or WMF baselines.
    pub extra: Vec<(String, Vec<ModelConfig>)>,
    /// Repeats, cutoffs, split ratios, policies and seed; its name and grid are unused.
    pub template: ExperimentSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub values: Vec<MeanCi>,
    pub ranks: Vec<f64>,
    pub avg_rank: f64,
    pub best: ModelConfig,
    pub cohorts: Vec<(String, SummaryStats)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub spec: AblationSpec,
    pub columns: Vec<String>,
    pub rows: Vec<AblationRow>,
    pub random_recall: Vec<f64>,
}

impl AblationReport {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn column(&self, metric: &str, k: usize) -> Option<usize> {
        self.columns.iter().position(|c| *c == format!("{metric}@{k}"))
    }
}

fn columns(ks: &[usize]) -> Vec<String> {
    METRIC_COLUMNS
        .iter()
        .flat_map(|m| ks.iter().map(move |k| format!("{m}@{k}")))
        .collect()
}

fn flatten(s: &SummaryStats) -> Vec<MeanCi> {
    [&s.recall, &s.map, &s.ndcg].into_iter().flat_map(|v| v.iter().cloned()).collect()
}

/// Competition ranks (1 = best, ties share the better rank).
fn ranks(means: &[f64]) -> Vec<f64> {
    means
        .iter()
        .map(|m| 1.0 + means.iter().filter(|o| *o > m).count() as f64)
        .collect()
}

pub fn variant_grid(grid: &[Hyperparams], variant: Variant) -> Vec<ModelConfig> {
    let mut out: Vec<Hyperparams> = Vec::new();
    for h in grid {
        let h = Hyperparams {
            terms: variant.terms(),
            ..h.clone()
        }
        .normalized();
        if !out.contains(&h) {
            out.push(h);
        }
    }
    out.into_iter().map(ModelConfig::Joint).collect()
}

pub fn run_ablation(data: &ExperimentData, spec: &AblationSpec) -> Result<AblationReport> {
    if spec.variants.is_empty() && spec.extra.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    let mut experiments: Vec<(String, Vec<ModelConfig>)> = spec
        .variants
        .iter()
        .map(|&v| (v.label().to_string(), variant_grid(&spec.grid, v)))
        .collect();
    experiments.extend(spec.extra.iter().cloned());

    let mut rows = Vec::with_capacity(experiments.len());
    let mut random_recall = Vec::new();
    for (label, grid) in experiments {
        let exp = ExperimentSpec {
            name: label.clone(),
            grid,
            ..spec.template.clone()
        };
        let report = run_experiment(data, &exp)?;
        random_recall = report.random_recall.clone();
        rows.push(AblationRow {
            label,
            values: flatten(&report.metrics),
            ranks: Vec::new(),
            avg_rank: 0.0,
            best: report.best,
            cohorts: report.cohorts,
        });
    }
    let cols = columns(&spec.template.ks);
    for c in 0..cols.len() {
        let means: Vec<f64> = rows.iter().map(|r| r.values[c].mean).collect();
        for (row, rank) in rows.iter_mut().zip(ranks(&means)) {
            row.ranks.push(rank);
        }
    }
    for row in &mut rows {
        row.avg_rank = row.ranks.iter().sum::<f64>() / row.ranks.len() as f64;
    }
    Ok(AblationReport {
        spec: spec.clone(),
        columns: cols,
        rows,
        random_recall,
    })
}

fn table(header: Vec<String>, body: Vec<Vec<String>>) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule);
    for r in &body {
        line(&mut out, r);
    }
    out
}

/// Aligned text table: one row per model, `mean (rank)` per metric column
/// and the average rank.
pub fn render_ablation(report: &AblationReport) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(report.columns.iter().cloned());
    header.push("Avg. Rank".into());
    let body = report
        .rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.label.clone()];
            cells.extend(r.values.iter().zip(&r.ranks).map(|(v, k)| format!("{:.5} ({k})", v.mean)));
            cells.push(format!("{:.2}", r.avg_rank));
            cells
        })
        .collect();
    let mut out = table(header, body);
    let random: Vec<String> = report
        .spec
        .template
        .ks
        .iter()
        .zip(&report.random_recall)
        .map(|(k, r)| format!("Recall@{k}={r:.5}"))
        .collect();
    let _ = writeln!(out, "random ranking: {}", random.join(" "));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum SweepParam {
    Alpha,
    Beta,
    Gamma,
}

impl SweepParam {
    fn apply(self, h: &mut Hyperparams, value: f64) {
        match self {
            SweepParam::Alpha => h.alpha = value,
            SweepParam::Beta => h.beta = value,
            SweepParam::Gamma => h.gamma = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: SummaryStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub base: Hyperparams,
    pub rows: Vec<SweepRow>,
}

/// Varies one weight of `base` over `values`, everything else fixed.
pub fn run_sweep(
    data: &ExperimentData,
    base: &Hyperparams,
    param: SweepParam,
    values: &[f64],
    template: &ExperimentSpec,
) -> Result<SweepReport> {
    let rows = values
        .iter()
        .map(|&value| {
            let mut h = base.clone();
            param.apply(&mut h, value);
            let spec = ExperimentSpec {
                name: format!("{param:?}={value}"),
                grid: vec![ModelConfig::Joint(h)],
                ..template.clone()
            };
            Ok(SweepRow {
                value,
                metrics: run_experiment(data, &spec)?.metrics,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        param,
        base: base.clone(),
        rows,
    })
}

pub fn render_sweep(report: &SweepReport) -> String {
    let ks = report.rows.first().map(|r| r.metrics.ks.clone()).unwrap_or_default();
    let mut header = vec![format!("{:?}", report.param).to_lowercase()];
    header.extend(columns(&ks));
    let body = report
        .rows
        .iter()
        .map(|r| {
            let mut cells = vec![format!("{}", r.value)];
            cells.extend(flatten(&r.metrics).iter().map(|v| format!("{:.5}", v.mean)));
            cells
        })
        .collect();
    table(header, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Terms;

    #[test]
    fn competition_ranks() {
        assert_eq!(ranks(&[0.3, 0.5, 0.3, 0.1]), vec![2.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn variant_grid_merges_unused_weights() {
        let grid: Vec<Hyperparams> = [0.02, 0.04]
            .iter()
            .map(|&a| Hyperparams {
                alpha: a,
                ..Default::default()
            })
            .collect();
        assert_eq!(variant_grid(&grid, Variant::Basic).len(), 1);
        assert_eq!(variant_grid(&grid, Variant::Gau).len(), 2);
        match &variant_grid(&grid, Variant::Basic)[0] {
            ModelConfig::Joint(h) => assert_eq!(h.terms, Terms::NONE),
            _ => unreachable!(),
        }
    }

    #[test]
    fn column_labels() {
        assert_eq!(columns(&[5, 10]), vec!["Recall@5", "Recall@10", "MAP@5", "MAP@10", "NDCG@5", "NDCG@10"]);
    }
}
