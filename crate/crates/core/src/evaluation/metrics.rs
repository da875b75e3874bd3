//! Top-k ranking metrics with binary relevance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator used for average precision at k.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ApNormalization {
    /// `min(|relevant|, k)`, so a perfect top-k scores 1.
    #[default]
    MinRelevantK,
    /// `|relevant|`.
    Relevant,
}

fn check(relevant: &[usize]) -> Result<()> {
    if relevant.is_empty() {
        Err(Error::EmptyRelevant)
    } else {
        Ok(())
    }
}

/// 1-based ranks of relevant items within the top `k`.
fn hits<'a>(ranked: &'a [usize], relevant: &'a [usize], k: usize) -> impl Iterator<Item = usize> + 'a {
    ranked[..ranked.len().min(k)]
        .iter()
        .enumerate()
        .filter(move |(_, j)| relevant.contains(j))
        .map(|(r, _)| r + 1)
}

pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check(relevant)?;
    Ok(hits(ranked, relevant, k).count() as f64 / relevant.len() as f64)
}

pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check(relevant)?;
    let dcg: f64 = hits(ranked, relevant, k).map(|r| 1.0 / ((r + 1) as f64).log2()).sum();
    let idcg: f64 = (1..=relevant.len().min(k)).map(|i| 1.0 / ((i + 1) as f64).log2()).sum();
    Ok(dcg / idcg)
}

pub fn ap_at_k(ranked: &[usize], relevant: &[usize], k: usize, norm: ApNormalization) -> Result<f64> {
    check(relevant)?;
    let precision_sum: f64 = hits(ranked, relevant, k)
        .enumerate()
        .map(|(n_hit, r)| (n_hit + 1) as f64 / r as f64)
        .sum();
    let denom = match norm {
        ApNormalization::MinRelevantK => relevant.len().min(k),
        ApNormalization::Relevant => relevant.len(),
    };
    Ok(precision_sum / denom as f64)
}

/// Mean of [`ap_at_k`] over queries.
pub fn map_at_k(queries: &[(Vec<usize>, Vec<usize>)], k: usize, norm: ApNormalization) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries to average".into()));
    }
    let mut total = 0.0;
    for (ranked, relevant) in queries {
        total += ap_at_k(ranked, relevant, k, norm)?;
    }
    Ok(total / queries.len() as f64)
}
