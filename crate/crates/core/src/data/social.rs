use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use super::IdMap;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Undirected, unweighted follow graph over guardians: symmetric 0/1
/// adjacency with an empty diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialGraph {
    adjacency: CsrMatrix,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EdgeLoadStats {
    pub rows: usize,
    pub edges: usize,
    pub self_loops: usize,
    pub unknown_ids: usize,
}

impl SocialGraph {
    /// Symmetrizes the given pairs; self-edges and repeats are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut pairs: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|&(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let adjacency = CsrMatrix::from_triplets(
            n,
            n,
            pairs.iter().flat_map(|&(a, b)| [(a, b, 1.0), (b, a, 1.0)]),
        );
        SocialGraph { adjacency }
    }

    pub fn empty(n: usize) -> Self {
        SocialGraph {
            adjacency: CsrMatrix::zeros(n, n),
        }
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// `2|E| / (N(N-1))`.
    pub fn density(&self) -> f64 {
        let n = self.n_nodes() as f64;
        if n < 2.0 {
            return 0.0;
        }
        2.0 * self.n_edges() as f64 / (n * (n - 1.0))
    }

    /// Upper-triangle edge list `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, _)| (i, j))
            .collect()
    }
}

/// Reads `guardian_id<TAB>guardian_id` rows. Ids outside `ids` are skipped and counted.
pub fn load_social_edges(path: &Path, ids: &IdMap) -> Result<(SocialGraph, EdgeLoadStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = EdgeLoadStats::default();
    let mut edges = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split('\t').map(str::trim);
        let (Some(a), Some(b)) = (fields.next(), fields.next()) else {
            continue;
        };
        if a.is_empty() || b.is_empty() {
            continue;
        }
        stats.rows += 1;
        match (ids.get(a), ids.get(b)) {
            (Some(x), Some(y)) if x == y => stats.self_loops += 1,
            (Some(x), Some(y)) => edges.push((x, y)),
            _ => stats.unknown_ids += 1,
        }
    }
    let graph = SocialGraph::from_edges(ids.len(), edges);
    stats.edges = graph.n_edges();
    if stats.unknown_ids > 0 {
        log::info!("{}: skipped {} edges with unknown guardian ids", path.display(), stats.unknown_ids);
    }
    Ok((graph, stats))
}
