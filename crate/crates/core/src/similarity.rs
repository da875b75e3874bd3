//! Guardian–guardian and URL–URL content similarity with graph Laplacians.
//!
//! Documents become L2-normalized TF-IDF vectors (or externally trained
//! vectors imported from TSV). Pairwise cosine similarities are sparsified to
//! each row's `top_k` neighbours, symmetrized by union, and turned into
//! `L = D − W`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::data::IdMap;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::text::TermStats;

pub const DEFAULT_VOCAB_SIZE: usize = 8000;
pub const DEFAULT_TOP_K: usize = 50;

/// Index-aligned document vectors, each of unit L2 norm or all zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DocVectors {
    dim: usize,
    vectors: Vec<Vec<(usize, f64)>>,
}

impl DocVectors {
    /// Normalizes every row; exact zeros are not stored.
    pub fn from_sparse(dim: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let vectors = rows
            .into_iter()
            .map(|mut row| {
                row.retain(|&(_, v)| v != 0.0);
                row.sort_by_key(|&(t, _)| t);
                let norm = row.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (_, v) in &mut row {
                        *v /= norm;
                    }
                }
                row
            })
            .collect();
        DocVectors { dim, vectors }
    }

    pub fn from_dense(dim: usize, rows: Vec<Vec<f64>>) -> Self {
        Self::from_sparse(
            dim,
            rows.into_iter()
                .map(|r| r.into_iter().enumerate().collect())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[(usize, f64)] {
        &self.vectors[i]
    }

    pub fn dense(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(t, v) in &self.vectors[i] {
            out[t] = v;
        }
        out
    }
}

/// TF-IDF vectors (`tf · ln(N_docs / df)`, L2-normalized) over the `vocab_size`
/// terms with the highest document frequency.
pub fn tfidf_vectors<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<DocVectors> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("corpus has no documents".into()));
    }
    let stats = TermStats::from_corpus(corpus);
    let vocab = stats.vocabulary(vocab_size)?;
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let rows = stats
        .counts
        .iter()
        .map(|tf| {
            tf.iter()
                .filter_map(|(term, &count)| {
                    let &t = index.get(term.as_str())?;
                    Some((t, count as f64 * stats.idf(term)))
                })
                .collect()
        })
        .collect();
    Ok(DocVectors::from_sparse(vocab.len(), rows))
}

/// Reads `id<TAB>f1<TAB>...<TAB>fD` rows. Every row must have the same width;
/// ids absent from `ids` are skipped and counted, indices without a row stay zero.
pub fn load_precomputed_vectors(path: &Path, ids: &IdMap) -> Result<(DocVectors, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim: Option<usize> = None;
    let mut rows = vec![Vec::new(); ids.len()];
    let mut skipped = 0;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().trim();
        let values = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(path, lineno, format!("bad float: {e}")))?;
        if values.is_empty() {
            return Err(Error::parse(path, lineno, "row has no vector components"));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {d} components, found {}", values.len()),
                ))
            }
            _ => {}
        }
        match ids.get(id) {
            Some(i) => rows[i] = values.into_iter().enumerate().collect(),
            None => skipped += 1,
        }
    }
    let dim = dim.ok_or_else(|| Error::EmptyInput(path.to_path_buf()))?;
    Ok((DocVectors::from_sparse(dim, rows), skipped))
}

/// Symmetric nonnegative similarity `W`, its degrees and `L = D − W`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityBundle {
    sim: CsrMatrix,
    degree: Vec<f64>,
    laplacian: CsrMatrix,
}

impl SimilarityBundle {
    /// Diagonal entries are discarded (they cancel in `D − W`) and values are
    /// clamped into `[0, 1]`. The input must be square and symmetric.
    pub fn from_similarity(sim: &CsrMatrix) -> Result<Self> {
        let (n, m) = sim.shape();
        if n != m {
            return Err(Error::DimensionMismatch(format!("similarity matrix is {n}x{m}")));
        }
        if !sim.is_symmetric() {
            return Err(Error::InvalidArgument("similarity matrix is not symmetric".into()));
        }
        let sim = CsrMatrix::from_triplets(
            n,
            n,
            sim.iter()
                .filter(|&(i, j, v)| i != j && v > 0.0)
                .map(|(i, j, v)| (i, j, v.min(1.0))),
        );
        let degree = sim.row_sums();
        let laplacian = CsrMatrix::from_triplets(
            n,
            n,
            sim.iter()
                .map(|(i, j, v)| (i, j, -v))
                .chain(degree.iter().enumerate().filter(|(_, &d)| d != 0.0).map(|(i, &d)| (i, i, d))),
        );
        Ok(SimilarityBundle {
            sim,
            degree,
            laplacian,
        })
    }

    pub fn empty(n: usize) -> Self {
        SimilarityBundle {
            sim: CsrMatrix::zeros(n, n),
            degree: vec![0.0; n],
            laplacian: CsrMatrix::zeros(n, n),
        }
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn sim(&self) -> &CsrMatrix {
        &self.sim
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    /// `i<TAB>j<TAB>value` for every stored similarity (both orientations).
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, j, v) in self.sim.iter() {
            out.push_str(&format!("{i}\t{j}\t{v}\n"));
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path, n: usize) -> Result<Self> {
        let triplets = read_triplets(path, n)?;
        Self::from_similarity(&CsrMatrix::from_triplets(n, n, triplets))
    }
}

pub(crate) fn read_triplets(path: &Path, n: usize) -> Result<Vec<(usize, usize, f64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let parsed = (f.len() == 3)
            .then(|| Some((f[0].parse::<usize>().ok()?, f[1].parse::<usize>().ok()?, f[2].parse::<f64>().ok()?)))
            .flatten();
        match parsed {
            Some((i, j, v)) if i < n && j < n => out.push((i, j, v)),
            _ => return Err(Error::parse(path, lineno + 1, "expected `i<TAB>j<TAB>value` within range")),
        }
    }
    Ok(out)
}

/// Cosine similarities between all pairs, negatives clamped to zero, each row
/// cut to its `top_k` largest off-diagonal entries (ties to the lower index),
/// then symmetrized by union.
pub fn cosine_similarity_matrix(v: &DocVectors, top_k: usize, expected_len: usize) -> Result<SimilarityBundle> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    if v.len() != expected_len {
        return Err(Error::DimensionMismatch(format!(
            "{} document vectors for an index space of {expected_len}",
            v.len()
        )));
    }
    let n = v.len();
    let mut postings: Vec<Vec<(usize, f64)>> = vec![Vec::new(); v.dim()];
    for i in 0..n {
        for &(t, w) in v.vector(i) {
            postings[t].push((i, w));
        }
    }

    let neighbours: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0f64; n];
            let mut touched = Vec::new();
            for &(t, wi) in v.vector(i) {
                for &(j, wj) in &postings[t] {
                    if j == i {
                        continue;
                    }
                    if acc[j] == 0.0 {
                        touched.push(j);
                    }
                    acc[j] += wi * wj;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            let mut row: Vec<(usize, f64)> = touched
                .into_iter()
                .map(|j| (j, acc[j]))
                .filter(|&(_, s)| s > 0.0)
                .collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(top_k);
            row
        })
        .collect();

    let mut upper: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, row) in neighbours.iter().enumerate() {
        for &(j, s) in row {
            upper.entry((i.min(j), i.max(j))).or_insert(s);
        }
    }
    let sim = CsrMatrix::from_triplets(
        n,
        n,
        upper.into_iter().flat_map(|((a, b), s)| [(a, b, s), (b, a, s)]),
    );
    SimilarityBundle::from_similarity(&sim)
}
