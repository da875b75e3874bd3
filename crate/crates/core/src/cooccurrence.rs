//! URL–URL and guardian–guardian co-occurrence counts and their shifted
//! positive PMI transform.
//!
//! A URL's context is every other URL posted by the same guardian, so
//! `#(i, j)` counts guardians who posted both. The guardian side swaps roles.
//! Only the strict upper triangle is stored; lookups mirror it.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountMatrix {
    dim: usize,
    upper: Vec<(usize, usize, u64)>,
    row_sums: Vec<u64>,
    total: u64,
}

impl CountMatrix {
    fn from_upper(dim: usize, mut upper: Vec<(usize, usize, u64)>) -> Self {
        upper.sort_unstable();
        let mut row_sums = vec![0u64; dim];
        for &(i, j, c) in &upper {
            row_sums[i] += c;
            row_sums[j] += c;
        }
        let total = row_sums.iter().sum();
        CountMatrix {
            dim,
            upper,
            row_sums,
            total,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `#(i, j)`; zero on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        if i == j {
            return 0;
        }
        let key = (i.min(j), i.max(j));
        self.upper
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|pos| self.upper[pos].2)
            .unwrap_or(0)
    }

    /// `#(i) = Σ_j #(i, j)`.
    pub fn row_sum(&self, i: usize) -> u64 {
        self.row_sums[i]
    }

    /// `|D|`, the number of ordered (item, context) pairs.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Nonzero `(i, j, count)` with `i < j`.
    pub fn upper(&self) -> &[(usize, usize, u64)] {
        &self.upper
    }
}

/// `#(i, j)` = number of guardians whose row contains both URL `i` and URL `j`.
pub fn url_cooccurrence_counts(x: &InteractionMatrix) -> CountMatrix {
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    for row in x.rows() {
        for (a, &i) in row.iter().enumerate() {
            for &j in &row[a + 1..] {
                *counts.entry((i, j)).or_insert(0) += 1;
            }
        }
    }
    CountMatrix::from_upper(
        x.n_urls(),
        counts.into_iter().map(|((i, j), c)| (i, j, c)).collect(),
    )
}

/// `#(i, j)` = number of URLs posted by both guardian `i` and guardian `j`.
pub fn guardian_cooccurrence_counts(x: &InteractionMatrix) -> CountMatrix {
    url_cooccurrence_counts(&x.transpose())
}

/// Symmetric SPPMI matrix; every stored value is strictly positive and the
/// mask is exactly the stored support.
#[derive(Clone, Debug, PartialEq)]
pub struct SppmiMatrix {
    dim: usize,
    shift: u32,
    upper: Vec<(usize, usize, f64)>,
}

impl SppmiMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let key = (i.min(j), i.max(j));
        self.upper
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|pos| self.upper[pos].2)
            .unwrap_or(0.0)
    }

    pub fn mask(&self, i: usize, j: usize) -> bool {
        self.get(i, j) > 0.0
    }

    pub fn upper(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    /// Number of stored entries in the full (mirrored) matrix.
    pub fn nnz(&self) -> usize {
        2 * self.upper.len()
    }

    /// Full symmetric matrix; its support doubles as the mask.
    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(
            self.dim,
            self.dim,
            self.upper.iter().flat_map(|&(i, j, v)| [(i, j, v), (j, i, v)]),
        )
    }

    /// `i<TAB>j<TAB>value`, both orientations.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let mut full: Vec<(usize, usize, f64)> = self
            .upper
            .iter()
            .flat_map(|&(i, j, v)| [(i, j, v), (j, i, v)])
            .collect();
        full.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (i, j, v) in full {
            out.push_str(&format!("{i}\t{j}\t{v}\n"));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `max(ln(#(i,j)·|D| / (#(i)·#(j))) − ln s, 0)`, stored only where positive.
pub fn sppmi(c: &CountMatrix, s: u32) -> Result<SppmiMatrix> {
    if s == 0 {
        return Err(Error::InvalidArgument("SPPMI shift must be at least 1".into()));
    }
    if c.total == 0 {
        return Err(Error::NoCooccurrence);
    }
    let total = c.total as f64;
    let log_shift = (s as f64).ln();
    let upper = c
        .upper
        .iter()
        .filter_map(|&(i, j, n)| {
            let pmi = (n as f64 * total / (c.row_sums[i] as f64 * c.row_sums[j] as f64)).ln();
            let v = pmi - log_shift;
            (v > 0.0).then_some((i, j, v))
        })
        .collect();
    Ok(SppmiMatrix {
        dim: c.dim,
        shift: s,
        upper,
    })
}
