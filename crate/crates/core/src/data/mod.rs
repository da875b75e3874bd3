//! Interaction logs, social edges and document corpora.
//!
//! Guardians and URLs are given dense indices in order of first appearance in
//! the interaction file, so runs over the same file are reproducible.

mod social;
mod split;
mod synthetic;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub use social::{load_social_edges, EdgeLoadStats, SocialGraph};
pub use split::{split_per_guardian, SplitRatios, SplitTriple};
pub use synthetic::{generate_synthetic, SyntheticBundle, SyntheticConfig};

/// Bijection between external string ids and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = IdMap::new();
        for id in ids {
            map.intern(&id.into());
        }
        map
    }

    /// Returns the index for `id`, assigning the next free one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Keeps the listed indices (in the given order) and renumbers them densely.
    pub fn select(&self, keep: &[usize]) -> IdMap {
        IdMap::from_ids(keep.iter().map(|&i| self.ids[i].clone()))
    }
}

/// Binary guardian × URL matrix. The observation mask is the same support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionMatrix {
    n_urls: usize,
    rows: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    /// Builds the matrix from index pairs, collapsing duplicates.
    pub fn from_pairs<I>(n_guardians: usize, n_urls: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows = vec![Vec::new(); n_guardians];
        for (g, u) in pairs {
            if g >= n_guardians {
                return Err(Error::IndexOutOfRange {
                    index: g,
                    size: n_guardians,
                });
            }
            if u >= n_urls {
                return Err(Error::IndexOutOfRange {
                    index: u,
                    size: n_urls,
                });
            }
            rows[g].push(u);
        }
        Ok(Self::from_rows(n_urls, rows))
    }

    pub(crate) fn from_rows(n_urls: usize, mut rows: Vec<Vec<usize>>) -> Self {
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        InteractionMatrix { n_urls, rows }
    }

    pub fn n_guardians(&self) -> usize {
        self.rows.len()
    }

    pub fn n_urls(&self) -> usize {
        self.n_urls
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Sorted URL indices posted by `guardian`.
    pub fn row(&self, guardian: usize) -> &[usize] {
        &self.rows[guardian]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn contains(&self, guardian: usize, url: usize) -> bool {
        self.rows[guardian].binary_search(&url).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(g, row)| row.iter().map(move |&u| (g, u)))
    }

    /// URL × guardian view of the same data.
    pub fn transpose(&self) -> InteractionMatrix {
        let mut rows = vec![Vec::new(); self.n_urls];
        for (g, u) in self.iter() {
            rows[u].push(g);
        }
        InteractionMatrix {
            n_urls: self.n_guardians(),
            rows,
        }
    }

    /// Number of guardians who posted each URL.
    pub fn url_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_urls];
        for (_, u) in self.iter() {
            counts[u] += 1;
        }
        counts
    }

    /// Binary CSR copy of the support (X and Ω at once).
    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(
            self.n_guardians(),
            self.n_urls,
            self.iter().map(|(g, u)| (g, u, 1.0)),
        )
    }

    /// Union of two matrices over the same index spaces.
    pub fn union(&self, other: &InteractionMatrix) -> InteractionMatrix {
        assert_eq!(self.n_guardians(), other.n_guardians());
        assert_eq!(self.n_urls, other.n_urls);
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Self::from_rows(self.n_urls, rows)
    }
}

/// Result of [`filter_min_urls`]: the re-indexed matrix and the surviving
/// original indices, in new-index order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filtered {
    pub matrix: InteractionMatrix,
    pub guardians: Vec<usize>,
    pub urls: Vec<usize>,
}

/// Keeps guardians with at least `min_distinct` distinct URLs and drops URLs
/// left without interactions. Relative index order is preserved.
pub fn filter_min_urls(m: &InteractionMatrix, min_distinct: usize) -> Result<Filtered> {
    if min_distinct == 0 {
        return Err(Error::InvalidArgument("min_distinct must be at least 1".into()));
    }
    let guardians: Vec<usize> = (0..m.n_guardians())
        .filter(|&g| m.row(g).len() >= min_distinct)
        .collect();
    if guardians.is_empty() {
        return Err(Error::EmptyAfterFilter(min_distinct));
    }
    let mut used = vec![false; m.n_urls()];
    for &g in &guardians {
        for &u in m.row(g) {
            used[u] = true;
        }
    }
    let urls: Vec<usize> = (0..m.n_urls()).filter(|&u| used[u]).collect();
    let mut remap = vec![usize::MAX; m.n_urls()];
    for (new, &old) in urls.iter().enumerate() {
        remap[old] = new;
    }
    let rows = guardians
        .iter()
        .map(|&g| m.row(g).iter().map(|&u| remap[u]).collect())
        .collect();
    Ok(Filtered {
        matrix: InteractionMatrix::from_rows(urls.len(), rows),
        guardians,
        urls,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InteractionFormat {
    Tsv,
    Jsonl,
}

impl InteractionFormat {
    /// `.jsonl`/`.json` means JSONL, anything else TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => InteractionFormat::Jsonl,
            _ => InteractionFormat::Tsv,
        }
    }
}

/// One distinct (guardian, URL) interaction with the timestamp of its first occurrence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub guardian: usize,
    pub url: usize,
    pub ts: Option<i64>,
}

#[derive(Deserialize, Serialize)]
struct JsonInteraction {
    guardian: String,
    url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ts: Option<i64>,
}

/// An interaction matrix together with its id maps and the distinct events
/// in first-appearance order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub guardians: IdMap,
    pub urls: IdMap,
    pub matrix: InteractionMatrix,
    pub events: Vec<Interaction>,
}

impl Dataset {
    pub fn from_events(guardians: IdMap, urls: IdMap, events: Vec<Interaction>) -> Result<Self> {
        let matrix = InteractionMatrix::from_pairs(
            guardians.len(),
            urls.len(),
            events.iter().map(|e| (e.guardian, e.url)),
        )?;
        Ok(Dataset {
            guardians,
            urls,
            matrix,
            events,
        })
    }

    /// [`filter_min_urls`] applied to the matrix, with id maps and events carried along.
    pub fn filter_min_urls(&self, min_distinct: usize) -> Result<Dataset> {
        let filtered = filter_min_urls(&self.matrix, min_distinct)?;
        let mut g_remap = vec![None; self.matrix.n_guardians()];
        for (new, &old) in filtered.guardians.iter().enumerate() {
            g_remap[old] = Some(new);
        }
        let mut u_remap = vec![None; self.matrix.n_urls()];
        for (new, &old) in filtered.urls.iter().enumerate() {
            u_remap[old] = Some(new);
        }
        let events = self
            .events
            .iter()
            .filter_map(|e| {
                Some(Interaction {
                    guardian: g_remap[e.guardian]?,
                    url: u_remap[e.url]?,
                    ts: e.ts,
                })
            })
            .collect();
        Ok(Dataset {
            guardians: self.guardians.select(&filtered.guardians),
            urls: self.urls.select(&filtered.urls),
            matrix: filtered.matrix,
            events,
        })
    }
}

/// Reads an interaction log. Rows are `guardian_id<TAB>url_id[<TAB>unix_ts]`
/// (TSV) or `{"guardian", "url", "ts"?}` objects (JSONL). Blank lines are skipped.
pub fn load_interactions(path: &Path, format: InteractionFormat) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut guardians = IdMap::new();
    let mut urls = IdMap::new();
    let mut events = Vec::new();
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
    let mut rows = 0usize;

    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (g, u, ts) = match format {
            InteractionFormat::Tsv => parse_tsv_row(&line).map_err(|m| Error::parse(path, lineno, m))?,
            InteractionFormat::Jsonl => {
                let row: JsonInteraction =
                    serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
                if row.guardian.is_empty() || row.url.is_empty() {
                    return Err(Error::parse(path, lineno, "empty guardian or url id"));
                }
                (row.guardian, row.url, row.ts)
            }
        };
        rows += 1;
        let gi = guardians.intern(&g);
        let ui = urls.intern(&u);
        if seen.insert((gi, ui), ()).is_none() {
            events.push(Interaction {
                guardian: gi,
                url: ui,
                ts,
            });
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Dataset::from_events(guardians, urls, events)
}

fn parse_tsv_row(line: &str) -> std::result::Result<(String, String, Option<i64>), String> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if fields.len() < 2 || fields.len() > 3 {
        return Err(format!("expected 2 or 3 tab-separated fields, found {}", fields.len()));
    }
    let (g, u) = (fields[0].trim(), fields[1].trim());
    if g.is_empty() || u.is_empty() {
        return Err("empty guardian or url id".into());
    }
    let ts = match fields.get(2).map(|s| s.trim()) {
        None | Some("") => None,
        Some(s) => Some(s.parse::<i64>().map_err(|_| format!("invalid timestamp `{s}`"))?),
    };
    Ok((g.to_owned(), u.to_owned(), ts))
}

/// Writes the distinct events in first-appearance order, so that loading the
/// file again reproduces the same index assignment.
pub fn save_interactions(dataset: &Dataset, path: &Path, format: InteractionFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in &dataset.events {
        let g = dataset.guardians.id(e.guardian);
        let u = dataset.urls.id(e.url);
        let res = match format {
            InteractionFormat::Tsv => match e.ts {
                Some(ts) => writeln!(w, "{g}\t{u}\t{ts}"),
                None => writeln!(w, "{g}\t{u}"),
            },
            InteractionFormat::Jsonl => {
                let row = JsonInteraction {
                    guardian: g.to_owned(),
                    url: u.to_owned(),
                    ts: e.ts,
                };
                writeln!(w, "{}", serde_json::to_string(&row)?)
            }
        };
        res.map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A `{ "id": ..., "text": ... }` document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Doc {
    pub id: String,
    pub text: String,
}

pub fn load_docs(path: &Path) -> Result<Vec<Doc>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Doc = serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn save_docs(docs: &[Doc], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        writeln!(w, "{}", serde_json::to_string(doc)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Orders documents by index. Several documents for one id are concatenated;
/// ids missing from `ids` are counted and skipped; indices without a document get "".
pub fn align_docs(docs: &[Doc], ids: &IdMap) -> (Vec<String>, usize) {
    let mut aligned = vec![String::new(); ids.len()];
    let mut unknown = 0;
    for doc in docs {
        match ids.get(&doc.id) {
            Some(i) => {
                if !aligned[i].is_empty() {
                    aligned[i].push(' ');
                }
                aligned[i].push_str(&doc.text);
            }
            None => unknown += 1,
        }
    }
    (aligned, unknown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn duplicates_collapse_on_load() {
        let f = write_tmp("g1\tu1\ng2\tu2\ng1\tu1\t1500000000\n", ".tsv");
        let ds = load_interactions(f.path(), InteractionFormat::Tsv).unwrap();
        assert_eq!(ds.matrix.n_guardians(), 2);
        assert_eq!(ds.matrix.n_urls(), 2);
        assert_eq!(ds.matrix.nnz(), 2);
        assert_eq!(ds.guardians.get("g2"), Some(1));
    }

    #[test]
    fn malformed_row_names_line() {
        let f = write_tmp("g1\t\n", ".tsv");
        let err = load_interactions(f.path(), InteractionFormat::Tsv).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("g1\tu1\nnot-a-row\n", ".tsv");
        assert!(matches!(
            load_interactions(f.path(), InteractionFormat::Tsv),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_is_error() {
        let f = write_tmp("\n", ".tsv");
        assert!(matches!(
            load_interactions(f.path(), InteractionFormat::Tsv),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn jsonl_rows_parse() {
        let f = write_tmp(
            "{\"guardian\":\"a\",\"url\":\"x\",\"ts\":5}\n{\"guardian\":\"b\",\"url\":\"x\"}\n",
            ".jsonl",
        );
        let ds = load_interactions(f.path(), InteractionFormat::from_path(f.path())).unwrap();
        assert_eq!(ds.matrix.nnz(), 2);
        assert_eq!(ds.events[0].ts, Some(5));
        assert_eq!(ds.events[1].ts, None);
    }

    #[test]
    fn filter_drops_sparse_guardians_and_orphan_urls() {
        let m = InteractionMatrix::from_pairs(3, 5, vec![(0, 0), (0, 1), (1, 1), (1, 2), (1, 3), (2, 4), (2, 1), (2, 3)])
            .unwrap();
        let f = filter_min_urls(&m, 3).unwrap();
        assert_eq!(f.guardians, vec![1, 2]);
        assert_eq!(f.urls, vec![1, 2, 3, 4]);
        assert_eq!(f.matrix.row(0), &[0, 1, 2]);
        assert_eq!(f.matrix.row(1), &[0, 2, 3]);
    }

    #[test]
    fn filter_noop_when_all_qualify() {
        let m = InteractionMatrix::from_pairs(2, 3, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]).unwrap();
        let f = filter_min_urls(&m, 3).unwrap();
        assert_eq!(f.matrix, m);
    }

    #[test]
    fn filter_to_empty_is_error() {
        let m = InteractionMatrix::from_pairs(1, 2, vec![(0, 0), (0, 1)]).unwrap();
        assert!(matches!(filter_min_urls(&m, 3), Err(Error::EmptyAfterFilter(3))));
        assert!(filter_min_urls(&m, 0).is_err());
    }

    #[test]
    fn align_docs_concatenates_and_counts_unknown() {
        let ids = IdMap::from_ids(["a", "b"]);
        let docs = vec![
            Doc { id: "b".into(), text: "one".into() },
            Doc { id: "zz".into(), text: "x".into() },
            Doc { id: "b".into(), text: "two".into() },
        ];
        let (aligned, unknown) = align_docs(&docs, &ids);
        assert_eq!(aligned, vec!["".to_string(), "one two".to_string()]);
        assert_eq!(unknown, 1);
    }
}
