//! Plain-text model container.
//!
//! ```text
//! guardrec-model 1
//! hyperparams <json>
//! shape <N> <M> <D>
//! guardians
//! <id> per line (N lines)
//! urls
//! <id> per line (M lines)
//! U
//! <D tab-separated floats per line> (N lines)
//! V / K / L likewise, one line per matrix row
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Hyperparams, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &str = "guardrec-model";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub hyperparams: Hyperparams,
    pub guardians: Vec<String>,
    pub urls: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    hyperparams: Hyperparams,
}

fn write_matrix(w: &mut impl Write, name: &str, m: &Array2<f64>) -> std::io::Result<()> {
    writeln!(w, "{name}")?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        writeln!(w, "{}", line.join("\t"))?;
    }
    Ok(())
}

pub fn save_model(path: &Path, model: &SavedModel) -> Result<()> {
    let p = &model.params;
    if model.guardians.len() != p.n_guardians() || model.urls.len() != p.n_urls() {
        return Err(Error::DimensionMismatch(format!(
            "{} guardian ids and {} URL ids for a {}x{} model",
            model.guardians.len(),
            model.urls.len(),
            p.n_guardians(),
            p.n_urls()
        )));
    }
    let io = |e| Error::io(path, e);
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let header = serde_json::to_string(&Header {
        hyperparams: model.hyperparams.clone(),
    })?;
    (|| -> std::io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        writeln!(w, "hyperparams {header}")?;
        writeln!(w, "shape {} {} {}", p.n_guardians(), p.n_urls(), p.dim())?;
        writeln!(w, "guardians")?;
        for id in &model.guardians {
            writeln!(w, "{id}")?;
        }
        writeln!(w, "urls")?;
        for id in &model.urls {
            writeln!(w, "{id}")?;
        }
        write_matrix(&mut w, "U", &p.u)?;
        write_matrix(&mut w, "V", &p.v)?;
        write_matrix(&mut w, "K", &p.k)?;
        write_matrix(&mut w, "L", &p.l)?;
        w.flush()
    })()
    .map_err(io)
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::ModelFormat(format!("unexpected end of file, expected {what}")))
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let (n, line) = self.next(tag)?;
        if line != tag {
            return Err(Error::ModelFormat(format!("line {n}: expected `{tag}`, found `{line}`")));
        }
        Ok(())
    }

    fn ids(&mut self, tag: &str, count: usize) -> Result<Vec<String>> {
        self.expect(tag)?;
        (0..count).map(|_| Ok(self.next("an id")?.1.to_string())).collect()
    }

    fn matrix(&mut self, tag: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        self.expect(tag)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = self.next("a matrix row")?;
            let before = data.len();
            if cols > 0 {
                for field in line.split('\t') {
                    let x: f64 = field
                        .parse()
                        .map_err(|_| Error::ModelFormat(format!("line {n}: bad number `{field}`")))?;
                    data.push(x);
                }
            }
            if data.len() - before != cols {
                return Err(Error::ModelFormat(format!(
                    "line {n}: expected {cols} values, found {}",
                    data.len() - before
                )));
            }
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
    }
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        lines: text.lines().enumerate(),
    };
    let (_, magic) = r.next("header")?;
    if magic != format!("{MAGIC} {VERSION}") {
        return Err(Error::ModelFormat(format!("unrecognized header `{magic}`")));
    }
    let (n, hp) = r.next("hyperparams")?;
    let json = hp
        .strip_prefix("hyperparams ")
        .ok_or_else(|| Error::ModelFormat(format!("line {n}: expected hyperparams")))?;
    let header: Header = serde_json::from_str(json)?;
    let (n, shape) = r.next("shape")?;
    let dims: Vec<usize> = shape
        .strip_prefix("shape ")
        .and_then(|s| s.split(' ').map(|x| x.parse().ok()).collect())
        .filter(|d: &Vec<usize>| d.len() == 3)
        .ok_or_else(|| Error::ModelFormat(format!("line {n}: bad shape line `{shape}`")))?;
    let (ng, nu, d) = (dims[0], dims[1], dims[2]);
    let guardians = r.ids("guardians", ng)?;
    let urls = r.ids("urls", nu)?;
    let u = r.matrix("U", ng, d)?;
    let v = r.matrix("V", d, nu)?;
    let k = r.matrix("K", d, nu)?;
    let l = r.matrix("L", d, ng)?;
    if let Some((n, extra)) = r.lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::ModelFormat(format!("line {}: trailing content `{extra}`", n + 1)));
    }
    Ok(SavedModel {
        params: ModelParams { u, v, k, l },
        hyperparams: header.hyperparams,
        guardians,
        urls,
    })
}
