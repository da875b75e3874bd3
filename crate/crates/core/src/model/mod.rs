//! The joint factorization model.
//!
//! Guardians get rows of `U` (N×D) and URLs get columns of `V` (D×M); a
//! guardian's preference for a URL is `U_i · V_j`. Besides the Ω-masked
//! reconstruction of the interaction matrix, the objective can factorize the
//! URL and guardian SPPMI matrices through the context factors `K` and `L`,
//! fit `UUᵀ` to the follow graph, and smooth `U` and `V` over content
//! similarity Laplacians. Each of the five auxiliary terms can be switched off
//! independently, which is how the ablation variants are built.

mod fit;
mod io;
mod objective;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::cooccurrence::SppmiMatrix;
use crate::data::{InteractionMatrix, SocialGraph};
use crate::error::{Error, Result};
use crate::similarity::SimilarityBundle;
use crate::sparse::CsrMatrix;

pub use fit::{fit, fit_with, init_params, FitOptions, Monitor, StopReason, TrainTrace};
pub(crate) use fit::has_converged;
pub use io::{load_model, save_model, SavedModel};
pub use objective::{gradients, loss, loss_terms, Gradients, LossTerms};

/// Which auxiliary terms of the objective are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Terms {
    /// URL–URL SPPMI factorization (`R ≈ VᵀK`).
    pub url_sppmi: bool,
    /// Guardian–guardian SPPMI factorization (`G ≈ UL`).
    pub guardian_sppmi: bool,
    /// Follow graph (`S ≈ UUᵀ`).
    pub social: bool,
    /// Guardian content Laplacian on `U`.
    pub guardian_content: bool,
    /// URL content Laplacian on `V`.
    pub url_content: bool,
}

impl Terms {
    pub const NONE: Terms = Terms {
        url_sppmi: false,
        guardian_sppmi: false,
        social: false,
        guardian_content: false,
        url_content: false,
    };

    pub const ALL: Terms = Terms {
        url_sppmi: true,
        guardian_sppmi: true,
        social: true,
        guardian_content: true,
        url_content: true,
    };

    pub fn any(&self) -> bool {
        *self != Terms::NONE
    }
}

/// The six model variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Variant {
    Basic,
    NwUc,
    NwUcCsu,
    CsuCsg,
    NwUcCsuCsg,
    Gau,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Basic,
        Variant::NwUc,
        Variant::NwUcCsu,
        Variant::CsuCsg,
        Variant::NwUcCsuCsg,
        Variant::Gau,
    ];

    /// NW = follow graph, UC = URL content, CSU/CSG = URL/guardian SPPMI; the
    /// full model also adds guardian content.
    pub fn terms(self) -> Terms {
        let mut t = Terms::NONE;
        match self {
            Variant::Basic => {}
            Variant::NwUc => {
                t.social = true;
                t.url_content = true;
            }
            Variant::NwUcCsu => {
                t.social = true;
                t.url_content = true;
                t.url_sppmi = true;
            }
            Variant::CsuCsg => {
                t.url_sppmi = true;
                t.guardian_sppmi = true;
            }
            Variant::NwUcCsuCsg => {
                t = Terms::ALL;
                t.guardian_content = false;
            }
            Variant::Gau => t = Terms::ALL,
        }
        t
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Basic => "BASIC",
            Variant::NwUc => "BASIC+NW+UC",
            Variant::NwUcCsu => "BASIC+NW+UC+CSU",
            Variant::CsuCsg => "BASIC+CSU+CSG",
            Variant::NwUcCsuCsg => "BASIC+NW+UC+CSU+CSG",
            Variant::Gau => "GAU",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub dim: usize,
    pub lambda: f64,
    /// Follow-graph weight.
    pub alpha: f64,
    /// Guardian-content weight.
    pub gamma: f64,
    /// URL-content weight.
    pub beta: f64,
    /// SPPMI shift `s` (number of negative samples).
    pub shift: u32,
    pub eta: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub terms: Terms,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 100,
            lambda: 3e-5,
            alpha: 0.04,
            gamma: 0.04,
            beta: 0.04,
            shift: 10,
            eta: 0.001,
            max_iters: 500,
            convergence_tol: 1e-5,
            terms: Terms::ALL,
        }
    }
}

impl Hyperparams {
    pub fn for_variant(variant: Variant) -> Self {
        Hyperparams {
            terms: variant.terms(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("latent dimension must be at least 1".into()));
        }
        let weights = [self.lambda, self.alpha, self.gamma, self.beta];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be finite and nonnegative".into()));
        }
        if self.shift == 0 {
            return Err(Error::InvalidArgument("SPPMI shift must be at least 1".into()));
        }
        Ok(())
    }

    /// Zeroes weights of inactive terms and the shift when no SPPMI term is
    /// used, so that grid points differing only in unused values compare equal.
    pub fn normalized(&self) -> Self {
        let mut h = self.clone();
        if !h.terms.social {
            h.alpha = 0.0;
        }
        if !h.terms.guardian_content {
            h.gamma = 0.0;
        }
        if !h.terms.url_content {
            h.beta = 0.0;
        }
        if !h.terms.url_sppmi && !h.terms.guardian_sppmi {
            h.shift = 1;
        }
        h
    }
}

/// Dense factors: `U` N×D, `V` D×M, `K` D×M, `L` D×N.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub k: Array2<f64>,
    pub l: Array2<f64>,
}

impl ModelParams {
    pub fn zeros(n_guardians: usize, n_urls: usize, dim: usize) -> Self {
        ModelParams {
            u: Array2::zeros((n_guardians, dim)),
            v: Array2::zeros((dim, n_urls)),
            k: Array2::zeros((dim, n_urls)),
            l: Array2::zeros((dim, n_guardians)),
        }
    }

    pub fn n_guardians(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_urls(&self) -> usize {
        self.v.ncols()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.v, &self.k, &self.l]
            .iter()
            .all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// `U_i · V`, the score of every URL for one guardian.
    pub fn predict_scores(&self, guardian: usize) -> Result<Array1<f64>> {
        if guardian >= self.n_guardians() {
            return Err(Error::IndexOutOfRange {
                index: guardian,
                size: self.n_guardians(),
            });
        }
        Ok(self.u.row(guardian).dot(&self.v))
    }

    /// Highest-scoring URLs outside `exclude`, ties to the lower index.
    pub fn recommend_topk(&self, guardian: usize, k: usize, exclude: &[usize]) -> Result<Vec<(usize, f64)>> {
        let scores = self.predict_scores(guardian)?;
        rank_topk(scores.as_slice().expect("contiguous scores"), k, exclude)
    }
}

/// Top `k` of `scores` in descending order, skipping `exclude`; equal scores
/// are ordered by ascending index.
pub fn rank_topk(scores: &[f64], k: usize, exclude: &[usize]) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut skip = vec![false; scores.len()];
    for &j in exclude {
        if j < skip.len() {
            skip[j] = true;
        }
    }
    let mut ranked: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|&(j, _)| !skip[j])
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if ranked.len() > k {
        ranked.select_nth_unstable_by(k - 1, cmp);
        ranked.truncate(k);
    }
    ranked.sort_by(cmp);
    Ok(ranked)
}

/// Everything the objective consumes. Masks are the supports of the stored
/// sparse matrices; the optional parts are required only when the matching
/// term is switched on.
#[derive(Clone, Debug)]
pub struct ModelInputs {
    n_guardians: usize,
    n_urls: usize,
    interactions: CsrMatrix,
    url_sppmi: Option<CsrMatrix>,
    guardian_sppmi: Option<CsrMatrix>,
    social: Option<CsrMatrix>,
    social_sum: Option<CsrMatrix>,
    guardian_laplacian: Option<CsrMatrix>,
    guardian_laplacian_sum: Option<CsrMatrix>,
    url_laplacian: Option<CsrMatrix>,
    url_laplacian_sum: Option<CsrMatrix>,
}

fn check_square(what: &str, m: &CsrMatrix, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

impl ModelInputs {
    pub fn new(x: &InteractionMatrix) -> Self {
        ModelInputs {
            n_guardians: x.n_guardians(),
            n_urls: x.n_urls(),
            interactions: x.to_csr(),
            url_sppmi: None,
            guardian_sppmi: None,
            social: None,
            social_sum: None,
            guardian_laplacian: None,
            guardian_laplacian_sum: None,
            url_laplacian: None,
            url_laplacian_sum: None,
        }
    }

    pub fn with_url_sppmi(mut self, r: &SppmiMatrix) -> Result<Self> {
        let csr = r.to_csr();
        check_square("URL SPPMI matrix", &csr, self.n_urls)?;
        self.url_sppmi = Some(csr);
        Ok(self)
    }

    pub fn with_guardian_sppmi(mut self, g: &SppmiMatrix) -> Result<Self> {
        let csr = g.to_csr();
        check_square("guardian SPPMI matrix", &csr, self.n_guardians)?;
        self.guardian_sppmi = Some(csr);
        Ok(self)
    }

    pub fn with_social(mut self, s: &SocialGraph) -> Result<Self> {
        let adj = s.adjacency().clone();
        check_square("social adjacency", &adj, self.n_guardians)?;
        self.social_sum = Some(adj.add(&adj.transpose()));
        self.social = Some(adj);
        Ok(self)
    }

    pub fn with_guardian_similarity(mut self, b: &SimilarityBundle) -> Result<Self> {
        let lap = b.laplacian().clone();
        check_square("guardian similarity", &lap, self.n_guardians)?;
        self.guardian_laplacian_sum = Some(lap.add(&lap.transpose()));
        self.guardian_laplacian = Some(lap);
        Ok(self)
    }

    pub fn with_url_similarity(mut self, b: &SimilarityBundle) -> Result<Self> {
        let lap = b.laplacian().clone();
        check_square("URL similarity", &lap, self.n_urls)?;
        self.url_laplacian_sum = Some(lap.add(&lap.transpose()));
        self.url_laplacian = Some(lap);
        Ok(self)
    }

    pub fn n_guardians(&self) -> usize {
        self.n_guardians
    }

    pub fn n_urls(&self) -> usize {
        self.n_urls
    }

    pub fn interactions(&self) -> &CsrMatrix {
        &self.interactions
    }

    pub fn url_sppmi(&self) -> Option<&CsrMatrix> {
        self.url_sppmi.as_ref()
    }

    pub fn guardian_sppmi(&self) -> Option<&CsrMatrix> {
        self.guardian_sppmi.as_ref()
    }

    pub fn social(&self) -> Option<&CsrMatrix> {
        self.social.as_ref()
    }

    pub fn guardian_laplacian(&self) -> Option<&CsrMatrix> {
        self.guardian_laplacian.as_ref()
    }

    pub fn url_laplacian(&self) -> Option<&CsrMatrix> {
        self.url_laplacian.as_ref()
    }

    /// Fails if an enabled term has no input attached.
    pub fn check_terms(&self, terms: &Terms) -> Result<()> {
        let missing = [
            (terms.url_sppmi && self.url_sppmi.is_none(), "URL SPPMI matrix"),
            (terms.guardian_sppmi && self.guardian_sppmi.is_none(), "guardian SPPMI matrix"),
            (terms.social && self.social.is_none(), "social graph"),
            (terms.guardian_content && self.guardian_laplacian.is_none(), "guardian similarity"),
            (terms.url_content && self.url_laplacian.is_none(), "URL similarity"),
        ];
        match missing.iter().find(|(m, _)| *m) {
            Some((_, what)) => Err(Error::InvalidArgument(format!("enabled term needs a {what}"))),
            None => Ok(()),
        }
    }

    pub(crate) fn check_params(&self, p: &ModelParams) -> Result<()> {
        let d = p.dim();
        let expect = [
            ("U", p.u.dim(), (self.n_guardians, d)),
            ("V", p.v.dim(), (d, self.n_urls)),
            ("K", p.k.dim(), (d, self.n_urls)),
            ("L", p.l.dim(), (d, self.n_guardians)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        Ok(())
    }
}
