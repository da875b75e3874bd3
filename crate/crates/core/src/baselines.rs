//! Comparison models: plain masked MF, BPR-MF and a confidence-weighted MF
//! with an optional URL co-occurrence term.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cooccurrence::SppmiMatrix;
use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::model::{has_converged, init_params, Hyperparams, ModelParams, StopReason, TrainTrace};
use crate::seed;
use crate::sparse::CsrMatrix;

fn sq(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

fn to_row_major(m: ArrayView2<f64>) -> Array2<f64> {
    m.as_standard_layout().into_owned()
}

/// `A_ij − left_i · right_j` over the stored entries of `a`.
fn residuals_on_support(a: &CsrMatrix, left: ArrayView2<f64>, right: ArrayView2<f64>) -> CsrMatrix {
    let mut values = Vec::with_capacity(a.nnz());
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        let li = left.row(i);
        for (&j, &x) in cols.iter().zip(vals) {
            values.push(x - li.dot(&right.row(j)));
        }
    }
    a.with_values(values)
}

struct Stopper {
    losses: Vec<f64>,
    tol: f64,
}

impl Stopper {
    /// Records `loss` and reports convergence under the joint model's rule.
    fn push(&mut self, iteration: usize, loss: f64, finite: bool) -> Result<bool> {
        if !loss.is_finite() || !finite {
            return Err(Error::Diverged { iteration, loss });
        }
        self.losses.push(loss);
        Ok(has_converged(&self.losses, self.tol))
    }
}

fn trace(losses: Vec<f64>, iterations: usize, converged: bool, start: Instant) -> TrainTrace {
    TrainTrace {
        terms: Vec::new(),
        losses,
        iterations,
        stop: if converged { StopReason::Converged } else { StopReason::MaxIters },
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

fn basic_loss(x: &CsrMatrix, u: &Array2<f64>, vt: &Array2<f64>, lambda: f64) -> f64 {
    let e = residuals_on_support(x, u.view(), vt.view());
    let recon: f64 = e.values().iter().map(|r| r * r).sum();
    recon + lambda * (sq(u.view()) + sq(vt.t()))
}

/// Gradient descent on `‖Ω⊙(X − UV)‖² + λ(‖U‖² + ‖V‖²)`, using `dim`,
/// `lambda`, `eta`, `max_iters` and `convergence_tol` from `h` (term flags
/// and auxiliary weights are ignored). Initialization and stopping match
/// [`crate::model::fit`], so the result equals the full model with every
/// auxiliary term switched off. `K` and `L` are returned as zeros.
pub fn fit_basic_mf(x: &InteractionMatrix, h: &Hyperparams, seed: u64) -> Result<(ModelParams, TrainTrace)> {
    if h.dim == 0 {
        return Err(Error::InvalidArgument("latent dimension must be at least 1".into()));
    }
    if !(h.lambda >= 0.0 && h.eta >= 0.0 && h.lambda.is_finite() && h.eta.is_finite()) {
        return Err(Error::InvalidArgument("lambda and eta must be finite and nonnegative".into()));
    }
    let start = Instant::now();
    let (n, m, d) = (x.n_guardians(), x.n_urls(), h.dim);
    let init = init_params(n, m, d, seed);
    let mut u = init.u;
    let mut vt = to_row_major(init.v.t());
    let xs = x.to_csr();
    let mut stop = Stopper {
        losses: vec![basic_loss(&xs, &u, &vt, h.lambda)],
        tol: h.convergence_tol,
    };
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=h.max_iters {
        let e = residuals_on_support(&xs, u.view(), vt.view());
        let mut gu = e.mul_dense(vt.view()) * -2.0;
        gu.scaled_add(2.0 * h.lambda, &u);
        let mut gvt = e.transpose_mul_dense(u.view()) * -2.0;
        gvt.scaled_add(2.0 * h.lambda, &vt);
        u.scaled_add(-h.eta, &gu);
        vt.scaled_add(-h.eta, &gvt);
        iterations = iter;
        let finite = u.iter().chain(vt.iter()).all(|v| v.is_finite());
        if stop.push(iter, basic_loss(&xs, &u, &vt, h.lambda), finite)? {
            converged = true;
            break;
        }
    }
    let params = ModelParams {
        u,
        v: to_row_major(vt.t()),
        k: Array2::zeros((d, m)),
        l: Array2::zeros((d, n)),
    };
    Ok((params, trace(stop.losses, iterations, converged, start)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BprHyper {
    pub dim: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BprHyper {
    fn default() -> Self {
        BprHyper {
            dim: 100,
            learning_rate: 0.05,
            reg: 1e-4,
            epochs: 200,
            seed: 0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One stochastic BPR step on the triple (guardian `g`, positive `i`, negative `j`).
/// `vt` is item-major (M×D).
pub fn bpr_step(u: &mut Array2<f64>, vt: &mut Array2<f64>, g: usize, i: usize, j: usize, lr: f64, reg: f64) {
    let ug = u.row(g).to_owned();
    let diff = &vt.row(i) - &vt.row(j);
    let weight = sigmoid(-ug.dot(&diff));
    {
        let mut row = u.row_mut(g);
        row *= 1.0 - lr * reg;
        row.scaled_add(lr * weight, &diff);
    }
    {
        let mut vi = vt.row_mut(i);
        vi *= 1.0 - lr * reg;
        vi.scaled_add(lr * weight, &ug);
    }
    let mut vj = vt.row_mut(j);
    vj *= 1.0 - lr * reg;
    vj.scaled_add(-lr * weight, &ug);
}

/// BPR-MF trained with `epochs · |positives|` uniformly sampled
/// (guardian, positive) pairs, each paired with a rejection-sampled negative.
/// Guardians whose row is full have no negatives and are skipped.
pub fn fit_bprmf(x: &InteractionMatrix, h: &BprHyper) -> Result<ModelParams> {
    if h.dim == 0 {
        return Err(Error::InvalidArgument("latent dimension must be at least 1".into()));
    }
    if !(h.learning_rate.is_finite() && h.learning_rate > 0.0 && h.reg.is_finite() && h.reg >= 0.0) {
        return Err(Error::InvalidArgument("BPR learning rate must be positive and reg nonnegative".into()));
    }
    let (n, m, d) = (x.n_guardians(), x.n_urls(), h.dim);
    let init = init_params(n, m, d, h.seed);
    let mut u = init.u;
    let mut vt = to_row_major(init.v.t());
    let positives: Vec<(usize, usize)> = x.iter().filter(|&(g, _)| x.row(g).len() < m).collect();
    let mut rng = seed::rng(seed::derive(h.seed, "bpr-sampler", 0));
    let steps = h.epochs * positives.len();
    for step in 0..steps {
        let (g, i) = positives[rng.random_range(0..positives.len())];
        let j = loop {
            let j = rng.random_range(0..m);
            if !x.contains(g, j) {
                break j;
            }
        };
        bpr_step(&mut u, &mut vt, g, i, j, h.learning_rate, h.reg);
        if step % 4096 == 0 && !u.row(g).iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                iteration: step / positives.len().max(1),
                loss: f64::NAN,
            });
        }
    }
    let params = ModelParams {
        u,
        v: to_row_major(vt.t()),
        k: Array2::zeros((d, m)),
        l: Array2::zeros((d, n)),
    };
    if !params.is_finite() {
        return Err(Error::Diverged {
            iteration: h.epochs,
            loss: f64::NAN,
        });
    }
    Ok(params)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceWeights {
    pub c_pos: f64,
    pub c_neg: f64,
}

impl Default for ConfidenceWeights {
    fn default() -> Self {
        ConfidenceWeights { c_pos: 1.0, c_neg: 0.01 }
    }
}

impl ConfidenceWeights {
    /// Accepts `c_pos ≥ c_neg ≥ 0` with `c_pos > 0`, which includes the
    /// unweighted (`1, 1`) and masked (`1, 0`) reductions.
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_pos.is_finite()
            && self.c_neg.is_finite()
            && self.c_pos > 0.0
            && self.c_neg >= 0.0
            && self.c_pos >= self.c_neg;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "confidence weights need c_pos >= c_neg >= 0 and c_pos > 0, got ({}, {})",
                self.c_pos, self.c_neg
            )));
        }
        Ok(())
    }
}

/// Confidence-weighted MF problem `Σ c_ij (X_ij − U_iV_j)² + λ(‖U‖² + ‖V‖²)`
/// plus `‖R^mask⊙(R − VᵀK)‖²` when a URL SPPMI matrix is attached.
///
/// The dense part is split as `c_neg·‖X − UV‖² + (c_pos − c_neg)·‖Ω⊙(X − UV)‖²`
/// and the first norm is expanded through the D×D Gram matrices, so no N×M
/// array is ever formed.
pub struct WeightedMf {
    x: CsrMatrix,
    x_sq: f64,
    weights: ConfidenceWeights,
    lambda: f64,
    r: Option<CsrMatrix>,
}

/// Factors in the orientation used by [`WeightedMf`]: `U` N×D, `Vᵀ` M×D, `Kᵀ` M×D.
#[derive(Clone, Debug, PartialEq)]
pub struct WmfState {
    pub u: Array2<f64>,
    pub vt: Array2<f64>,
    pub kt: Array2<f64>,
}

impl WeightedMf {
    pub fn new(x: &InteractionMatrix, weights: ConfidenceWeights, lambda: f64, r: Option<&SppmiMatrix>) -> Result<Self> {
        weights.validate()?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument("lambda must be finite and nonnegative".into()));
        }
        if let Some(r) = r {
            if r.dim() != x.n_urls() {
                return Err(Error::DimensionMismatch(format!(
                    "URL SPPMI matrix has dimension {}, expected {}",
                    r.dim(),
                    x.n_urls()
                )));
            }
        }
        let xs = x.to_csr();
        Ok(WeightedMf {
            x_sq: xs.values().iter().map(|v| v * v).sum(),
            x: xs,
            weights,
            lambda,
            r: r.map(|r| r.to_csr()),
        })
    }

    pub fn loss(&self, s: &WmfState) -> f64 {
        let w = self.weights;
        let dot_support: f64 = self.x.iter().map(|(i, j, xv)| xv * s.u.row(i).dot(&s.vt.row(j))).sum();
        let gram_u = s.u.t().dot(&s.u);
        let gram_v = s.vt.t().dot(&s.vt);
        let uv_sq: f64 = (&gram_u * &gram_v).sum();
        let full = self.x_sq - 2.0 * dot_support + uv_sq;
        let e = residuals_on_support(&self.x, s.u.view(), s.vt.view());
        let masked: f64 = e.values().iter().map(|r| r * r).sum();
        let mut total = w.c_neg * full + (w.c_pos - w.c_neg) * masked;
        total += self.lambda * (sq(s.u.view()) + sq(s.vt.view()));
        if let Some(r) = &self.r {
            let res = residuals_on_support(r, s.vt.view(), s.kt.view());
            total += res.values().iter().map(|v| v * v).sum::<f64>();
        }
        total
    }

    pub fn gradients(&self, s: &WmfState) -> WmfState {
        let w = self.weights;
        let gram_u = s.u.t().dot(&s.u);
        let gram_v = s.vt.t().dot(&s.vt);
        // c_neg part: −2(X − UV)Vᵀ = −2(XVᵀ − U·VVᵀ)
        let mut gu = s.u.dot(&gram_v) - self.x.mul_dense(s.vt.view());
        gu *= 2.0 * w.c_neg;
        let mut gvt = s.vt.dot(&gram_u) - self.x.transpose_mul_dense(s.u.view());
        gvt *= 2.0 * w.c_neg;
        let e = residuals_on_support(&self.x, s.u.view(), s.vt.view());
        let extra = w.c_pos - w.c_neg;
        gu.scaled_add(-2.0 * extra, &e.mul_dense(s.vt.view()));
        gvt.scaled_add(-2.0 * extra, &e.transpose_mul_dense(s.u.view()));
        gu.scaled_add(2.0 * self.lambda, &s.u);
        gvt.scaled_add(2.0 * self.lambda, &s.vt);
        let mut gkt = Array2::zeros(s.kt.dim());
        if let Some(r) = &self.r {
            let res = residuals_on_support(r, s.vt.view(), s.kt.view());
            gvt.scaled_add(-2.0, &res.mul_dense(s.kt.view()));
            gkt = res.transpose_mul_dense(s.vt.view()) * -2.0;
        }
        WmfState { u: gu, vt: gvt, kt: gkt }
    }
}

/// Full-batch gradient descent on [`WeightedMf`] with the shared init and
/// stopping rules; `dim`, `lambda`, `eta`, `max_iters` and `convergence_tol`
/// come from `h`.
pub fn fit_weighted_mf(
    x: &InteractionMatrix,
    weights: ConfidenceWeights,
    h: &Hyperparams,
    r: Option<&SppmiMatrix>,
    seed: u64,
) -> Result<(ModelParams, TrainTrace)> {
    if h.dim == 0 {
        return Err(Error::InvalidArgument("latent dimension must be at least 1".into()));
    }
    let problem = WeightedMf::new(x, weights, h.lambda, r)?;
    let start = Instant::now();
    let (n, m, d) = (x.n_guardians(), x.n_urls(), h.dim);
    let init = init_params(n, m, d, seed);
    let mut s = WmfState {
        u: init.u,
        vt: to_row_major(init.v.t()),
        kt: to_row_major(init.k.t()),
    };
    let mut stop = Stopper {
        losses: vec![problem.loss(&s)],
        tol: h.convergence_tol,
    };
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=h.max_iters {
        let g = problem.gradients(&s);
        s.u.scaled_add(-h.eta, &g.u);
        s.vt.scaled_add(-h.eta, &g.vt);
        s.kt.scaled_add(-h.eta, &g.kt);
        iterations = iter;
        let finite = [&s.u, &s.vt, &s.kt].iter().all(|a| a.iter().all(|v| v.is_finite()));
        if stop.push(iter, problem.loss(&s), finite)? {
            converged = true;
            break;
        }
    }
    let params = ModelParams {
        u: s.u,
        v: to_row_major(s.vt.t()),
        k: to_row_major(s.kt.t()),
        l: Array2::zeros((d, n)),
    };
    Ok((params, trace(stop.losses, iterations, converged, start)))
}

/// Fraction of (held-out positive, non-positive) pairs ranked correctly,
/// averaged over guardians with at least one held-out positive. Items in
/// `train` are excluded from the negatives.
pub fn mean_auc(p: &ModelParams, train: &InteractionMatrix, held_out: &InteractionMatrix) -> f64 {
    let scores = p.u.dot(&p.v);
    let mut total = 0.0;
    let mut count = 0usize;
    for (g, row) in scores.axis_iter(Axis(0)).enumerate() {
        let pos = held_out.row(g);
        if pos.is_empty() {
            continue;
        }
        let negs: Vec<f64> = (0..p.n_urls())
            .filter(|&j| !train.contains(g, j) && !held_out.contains(g, j))
            .map(|j| row[j])
            .collect();
        if negs.is_empty() {
            continue;
        }
        let mut hits = 0.0;
        for &i in pos {
            for &sn in &negs {
                if row[i] > sn {
                    hits += 1.0;
                } else if row[i] == sn {
                    hits += 0.5;
                }
            }
        }
        total += hits / (pos.len() * negs.len()) as f64;
        count += 1;
    }
    if count == 0 {
        0.5
    } else {
        total / count as f64
    }
}
