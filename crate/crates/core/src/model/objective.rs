//! Objective value and analytic gradients.
//!
//! Dense factors are handled entity-major internally (`Vᵀ`, `Kᵀ`, `Lᵀ` as
//! M×D / N×D) so every residual is a dot product of two contiguous rows.
//! Masked residuals live on the support of their sparse matrix only. The
//! follow-graph term uses `‖S − UUᵀ‖² = ‖S‖² − 2·Tr(UᵀSU) + ‖UᵀU‖²` and its
//! gradient `(Ψ + Ψᵀ)U = (S + Sᵀ)U − 2·U(UᵀU)`, so `UUᵀ` is never formed.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{Hyperparams, ModelInputs, ModelParams};
use crate::error::Result;
use crate::sparse::CsrMatrix;

/// Per-term decomposition of the objective. Disabled terms are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub regularization: f64,
    pub url_sppmi: f64,
    pub guardian_sppmi: f64,
    pub social: f64,
    pub guardian_content: f64,
    pub url_content: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction
            + self.regularization
            + self.url_sppmi
            + self.guardian_sppmi
            + self.social
            + self.guardian_content
            + self.url_content
    }
}

/// Gradients in the same orientation as [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub k: Array2<f64>,
    pub l: Array2<f64>,
}

pub(crate) fn sum_sq(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Residual `A_ij − left_i · right_j` on the support of `a`.
fn masked_residuals(a: &CsrMatrix, left: ArrayView2<f64>, right: ArrayView2<f64>) -> CsrMatrix {
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

/// `Σ_ij A_ij · (rows_i · rows_j)`, i.e. `Tr(Xᵀ A X)` for entity-major `X`.
fn quadratic_form(a: &CsrMatrix, rows: ArrayView2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        let ri = rows.row(i);
        for (&j, &w) in cols.iter().zip(vals) {
            total += w * ri.dot(&rows.row(j));
        }
    }
    total
}

struct Views {
    vt: Array2<f64>,
    kt: Array2<f64>,
    lt: Array2<f64>,
}

fn views(p: &ModelParams) -> Views {
    Views {
        vt: p.v.t().as_standard_layout().into_owned(),
        kt: p.k.t().as_standard_layout().into_owned(),
        lt: p.l.t().as_standard_layout().into_owned(),
    }
}

fn check(p: &ModelParams, inputs: &ModelInputs, h: &Hyperparams) -> Result<()> {
    inputs.check_params(p)?;
    inputs.check_terms(&h.terms)
}

pub fn loss_terms(p: &ModelParams, inputs: &ModelInputs, h: &Hyperparams) -> Result<LossTerms> {
    check(p, inputs, h)?;
    let w = views(p);
    let t = h.terms;
    let mut out = LossTerms::default();

    let e = masked_residuals(inputs.interactions(), p.u.view(), w.vt.view());
    out.reconstruction = e.values().iter().map(|r| r * r).sum();
    out.regularization = h.lambda * (sum_sq(p.u.view()) + sum_sq(p.v.view()));

    if t.url_sppmi {
        let r = inputs.url_sppmi().expect("checked");
        out.url_sppmi = masked_residuals(r, w.vt.view(), w.kt.view()).values().iter().map(|r| r * r).sum();
    }
    if t.guardian_sppmi {
        let g = inputs.guardian_sppmi().expect("checked");
        out.guardian_sppmi = masked_residuals(g, p.u.view(), w.lt.view()).values().iter().map(|r| r * r).sum();
    }
    if t.social {
        let s = inputs.social().expect("checked");
        let gram = p.u.t().dot(&p.u);
        let fit = s.values().iter().map(|x| x * x).sum::<f64>() - 2.0 * quadratic_form(s, p.u.view()) + sum_sq(gram.view());
        out.social = h.alpha * fit;
    }
    if t.guardian_content {
        out.guardian_content = h.gamma * quadratic_form(inputs.guardian_laplacian().expect("checked"), p.u.view());
    }
    if t.url_content {
        out.url_content = h.beta * quadratic_form(inputs.url_laplacian().expect("checked"), w.vt.view());
    }
    Ok(out)
}

pub fn loss(p: &ModelParams, inputs: &ModelInputs, h: &Hyperparams) -> Result<f64> {
    Ok(loss_terms(p, inputs, h)?.total())
}

pub fn gradients(p: &ModelParams, inputs: &ModelInputs, h: &Hyperparams) -> Result<Gradients> {
    check(p, inputs, h)?;
    let w = views(p);
    let t = h.terms;

    // Ω is binary, so Ω ⊙ Ω ⊙ (X − UV) is just the masked residual.
    let e = masked_residuals(inputs.interactions(), p.u.view(), w.vt.view());
    let mut gu = e.mul_dense(w.vt.view()) * -2.0;
    gu.scaled_add(2.0 * h.lambda, &p.u);
    let mut gvt = e.transpose_mul_dense(p.u.view()) * -2.0;
    gvt.scaled_add(2.0 * h.lambda, &w.vt);
    let mut gkt = Array2::zeros(w.kt.dim());
    let mut glt = Array2::zeros(w.lt.dim());

    if t.url_sppmi {
        let r = masked_residuals(inputs.url_sppmi().expect("checked"), w.vt.view(), w.kt.view());
        gvt.scaled_add(-2.0, &r.mul_dense(w.kt.view()));
        gkt = r.transpose_mul_dense(w.vt.view()) * -2.0;
    }
    if t.guardian_sppmi {
        let q = masked_residuals(inputs.guardian_sppmi().expect("checked"), p.u.view(), w.lt.view());
        gu.scaled_add(-2.0, &q.mul_dense(w.lt.view()));
        glt = q.transpose_mul_dense(p.u.view()) * -2.0;
    }
    if t.social {
        let s_sum = inputs.social_sum.as_ref().expect("checked");
        let gram = p.u.t().dot(&p.u);
        let mut sym = s_sum.mul_dense(p.u.view());
        sym.scaled_add(-2.0, &p.u.dot(&gram));
        gu.scaled_add(-2.0 * h.alpha, &sym);
    }
    if t.guardian_content {
        let lap_sum = inputs.guardian_laplacian_sum.as_ref().expect("checked");
        gu.scaled_add(h.gamma, &lap_sum.mul_dense(p.u.view()));
    }
    if t.url_content {
        let lap_sum = inputs.url_laplacian_sum.as_ref().expect("checked");
        gvt.scaled_add(h.beta, &lap_sum.mul_dense(w.vt.view()));
    }

    Ok(Gradients {
        u: gu,
        v: gvt.t().as_standard_layout().into_owned(),
        k: gkt.t().as_standard_layout().into_owned(),
        l: glt.t().as_standard_layout().into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionMatrix;
    use crate::model::Terms;

    #[test]
    fn zero_params_loss_is_support_size() {
        let x = InteractionMatrix::from_pairs(3, 4, vec![(0, 0), (0, 1), (1, 2), (2, 3), (2, 0)]).unwrap();
        let inputs = ModelInputs::new(&x);
        let h = Hyperparams {
            dim: 2,
            lambda: 0.0,
            terms: Terms::NONE,
            ..Default::default()
        };
        let p = ModelParams::zeros(3, 4, 2);
        assert_eq!(loss(&p, &inputs, &h).unwrap(), 5.0);
        let h1 = Hyperparams { lambda: 1.0, ..h.clone() };
        assert_eq!(loss(&p, &inputs, &h1).unwrap(), 5.0);

        let g = gradients(&p, &inputs, &h).unwrap();
        assert!(g.u.iter().all(|&x| x == 0.0));
        assert!(g.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mismatched_params_rejected() {
        let x = InteractionMatrix::from_pairs(2, 2, vec![(0, 0)]).unwrap();
        let inputs = ModelInputs::new(&x);
        let h = Hyperparams {
            dim: 2,
            terms: Terms::NONE,
            ..Default::default()
        };
        let p = ModelParams::zeros(3, 2, 2);
        assert!(loss(&p, &inputs, &h).is_err());
        assert!(gradients(&p, &inputs, &h).is_err());
    }
}
