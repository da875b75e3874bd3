//! Fixtures and independent dense oracles shared by the integration tests.
#![allow(dead_code)]

use guardrec::cooccurrence::{guardian_cooccurrence_counts, sppmi, url_cooccurrence_counts, SppmiMatrix};
use guardrec::data::{filter_min_urls, generate_synthetic, InteractionMatrix, SocialGraph, SyntheticBundle, SyntheticConfig};
use guardrec::model::{Hyperparams, ModelInputs, ModelParams, Terms};
use guardrec::similarity::SimilarityBundle;
use guardrec::sparse::CsrMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub x: InteractionMatrix,
    pub r: SppmiMatrix,
    pub g: SppmiMatrix,
    pub social: SocialGraph,
    pub gsim: SimilarityBundle,
    pub usim: SimilarityBundle,
    pub params: ModelParams,
}

impl Instance {
    pub fn inputs(&self) -> ModelInputs {
        ModelInputs::new(&self.x)
            .with_url_sppmi(&self.r)
            .unwrap()
            .with_guardian_sppmi(&self.g)
            .unwrap()
            .with_social(&self.social)
            .unwrap()
            .with_guardian_similarity(&self.gsim)
            .unwrap()
            .with_url_similarity(&self.usim)
            .unwrap()
    }
}

fn random_similarity(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SimilarityBundle {
    let mut t = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let w: f64 = rng.random_range(0.05..1.0);
                t.push((i, j, w));
                t.push((j, i, w));
            }
        }
    }
    SimilarityBundle::from_similarity(&CsrMatrix::from_triplets(n, n, t)).unwrap()
}

fn random_dense(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale))
}

/// Random instance with every auxiliary input nonempty.
pub fn random_instance(seed: u64, n: usize, m: usize, d: usize, shift: u32) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.random_bool(0.45) {
                    pairs.push((i, j));
                }
            }
        }
        let x = InteractionMatrix::from_pairs(n, m, pairs).unwrap();
        let (Ok(r), Ok(g)) = (
            sppmi(&url_cooccurrence_counts(&x), shift),
            sppmi(&guardian_cooccurrence_counts(&x), shift),
        ) else {
            continue;
        };
        if r.nnz() == 0 || g.nnz() == 0 {
            continue;
        }
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.35) {
                    edges.push((a, b));
                }
            }
        }
        let social = SocialGraph::from_edges(n, edges);
        let gsim = random_similarity(&mut rng, n, 0.4);
        let usim = random_similarity(&mut rng, m, 0.4);
        if social.n_edges() == 0 || gsim.sim().nnz() == 0 || usim.sim().nnz() == 0 {
            continue;
        }
        let params = ModelParams {
            u: random_dense(&mut rng, n, d, 0.8),
            v: random_dense(&mut rng, d, m, 0.8),
            k: random_dense(&mut rng, d, m, 0.8),
            l: random_dense(&mut rng, d, n, 0.8),
        };
        return Instance {
            x,
            r,
            g,
            social,
            gsim,
            usim,
            params,
        };
    }
}

pub fn all_terms(alpha: f64, beta: f64, gamma: f64, lambda: f64, shift: u32, dim: usize) -> Hyperparams {
    Hyperparams {
        dim,
        lambda,
        alpha,
        beta,
        gamma,
        shift,
        terms: Terms::ALL,
        ..Default::default()
    }
}

fn sppmi_dense(s: &SppmiMatrix) -> Array2<f64> {
    let n = s.dim();
    Array2::from_shape_fn((n, n), |(i, j)| s.get(i, j))
}

fn trace(a: &Array2<f64>) -> f64 {
    a.diag().sum()
}

/// The objective written out densely, term by term, with explicit masks.
pub fn dense_loss(inst: &Instance, p: &ModelParams, h: &Hyperparams) -> f64 {
    let t = h.terms;
    let (n, m) = (inst.x.n_guardians(), inst.x.n_urls());
    let x = Array2::from_shape_fn((n, m), |(i, j)| if inst.x.contains(i, j) { 1.0 } else { 0.0 });
    let uv = p.u.dot(&p.v);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let mask = x[[i, j]];
            total += mask * (x[[i, j]] - uv[[i, j]]).powi(2);
        }
    }
    total += h.lambda * (p.u.iter().map(|v| v * v).sum::<f64>() + p.v.iter().map(|v| v * v).sum::<f64>());
    if t.url_sppmi {
        let r = sppmi_dense(&inst.r);
        let vk = p.v.t().dot(&p.k);
        for i in 0..m {
            for j in 0..m {
                let mask = if r[[i, j]] > 0.0 { 1.0 } else { 0.0 };
                total += mask * (r[[i, j]] - vk[[i, j]]).powi(2);
            }
        }
    }
    if t.guardian_sppmi {
        let g = sppmi_dense(&inst.g);
        let ul = p.u.dot(&p.l);
        for i in 0..n {
            for j in 0..n {
                let mask = if g[[i, j]] > 0.0 { 1.0 } else { 0.0 };
                total += mask * (g[[i, j]] - ul[[i, j]]).powi(2);
            }
        }
    }
    if t.social {
        let s = inst.social.adjacency().to_dense();
        let diff = &s - &p.u.dot(&p.u.t());
        total += h.alpha * diff.iter().map(|v| v * v).sum::<f64>();
    }
    if t.guardian_content {
        let w = inst.gsim.sim().to_dense();
        let lap = Array2::from_diag(&w.sum_axis(ndarray::Axis(1))) - &w;
        total += h.gamma * trace(&p.u.t().dot(&lap).dot(&p.u));
    }
    if t.url_content {
        let w = inst.usim.sim().to_dense();
        let lap = Array2::from_diag(&w.sum_axis(ndarray::Axis(1))) - &w;
        total += h.beta * trace(&p.v.dot(&lap).dot(&p.v.t()));
    }
    total
}

/// The acceptance-scale synthetic bundle: 200 × 100, two blocks, seed 42.
pub fn acceptance_bundle() -> SyntheticBundle {
    generate_synthetic(&SyntheticConfig::new(200, 100, 2, 0.3, 0.03, 42)).unwrap()
}

pub fn filtered(x: &InteractionMatrix, min: usize) -> InteractionMatrix {
    filter_min_urls(x, min).unwrap().matrix
}
