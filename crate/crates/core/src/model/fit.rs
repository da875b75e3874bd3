use std::time::Instant;

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::objective::{gradients, loss_terms, LossTerms};
use super::{Hyperparams, ModelInputs, ModelParams};
use crate::error::{Error, Result};
use crate::seed;

pub const INIT_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    EarlyStopped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Objective after each iteration; element 0 is the initialization.
    pub losses: Vec<f64>,
    pub terms: Vec<LossTerms>,
    pub iterations: usize,
    pub stop: StopReason,
    pub wall_seconds: f64,
}

impl TrainTrace {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace has the initial loss")
    }
}

/// Validation hook: called every `every` iterations with the current factors,
/// higher is better. Training stops after `patience` checks without improvement
/// and returns the best factors seen.
pub struct Monitor<'a> {
    pub every: usize,
    pub patience: usize,
    pub score: Box<dyn Fn(&ModelParams) -> f64 + Send + Sync + 'a>,
}

#[derive(Default)]
pub struct FitOptions<'a> {
    pub monitor: Option<Monitor<'a>>,
}

fn gaussian(rows: usize, cols: usize, normal: &Normal<f64>, rng: &mut seed::Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// `N(0, 0.01²)` factors drawn row-major in the order U, V, K, L from one
/// stream, so a model without K and L can draw just the prefix.
pub fn init_params(n_guardians: usize, n_urls: usize, dim: usize, seed: u64) -> ModelParams {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut rng = seed::rng(seed);
    let u = gaussian(n_guardians, dim, &normal, &mut rng);
    let v = gaussian(dim, n_urls, &normal, &mut rng);
    let k = gaussian(dim, n_urls, &normal, &mut rng);
    let l = gaussian(dim, n_guardians, &normal, &mut rng);
    ModelParams { u, v, k, l }
}

pub fn fit(inputs: &ModelInputs, h: &Hyperparams, seed: u64) -> Result<(ModelParams, TrainTrace)> {
    fit_with(inputs, h, seed, FitOptions::default())
}

fn relative_change(previous: f64, current: f64) -> f64 {
    (previous - current).abs() / previous.abs().max(f64::MIN_POSITIVE)
}

/// True once the last relative change is below `tol` and no larger than the
/// one before it. Near the small initialization the loss sits on a plateau
/// whose changes are tiny but growing; requiring them to have stopped growing
/// keeps that plateau from passing for convergence.
pub(crate) fn has_converged(losses: &[f64], tol: f64) -> bool {
    match losses {
        [.., a, b, c] => {
            let rel = relative_change(*b, *c);
            rel < tol && rel <= relative_change(*a, *b)
        }
        _ => false,
    }
}

/// Full-batch gradient descent with a fixed learning rate. Stops on
/// convergence (see [`has_converged`]) or after `max_iters` updates.
pub fn fit_with(
    inputs: &ModelInputs,
    h: &Hyperparams,
    seed: u64,
    opts: FitOptions<'_>,
) -> Result<(ModelParams, TrainTrace)> {
    h.validate()?;
    inputs.check_terms(&h.terms)?;
    let start = Instant::now();
    let mut p = init_params(inputs.n_guardians(), inputs.n_urls(), h.dim, seed);
    let t0 = loss_terms(&p, inputs, h)?;
    let mut losses = vec![t0.total()];
    let mut terms = vec![t0];
    let mut stop = StopReason::MaxIters;
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0usize;
    let mut iterations = 0;

    for iter in 1..=h.max_iters {
        let g = gradients(&p, inputs, h)?;
        p.u.scaled_add(-h.eta, &g.u);
        p.v.scaled_add(-h.eta, &g.v);
        p.l.scaled_add(-h.eta, &g.l);
        p.k.scaled_add(-h.eta, &g.k);
        iterations = iter;

        let t = loss_terms(&p, inputs, h)?;
        let current = t.total();
        if !current.is_finite() || !p.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                loss: current,
            });
        }
        losses.push(current);
        terms.push(t);

        if let Some(m) = &opts.monitor {
            if m.every > 0 && iter % m.every == 0 {
                let score = (m.score)(&p);
                match &best {
                    Some((b, _)) if score <= *b => stale += 1,
                    _ => {
                        best = Some((score, p.clone()));
                        stale = 0;
                    }
                }
                if stale >= m.patience.max(1) {
                    stop = StopReason::EarlyStopped;
                    break;
                }
            }
        }

        if has_converged(&losses, h.convergence_tol) {
            stop = StopReason::Converged;
            break;
        }
    }

    if stop == StopReason::EarlyStopped {
        if let Some((_, bp)) = best {
            p = bp;
        }
    }
    let trace = TrainTrace {
        losses,
        terms,
        iterations,
        stop,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    log::debug!(
        "fit: {} iterations, loss {:.6} -> {:.6} ({:?})",
        trace.iterations,
        trace.initial_loss(),
        trace.final_loss(),
        trace.stop
    );
    Ok((p, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growing_small_changes_are_not_convergence() {
        assert!(!has_converged(&[100.0, 99.9999], 1e-5));
        assert!(!has_converged(&[100.0, 99.9999, 99.9997], 1e-5));
        assert!(has_converged(&[100.0, 99.9997, 99.9996], 1e-5));
        assert!(!has_converged(&[100.0, 99.0, 98.999], 1e-6));
    }
    use crate::data::InteractionMatrix;
    use crate::model::Terms;

    fn toy() -> (ModelInputs, Hyperparams) {
        let x = InteractionMatrix::from_pairs(4, 5, vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (3, 4), (3, 0)]).unwrap();
        let h = Hyperparams {
            dim: 3,
            terms: Terms::NONE,
            max_iters: 50,
            eta: 0.01,
            ..Default::default()
        };
        (ModelInputs::new(&x), h)
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let (inputs, mut h) = toy();
        h.eta = 0.0;
        let (p, trace) = fit(&inputs, &h, 3).unwrap();
        assert_eq!(p, init_params(4, 5, 3, 3));
        assert_eq!(trace.stop, StopReason::Converged);
    }

    #[test]
    fn deterministic() {
        let (inputs, h) = toy();
        let (a, _) = fit(&inputs, &h, 8).unwrap();
        let (b, _) = fit(&inputs, &h, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_reported() {
        let (inputs, mut h) = toy();
        h.eta = 1e3;
        h.max_iters = 200;
        let err = fit(&inputs, &h, 1).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn monitor_stops_early_and_keeps_best() {
        let (inputs, mut h) = toy();
        h.max_iters = 100;
        h.convergence_tol = 0.0;
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let opts = FitOptions {
            monitor: Some(Monitor {
                every: 5,
                patience: 2,
                score: Box::new(|_| {
                    let n = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if n == 0 { 1.0 } else { 0.0 }
                }),
            }),
        };
        let (_, trace) = fit_with(&inputs, &h, 2, opts).unwrap();
        assert_eq!(trace.stop, StopReason::EarlyStopped);
        assert_eq!(trace.iterations, 15);
    }
}
