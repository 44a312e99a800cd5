//! Projected gradient ascent on the unit sphere of a weighted `l2` space,
//! optionally intersected with the nonnegative cone.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

/// Smooth objective on vectors with inner product `w * sum x_i y_i`.
pub trait SphereObjective {
    fn weight(&self) -> f64;

    fn value(&mut self, x: &[f64]) -> f64;

    /// Value and gradient with respect to the weighted inner product.
    fn value_and_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub armijo: f64,
    pub initial_step: f64,
    pub nonnegative: bool,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            grad_tol: 1e-7,
            restarts: 10,
            seed: 0,
            armijo: 1e-4,
            initial_step: 1.0,
            nonnegative: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

fn dot(w: f64, a: &[f64], b: &[f64]) -> f64 {
    w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

fn project(x: &mut [f64], w: f64, nonnegative: bool) -> bool {
    if nonnegative {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let n = dot(w, x, x).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= n);
    true
}

/// Norm of the gradient projected on the tangent space of the feasible set.
fn tangent_norm(w: f64, x: &[f64], g: &[f64], nonnegative: bool) -> f64 {
    let radial = dot(w, g, x);
    let mut s = 0.0;
    for (xi, gi) in x.iter().zip(g) {
        let mut t = gi - radial * xi;
        if nonnegative && *xi <= 0.0 && t < 0.0 {
            t = 0.0;
        }
        s += t * t;
    }
    (w * s).sqrt()
}

/// Single run from `x0` (projected onto the feasible set first).
pub fn projected_ascent<O: SphereObjective>(obj: &mut O, x0: Vec<f64>, opts: &AscentOptions) -> AscentResult {
    let w = obj.weight();
    let mut x = x0;
    project(&mut x, w, opts.nonnegative);
    let (mut val, mut grad) = obj.value_and_gradient(&x);
    let mut history = vec![val];
    let mut step = opts.initial_step;
    let mut gnorm = tangent_norm(w, &x, &grad, opts.nonnegative);
    let mut iterations = 0;
    let mut converged = gnorm <= opts.grad_tol;
    let mut trial = vec![0.0; x.len()];
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..x.len() {
                trial[i] = x[i] + step * grad[i];
            }
            if project(&mut trial, w, opts.nonnegative) {
                let diff: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let gain = dot(w, &grad, &diff);
                let v = obj.value(&trial);
                if v > val && v >= val + opts.armijo * gain {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent direction resolvable at working precision.
            converged = true;
            break;
        }
        std::mem::swap(&mut x, &mut trial);
        let (v, g) = obj.value_and_gradient(&x);
        val = v;
        grad = g;
        history.push(val);
        gnorm = tangent_norm(w, &x, &grad, opts.nonnegative);
        converged = gnorm <= opts.grad_tol;
        step = (step * 2.0).min(1e6);
    }
    AscentResult {
        x,
        value: val,
        iterations,
        grad_norm: gnorm,
        converged,
        history,
    }
}

/// Best of `opts.restarts` runs; run `r` starts from `init(r, rng_r)` with
/// `rng_r` keyed by `(opts.seed, r)`. Ties go to the lowest run index.
pub fn multistart<O, M, I>(make: M, init: I, opts: &AscentOptions) -> (AscentResult, usize)
where
    O: SphereObjective,
    M: Fn() -> O + Sync,
    I: Fn(usize, &mut StreamRng) -> Vec<f64> + Sync,
{
    let runs: Vec<AscentResult> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::new(opts.seed, r as u64);
            let x0 = init(r, &mut rng);
            let mut obj = make();
            projected_ascent(&mut obj, x0, opts)
        })
        .collect();
    let count = runs.len();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one run");
    (best, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rayleigh quotient `x^T A x` for a diagonal `A`; maximum is the top entry.
    struct Rayleigh(Vec<f64>);

    impl SphereObjective for Rayleigh {
        fn weight(&self) -> f64 {
            1.0
        }
        fn value(&mut self, x: &[f64]) -> f64 {
            x.iter().zip(&self.0).map(|(v, a)| a * v * v).sum()
        }
        fn value_and_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
            let g = x.iter().zip(&self.0).map(|(v, a)| 2.0 * a * v).collect();
            (self.value(x), g)
        }
    }

    #[test]
    fn finds_top_eigenvalue_with_monotone_history() {
        let mut obj = Rayleigh(vec![1.0, 3.0, 2.0, 0.5]);
        let r = projected_ascent(&mut obj, vec![1.0, 1.0, 1.0, 1.0], &AscentOptions::default());
        assert!((r.value - 3.0).abs() < 1e-10, "{r:?}");
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.converged);
    }

    #[test]
    fn multistart_is_deterministic() {
        let opts = AscentOptions {
            restarts: 4,
            seed: 3,
            ..Default::default()
        };
        let init = |_, rng: &mut StreamRng| (0..5).map(|_| rng.open01()).collect();
        let make = || Rayleigh(vec![0.1, 0.2, 5.0, 0.3, 0.4]);
        let (a, n) = multistart(make, init, &opts);
        let (b, _) = multistart(make, init, &opts);
        assert_eq!(n, 4);
        assert_eq!(a, b);
        assert!((a.value - 5.0).abs() < 1e-9);
    }
}
