//! Lattice analogues of `rho`:
//! `rho~ = sup_{|f|_2 = 1} sum_x pi(x) [sum_y sqrt(Q(x+y) Q(y)) f(x+y) f(y)]^p`
//! and its periodized special case `rho_M` (`pi = 1`, kernel `Q(2 pi x / M)`).
//! Also the finite sums whose exponential growth rate is `log rho~`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ascent::{multistart, AscentOptions};
use super::grid::GridSpec;
use super::rho::{random_start, RhoObjective};
use super::VariationalSolution;
use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::moments::perm::{factorial, FrequencyTuple, PrefixSumDp};

/// Weight `pi` on lags: finitely supported or identically one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepWeights {
    Finite { points: Vec<Vec<i64>>, weights: Vec<f64> },
    Uniform,
}

/// `pi` and `Q` on `Z^d`, with `Q` tabulated on `|x|_inf <= cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub d: usize,
    pub p: usize,
    pub pi: StepWeights,
    pub cutoff: usize,
    /// Row-major table over the box, last axis fastest.
    pub q: Vec<f64>,
    /// Natural length scale in lattice units (start widths for the solver).
    pub scale: f64,
}

impl LatticeModel {
    pub fn new<F: Fn(&[i64]) -> f64>(d: usize, p: usize, pi: StepWeights, q: F, cutoff: usize) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(invalid("d", "lattice solvers support d in {1, 2}"));
        }
        if p == 0 {
            return Err(invalid("p", "must be positive"));
        }
        if cutoff == 0 {
            return Err(invalid("cutoff", "must be positive"));
        }
        if let StepWeights::Finite { points, weights } = &pi {
            if points.len() != weights.len() || points.is_empty() {
                return Err(invalid("pi", "support and weights differ in length"));
            }
            if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(invalid("pi", "weights must be finite and nonnegative"));
            }
            for (x, w) in points.iter().zip(weights) {
                if x.len() != d {
                    return Err(invalid("pi", "support point has wrong dimension"));
                }
                let neg: Vec<i64> = x.iter().map(|v| -v).collect();
                let mirrored: f64 = points
                    .iter()
                    .zip(weights)
                    .filter(|(y, _)| **y == neg)
                    .map(|(_, w)| *w)
                    .sum();
                let own: f64 = points.iter().zip(weights).filter(|(y, _)| *y == x).map(|(_, w)| *w).sum();
                if (mirrored - own).abs() > 1e-12 * (1.0 + own) {
                    return Err(invalid("pi", format!("not even at {x:?} (weight {w})")));
                }
                if x.iter().any(|v| v.unsigned_abs() as usize > cutoff) {
                    return Err(invalid("pi", "support exceeds the cutoff box"));
                }
            }
        }
        let side = 2 * cutoff + 1;
        let c = cutoff as i64;
        let q: Vec<f64> = (0..side.pow(d as u32))
            .map(|k| q(&box_point(d, side, c, k)))
            .collect();
        if q.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("Q", "must be finite and nonnegative"));
        }
        let model = Self {
            d,
            p,
            pi,
            cutoff,
            q,
            scale: 1.0,
        };
        let peak = model.q.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(invalid("Q", "vanishes on the whole box"));
        }
        if model.boundary_q_max() >= peak && peak > 0.0 && model.boundary_q_max() > 0.0 {
            return Err(invalid("Q", "does not decay towards the cutoff"));
        }
        Ok(model)
    }

    /// `pi = 1/3` on `{-1, 0, 1}`, `Q(x) = 1 / (1 + |x|)`, `p = 2`, cutoff 12.
    pub fn small_instance() -> Self {
        let pi = StepWeights::Finite {
            points: vec![vec![-1], vec![0], vec![1]],
            weights: vec![1.0 / 3.0; 3],
        };
        Self::new(1, 2, pi, |x| 1.0 / (1.0 + x[0].abs() as f64), 12).expect("valid instance")
    }

    /// `pi = 1`, `Q(2 pi x / M)`, box covering `|lambda|_inf <= half_width`.
    pub fn periodized(params: &ModelParams, m: f64, half_width: f64) -> Result<Self> {
        params.validate()?;
        if !(m > 0.0) {
            return Err(invalid("M", "must be positive"));
        }
        let step = 2.0 * std::f64::consts::PI / m;
        let cutoff = (half_width / step).ceil().max(1.0) as usize;
        let mut model = Self::new(
            params.d,
            params.p,
            StepWeights::Uniform,
            |x| {
                let lam: Vec<f64> = x.iter().map(|v| *v as f64 * step).collect();
                params.q(&lam)
            },
            cutoff,
        )?;
        model.scale = 1.0 / step;
        Ok(model)
    }

    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn q_at(&self, x: &[i64]) -> Option<f64> {
        let c = self.cutoff as i64;
        if x.iter().any(|v| v.abs() > c) {
            return None;
        }
        let side = self.side() as i64;
        let k = x.iter().fold(0i64, |acc, v| acc * side + v + c);
        Some(self.q[k as usize])
    }

    pub fn q_max(&self) -> f64 {
        self.q.iter().cloned().fold(0.0, f64::max)
    }

    fn boundary_q_max(&self) -> f64 {
        let side = self.side();
        let c = self.cutoff as i64;
        (0..self.q.len())
            .filter(|&k| box_point(self.d, side, c, k).iter().any(|v| v.abs() == c))
            .map(|k| self.q[k])
            .fold(0.0, f64::max)
    }

    fn grid(&self) -> GridSpec {
        GridSpec::new(self.d, self.cutoff as f64, 1.0).expect("cutoff >= 1")
    }
}

fn box_point(d: usize, side: usize, c: i64, k: usize) -> Vec<i64> {
    let mut out = vec![0i64; d];
    let mut rem = k;
    for a in (0..d).rev() {
        out[a] = (rem % side) as i64 - c;
        rem /= side;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSolution {
    pub value: f64,
    /// `l2` mass of the maximizer on the outer tenth of the box.
    pub boundary_mass: f64,
    pub solution: VariationalSolution,
}

/// Boundary-mass tolerance used when none is given.
pub const DEFAULT_TAIL_TOL: f64 = 1e-3;

/// Projected ascent for `rho~`. Fails when the maximizer carries more than
/// `tail_tol` of its `l2` mass in the outer tenth of the box.
pub fn solve_rho_lattice(model: &LatticeModel, opts: &AscentOptions, tail_tol: f64) -> Result<LatticeSolution> {
    let spec = model.grid();
    let sqrt_q: Vec<f64> = model.q.iter().map(|v| v.sqrt()).collect();
    let mut proto = RhoObjective::with_kernel(spec, model.p, sqrt_q);
    if let StepWeights::Finite { points, weights } = &model.pi {
        let padded = proto.correlator().padded;
        let mut w = vec![0.0; proto.correlator().padded_len()];
        let wrap = |v: i64| v.rem_euclid(padded as i64) as usize;
        for (x, pw) in points.iter().zip(weights) {
            let i = x.iter().fold(0usize, |acc, v| acc * padded + wrap(*v));
            w[i] += pw;
        }
        proto = proto.with_lag_weights(w);
    }
    let (best, restarts) = multistart(
        || proto.clone(),
        |r, rng| random_start(&spec, model.scale, r, rng),
        opts,
    );
    let side = model.side();
    let c = model.cutoff as i64;
    let layer = (model.cutoff / 10).max(1) as i64;
    let boundary_mass: f64 = best
        .x
        .iter()
        .enumerate()
        .filter(|(k, _)| box_point(model.d, side, c, *k).iter().any(|v| v.abs() > c - layer))
        .map(|(_, v)| v * v)
        .sum();
    let solution = VariationalSolution::from_ascent(best, spec, restarts);
    if boundary_mass > tail_tol {
        return Err(Error::TailTooLarge {
            tail: boundary_mass,
            value: 1.0,
            limit: 100.0 * tail_tol,
        });
    }
    Ok(LatticeSolution {
        value: solution.value,
        boundary_mass,
        solution,
    })
}

/// `rho_M` together with the normalized value `M^{-d} rho_M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodizedSolution {
    pub m: f64,
    pub rho_m: f64,
    pub normalized: f64,
    pub boundary_mass: f64,
    pub cutoff: usize,
}

/// `rho_M` on the box `|lambda|_inf <= half_width` in frequency units.
pub fn solve_rho_m(
    params: &ModelParams,
    m: f64,
    half_width: f64,
    opts: &AscentOptions,
    tail_tol: f64,
) -> Result<PeriodizedSolution> {
    let model = LatticeModel::periodized(params, m, half_width)?;
    let sol = solve_rho_lattice(&model, opts, tail_tol)?;
    Ok(PeriodizedSolution {
        m,
        rho_m: sol.value,
        normalized: sol.value / m.powi(params.d as i32),
        boundary_mass: sol.boundary_mass,
        cutoff: model.cutoff,
    })
}

/// Enumeration budget (elementary DP steps) used when none is given.
pub const DEFAULT_BUDGET: f64 = 2e9;

fn finite_support(model: &LatticeModel) -> Result<(&Vec<Vec<i64>>, &Vec<f64>)> {
    match &model.pi {
        StepWeights::Finite { points, weights } => Ok((points, weights)),
        StepWeights::Uniform => Err(invalid("pi", "brute-force sums need a finitely supported pi")),
    }
}

fn check_reach(model: &LatticeModel, points: &[Vec<i64>], n: usize) -> Result<()> {
    let reach = points
        .iter()
        .flat_map(|x| x.iter().map(|v| v.unsigned_abs()))
        .max()
        .unwrap_or(0) as usize
        * n;
    if reach > model.cutoff {
        return Err(invalid(
            "cutoff",
            format!("prefix sums reach {reach}, beyond the tabulated cutoff {}", model.cutoff),
        ));
    }
    Ok(())
}

fn tuple_term(model: &LatticeModel, dp: &mut PrefixSumDp, pts: Vec<f64>, n: usize) -> f64 {
    let t = FrequencyTuple::new(model.d, pts).expect("flat tuple");
    let perm = dp
        .eval(&t, |s| {
            let x: Vec<i64> = s.iter().map(|v| v.round() as i64).collect();
            model.q_at(&x).expect("within reach")
        })
        .expect("n within DP range");
    (perm / factorial(n)).powi(model.p as i32)
}

/// `S_n = sum_{x in A^n} prod pi(x_k) [P(x) / n!]^p`, summing every tuple.
pub fn discrete_moment_bruteforce(model: &LatticeModel, n: usize, budget: f64) -> Result<f64> {
    let (points, weights) = finite_support(model)?;
    if n == 0 {
        return Ok(1.0);
    }
    let a = points.len();
    let cost = (a as f64).powi(n as i32) * 2f64.powi(n as i32) * n as f64;
    if cost > budget {
        return Err(Error::BudgetExceeded { cost, budget });
    }
    check_reach(model, points, n)?;
    let total = a.pow(n as u32);
    let d = model.d;
    Ok((0..total)
        .into_par_iter()
        .map_init(PrefixSumDp::new, |dp, code| {
            let mut rem = code;
            let mut pts = Vec::with_capacity(n * d);
            let mut w = 1.0;
            for _ in 0..n {
                let i = rem % a;
                rem /= a;
                pts.extend(points[i].iter().map(|v| *v as f64));
                w *= weights[i];
            }
            if w == 0.0 {
                return 0.0;
            }
            w * tuple_term(model, dp, pts, n)
        })
        .sum())
}

/// Same sum grouped by empirical measure: each multiset with counts `k`
/// contributes `n! / prod k! * prod pi^k * [P / n!]^p` once.
pub fn discrete_moment_multiset(model: &LatticeModel, n: usize) -> Result<f64> {
    let (points, weights) = finite_support(model)?;
    if n == 0 {
        return Ok(1.0);
    }
    check_reach(model, points, n)?;
    let mut counts = vec![0usize; points.len()];
    let mut dp = PrefixSumDp::new();
    let mut memo: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut total = 0.0;
    compositions(&mut counts, 0, n, &mut |k| {
        let mut pts = Vec::with_capacity(n * model.d);
        let mut coef = factorial(n);
        for (i, &ki) in k.iter().enumerate() {
            coef *= weights[i].powi(ki as i32) / factorial(ki);
            for _ in 0..ki {
                pts.extend(points[i].iter().map(|v| *v as f64));
            }
        }
        if coef == 0.0 {
            return;
        }
        let term = *memo
            .entry(k.to_vec())
            .or_insert_with(|| tuple_term(model, &mut dp, pts, n));
        total += coef * term;
    });
    Ok(total)
}

fn compositions(counts: &mut Vec<usize>, i: usize, left: usize, f: &mut impl FnMut(&[usize])) {
    if i + 1 == counts.len() {
        counts[i] = left;
        f(counts);
        return;
    }
    for k in 0..=left {
        counts[i] = k;
        compositions(counts, i + 1, left - k, f);
    }
}

/// Crude envelope `(1/n) log S_n <= log(sum pi * max Q^p)`.
pub fn discrete_growth_envelope(model: &LatticeModel) -> Result<f64> {
    let (_, weights) = finite_support(model)?;
    Ok((weights.iter().sum::<f64>() * model.q_max().powi(model.p as i32)).ln())
}
