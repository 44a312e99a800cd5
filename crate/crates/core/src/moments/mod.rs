//! Moments of `eta^0` over a box of independent unit exponential times:
//!
//! `E eta^0(prod [0, tau_j])^n = (2 pi)^{-dn} int [P(l_1..l_n)]^p dl`
//!
//! where `P` is the permutation prefix-sum of `Q = 1 / (1 + psi)`. Three
//! independent routes are provided: nested deterministic quadrature (`d = 1`,
//! `n <= 3`), importance sampling, and direct simulation of the field.

pub mod perm;

use std::cell::Cell;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::localtime::{mollified_local_time_weighted, Mollifier};
use crate::model::{rho_upper_bound, ModelParams, QuadratureSpec};
use crate::quad::LineQuadrature;
use crate::rng::StreamRng;
use crate::stablesim::{simulate_path, SheetSample, TimeGrid};
use crate::stats::mean_and_se;

pub use perm::{
    factorial, ln_factorial, perm_prefix_sum_dp, perm_prefix_sum_naive, FrequencyTuple, PrefixSumDp,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    DpQuadrature,
    ImportanceMc,
    Simulation,
}

impl MomentMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::DpQuadrature => "dp_quadrature",
            Self::ImportanceMc => "importance_mc",
            Self::Simulation => "simulation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub n: usize,
    pub value: f64,
    pub std_error: f64,
    pub method: MomentMethod,
    /// Quadrature only: magnitude of the extrapolated truncation tail.
    pub tail: Option<f64>,
    /// Simulation only: declared systematic band of the estimator.
    pub band: Option<f64>,
    /// Importance sampling only: effective sample size.
    pub ess: Option<f64>,
    /// Set when the effective sample size falls below 1% of the samples.
    pub low_ess: bool,
    pub samples: usize,
}

impl MomentEstimate {
    fn exact(n: usize, method: MomentMethod) -> Self {
        Self {
            n,
            value: 1.0,
            std_error: 0.0,
            method,
            tail: None,
            band: None,
            ess: None,
            low_ess: false,
            samples: 0,
        }
    }
}

/// `(2 pi)^{-d} int Q^p`, the first moment in closed form up to quadrature.
pub fn first_moment(params: &ModelParams) -> Result<f64> {
    let ub = rho_upper_bound(params, &QuadratureSpec::default())?;
    Ok(ub.value / (2.0 * PI).powi(params.d as i32))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentQuadSpec {
    pub order: usize,
    /// Panel next to each breakpoint, in units of `c^{-1/alpha}`.
    pub first_panel: f64,
    /// Half-line truncation, in units of `c^{-1/alpha}`.
    pub cutoff: f64,
    pub max_relative_tail: f64,
}

impl Default for MomentQuadSpec {
    fn default() -> Self {
        Self {
            order: 10,
            first_panel: 1.0 / 32.0,
            cutoff: 4096.0,
            max_relative_tail: 0.01,
        }
    }
}

pub fn exp_time_moment_quadrature(params: &ModelParams, n: usize) -> Result<MomentEstimate> {
    exp_time_moment_quadrature_with(params, n, &MomentQuadSpec::default())
}

/// Nested Gauss–Legendre over `R^n` (`d = 1`). Panel edges sit on every
/// subset sum of the outer variables, where the integrand has kinks.
pub fn exp_time_moment_quadrature_with(
    params: &ModelParams,
    n: usize,
    spec: &MomentQuadSpec,
) -> Result<MomentEstimate> {
    params.validate()?;
    if params.d != 1 {
        return Err(invalid("d", "quadrature route supports d = 1 only"));
    }
    if n > 3 {
        return Err(invalid("n", format!("quadrature route supports n <= 3, got {n}")));
    }
    if n == 0 {
        return Ok(MomentEstimate::exact(0, MomentMethod::DpQuadrature));
    }
    let scale = params.c.powf(-1.0 / params.alpha);
    let quad = LineQuadrature::new(spec.order, spec.first_panel * scale, spec.cutoff * scale);
    let worst_inner = Cell::new(0.0f64);
    let mut lambdas = vec![0.0; n];
    let mut dp = PrefixSumDp::new();
    let outer = nested(params, &quad, 0, &mut lambdas, &mut dp, &worst_inner);
    let norm = (2.0 * PI).powi(n as i32);
    let value = outer.value / norm;
    let rel_tail = outer.relative_tail() + worst_inner.get();
    let tail = rel_tail * value;
    if !(rel_tail <= spec.max_relative_tail) {
        return Err(Error::TailTooLarge {
            tail,
            value,
            limit: 100.0 * spec.max_relative_tail,
        });
    }
    Ok(MomentEstimate {
        n,
        value,
        std_error: 0.0,
        method: MomentMethod::DpQuadrature,
        tail: Some(tail),
        band: None,
        ess: None,
        low_ess: false,
        samples: 0,
    })
}

fn nested(
    params: &ModelParams,
    quad: &LineQuadrature,
    level: usize,
    lambdas: &mut Vec<f64>,
    dp: &mut PrefixSumDp,
    worst_inner: &Cell<f64>,
) -> crate::quad::Integral {
    let n = lambdas.len();
    let mut breakpoints = Vec::with_capacity(1 << level);
    for s in 0..(1usize << level) {
        let sum: f64 = (0..level).filter(|i| s & (1 << i) != 0).map(|i| lambdas[i]).sum();
        breakpoints.push(-sum);
    }
    let p = params.p as i32;
    quad.real_line(&breakpoints, |x| {
        lambdas[level] = x;
        if level + 1 == n {
            let t = FrequencyTuple::from_scalars(lambdas);
            dp.eval(&t, |v| params.q(v)).expect("n <= 3").powi(p)
        } else {
            let inner = nested(params, quad, level + 1, lambdas, dp, worst_inner);
            worst_inner.set(worst_inner.get().max(inner.relative_tail()));
            inner.value
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub samples: usize,
    pub seed: u64,
    /// Per-axis tail exponent of the prefix-sum proposal; `alpha p / d` if unset.
    pub tail_exponent: Option<f64>,
    pub block: usize,
}

impl McSpec {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            tail_exponent: None,
            block: 1024,
        }
    }
}

pub fn exp_time_moment_mc(params: &ModelParams, n: usize, samples: usize, seed: u64) -> Result<MomentEstimate> {
    exp_time_moment_mc_with(params, n, &McSpec::new(samples, seed))
}

/// Per-axis proposal density `(g - 1) / (2 s) (1 + |u| / s)^{-g}`.
#[derive(Clone, Copy, Debug)]
struct AxisProposal {
    g: f64,
    s: f64,
}

impl AxisProposal {
    fn density(&self, u: &[f64]) -> f64 {
        u.iter()
            .map(|&x| (self.g - 1.0) / (2.0 * self.s) * (1.0 + x.abs() / self.s).powf(-self.g))
            .product()
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        let u = rng.open01();
        let r = self.s * (u.powf(-1.0 / (self.g - 1.0)) - 1.0);
        rng.sign() * r
    }
}

/// Importance sampling with a permutation mixture of heavy-tailed proposals
/// on prefix sums.
///
/// A draw picks an ordering `sigma` uniformly and independent prefix sums
/// `u_1..u_n` from the per-axis proposal `r`, then sets
/// `l_sigma(k) = u_k - u_{k-1}`. The mixture density is
/// `P_r(l) / n!`, the same prefix-sum recursion with `r` in place of `Q`,
/// so weights `n! P_Q^p / P_r` stay bounded whenever `Q^p / r` is.
pub fn exp_time_moment_mc_with(params: &ModelParams, n: usize, spec: &McSpec) -> Result<MomentEstimate> {
    params.validate()?;
    if n > 20 {
        return Err(invalid("n", format!("importance sampling supports n <= 20, got {n}")));
    }
    if spec.samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    if n == 0 {
        return Ok(MomentEstimate::exact(0, MomentMethod::ImportanceMc));
    }
    let d = params.d;
    let g = spec
        .tail_exponent
        .unwrap_or(params.alpha * params.p as f64 / d as f64);
    if !(g > 1.0) {
        return Err(invalid("tail_exponent", format!("must exceed 1, got {g}")));
    }
    let prop = AxisProposal {
        g,
        s: params.c.powf(-1.0 / params.alpha),
    };
    let nfact = factorial(n);
    let norm = (2.0 * PI).powi((d * n) as i32);
    let p = params.p as i32;
    let block = spec.block.max(1);
    let blocks = spec.samples.div_ceil(block);

    let partial: Vec<(f64, f64, usize)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = StreamRng::new(spec.seed, b as u64);
            let count = block.min(spec.samples - b * block);
            let mut dp = PrefixSumDp::new();
            let mut order: Vec<usize> = (0..n).collect();
            let mut pts = vec![0.0; n * d];
            let mut prev = vec![0.0; d];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                for i in (1..n).rev() {
                    let j = rng.below(i + 1);
                    order.swap(i, j);
                }
                prev.iter_mut().for_each(|v| *v = 0.0);
                for &k in &order {
                    for a in 0..d {
                        let u = prop.sample(&mut rng);
                        pts[k * d + a] = u - prev[a];
                        prev[a] = u;
                    }
                }
                let t = FrequencyTuple { d, points: pts.clone() };
                let num = dp.eval(&t, |v| params.q(v)).expect("n <= 20").powi(p);
                let den = dp.eval(&t, |v| prop.density(v)).expect("n <= 20");
                let w = if num == 0.0 { 0.0 } else { nfact * num / den / norm };
                s1 += w;
                s2 += w * w;
            }
            (s1, s2, count)
        })
        .collect();

    let (mut s1, mut s2, mut total) = (0.0, 0.0, 0usize);
    for (a, b, c) in partial {
        s1 += a;
        s2 += b;
        total += c;
    }
    let nf = total as f64;
    let mean = s1 / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    let ess = if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 };
    Ok(MomentEstimate {
        n,
        value: mean,
        std_error: (var / nf).sqrt(),
        method: MomentMethod::ImportanceMc,
        tail: None,
        band: None,
        ess: Some(ess),
        low_ess: ess < 0.01 * nf,
        samples: total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub replicas: usize,
    pub dt: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(replicas: usize, seed: u64) -> Self {
        Self {
            replicas,
            dt: 0.01,
            epsilon: 0.02,
            seed,
        }
    }
}

pub fn exp_time_moment_sim(params: &ModelParams, n: usize, replicas: usize, seed: u64) -> Result<MomentEstimate> {
    exp_time_moment_sim_with(params, n, &SimSpec::new(replicas, seed))
}

/// Exact mean of the simulated first-moment estimator:
/// `(2 pi)^{-d} int hhat(eps l) Q_dt(l)^p dl` with
/// `Q_dt = (1 - e^{-dt}) / (1 - e^{-dt (1 + psi)})`, the Laplace weight seen
/// by a left-endpoint time sum cut at an exponential horizon.
pub fn sim_estimator_mean(params: &ModelParams, dt: f64, epsilon: f64) -> Result<f64> {
    let moll = Mollifier::new(epsilon, params.d)?;
    let a = -(-dt).exp_m1();
    let q_dt = |l: &[f64]| a / -(-(dt * (1.0 + params.psi(l)))).exp_m1();
    let p = params.p as i32;
    let edge = 2.0 / epsilon;
    let quad = LineQuadrature::new(12, (edge / 4096.0).min(1.0 / 32.0), 2.0 * edge);
    let integral = match params.d {
        1 => {
            let f = |x: f64| moll.fourier(&[x]) * q_dt(&[x]).powi(p);
            quad.segment(-edge, 0.0, f) + quad.segment(0.0, edge, f)
        }
        2 => {
            let inner = |x: f64| {
                let f = |y: f64| moll.fourier(&[x, y]) * q_dt(&[x, y]).powi(p);
                quad.segment(-edge, 0.0, f) + quad.segment(0.0, edge, f)
            };
            quad.segment(-edge, 0.0, inner) + quad.segment(0.0, edge, inner)
        }
        d => return Err(invalid("d", format!("estimator mean implemented for d <= 2, got {d}"))),
    };
    Ok(integral / (2.0 * PI).powi(params.d as i32))
}

/// Direct simulation: draw `tau_1..tau_p ~ Exp(1)`, simulate the paths on a
/// grid of step `dt` up to `max tau`, and average the `n`-th power of the
/// mollified local time at the origin.
///
/// The declared band is the exact bias of the first-moment estimator,
/// propagated to order `n` as `|(1 + b)^n - 1|` relative.
pub fn exp_time_moment_sim_with(params: &ModelParams, n: usize, spec: &SimSpec) -> Result<MomentEstimate> {
    params.validate()?;
    if params.p > 3 {
        return Err(invalid("p", format!("simulation route supports p <= 3, got {}", params.p)));
    }
    if spec.replicas < 2 {
        return Err(invalid("replicas", "need at least two replicas"));
    }
    if n == 0 {
        let mut e = MomentEstimate::exact(0, MomentMethod::Simulation);
        e.samples = spec.replicas;
        e.band = Some(0.0);
        return Ok(e);
    }
    let moll = Mollifier::new(spec.epsilon, params.d)?;
    let origin = vec![0.0; params.d];
    let values: Vec<f64> = (0..spec.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = StreamRng::new(spec.seed, r);
            let taus: Vec<f64> = (0..params.p).map(|_| rng.exp1()).collect();
            let horizon = taus.iter().cloned().fold(0.0, f64::max);
            let grid = TimeGrid::with_step(horizon, spec.dt)?;
            let paths = (0..params.p)
                .map(|_| simulate_path(params, &grid, &mut rng))
                .collect();
            let sheet = SheetSample {
                params: *params,
                grid,
                paths,
                seed: spec.seed,
                stream_id: r,
            };
            let eta = mollified_local_time_weighted(&sheet, &moll, &origin, &taus)?;
            Ok(eta.powi(n as i32))
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_se(&values);
    let b = sim_estimator_mean(params, spec.dt, spec.epsilon)? / first_moment(params)? - 1.0;
    let growth = (1.0 + b).powi(n as i32);
    let band = (growth - 1.0).abs() * mean / growth;
    Ok(MomentEstimate {
        n,
        value: mean,
        std_error: se,
        method: MomentMethod::Simulation,
        tail: None,
        band: Some(band),
        ess: None,
        low_ess: false,
        samples: spec.replicas,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: usize,
    pub moment: f64,
    /// `(1/n) log(m_n / (n!)^p)`.
    pub a_n: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthDiagnostic {
    pub rows: Vec<GrowthRow>,
    /// `log(rho / (2 pi)^d)`.
    pub target: f64,
    /// Fixed-time limit of `(1/n) log(E eta([0,1]^p)^n / (n!)^{d/alpha})`.
    pub fixed_time_target: f64,
    /// Whether `a_n` moves monotonically (nonincreasing or nondecreasing).
    pub monotone: bool,
    pub final_gap: f64,
}

/// `a_n` for exponential-time moments against the limit `log(rho/(2 pi)^d)`.
pub fn moment_growth_diagnostic(params: &ModelParams, moments: &[(usize, f64)], rho_hat: f64) -> GrowthDiagnostic {
    let target = (rho_hat / (2.0 * PI).powi(params.d as i32)).ln();
    let rows: Vec<GrowthRow> = moments
        .iter()
        .filter(|(n, _)| *n > 0)
        .map(|&(n, m)| {
            let a_n = (m.ln() - params.p as f64 * ln_factorial(n)) / n as f64;
            GrowthRow {
                n,
                moment: m,
                a_n,
                gap: a_n - target,
            }
        })
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].a_n <= w[0].a_n)
        || rows.windows(2).all(|w| w[1].a_n >= w[0].a_n);
    let final_gap = rows.last().map(|r| r.gap).unwrap_or(f64::NAN);
    GrowthDiagnostic {
        rows,
        target,
        fixed_time_target: fixed_time_growth_target(params, rho_hat),
        monotone,
        final_gap,
    }
}

/// `log((alpha p / (alpha p - d))^{(alpha p - d)/alpha}) + log(rho / (2 pi)^d)`.
pub fn fixed_time_growth_target(params: &ModelParams, rho_hat: f64) -> f64 {
    let ap = params.alpha * params.p as f64;
    let d = params.d as f64;
    (ap - d) / params.alpha * (ap / (ap - d)).ln() + (rho_hat / (2.0 * PI).powi(params.d as i32)).ln()
}

/// `(1/n) log(m_n / (n!)^{d/alpha})` for fixed-time moments `m_n`.
pub fn fixed_time_growth(params: &ModelParams, moments: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let e = params.d as f64 / params.alpha;
    moments
        .iter()
        .filter(|(n, _)| *n > 0)
        .map(|&(n, m)| (n, (m.ln() - e * ln_factorial(n)) / n as f64))
        .collect()
}

/// Jensen envelope `(n!)^p ((2 pi)^{-d} int Q^p)^n` of the `n`-th moment.
pub fn jensen_bound(params: &ModelParams, n: usize) -> Result<f64> {
    Ok(factorial(n).powi(params.p as i32) * first_moment(params)?.powi(n as i32))
}
