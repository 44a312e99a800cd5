//! The constant
//! `rho = sup_{|f|_2 = 1} int [ int f(l+g) f(g) sqrt(Q(l+g) Q(g)) dg ]^p dl`
//! on a grid, and lower bounds through the operator
//! `Tg(l) = sqrt(Q(l)) int f(g - l) sqrt(Q(g)) g(g) dg`.

use serde::{Deserialize, Serialize};

use super::ascent::{multistart, AscentOptions, SphereObjective};
use super::grid::{Correlator, GridFunction, GridSpec};
use super::VariationalSolution;
use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::rng::StreamRng;

/// `Phi(f) = h^d sum_l b_f(l)^p` with `b_f(l) = h^d sum_g a(l+g) a(g)` and
/// `a = f sqrt(Q)`, evaluated through FFT correlation.
#[derive(Clone)]
pub struct RhoObjective {
    pub spec: GridSpec,
    pub p: usize,
    sqrt_q: Vec<f64>,
    corr: Correlator,
    lag_weights: Option<Vec<f64>>,
}

impl RhoObjective {
    pub fn new(params: &ModelParams, spec: GridSpec) -> Self {
        let sqrt_q = spec.tabulate(|x| params.q(x).sqrt());
        Self::with_kernel(spec, params.p, sqrt_q)
    }

    /// Arbitrary nonnegative `sqrt(Q)` table on the grid.
    pub fn with_kernel(spec: GridSpec, p: usize, sqrt_q: Vec<f64>) -> Self {
        let corr = Correlator::new(spec.d, spec.nodes_per_axis());
        Self {
            spec,
            p,
            sqrt_q,
            corr,
            lag_weights: None,
        }
    }

    /// Weights `w(l)` on lags (padded layout, even): `Phi = h^d sum_l w(l) b(l)^p`.
    pub fn with_lag_weights(mut self, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), self.corr.padded_len());
        self.lag_weights = Some(weights);
        self
    }

    fn weighted_power_sum(&self, b: &[f64], p: i32) -> f64 {
        match &self.lag_weights {
            None => b.iter().map(|v| v.powi(p)).sum(),
            Some(w) => b.iter().zip(w).map(|(v, w)| w * v.powi(p)).sum(),
        }
    }

    pub fn sqrt_q(&self) -> &[f64] {
        &self.sqrt_q
    }

    pub fn weighted(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.sqrt_q).map(|(a, b)| a * b).collect()
    }

    /// `b_f` in the correlator's padded lag layout.
    pub fn correlation(&mut self, f: &[f64]) -> Vec<f64> {
        let a = self.weighted(f);
        let h = self.spec.cell();
        self.corr
            .autocorrelation(&a)
            .into_iter()
            .map(|v| (v * h).max(0.0))
            .collect()
    }

    pub fn correlator(&mut self) -> &mut Correlator {
        &mut self.corr
    }

    /// Padded lag index of grid node `k` read as a lag vector.
    pub fn lag_index(&self, k: usize) -> usize {
        let n = self.spec.nodes_per_axis();
        let half = self.spec.half_nodes() as i64;
        let p = self.corr.padded as i64;
        let wrap = |i: i64| ((i - half).rem_euclid(p)) as usize;
        if self.spec.d == 1 {
            wrap(k as i64)
        } else {
            wrap((k / n) as i64) * self.corr.padded + wrap((k % n) as i64)
        }
    }
}

impl SphereObjective for RhoObjective {
    fn weight(&self) -> f64 {
        self.spec.cell()
    }

    fn value(&mut self, f: &[f64]) -> f64 {
        let b = self.correlation(f);
        self.spec.cell() * self.weighted_power_sum(&b, self.p as i32)
    }

    fn value_and_gradient(&mut self, f: &[f64]) -> (f64, Vec<f64>) {
        let b = self.correlation(f);
        let p = self.p as i32;
        let h = self.spec.cell();
        let value = h * self.weighted_power_sum(&b, p);
        let mut c: Vec<f64> = b.iter().map(|v| v.powi(p - 1)).collect();
        if let Some(w) = &self.lag_weights {
            c.iter_mut().zip(w).for_each(|(v, w)| *v *= w);
        }
        let a = self.weighted(f);
        let s = self.corr.correlate_even(&a, &c);
        let scale = 2.0 * self.p as f64 * h;
        let grad = s
            .iter()
            .zip(&self.sqrt_q)
            .map(|(v, q)| scale * q * v)
            .collect();
        (value, grad)
    }
}

/// Unit Gaussian (first run) or randomized bumps (others); lengths are
/// multiplied by `unit`.
pub(crate) fn random_start(spec: &GridSpec, unit: f64, run: usize, rng: &mut StreamRng) -> Vec<f64> {
    let (width, centre_jitter, noise) = if run == 0 {
        (unit, 0.0, 0.0)
    } else {
        (
            unit * rng.uniform(0.3, 5.0),
            unit * rng.uniform(-0.5, 0.5),
            rng.uniform(0.0, 0.5),
        )
    };
    spec.tabulate(|x| {
        let r2: f64 = x.iter().map(|v| (v - centre_jitter) * (v - centre_jitter)).sum();
        (-r2 / (2.0 * width * width)).exp()
    })
    .into_iter()
    .map(|v| v * (1.0 + noise * rng.uniform(-1.0, 1.0)))
    .collect()
}

/// Maximize `Phi` over unit-norm nonnegative grid functions.
pub fn solve_rho(params: &ModelParams, spec: &GridSpec, opts: &AscentOptions) -> Result<VariationalSolution> {
    params.validate()?;
    if spec.d != params.d {
        return Err(invalid("grid", "grid dimension differs from d"));
    }
    let proto = RhoObjective::new(params, *spec);
    let (best, restarts) = multistart(|| proto.clone(), |r, rng| random_start(spec, 1.0, r, rng), opts);
    Ok(VariationalSolution::from_ascent(best, *spec, restarts))
}

/// `Phi` at the normalized point mass on the origin node: `h^d Q(0)^p`.
pub fn point_mass_value(params: &ModelParams, spec: &GridSpec) -> f64 {
    let mut obj = RhoObjective::new(params, *spec);
    let mut f = vec![0.0; spec.len()];
    f[spec.len() / 2] = 1.0 / spec.cell().sqrt();
    obj.value(&f)
}

/// `<g, Tg>^p` for an even nonnegative `f` with unit `L^q` norm,
/// `q = p / (p - 1)`, and unit-norm `g`. Lags outside the grid count as 0.
pub fn rho_lower_bound_pair(params: &ModelParams, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    if f.spec != g.spec {
        return Err(invalid("f", "f and g must share a grid"));
    }
    if f.values.iter().any(|v| *v < 0.0) || !f.is_even(1e-12) {
        return Err(invalid("f", "must be even and nonnegative"));
    }
    let p = params.p;
    let fnorm = if p == 1 {
        f.values.iter().cloned().fold(0.0, f64::max)
    } else {
        f.lq_norm(p as f64 / (p as f64 - 1.0))
    };
    if (fnorm - 1.0).abs() > 1e-8 {
        return Err(invalid("f", format!("must have unit L^q norm, got {fnorm}")));
    }
    if (g.l2_norm() - 1.0).abs() > 1e-8 {
        return Err(invalid("g", "must have unit L^2 norm"));
    }
    let mut obj = RhoObjective::new(params, f.spec);
    Ok(pair_value(&mut obj, &f.values, &g.values).powi(p as i32))
}

/// `<g, Tg> = h^d sum_x f(x) b_g(x)` (unnormalized inputs allowed).
fn pair_value(obj: &mut RhoObjective, f: &[f64], g: &[f64]) -> f64 {
    let b = obj.correlation(g);
    let h = obj.spec.cell();
    h * f
        .iter()
        .enumerate()
        .map(|(k, fv)| fv * b[obj.lag_index(k)])
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundPair {
    pub value: f64,
    pub f: GridFunction,
    pub g: GridFunction,
    /// Bound after every outer sweep.
    pub history: Vec<f64>,
}

/// Alternate `f <- b_g^{p-1} / |.|_q` (Hölder equality) with `g <- ` top
/// eigenvector of `T_f` (power iteration).
pub fn alternating_lower_bound(
    params: &ModelParams,
    spec: &GridSpec,
    sweeps: usize,
    power_steps: usize,
) -> Result<LowerBoundPair> {
    params.validate()?;
    if params.p < 2 {
        return Err(invalid("p", "lower-bound pairs need p >= 2"));
    }
    let p = params.p;
    let q = p as f64 / (p as f64 - 1.0);
    let mut obj = RhoObjective::new(params, *spec);
    let mut g = GridFunction::from_fn(*spec, |x| (-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp());
    g.normalize_l2();
    let mut f = GridFunction::new(*spec, vec![0.0; spec.len()])?;
    let mut history = Vec::new();
    let mut best = (0.0, f.clone(), g.clone());
    for _ in 0..sweeps {
        let b = obj.correlation(&g.values);
        f.values = (0..spec.len())
            .map(|k| b[obj.lag_index(k)].powi(p as i32 - 1))
            .collect();
        symmetrize(&mut f);
        f.normalize_lq(q);
        // Lag array of f for the operator.
        let mut c = vec![0.0; obj.correlator().padded_len()];
        for k in 0..spec.len() {
            let i = obj.lag_index(k);
            c[i] = f.values[k];
        }
        for _ in 0..power_steps {
            let a = obj.weighted(&g.values);
            let s = obj.correlator().correlate_even(&a, &c);
            g.values = s.iter().zip(obj.sqrt_q()).map(|(v, w)| (v * w).max(0.0)).collect();
            g.normalize_l2();
        }
        let v = pair_value(&mut obj, &f.values, &g.values).powi(p as i32);
        history.push(v);
        if v > best.0 {
            best = (v, f.clone(), g.clone());
        }
    }
    Ok(LowerBoundPair {
        value: best.0,
        f: best.1,
        g: best.2,
        history,
    })
}

fn symmetrize(f: &mut GridFunction) {
    let n = f.values.len();
    for k in 0..n / 2 {
        let m = f.spec.mirror(k);
        let avg = 0.5 * (f.values[k] + f.values[m]);
        f.values[k] = avg;
        f.values[m] = avg;
    }
}

/// Random admissible pair: even positive `f` (unit `L^q`) and positive `g`
/// (unit `L^2`).
pub fn random_pair(spec: &GridSpec, p: usize, rng: &mut StreamRng) -> (GridFunction, GridFunction) {
    let q = p as f64 / (p as f64 - 1.0);
    let wf = rng.uniform(0.2, 4.0);
    let wg = rng.uniform(0.2, 4.0);
    let shift = rng.uniform(-1.0, 1.0);
    let mut f = GridFunction::from_fn(*spec, |x| {
        (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * wf * wf)).exp() + 1e-3
    });
    symmetrize(&mut f);
    f.normalize_lq(q);
    let mut g = GridFunction::from_fn(*spec, |x| {
        (-x.iter().map(|v| (v - shift) * (v - shift)).sum::<f64>() / (2.0 * wg * wg)).exp()
    });
    g.normalize_l2();
    (f, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_opts() -> AscentOptions {
        AscentOptions {
            restarts: 2,
            max_iter: 400,
            ..Default::default()
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prm = ModelParams::cauchy_pair();
        let spec = GridSpec::new(1, 2.0, 0.25).unwrap();
        let mut obj = RhoObjective::new(&prm, spec);
        let f: Vec<f64> = spec.tabulate(|x| (-(x[0] - 0.2).powi(2)).exp());
        let (_, g) = obj.value_and_gradient(&f);
        let h = spec.cell();
        for k in [0, 3, 8, 12] {
            let eps = 1e-6;
            let mut fp = f.clone();
            fp[k] += eps;
            let mut fm = f.clone();
            fm[k] -= eps;
            let fd = (obj.value(&fp) - obj.value(&fm)) / (2.0 * eps) / h;
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn solver_beats_point_mass_and_obeys_upper_bound() {
        let prm = ModelParams::cauchy_pair();
        let spec = GridSpec::new(1, 20.0, 0.1).unwrap();
        let sol = solve_rho(&prm, &spec, &small_opts()).unwrap();
        assert!(sol.value > point_mass_value(&prm, &spec));
        assert!(sol.value > 0.0 && sol.value <= 2.0);
        assert!(sol.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn pair_with_disjoint_support_is_zero() {
        let prm = ModelParams::cauchy_pair();
        let spec = GridSpec::new(1, 4.0, 0.5).unwrap();
        let mut f = GridFunction::from_fn(spec, |x| if x[0].abs() > 3.0 { 1.0 } else { 0.0 });
        f.normalize_lq(2.0);
        let mut g = GridFunction::from_fn(spec, |x| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 });
        g.normalize_l2();
        assert_eq!(rho_lower_bound_pair(&prm, &f, &g).unwrap(), 0.0);
    }

    #[test]
    fn random_pairs_do_not_exceed_solver() {
        let prm = ModelParams::cauchy_pair();
        let spec = GridSpec::new(1, 20.0, 0.1).unwrap();
        let sol = solve_rho(&prm, &spec, &small_opts()).unwrap();
        let mut rng = StreamRng::new(1, 0);
        for _ in 0..10 {
            let (f, g) = random_pair(&spec, 2, &mut rng);
            let lb = rho_lower_bound_pair(&prm, &f, &g).unwrap();
            assert!(lb <= sol.value * 1.05, "{lb} vs {}", sol.value);
        }
        let alt = alternating_lower_bound(&prm, &spec, 30, 30).unwrap();
        assert!(alt.value <= sol.value * 1.05);
        assert!(alt.value >= 0.9 * sol.value, "{} vs {}", alt.value, sol.value);
    }
}
