//! `M_psi(theta) = sup_{|g|_2 = 1} { theta (int g^4)^{1/2} - K(g) }` with the
//! Dirichlet form `K(g) = (2 pi)^{-d} int psi(l) |g^(l)|^2 dl` and
//! `g^(l) = int g(x) e^{i l x} dx`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::ascent::{multistart, AscentOptions, SphereObjective};
use super::grid::GridSpec;
use super::VariationalSolution;
use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::rng::StreamRng;

/// Spatial grid and the multiplier on the kinetic term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsiSpec {
    pub grid: GridSpec,
    /// Transform length per axis is `padding * nodes` rounded up to a power of two.
    pub padding: usize,
    pub theta: f64,
    /// `1` for the Dirichlet form; `(2 pi)^d` reads the kinetic term as
    /// `int psi |g^|^2` without the Plancherel factor.
    pub kinetic_scale: f64,
}

impl MpsiSpec {
    /// Half-width 20, `h = 0.05`, padding 2, `theta = 1`.
    pub fn default_for(d: usize) -> Self {
        let grid = match d {
            1 => GridSpec {
                d,
                half_width: 20.0,
                spacing: 0.05,
            },
            _ => GridSpec {
                d,
                half_width: 8.0,
                spacing: 0.1,
            },
        };
        Self {
            grid,
            padding: 2,
            theta: 1.0,
            kinetic_scale: 1.0,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

#[derive(Clone)]
pub struct MpsiObjective {
    spec: MpsiSpec,
    psi: Vec<f64>,
    len: usize,
    nodes: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl MpsiObjective {
    pub fn new(params: &ModelParams, spec: MpsiSpec) -> Self {
        let d = spec.grid.d;
        let nodes = spec.grid.nodes_per_axis();
        let len = (spec.padding.max(1) * nodes).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let dl = 2.0 * std::f64::consts::PI / (len as f64 * spec.grid.spacing);
        let freq = |j: usize| if j < len / 2 { j as f64 * dl } else { (j as f64 - len as f64) * dl };
        let total = len.pow(d as u32);
        let psi = (0..total)
            .map(|k| {
                let lam: Vec<f64> = if d == 1 {
                    vec![freq(k)]
                } else {
                    vec![freq(k / len), freq(k % len)]
                };
                spec.kinetic_scale * params.psi(&lam)
            })
            .collect();
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            spec,
            psi,
            len,
            nodes,
            fwd,
            inv,
            buf: vec![Complex::default(); total],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    fn embed(&mut self, g: &[f64]) {
        self.buf.iter_mut().for_each(|z| *z = Complex::default());
        for (k, &v) in g.iter().enumerate() {
            let i = self.index(k);
            self.buf[i] = Complex::new(v, 0.0);
        }
    }

    fn index(&self, k: usize) -> usize {
        if self.spec.grid.d == 1 {
            k
        } else {
            (k / self.nodes) * self.len + k % self.nodes
        }
    }

    fn transform(&mut self, inverse: bool) {
        let plan = if inverse { self.inv.clone() } else { self.fwd.clone() };
        let p = self.len;
        plan.process_with_scratch(&mut self.buf, &mut self.scratch);
        if self.spec.grid.d == 2 {
            let mut col = vec![Complex::default(); p];
            for c in 0..p {
                for r in 0..p {
                    col[r] = self.buf[r * p + c];
                }
                plan.process_with_scratch(&mut col, &mut self.scratch);
                for r in 0..p {
                    self.buf[r * p + c] = col[r];
                }
            }
        }
    }

    /// Kinetic term `(h / P)^d sum psi |G|^2`, `G` the unnormalized transform.
    pub fn kinetic(&mut self, g: &[f64]) -> f64 {
        self.embed(g);
        self.transform(true);
        let scale = (self.spec.grid.spacing / self.len as f64).powi(self.spec.grid.d as i32);
        scale * self.buf.iter().zip(&self.psi).map(|(z, w)| w * z.norm_sqr()).sum::<f64>()
    }

    pub fn potential(&self, g: &[f64]) -> f64 {
        (self.spec.grid.cell() * g.iter().map(|v| v.powi(4)).sum::<f64>()).sqrt()
    }
}

impl SphereObjective for MpsiObjective {
    fn weight(&self) -> f64 {
        self.spec.grid.cell()
    }

    fn value(&mut self, g: &[f64]) -> f64 {
        self.spec.theta * self.potential(g) - self.kinetic(g)
    }

    fn value_and_gradient(&mut self, g: &[f64]) -> (f64, Vec<f64>) {
        let pot = self.potential(g);
        let kin = self.kinetic(g);
        // buf holds G; the kinetic gradient is 2 P^{-d} Re F(psi G).
        for (z, w) in self.buf.iter_mut().zip(&self.psi) {
            *z *= *w;
        }
        self.transform(false);
        let kscale = 2.0 / (self.len as f64).powi(self.spec.grid.d as i32);
        let pscale = if pot > 0.0 { 2.0 * self.spec.theta / pot } else { 0.0 };
        let grad = g
            .iter()
            .enumerate()
            .map(|(k, v)| pscale * v.powi(3) - kscale * self.buf[self.index(k)].re)
            .collect();
        (self.spec.theta * pot - kin, grad)
    }
}

/// Maximizes the `M_psi(theta)` objective over unit-norm grid functions.
pub fn solve_m_psi(params: &ModelParams, spec: &MpsiSpec, opts: &AscentOptions) -> Result<VariationalSolution> {
    params.validate()?;
    if params.p != 2 {
        return Err(invalid("p", "M_psi is defined for p = 2"));
    }
    if !((params.d as f64) < 2.0 * params.alpha) {
        return Err(invalid("alpha", "M_psi needs d < 2 alpha"));
    }
    if spec.grid.d != params.d {
        return Err(invalid("grid", "grid dimension differs from d"));
    }
    if !(spec.theta > 0.0) {
        return Err(invalid("theta", "must be positive"));
    }
    let proto = MpsiObjective::new(params, *spec);
    let grid = spec.grid;
    let init = |r: usize, rng: &mut StreamRng| {
        let width = if r == 0 { 1.0 } else { rng.uniform(0.2, 4.0) };
        grid.tabulate(|x| (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * width * width)).exp())
    };
    let (best, restarts) = multistart(|| proto.clone(), init, opts);
    Ok(VariationalSolution::from_ascent(best, grid, restarts))
}

/// `(2 pi)^{-d alpha / (2 alpha - d)} rho^{alpha / (2 alpha - d)}`.
pub fn m_psi_from_rho(params: &ModelParams, rho: f64) -> f64 {
    let d = params.d as f64;
    let e = params.alpha / (2.0 * params.alpha - d);
    (2.0 * std::f64::consts::PI).powf(-d * e) * rho.powf(e)
}

/// `M_psi(theta) / M_psi = theta^{2 alpha / (2 alpha - d)}`.
pub fn m_psi_theta_factor(params: &ModelParams, theta: f64) -> f64 {
    theta.powf(2.0 * params.alpha / (2.0 * params.alpha - params.d as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MpsiSpec {
        MpsiSpec {
            grid: GridSpec::new(1, 6.0, 0.2).unwrap(),
            ..MpsiSpec::default_for(1)
        }
    }

    #[test]
    fn kinetic_matches_direct_quadrature_for_gaussian() {
        // g = exp(-x^2/2): (2 pi)^{-1} int |l| |g^|^2 = (2 pi)^{-1} int |l| 2 pi e^{-l^2} = 1.
        let prm = ModelParams::cauchy_pair();
        let spec = MpsiSpec {
            grid: GridSpec::new(1, 12.0, 0.05).unwrap(),
            padding: 8,
            ..MpsiSpec::default_for(1)
        };
        let mut obj = MpsiObjective::new(&prm, spec);
        let g = spec.grid.tabulate(|x| (-x[0] * x[0] / 2.0).exp());
        let k = obj.kinetic(&g);
        assert!((k - 1.0).abs() < 1e-3, "{k}");
        let flat = vec![0.0; g.len()];
        assert_eq!(obj.kinetic(&flat), 0.0);
    }

    #[test]
    fn parseval_with_constant_multiplier() {
        let prm = ModelParams::new(1, 2, 2.0, 1.0).unwrap();
        let spec = small();
        let mut obj = MpsiObjective::new(&prm, spec);
        obj.psi.iter_mut().for_each(|v| *v = 1.0);
        let g = spec.grid.tabulate(|x| (-x[0].abs()).exp() * (1.0 + x[0]).cos());
        let l2: f64 = spec.grid.cell() * g.iter().map(|v| v * v).sum::<f64>();
        let k = obj.kinetic(&g);
        assert!((k - l2).abs() < 1e-12 * l2);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prm = ModelParams::cauchy_pair();
        let spec = small().with_theta(1.7);
        let mut obj = MpsiObjective::new(&prm, spec);
        let g = spec.grid.tabulate(|x| (-(x[0] - 0.3).powi(2)).exp());
        let (_, grad) = obj.value_and_gradient(&g);
        let h = spec.grid.cell();
        for k in [5, 20, 30, 41] {
            let eps = 1e-6;
            let mut gp = g.clone();
            gp[k] += eps;
            let mut gm = g.clone();
            gm[k] -= eps;
            let fd = (obj.value(&gp) - obj.value(&gm)) / (2.0 * eps) / h;
            assert!((fd - grad[k]).abs() < 1e-5 * (1.0 + fd.abs()), "k={k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn positive_optimum() {
        let prm = ModelParams::cauchy_pair();
        let opts = AscentOptions {
            restarts: 2,
            max_iter: 500,
            ..Default::default()
        };
        let sol = solve_m_psi(&prm, &small(), &opts).unwrap();
        assert!(sol.value > 0.0);
        assert!(solve_m_psi(&ModelParams::new(1, 3, 1.0, 1.0).unwrap(), &small(), &opts).is_err());
    }
}
