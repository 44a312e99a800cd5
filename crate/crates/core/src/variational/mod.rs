//! Variational constants: `rho` on a grid, its lattice and periodized
//! analogues, lower bounds through the operator `T`, and `M_psi`.

pub mod ascent;
pub mod grid;
pub mod lattice;
pub mod mpsi;
pub mod rho;

use serde::{Deserialize, Serialize};

pub use ascent::{AscentOptions, AscentResult, SphereObjective};
pub use grid::{GridFunction, GridSpec};
pub use lattice::{
    discrete_moment_bruteforce, discrete_moment_multiset, solve_rho_lattice, solve_rho_m, LatticeModel,
    LatticeSolution, PeriodizedSolution, StepWeights,
};
pub use mpsi::{m_psi_from_rho, m_psi_theta_factor, solve_m_psi, MpsiSpec};
pub use rho::{alternating_lower_bound, point_mass_value, rho_lower_bound_pair, solve_rho, LowerBoundPair};

use crate::error::Result;
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalSolution {
    pub value: f64,
    pub grid: GridSpec,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub restarts: usize,
    pub history: Vec<f64>,
    #[serde(skip)]
    pub argmax: Vec<f64>,
}

impl VariationalSolution {
    pub(crate) fn from_ascent(best: AscentResult, grid: GridSpec, restarts: usize) -> Self {
        Self {
            value: best.value,
            grid,
            iterations: best.iterations,
            grad_norm: best.grad_norm,
            converged: best.converged,
            restarts,
            history: best.history,
            argmax: best.x,
        }
    }

    pub fn maximizer(&self) -> GridFunction {
        GridFunction {
            spec: self.grid,
            values: self.argmax.clone(),
        }
    }

    pub fn history_monotone(&self) -> bool {
        self.history.windows(2).all(|w| w[1] >= w[0])
    }
}

/// One row of a refinement study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub grid: GridSpec,
    pub value: f64,
    pub converged: bool,
    /// `|value / previous - 1|`, absent on the first row.
    pub drift: Option<f64>,
}

/// `solve_rho` on `spec` and `levels` successive refinements.
pub fn rho_refinement(
    params: &ModelParams,
    spec: &GridSpec,
    levels: usize,
    opts: &AscentOptions,
) -> Result<(VariationalSolution, Vec<RefinementStep>)> {
    let mut rows: Vec<RefinementStep> = Vec::new();
    let mut grid = *spec;
    let mut last = None;
    for _ in 0..=levels {
        let sol = solve_rho(params, &grid, opts)?;
        let drift = rows.last().map(|r| (sol.value / r.value - 1.0).abs());
        rows.push(RefinementStep {
            grid,
            value: sol.value,
            converged: sol.converged,
            drift,
        });
        last = Some(sol);
        grid = grid.refined();
    }
    Ok((last.expect("at least one level"), rows))
}
