//! Running values of `R(t) = t^{-(alpha p - d)/alpha} (log log t)^{-d/alpha} eta^x([0, t]^p)`
//! along geometric checkpoints.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::localtime::{origin_occupation, SpatialGrid};
use crate::model::{lil_constant, ModelParams};
use crate::stablesim::{map_replicas, simulate_sheet, SheetSample, TimeGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LilConfig {
    pub x: Vec<f64>,
    pub horizon: f64,
    pub paths: usize,
    pub dt: f64,
    pub checkpoints: usize,
    /// Bracket `[lo, hi] * c_lil` for the final running maximum.
    pub bracket: [f64; 2],
}

impl Default for LilConfig {
    fn default() -> Self {
        Self {
            x: vec![0.0],
            horizon: 1e4,
            paths: 50,
            dt: 0.1,
            checkpoints: 24,
            bracket: [0.05, 20.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilTrace {
    pub checkpoints: Vec<f64>,
    /// `values[path][k]`.
    pub values: Vec<Vec<f64>>,
    /// Maximum over paths and over checkpoints up to `k`.
    pub running_max: Vec<f64>,
    pub final_running_max: f64,
    pub c_lil: f64,
    pub ratio: f64,
    pub within_bracket: bool,
}

/// Geometric grid from `e^e` to `horizon`, snapped up to multiples of `dt`.
pub fn lil_checkpoints(horizon: f64, dt: f64, count: usize) -> Vec<f64> {
    let start = std::f64::consts::E.powf(std::f64::consts::E);
    let count = count.max(2);
    let r = (horizon / start).powf(1.0 / (count - 1) as f64);
    let mut out: Vec<f64> = (0..count)
        .map(|i| {
            let t = (start * r.powi(i as i32)).min(horizon);
            (t / dt - 1e-9).ceil() * dt
        })
        .collect();
    out.dedup_by(|a, b| (*a - *b).abs() < dt / 2.0);
    out
}

fn shifted(sheet: &SheetSample, x: &[f64]) -> Result<SheetSample> {
    let d = sheet.d();
    let mut paths = sheet.paths.clone();
    for v in paths[0].chunks_mut(d) {
        for (a, b) in v.iter_mut().zip(x) {
            *a -= b;
        }
    }
    SheetSample::from_paths(sheet.params, sheet.grid, paths)
}

pub fn lil_tracker(params: &ModelParams, cfg: &LilConfig, rho: f64, seed: u64) -> Result<LilTrace> {
    params.validate()?;
    let ee = std::f64::consts::E.powf(std::f64::consts::E);
    if !(cfg.horizon >= ee) {
        return Err(invalid("horizon", format!("must be at least e^e = {ee:.4}")));
    }
    if cfg.x.len() != params.d {
        return Err(invalid("x", "length differs from d"));
    }
    if cfg.paths == 0 {
        return Err(invalid("paths", "need at least one path"));
    }
    let checkpoints = lil_checkpoints(cfg.horizon, cfg.dt, cfg.checkpoints);
    let t_max = *checkpoints.last().expect("nonempty");
    let grid = TimeGrid::with_step(t_max, cfg.dt)?;
    let w = SpatialGrid::natural_bin_width(params, grid.dt());
    let d = params.d as f64;
    let expo = params.time_scaling_exponent();
    let values: Vec<Vec<f64>> = map_replicas(cfg.paths, 0, |s| -> Result<Vec<f64>> {
        let sheet = shifted(&simulate_sheet(params, &grid, seed, s), &cfg.x)?;
        checkpoints
            .iter()
            .map(|&t| {
                let eta = origin_occupation(&sheet, w, &vec![t; params.p])?;
                Ok(eta * t.powf(-expo) * t.ln().ln().powf(-d / params.alpha))
            })
            .collect()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut running_max = Vec::with_capacity(checkpoints.len());
    let mut m: f64 = 0.0;
    for k in 0..checkpoints.len() {
        for v in &values {
            m = m.max(v[k]);
        }
        running_max.push(m);
    }
    let c_lil = lil_constant(params, rho);
    let ratio = m / c_lil;
    Ok(LilTrace {
        checkpoints,
        values,
        running_max,
        final_running_max: m,
        c_lil,
        ratio,
        within_bracket: ratio >= cfg.bracket[0] && ratio <= cfg.bracket[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_are_increasing_grid_times() {
        let c = lil_checkpoints(1e4, 0.1, 24);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
        assert!((c[c.len() - 1] - 1e4).abs() < 1e-6);
        assert!(c[0] >= std::f64::consts::E.powf(std::f64::consts::E));
    }

    #[test]
    fn short_trace_is_nonnegative_and_monotone() {
        let prm = ModelParams::cauchy_pair();
        let cfg = LilConfig {
            horizon: 100.0,
            paths: 3,
            checkpoints: 6,
            ..Default::default()
        };
        let tr = lil_tracker(&prm, &cfg, 1.27, 9).unwrap();
        assert!(tr.values.iter().flatten().all(|v| *v >= 0.0));
        assert!(tr.running_max.windows(2).all(|w| w[1] >= w[0]));
        assert!(lil_tracker(&prm, &LilConfig { horizon: 10.0, ..cfg }, 1.27, 9).is_err());
    }
}
