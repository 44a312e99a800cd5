//! Self-similarity in time: `eta^0([0, t]^p)` and `sup_x eta^x([0, t]^p)`
//! have the law of `t^{(alpha p - d)/alpha}` times their values at `t = 1`.

use serde::{Deserialize, Serialize};

use super::draw_field;
use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::stablesim::map_replicas;
use crate::stats::{ks_two_sample, KsReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub t1: f64,
    pub t2: f64,
    pub samples: usize,
    /// Time steps per unit time, shared by both horizons.
    pub steps_per_unit: usize,
    /// Added to the exponent for the negative control.
    pub control_shift: f64,
    pub with_sup: bool,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            t1: 1.0,
            t2: 2.0,
            samples: 2000,
            steps_per_unit: 400,
            control_shift: 0.3,
            with_sup: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub t1: f64,
    pub t2: f64,
    pub samples: usize,
    pub exponent: f64,
    pub origin: KsReport,
    pub sup: Option<KsReport>,
    pub control_origin: KsReport,
    pub control_sup: Option<KsReport>,
}

impl ScalingReport {
    /// Scaled samples agree and the perturbed exponent is rejected.
    pub fn passes(&self, level: f64) -> bool {
        let sup_ok = self.sup.is_none_or(|r| r.p_value > level);
        let ctl_ok = self.control_sup.is_none_or(|r| r.p_value < level);
        self.origin.p_value > level && sup_ok && self.control_origin.p_value < level && ctl_ok
    }
}

/// Draws `samples` fields at `t1` (streams `0..N`) and `t2` (streams
/// `N..2N`), divides each by `t^exponent` and compares the laws.
pub fn scaling_check(params: &ModelParams, cfg: &ScalingConfig, seed: u64) -> Result<ScalingReport> {
    params.validate()?;
    if !(cfg.t1 > 0.0 && cfg.t2 > 0.0) {
        return Err(invalid("t", "horizons must be positive"));
    }
    if cfg.samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let n = cfg.samples;
    let run = |t: f64, first: u64| -> Result<Vec<_>> {
        map_replicas(n, first, |s| draw_field(params, t, cfg.steps_per_unit, cfg.with_sup, seed, s))
            .into_iter()
            .collect()
    };
    let a = run(cfg.t1, 0)?;
    let b = run(cfg.t2, n as u64)?;
    let exponent = params.time_scaling_exponent();
    let compare = |e: f64| {
        let s1 = cfg.t1.powf(-e);
        let s2 = cfg.t2.powf(-e);
        let xo: Vec<f64> = a.iter().map(|f| f.origin * s1).collect();
        let yo: Vec<f64> = b.iter().map(|f| f.origin * s2).collect();
        let origin = ks_two_sample(&xo, &yo);
        let sup = cfg.with_sup.then(|| {
            let xs: Vec<f64> = a.iter().map(|f| f.sup.unwrap_or(0.0) * s1).collect();
            let ys: Vec<f64> = b.iter().map(|f| f.sup.unwrap_or(0.0) * s2).collect();
            ks_two_sample(&xs, &ys)
        });
        (origin, sup)
    };
    let (origin, sup) = compare(exponent);
    let (control_origin, control_sup) = compare(exponent + cfg.control_shift);
    Ok(ScalingReport {
        t1: cfg.t1,
        t2: cfg.t2,
        samples: n,
        exponent,
        origin,
        sup,
        control_origin,
        control_sup,
    })
}
