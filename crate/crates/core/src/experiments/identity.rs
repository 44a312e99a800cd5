//! For `p = 2`, `eta^0([0, t]^2)` of `X1 + X2` has the law of the
//! intersection local time `int L1(x) L2(x) dx` of two independent copies.

use serde::{Deserialize, Serialize};

use super::{field_of, sheet_on};
use crate::error::{invalid, Result};
use crate::localtime::SpatialGrid;
use crate::model::ModelParams;
use crate::stablesim::{map_replicas, SheetSample};
use crate::stats::{ks_two_sample, mean_and_se, KsReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub samples: usize,
    pub steps_per_unit: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            steps_per_unit: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub samples: usize,
    pub additive_mean: f64,
    pub additive_se: f64,
    pub intersection_mean: f64,
    pub intersection_se: f64,
    pub ks: KsReport,
    /// Same construction with one path used twice.
    pub dependent_mean: f64,
    pub dependent_ks: KsReport,
    /// `|mean difference|` in combined standard errors.
    pub mean_gap_se: f64,
}

impl IdentityReport {
    pub fn passes(&self, level: f64) -> bool {
        self.ks.p_value > level && self.dependent_ks.p_value < level && self.mean_gap_se <= 3.0
    }
}

/// Sorted cell keys of the left endpoints of path `j` on `[0, 1]`.
fn cell_counts(sheet: &SheetSample, j: usize, n: usize, w: f64) -> Vec<(Vec<i64>, u64)> {
    let mut keys: Vec<Vec<i64>> = (0..n)
        .map(|k| {
            sheet
                .point(j, k)
                .iter()
                .map(|x| (x / w + 0.5).floor() as i64)
                .collect()
        })
        .collect();
    keys.sort();
    let mut out: Vec<(Vec<i64>, u64)> = Vec::new();
    for key in keys {
        match out.last_mut() {
            Some((k, c)) if *k == key => *c += 1,
            _ => out.push((key, 1)),
        }
    }
    out
}

/// `sum_cells L1 L2 w^d` with `L_j = dt * count / w^d`.
fn intersection(a: &[(Vec<i64>, u64)], b: &[(Vec<i64>, u64)], dt: f64, w: f64, d: usize) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut s = 0u64;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s as f64 * dt * dt / w.powi(d as i32)
}

/// Set A: `eta^0([0,1]^2)` on streams `0..N`. Set B: intersection local
/// time of the two paths on streams `N..2N`. Control: one path of set B
/// intersected with itself.
pub fn intersection_identity_check(params: &ModelParams, cfg: &IdentityConfig, seed: u64) -> Result<IdentityReport> {
    params.validate()?;
    if params.p != 2 {
        return Err(invalid("p", "the identity concerns p = 2"));
    }
    if cfg.samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let n = cfg.samples;
    let a: Vec<f64> = map_replicas(n, 0, |s| -> Result<f64> {
        let sheet = sheet_on(params, 1.0, cfg.steps_per_unit, seed, s)?;
        Ok(field_of(&sheet, 1.0, false)?.origin)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = map_replicas(n, n as u64, |s| -> Result<(f64, f64)> {
        let sheet = sheet_on(params, 1.0, cfg.steps_per_unit, seed, s)?;
        let dt = sheet.grid.dt();
        let w = SpatialGrid::natural_bin_width(params, dt);
        let steps = sheet.grid.steps_for(1.0)?;
        let c1 = cell_counts(&sheet, 0, steps, w);
        let c2 = cell_counts(&sheet, 1, steps, w);
        Ok((
            intersection(&c1, &c2, dt, w, params.d),
            intersection(&c1, &c1, dt, w, params.d),
        ))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let b: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let dep: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (ma, sa) = mean_and_se(&a);
    let (mb, sb) = mean_and_se(&b);
    let (md, _) = mean_and_se(&dep);
    Ok(IdentityReport {
        samples: n,
        additive_mean: ma,
        additive_se: sa,
        intersection_mean: mb,
        intersection_se: sb,
        ks: ks_two_sample(&a, &b),
        dependent_mean: md,
        dependent_ks: ks_two_sample(&a, &dep),
        mean_gap_se: (ma - mb).abs() / (sa * sa + sb * sb).sqrt(),
    })
}
