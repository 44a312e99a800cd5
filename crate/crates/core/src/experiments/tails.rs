//! Upper tails of `eta^0([0, 1]^p)` against `exp(-kappa t^{alpha/d})`.

use serde::{Deserialize, Serialize};

use super::draw_field;
use crate::error::{invalid, Error, Result};
use crate::model::{ldp_rate_constant, ModelParams};
use crate::rng::StreamRng;
use crate::stablesim::map_replicas;
use crate::stats::{linear_fit, quantile_sorted, wilson_interval};

pub const MIN_THRESHOLDS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub samples: usize,
    pub steps_per_unit: usize,
    pub thresholds: usize,
    pub min_exceedances: usize,
    /// Lowest threshold as an empirical quantile.
    pub lower_quantile: f64,
    /// Also fit the tail of the spatial supremum.
    pub with_sup: bool,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            steps_per_unit: 400,
            thresholds: 12,
            min_exceedances: 20,
            lower_quantile: 0.9,
            with_sup: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub samples: usize,
    pub thresholds: Vec<f64>,
    pub counts: Vec<usize>,
    pub log_prob: Vec<f64>,
    /// 95% Wilson bounds on the log scale.
    pub log_prob_lo: Vec<f64>,
    pub log_prob_hi: Vec<f64>,
    /// `t^{alpha/d}`.
    pub regressor: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Geometric thresholds between the `lower_quantile` and the largest value
/// still exceeded `min_exceedances` times, then a least-squares line of
/// `log P{Y >= t}` against `t^{power}`.
pub fn fit_tail(
    samples: &[f64],
    power: f64,
    thresholds: usize,
    min_exceedances: usize,
    lower_quantile: f64,
) -> Result<TailFit> {
    let n = samples.len();
    if n == 0 || thresholds < 2 {
        return Err(invalid("samples", "need samples and at least two thresholds"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = quantile_sorted(&sorted, lower_quantile);
    let hi = if n >= min_exceedances.max(1) {
        sorted[n - min_exceedances.max(1)]
    } else {
        f64::NAN
    };
    let exceed = |t: f64| n - sorted.partition_point(|&v| v < t);
    let insufficient = |usable: Vec<f64>| Error::InsufficientExceedances {
        usable,
        min_count: min_exceedances,
        needed: MIN_THRESHOLDS,
    };
    if !(lo > 0.0 && hi > lo) {
        let usable = [lo, hi]
            .into_iter()
            .filter(|t| t.is_finite() && exceed(*t) >= min_exceedances)
            .collect();
        return Err(insufficient(usable));
    }
    let ratio = (hi / lo).powf(1.0 / (thresholds - 1) as f64);
    let mut ts: Vec<f64> = (0..thresholds).map(|i| lo * ratio.powi(i as i32)).collect();
    ts[thresholds - 1] = hi;
    ts.dedup();
    let usable: Vec<f64> = ts.into_iter().filter(|t| exceed(*t) >= min_exceedances).collect();
    if usable.len() < MIN_THRESHOLDS {
        return Err(insufficient(usable));
    }
    let counts: Vec<usize> = usable.iter().map(|t| exceed(*t)).collect();
    let log_prob: Vec<f64> = counts.iter().map(|&k| (k as f64 / n as f64).ln()).collect();
    let (log_prob_lo, log_prob_hi) = counts
        .iter()
        .map(|&k| {
            let (a, b) = wilson_interval(k, n, 1.96);
            (a.ln(), b.ln())
        })
        .unzip();
    let regressor: Vec<f64> = usable.iter().map(|t| t.powf(power)).collect();
    let fit = linear_fit(&regressor, &log_prob);
    Ok(TailFit {
        samples: n,
        thresholds: usable,
        counts,
        log_prob,
        log_prob_lo,
        log_prob_hi,
        regressor,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub rho: f64,
    pub kappa: f64,
    /// `-kappa`.
    pub theory_slope: f64,
    pub origin: TailFit,
    /// `slope / theory_slope`.
    pub slope_ratio: f64,
    pub sup: Option<TailFit>,
    /// Supremum slope over origin slope.
    pub sup_ratio: Option<f64>,
}

impl TailReport {
    pub fn passes(&self, min_r2: f64, factor: f64) -> bool {
        self.origin.r_squared > min_r2
            && self.origin.slope < 0.0
            && self.slope_ratio >= 1.0 / factor
            && self.slope_ratio <= factor
    }
}

/// Samples `eta^0([0, 1]^p)` (and the supremum when asked), fits both tails
/// and compares with `-kappa(rho)`.
pub fn tail_ldp_fit(params: &ModelParams, rho: f64, cfg: &TailConfig, seed: u64) -> Result<TailReport> {
    params.validate()?;
    if !(rho > 0.0) {
        return Err(invalid("rho", "must be positive"));
    }
    let draws: Vec<_> = map_replicas(cfg.samples, 0, |s| {
        draw_field(params, 1.0, cfg.steps_per_unit, cfg.with_sup, seed, s)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let power = params.alpha / params.d as f64;
    let origin_samples: Vec<f64> = draws.iter().map(|f| f.origin).collect();
    let origin = fit_tail(
        &origin_samples,
        power,
        cfg.thresholds,
        cfg.min_exceedances,
        cfg.lower_quantile,
    )?;
    let sup = if cfg.with_sup {
        let s: Vec<f64> = draws.iter().map(|f| f.sup.unwrap_or(0.0)).collect();
        Some(fit_tail(&s, power, cfg.thresholds, cfg.min_exceedances, cfg.lower_quantile)?)
    } else {
        None
    };
    let kappa = ldp_rate_constant(params, rho);
    Ok(TailReport {
        rho,
        kappa,
        theory_slope: -kappa,
        slope_ratio: origin.slope / -kappa,
        sup_ratio: sup.as_ref().map(|s| s.slope / origin.slope),
        origin,
        sup,
    })
}

/// Exact draws `Y = (E / kappa)^{1/power}` with `P{Y >= t} = exp(-kappa t^power)`.
pub fn synthetic_tail_samples(kappa: f64, power: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamRng::new(seed, 0);
    (0..n).map(|_| (rng.exp1() / kappa).powf(1.0 / power)).collect()
}

/// Fit on synthetic exact-law samples; the slope should recover `-kappa`.
pub fn tail_self_test(kappa: f64, power: f64, cfg: &TailConfig, seed: u64) -> Result<TailFit> {
    let s = synthetic_tail_samples(kappa, power, cfg.samples, seed);
    fit_tail(&s, power, cfg.thresholds, cfg.min_exceedances, cfg.lower_quantile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_test_recovers_slope() {
        let cfg = TailConfig::default();
        for (kappa, power) in [(2.4686, 1.0), (1.0, 0.5), (3.0, 2.0)] {
            let fit = tail_self_test(kappa, power, &cfg, 5).unwrap();
            assert!((fit.slope / -kappa - 1.0).abs() < 0.05, "{kappa} {power}: {}", fit.slope);
            assert!(fit.thresholds.windows(2).all(|w| w[1] > w[0]));
            assert!(fit.r_squared > 0.99);
        }
    }

    #[test]
    fn too_few_samples_name_usable_thresholds() {
        let s: Vec<f64> = (0..30).map(|i| i as f64).collect();
        match fit_tail(&s, 1.0, 12, 20, 0.9) {
            Err(Error::InsufficientExceedances { needed, .. }) => assert_eq!(needed, 4),
            other => panic!("{other:?}"),
        }
    }
}
