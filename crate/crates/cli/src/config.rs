//! Run configuration: a TOML file with dotted keys such as
//! `model.alpha = 1.0`, every field optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stablelt_core::experiments::{IdentityConfig, LilConfig, ScalingConfig, TailConfig};
use stablelt_core::variational::{AscentOptions, GridSpec, LatticeModel, MpsiSpec, StepWeights};
use stablelt_core::{Error as CoreError, ModelParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub simulate: SimulateConfig,
    pub localtime: LocaltimeConfig,
    pub moments: MomentsConfig,
    pub rho: RhoConfig,
    pub lattice: LatticeConfig,
    pub rho_m: RhoMConfig,
    pub mpsi: MpsiConfig,
    pub discrete: DiscreteConfig,
    pub tails: TailConfig,
    pub scaling: ScalingConfig,
    pub lil: LilConfig,
    pub identity: IdentityConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub p: usize,
    pub alpha: f64,
    pub c: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let m = ModelParams::cauchy_pair();
        Self {
            d: m.d,
            p: m.p,
            alpha: m.alpha,
            c: m.c,
        }
    }
}

impl ModelConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            d: self.d,
            p: self.p,
            alpha: self.alpha,
            c: self.c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub t_max: f64,
    pub steps: usize,
    pub stream: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            steps: 400,
            stream: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocaltimeConfig {
    pub t: f64,
    pub steps_per_unit: usize,
    /// Natural width `dt^{1/alpha}` when absent.
    pub bin_width: Option<f64>,
    /// Also evaluate the mollified estimator at the origin.
    pub epsilon: Option<f64>,
    pub sheets: usize,
}

impl Default for LocaltimeConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            steps_per_unit: 200,
            bin_width: None,
            epsilon: Some(0.05),
            sheets: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub orders: Vec<usize>,
    pub quadrature: bool,
    pub mc_samples: usize,
    pub sim_replicas: usize,
    pub sim_dt: f64,
    pub sim_epsilon: f64,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            orders: vec![1, 2],
            quadrature: true,
            mc_samples: 200_000,
            sim_replicas: 4000,
            sim_dt: 0.01,
            sim_epsilon: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoConfig {
    pub half_width: Option<f64>,
    pub spacing: Option<f64>,
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Rerun on the refined grid (double `L`, half `h`).
    pub refine: bool,
    pub pairs: usize,
    pub alternating_sweeps: usize,
}

impl Default for RhoConfig {
    fn default() -> Self {
        let o = AscentOptions::default();
        Self {
            half_width: None,
            spacing: None,
            restarts: o.restarts,
            max_iter: o.max_iter,
            grad_tol: o.grad_tol,
            refine: true,
            pairs: 20,
            alternating_sweeps: 50,
        }
    }
}

impl RhoConfig {
    pub fn grid(&self, d: usize) -> Result<GridSpec, CoreError> {
        let def = GridSpec::default_for(d);
        GridSpec::new(
            d,
            self.half_width.unwrap_or(def.half_width),
            self.spacing.unwrap_or(def.spacing),
        )
    }

    pub fn ascent(&self, seed: u64) -> AscentOptions {
        AscentOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            restarts: self.restarts,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub d: usize,
    pub p: usize,
    pub support: Vec<Vec<i64>>,
    pub weights: Vec<f64>,
    /// `Q(x) = 1 / (1 + scale |x|^power)`.
    pub kernel_scale: f64,
    pub kernel_power: f64,
    pub cutoff: usize,
    pub tail_tol: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            d: 1,
            p: 2,
            support: vec![vec![-1], vec![0], vec![1]],
            weights: vec![1.0 / 3.0; 3],
            kernel_scale: 1.0,
            kernel_power: 1.0,
            cutoff: 12,
            tail_tol: 1e-3,
        }
    }
}

impl LatticeConfig {
    pub fn model(&self) -> Result<LatticeModel, CoreError> {
        let (s, e) = (self.kernel_scale, self.kernel_power);
        LatticeModel::new(
            self.d,
            self.p,
            StepWeights::Finite {
                points: self.support.clone(),
                weights: self.weights.clone(),
            },
            |x| {
                let r = x.iter().map(|v| (*v * *v) as f64).sum::<f64>().sqrt();
                1.0 / (1.0 + s * r.powf(e))
            },
            self.cutoff,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoMConfig {
    pub m: Vec<f64>,
    /// Frequency half-width covered by the lattice box.
    pub half_width: f64,
    pub tail_tol: f64,
}

impl Default for RhoMConfig {
    fn default() -> Self {
        Self {
            m: vec![8.0, 16.0, 32.0, 64.0],
            half_width: 40.0,
            tail_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpsiConfig {
    pub half_width: f64,
    pub spacing: f64,
    pub padding: usize,
    /// Second solve with the quartic term multiplied by `theta`.
    pub theta: f64,
}

impl Default for MpsiConfig {
    fn default() -> Self {
        let s = MpsiSpec::default_for(1);
        Self {
            half_width: s.grid.half_width,
            spacing: s.grid.spacing,
            padding: s.padding,
            theta: 2.0,
        }
    }
}

impl MpsiConfig {
    pub fn spec(&self, d: usize) -> Result<MpsiSpec, CoreError> {
        Ok(MpsiSpec {
            grid: GridSpec::new(d, self.half_width, self.spacing)?,
            padding: self.padding,
            theta: 1.0,
            kinetic_scale: 1.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscreteConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub budget: f64,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self {
            n_min: 5,
            n_max: 9,
            budget: stablelt_core::variational::lattice::DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
            parse(&text).map_err(|e| ConfigError(format!("{}: {}", p.display(), e.0)))?
        }
    };
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn field(name: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("invalid `{name}`: {msg}"))
}

/// Checks that do not need any computation.
pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    let params = cfg.model.params();
    params.validate().map_err(|e| match e {
        CoreError::ExistenceCondition { d, p, alpha } => ConfigError(format!(
            "model: existence condition d < alpha*p violated (d = {d}, p = {p}, alpha = {alpha}, alpha*p = {}); \
             the local time of the additive process does not exist",
            alpha * p as f64
        )),
        other => field("model", other),
    })?;
    if cfg.workers == Some(0) {
        return Err(field("workers", "must be at least 1"));
    }
    if !(cfg.simulate.t_max > 0.0) || cfg.simulate.steps == 0 {
        return Err(field("simulate", "t_max and steps must be positive"));
    }
    if !(cfg.localtime.t > 0.0) || cfg.localtime.steps_per_unit == 0 || cfg.localtime.sheets == 0 {
        return Err(field("localtime", "t, steps_per_unit and sheets must be positive"));
    }
    if cfg.moments.orders.is_empty() {
        return Err(field("moments.orders", "list at least one order"));
    }
    if cfg.rho.restarts == 0 {
        return Err(field("rho.restarts", "must be at least 1"));
    }
    if cfg.lattice.support.len() != cfg.lattice.weights.len() {
        return Err(field("lattice.weights", "length must match lattice.support"));
    }
    if cfg.rho_m.m.iter().any(|m| !(*m > 0.0)) || cfg.rho_m.m.is_empty() {
        return Err(field("rho_m.m", "need a nonempty list of positive values"));
    }
    if !(cfg.mpsi.theta > 0.0) {
        return Err(field("mpsi.theta", "must be positive"));
    }
    if cfg.discrete.n_min == 0 || cfg.discrete.n_max < cfg.discrete.n_min + 1 {
        return Err(field("discrete", "need 1 <= n_min < n_max"));
    }
    if cfg.tails.samples == 0 {
        return Err(field("tails.samples", "must be positive"));
    }
    if !(cfg.scaling.t1 > 0.0 && cfg.scaling.t2 > 0.0) {
        return Err(field("scaling", "t1 and t2 must be positive"));
    }
    if cfg.lil.x.len() != params.d {
        return Err(field("lil.x", format!("needs {} coordinates", params.d)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_defaults() {
        let cfg = parse("model.alpha = 1.5\nrho.restarts = 3\nseed = 9\n").unwrap();
        assert_eq!(cfg.model.alpha, 1.5);
        assert_eq!(cfg.model.d, 1);
        assert_eq!(cfg.rho.restarts, 3);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_field_is_named() {
        let e = parse("model.alpah = 1.0\n").unwrap_err();
        assert!(e.0.contains("alpah"), "{}", e.0);
        let e = parse("tails.samples = \"many\"\n").unwrap_err();
        assert!(e.0.contains("samples"), "{}", e.0);
    }

    #[test]
    fn existence_condition_message() {
        let e = parse("model.d = 2\nmodel.p = 1\nmodel.alpha = 1.0\n").unwrap_err();
        assert!(e.0.contains("existence condition d < alpha*p"), "{}", e.0);
    }
}
