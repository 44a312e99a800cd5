//! Model parameters, the isotropic exponent `psi(l) = c |l|^alpha`, the
//! resolvent kernel `Q = 1 / (1 + psi)` and the closed-form constants of the
//! large deviation and LIL limits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::LineQuadrature;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Space dimension.
    pub d: usize,
    /// Number of time parameters.
    pub p: usize,
    /// Stable index in `(0, 2]`.
    pub alpha: f64,
    /// Scale in `psi(l) = c |l|^alpha`.
    pub c: f64,
}

impl ModelParams {
    /// Validated constructor; enforces `0 < alpha <= 2`, `c > 0` and the
    /// existence condition `d < alpha p`.
    pub fn new(d: usize, p: usize, alpha: f64, c: f64) -> Result<Self> {
        let params = Self { d, p, alpha, c };
        params.validate()?;
        Ok(params)
    }

    /// The default campaign setting: Cauchy, `d = 1`, `p = 2`, `c = 1`.
    pub fn cauchy_pair() -> Self {
        Self {
            d: 1,
            p: 2,
            alpha: 1.0,
            c: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        if self.p == 0 {
            return Err(invalid("p", "need at least one time parameter"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(invalid("alpha", format!("must lie in (0, 2], got {}", self.alpha)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", format!("must be positive and finite, got {}", self.c)));
        }
        if !((self.d as f64) < self.alpha * self.p as f64) {
            return Err(Error::ExistenceCondition {
                d: self.d,
                p: self.p,
                alpha: self.alpha,
            });
        }
        Ok(())
    }

    /// `alpha p - d`, positive for valid parameters.
    pub fn excess(&self) -> f64 {
        self.alpha * self.p as f64 - self.d as f64
    }

    /// Exponent in `eta([0,t]^p) = t^{(alpha p - d)/alpha} eta([0,1]^p)` (in law).
    pub fn time_scaling_exponent(&self) -> f64 {
        self.excess() / self.alpha
    }

    pub fn psi(&self, lambda: &[f64]) -> f64 {
        debug_assert_eq!(lambda.len(), self.d);
        psi_of_norm(self, norm(lambda))
    }

    pub fn q(&self, lambda: &[f64]) -> f64 {
        1.0 / (1.0 + self.psi(lambda))
    }

    /// `Q` as a function of `|lambda|`.
    pub fn q_radial(&self, r: f64) -> f64 {
        1.0 / (1.0 + psi_of_norm(self, r))
    }
}

fn psi_of_norm(params: &ModelParams, r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if params.alpha == 2.0 {
        params.c * r * r
    } else if params.alpha == 1.0 {
        params.c * r
    } else {
        params.c * r.powf(params.alpha)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    match v.len() {
        1 => v[0].abs(),
        _ => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// Surface area of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half_integer(d)
}

/// `Gamma(k / 2)` for positive integers `k`.
fn gamma_half_integer(k: usize) -> f64 {
    assert!(k > 0);
    let mut g = if k % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if k % 2 == 0 { 1.0 } else { 0.5 };
    while x < k as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub order: usize,
    pub first_panel: f64,
    /// Required ratio of the analytic tail bound to the value.
    pub tail_fraction: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            order: 12,
            first_panel: 1.0 / 64.0,
            tail_fraction: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    /// Truncated integral plus the leading-order tail term.
    pub value: f64,
    /// Truncation radius `L`.
    pub cutoff: f64,
    /// Analytic tail bound `S_{d-1} c^{-p} L^{d - alpha p} / (alpha p - d)`.
    pub tail_bound: f64,
    /// Set when the tail bound exceeds 1% of the value.
    pub divergence_warning: bool,
}

/// `int_{R^d} (1 + psi)^{-p} d lambda`, an upper bound for `rho`.
pub fn rho_upper_bound(params: &ModelParams, spec: &QuadratureSpec) -> Result<UpperBound> {
    params.validate()?;
    let d = params.d as f64;
    let p = params.p as i32;
    let sphere = unit_sphere_area(params.d);
    let tail_bound =
        |l: f64| sphere * params.c.powi(-p) * l.powf(-params.excess()) / params.excess();
    let radial = |r: f64| {
        let base = params.q_radial(r).powi(p);
        if params.d == 1 {
            base
        } else {
            r.powf(d - 1.0) * base
        }
    };
    let mut cutoff: f64 = 1e3 * params.c.powf(-1.0 / params.alpha);
    let mut truncated;
    loop {
        let quad = LineQuadrature::new(spec.order, spec.first_panel, cutoff);
        truncated = quad.segment(0.0, cutoff.min(1.0), radial);
        if cutoff > 1.0 {
            // geometric panels beyond r = 1
            let mut lo: f64 = 1.0;
            while lo < cutoff {
                let hi = (2.0 * lo).min(cutoff);
                truncated += quad.segment(lo, hi, radial);
                lo = hi;
            }
        }
        truncated *= sphere;
        if tail_bound(cutoff) <= spec.tail_fraction * truncated || cutoff > 1e15 {
            break;
        }
        cutoff *= 10.0;
    }
    let tail = tail_bound(cutoff);
    let value = truncated + tail;
    Ok(UpperBound {
        value,
        cutoff,
        tail_bound: tail,
        divergence_warning: tail > 0.01 * value,
    })
}

/// Magnitude of the limit `t^{-alpha/d} log P{eta >= t}`.
pub fn ldp_rate_constant(params: &ModelParams, rho: f64) -> f64 {
    assert!(rho > 0.0, "rho must be positive");
    let d = params.d as f64;
    let a = params.alpha;
    let p = params.p as f64;
    (2.0 * PI).powf(a) * (d / a) * (1.0 - d / (a * p)).powf((a * p - d) / d) * rho.powf(-a / d)
}

/// Almost-sure limsup constant of `t^{-(alpha p-d)/alpha} (log log t)^{-d/alpha} eta`.
pub fn lil_constant(params: &ModelParams, rho: f64) -> f64 {
    assert!(rho > 0.0, "rho must be positive");
    let d = params.d as f64;
    let a = params.alpha;
    let p = params.p as f64;
    (2.0 * PI).powf(-d) * (a / d).powf(d / a) * (1.0 - d / (a * p)).powf(-(p - d / a)) * rho
}

/// The three constants derived from one value of `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    pub rho: f64,
    pub kappa_ldp: f64,
    pub c_lil: f64,
}

impl TheoreticalConstants {
    pub fn from_rho(params: &ModelParams, rho: f64) -> Self {
        Self {
            rho,
            kappa_ldp: ldp_rate_constant(params, rho),
            c_lil: lil_constant(params, rho),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d: usize, p: usize, alpha: f64, c: f64) -> ModelParams {
        ModelParams::new(d, p, alpha, c).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(p(1, 2, 1.0, 1.0).psi(&[0.0]), 0.0);
        assert_eq!(p(1, 2, 1.0, 1.0).psi(&[2.0]), 2.0);
        assert_eq!(p(2, 2, 2.0, 1.0).psi(&[3.0, 4.0]), 25.0);
    }

    #[test]
    fn q_examples() {
        assert_eq!(p(1, 2, 1.0, 1.0).q(&[0.0]), 1.0);
        assert_eq!(p(1, 2, 1.0, 1.0).q(&[1.0]), 0.5);
        assert!((p(1, 1, 2.0, 1.0).q(&[3.0]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn existence_condition_is_enforced() {
        assert!(matches!(
            ModelParams::new(2, 1, 1.0, 1.0),
            Err(Error::ExistenceCondition { .. })
        ));
        assert!(ModelParams::new(1, 1, 1.0, 1.0).is_err()); // d = alpha p
        assert!(ModelParams::new(1, 1, 2.5, 1.0).is_err());
        assert!(ModelParams::new(1, 1, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1, 2, 1.0, -1.0).is_err());
    }

    #[test]
    fn upper_bound_closed_forms() {
        let spec = QuadratureSpec::default();
        let cases = [
            (p(1, 2, 1.0, 1.0), 2.0),
            (p(1, 1, 2.0, 1.0), PI),
            (p(1, 3, 1.0, 1.0), 1.0),
        ];
        for (params, expect) in cases {
            let ub = rho_upper_bound(&params, &spec).unwrap();
            assert!(
                ((ub.value - expect) / expect).abs() < 1e-5,
                "{params:?}: {} vs {expect}",
                ub.value
            );
            assert!(ub.tail_bound <= 1e-3 * ub.value * 1.0001);
            assert!(!ub.divergence_warning);
        }
    }

    #[test]
    fn upper_bound_two_dimensions() {
        // d = 2, p = 2, alpha = 2: 2 pi int r (1+r^2)^-2 dr = pi
        let ub = rho_upper_bound(&p(2, 2, 2.0, 1.0), &QuadratureSpec::default()).unwrap();
        assert!((ub.value - PI).abs() < 1e-5 * PI, "{}", ub.value);
    }

    #[test]
    fn upper_bound_decreases_in_p() {
        let spec = QuadratureSpec::default();
        let mut last = f64::INFINITY;
        for pp in 2..6 {
            let v = rho_upper_bound(&p(1, pp, 1.0, 1.0), &spec).unwrap().value;
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn ldp_constant_examples() {
        let params = p(1, 2, 1.0, 1.0);
        assert!((ldp_rate_constant(&params, 1.0) - PI).abs() < 1e-12);
        assert!((ldp_rate_constant(&params, 2.0) - PI / 2.0).abs() < 1e-12);
        let classic = p(1, 1, 2.0, 1.0);
        let expect = (2.0 * PI).powi(2) * 0.5 * 0.5 * PI.powi(-2);
        assert!((ldp_rate_constant(&classic, PI) - expect).abs() < 1e-12);
    }

    #[test]
    fn lil_constant_examples() {
        let params = p(1, 2, 1.0, 1.0);
        assert!((lil_constant(&params, PI) - 1.0).abs() < 1e-12);
        assert!((lil_constant(&params, 1.0) - 1.0 / PI).abs() < 1e-12);
        let q = p(1, 3, 0.7, 2.0);
        assert!((lil_constant(&q, 2.6) - 2.0 * lil_constant(&q, 1.3)).abs() < 1e-12);
    }

    #[test]
    fn ldp_constant_times_rho_power_is_invariant() {
        for params in [p(1, 2, 1.0, 1.0), p(2, 3, 1.5, 0.5), p(1, 1, 1.7, 3.0)] {
            let r = params.alpha / params.d as f64;
            let base = ldp_rate_constant(&params, 1.0);
            for rho in [0.5, 1.0, 2.0, 5.0] {
                let v = ldp_rate_constant(&params, rho) * rho.powf(r);
                assert!((v - base).abs() < 1e-12 * base);
            }
        }
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }
}
