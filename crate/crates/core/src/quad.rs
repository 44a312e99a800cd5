//! One-dimensional quadrature building blocks.
//!
//! Integrands in this crate are smooth except for kinks or cusps at known
//! breakpoints (wherever a frequency argument of `|.|^alpha` vanishes) and
//! decay polynomially at infinity. The rules below place panel edges on the
//! breakpoints, grow panels geometrically away from them, and extrapolate the
//! truncated half-line tail from the decay of the last two panels.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let pn = if n == 0 { 1.0 } else { p1 };
    let pnm1 = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
    (pn, d)
}

/// Value of a truncated integral together with the extrapolated tail.
///
/// `value` already includes the tail estimate; `tail` is its magnitude.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub tail: f64,
}

impl Integral {
    pub fn relative_tail(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            (self.tail / self.value).abs()
        }
    }
}

/// Composite rule over breakpoint-separated pieces of the real line.
#[derive(Clone, Debug)]
pub struct LineQuadrature {
    rule: GaussLegendre,
    /// Width of the panel adjacent to a breakpoint.
    pub first_panel: f64,
    /// Distance from the outermost breakpoint at which half lines are cut.
    pub cutoff: f64,
}

impl LineQuadrature {
    pub fn new(order: usize, first_panel: f64, cutoff: f64) -> Self {
        assert!(first_panel > 0.0 && cutoff > first_panel);
        Self {
            rule: GaussLegendre::new(order),
            first_panel,
            cutoff,
        }
    }

    /// `int_start^{start + dir*inf} f`, with `dir = +1` or `-1`.
    pub fn half_line<F: FnMut(f64) -> f64>(&self, start: f64, dir: f64, f: F) -> Integral {
        self.half_line_to(start, dir, self.cutoff, f)
    }

    fn half_line_to<F: FnMut(f64) -> f64>(&self, start: f64, dir: f64, cutoff: f64, mut f: F) -> Integral {
        let mut lo = 0.0;
        let mut width = self.first_panel;
        let mut total = 0.0;
        let mut last = 0.0;
        let mut prev = 0.0;
        while lo < cutoff {
            let hi = lo + width;
            let c = self
                .rule
                .integrate(lo, hi, |s| f(start + dir * s));
            total += c;
            prev = last;
            last = c;
            lo = hi;
            // The first panel is followed by one of equal width, then doubling.
            if lo > self.first_panel * 1.5 {
                width *= 2.0;
            }
        }
        // Panels double in width, so a power-law integrand gives a geometric
        // sequence of panel contributions; sum the remainder of that series.
        let tail = if prev != 0.0 && last.signum() == prev.signum() {
            let r = last / prev;
            if r < 1.0 {
                last * r / (1.0 - r)
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        Integral {
            value: total + tail,
            tail: tail.abs(),
        }
    }

    /// Finite segment with kinks allowed at both endpoints.
    pub fn segment<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let len = b - a;
        if len <= 0.0 {
            return 0.0;
        }
        if len <= 4.0 * self.first_panel {
            let mid = 0.5 * (a + b);
            return self.rule.integrate(a, mid, &mut f) + self.rule.integrate(mid, b, &mut f);
        }
        let mut acc = 0.0;
        for (start, dir) in [(a, 1.0), (b, -1.0)] {
            let mut lo = 0.0;
            let mut width = self.first_panel;
            let half = 0.5 * len;
            while lo < half {
                let hi = (lo + width).min(half);
                acc += self.rule.integrate(lo, hi, |s| f(start + dir * s));
                lo = hi;
                width *= 2.0;
            }
        }
        acc
    }

    /// Integral over the real line; `breakpoints` need not be sorted or unique.
    pub fn real_line<F: FnMut(f64) -> f64>(&self, breakpoints: &[f64], mut f: F) -> Integral {
        let mut bps: Vec<f64> = breakpoints.to_vec();
        if bps.is_empty() {
            bps.push(0.0);
        }
        bps.sort_by(|a, b| a.partial_cmp(b).expect("NaN breakpoint"));
        bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        // Power-law decay only sets in well beyond the farthest breakpoint.
        let extent = bps.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let cutoff = self.cutoff.max(64.0 * extent);
        let left = self.half_line_to(bps[0], -1.0, cutoff, &mut f);
        let right = self.half_line_to(*bps.last().unwrap(), 1.0, cutoff, &mut f);
        let mut value = left.value + right.value;
        for w in bps.windows(2) {
            value += self.segment(w[0], w[1], &mut f);
        }
        Integral {
            value,
            tail: left.tail + right.tail,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(6);
        // Degree 11 is the largest integrated exactly by 6 nodes.
        let v = gl.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-9);
        let w: f64 = gl.integrate(-1.0, 1.0, |_| 1.0);
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn half_line_power_law_tail_is_extrapolated() {
        let q = LineQuadrature::new(10, 1.0 / 64.0, 1e3);
        let r = q.half_line(0.0, 1.0, |x| (1.0 + x).powi(-2));
        assert!((r.value - 1.0).abs() < 1e-5, "{r:?}");
        assert!(r.tail > 0.0 && r.tail < 2e-3);
    }

    #[test]
    fn real_line_with_kink() {
        let q = LineQuadrature::new(10, 1.0 / 64.0, 1e4);
        // int exp(-|x-1|) dx = 2
        let r = q.real_line(&[1.0], |x| (-(x - 1.0).abs()).exp());
        assert!((r.value - 2.0).abs() < 1e-10);
        // int (1+|x|)^-3 = 1
        let r = q.real_line(&[0.0], |x| (1.0 + x.abs()).powi(-3));
        assert!((r.value - 1.0).abs() < 1e-8);
    }
}
