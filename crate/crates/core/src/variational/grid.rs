//! Symmetric grids `[-L, L]^d` and FFT-based correlations on them.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Grid of `2 round(L/h) + 1` nodes per axis, spacing `h`, centred at 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub half_width: f64,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(d: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(invalid("d", format!("grid solvers support d in {{1, 2}}, got {d}")));
        }
        if !(spacing > 0.0 && half_width >= spacing) {
            return Err(invalid(
                "grid",
                format!("need 0 < h <= L, got L = {half_width}, h = {spacing}"),
            ));
        }
        Ok(Self {
            d,
            half_width,
            spacing,
        })
    }

    /// `L = 40, h = 0.05` in one dimension; coarser in two.
    pub fn default_for(d: usize) -> Self {
        match d {
            1 => Self {
                d,
                half_width: 40.0,
                spacing: 0.05,
            },
            _ => Self {
                d,
                half_width: 12.0,
                spacing: 0.15,
            },
        }
    }

    /// Doubles `L` and halves `h`.
    pub fn refined(&self) -> Self {
        Self {
            d: self.d,
            half_width: 2.0 * self.half_width,
            spacing: self.spacing / 2.0,
        }
    }

    pub fn half_nodes(&self) -> usize {
        (self.half_width / self.spacing).round() as usize
    }

    pub fn nodes_per_axis(&self) -> usize {
        2 * self.half_nodes() + 1
    }

    pub fn len(&self) -> usize {
        self.nodes_per_axis().pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`.
    pub fn cell(&self) -> f64 {
        self.spacing.powi(self.d as i32)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        (i as f64 - self.half_nodes() as f64) * self.spacing
    }

    /// Coordinates of flat node `k` (row-major, last axis fastest).
    pub fn point(&self, k: usize) -> Vec<f64> {
        let n = self.nodes_per_axis();
        let mut out = vec![0.0; self.d];
        let mut rem = k;
        for a in (0..self.d).rev() {
            out[a] = self.axis_coord(rem % n);
            rem /= n;
        }
        out
    }

    /// Tabulate `f` at every node.
    pub fn tabulate<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|k| f(&self.point(k))).collect()
    }

    /// Flat index of the node mirrored through the origin.
    pub fn mirror(&self, k: usize) -> usize {
        self.len() - 1 - k
    }
}

/// Values on the nodes of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(invalid("values", "length does not match the grid"));
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(spec: GridSpec, f: F) -> Self {
        Self {
            values: spec.tabulate(f),
            spec,
        }
    }

    /// `(h^d sum f^2)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        weighted_norm(&self.values, self.spec.cell(), 2.0)
    }

    /// `(h^d sum |f|^q)^{1/q}`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        weighted_norm(&self.values, self.spec.cell(), q)
    }

    pub fn is_unit(&self) -> bool {
        (self.l2_norm() - 1.0).abs() <= 1e-10
    }

    pub fn normalize_l2(&mut self) {
        let n = self.l2_norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
    }

    pub fn normalize_lq(&mut self, q: f64) {
        let n = self.lq_norm(q);
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
    }

    pub fn is_even(&self, tol: f64) -> bool {
        (0..self.values.len())
            .all(|k| (self.values[k] - self.values[self.spec.mirror(k)]).abs() <= tol)
    }
}

pub(crate) fn weighted_norm(v: &[f64], w: f64, q: f64) -> f64 {
    (w * v.iter().map(|x| x.abs().powf(q)).sum::<f64>()).powf(1.0 / q)
}

/// Zero-padded `d`-dimensional FFT engine (`d <= 2`) for lag arrays.
///
/// A grid of `n` nodes per axis is embedded at the start of a `P`-periodic
/// array with `P >= 2n - 1`, so correlations over all lags `|l| <= n - 1`
/// come out free of wrap-around. Lag `l` lives at padded index `l mod P`.
#[derive(Clone)]
pub struct Correlator {
    d: usize,
    n: usize,
    pub padded: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    aux: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Correlator {
    pub fn new(d: usize, n: usize) -> Self {
        Self::with_padding(d, n, (2 * n - 1).next_power_of_two())
    }

    pub fn with_padding(d: usize, n: usize, padded: usize) -> Self {
        assert!((1..=2).contains(&d));
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(padded);
        let inv = planner.plan_fft_inverse(padded);
        let total = padded.pow(d as u32);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            d,
            n,
            padded,
            fwd,
            inv,
            buf: vec![Complex::default(); total],
            aux: vec![Complex::default(); total],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn padded_len(&self) -> usize {
        self.padded.pow(self.d as u32)
    }

    /// Padded flat index of node `k` of the unpadded grid.
    pub fn embed_index(&self, k: usize) -> usize {
        if self.d == 1 {
            k
        } else {
            (k / self.n) * self.padded + k % self.n
        }
    }

    /// Signed lag vector stored at padded index `k`.
    pub fn lag_of(&self, k: usize) -> Vec<i64> {
        let p = self.padded as i64;
        let unwrap = |i: i64| if i > p / 2 { i - p } else { i };
        if self.d == 1 {
            vec![unwrap(k as i64)]
        } else {
            vec![unwrap((k / self.padded) as i64), unwrap((k % self.padded) as i64)]
        }
    }

    fn transform(&mut self, inverse: bool, data: Which) {
        let plan = if inverse { self.inv.clone() } else { self.fwd.clone() };
        let p = self.padded;
        let target = match data {
            Which::Buf => &mut self.buf,
            Which::Aux => &mut self.aux,
        };
        plan.process_with_scratch(target, &mut self.scratch);
        if self.d == 2 {
            let mut col = vec![Complex::default(); p];
            for c in 0..p {
                for r in 0..p {
                    col[r] = target[r * p + c];
                }
                plan.process_with_scratch(&mut col, &mut self.scratch);
                for r in 0..p {
                    target[r * p + c] = col[r];
                }
            }
        }
    }

    /// `b(l) = sum_k a(k + l) a(k)` over all lags, in padded layout.
    pub fn autocorrelation(&mut self, a: &[f64]) -> Vec<f64> {
        self.buf.iter_mut().for_each(|z| *z = Complex::default());
        for (k, &v) in a.iter().enumerate() {
            let i = self.embed_index(k);
            self.buf[i] = Complex::new(v, 0.0);
        }
        self.transform(false, Which::Buf);
        for z in self.buf.iter_mut() {
            *z = Complex::new(z.norm_sqr(), 0.0);
        }
        self.transform(true, Which::Buf);
        let scale = 1.0 / self.padded_len() as f64;
        self.buf.iter().map(|z| z.re * scale).collect()
    }

    /// `out(m) = sum_l c(l) a(m + l)` for every grid node `m`, with `c` an
    /// even lag array in padded layout.
    pub fn correlate_even(&mut self, a: &[f64], c: &[f64]) -> Vec<f64> {
        self.buf.iter_mut().for_each(|z| *z = Complex::default());
        for (k, &v) in a.iter().enumerate() {
            let i = self.embed_index(k);
            self.buf[i] = Complex::new(v, 0.0);
        }
        for (z, &v) in self.aux.iter_mut().zip(c) {
            *z = Complex::new(v, 0.0);
        }
        self.transform(false, Which::Buf);
        self.transform(false, Which::Aux);
        for (x, y) in self.buf.iter_mut().zip(&self.aux) {
            *x *= y.conj();
        }
        self.transform(true, Which::Buf);
        let scale = 1.0 / self.padded_len() as f64;
        (0..a.len())
            .map(|k| self.buf[self.embed_index(k)].re * scale)
            .collect()
    }
}

#[derive(Clone, Copy)]
enum Which {
    Buf,
    Aux,
}

/// `O(N^2)` reference for [`Correlator::autocorrelation`].
pub fn autocorrelation_direct(spec: &GridSpec, corr: &Correlator, a: &[f64]) -> Vec<f64> {
    let n = spec.nodes_per_axis() as i64;
    let mut out = vec![0.0; corr.padded_len()];
    for (k, slot) in out.iter_mut().enumerate() {
        let lag = corr.lag_of(k);
        if lag.iter().any(|l| l.abs() >= n) {
            continue;
        }
        let mut s = 0.0;
        match spec.d {
            1 => {
                for i in 0..n {
                    let j = i + lag[0];
                    if (0..n).contains(&j) {
                        s += a[j as usize] * a[i as usize];
                    }
                }
            }
            _ => {
                for i0 in 0..n {
                    for i1 in 0..n {
                        let (j0, j1) = (i0 + lag[0], i1 + lag[1]);
                        if (0..n).contains(&j0) && (0..n).contains(&j1) {
                            s += a[(j0 * n + j1) as usize] * a[(i0 * n + i1) as usize];
                        }
                    }
                }
            }
        }
        *slot = s;
    }
    out
}
