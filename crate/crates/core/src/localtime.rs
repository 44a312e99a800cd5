//! Local-time estimators for the additive field `X1(s1) + ... + Xp(sp)`.
//!
//! Two estimators are provided. The occupation histogram bins the field over
//! every `p`-tuple of time cells (left-endpoint rule), so its total mass is
//! exactly the volume of the time box. The mollified estimator integrates
//! the Fejér-type density `h_eps` along the field.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::stablesim::{SheetSample, TimeGrid};

const MAX_P: usize = 3;
/// Keeps cell indices well inside `i64`.
const MAX_HALF_BINS: f64 = 1e12;
const DENSE_LIMIT: usize = 1 << 22;

/// Cube `[-L, L]^d` cut into `bins` cells per axis; `bins` is odd so that the
/// origin is the centre of cell `(0, .., 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub d: usize,
    pub half_width: f64,
    pub bins: usize,
}

impl SpatialGrid {
    pub fn new(d: usize, half_width: f64, bins: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "dimension must be positive"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid("half_width", format!("must be positive, got {half_width}")));
        }
        if bins % 2 == 0 {
            return Err(invalid("bins", format!("must be odd, got {bins}")));
        }
        Ok(Self { d, half_width, bins })
    }

    /// Smallest grid with the given cell width that covers `[-radius, radius]^d`.
    pub fn with_bin_width(d: usize, bin_width: f64, radius: f64) -> Result<Self> {
        if !(bin_width > 0.0) {
            return Err(invalid("bin_width", format!("must be positive, got {bin_width}")));
        }
        let half = (radius.max(0.0) / bin_width - 0.5).ceil().max(0.0);
        if !(half <= MAX_HALF_BINS) {
            return Err(invalid(
                "bin_width",
                format!("radius {radius} needs more than {MAX_HALF_BINS} cells per side at width {bin_width}"),
            ));
        }
        let half = half as usize;
        let bins = 2 * half + 1;
        Self::new(d, bins as f64 * bin_width / 2.0, bins)
    }

    /// Cell width `dt^(1/alpha)`: the spatial scale of one time step.
    pub fn natural_bin_width(params: &ModelParams, dt: f64) -> f64 {
        dt.powf(1.0 / params.alpha)
    }

    /// Grid covering every value the sheet can take on `time_box`, plus `margin`.
    pub fn auto(sheet: &SheetSample, time_box: &[f64], bin_width: f64, margin: f64) -> Result<Self> {
        let counts = box_counts(&sheet.grid, sheet.p(), time_box)?;
        let d = sheet.d();
        let mut radius: f64 = 0.0;
        for axis in 0..d {
            let mut r = 0.0;
            for (j, &n) in counts.iter().enumerate() {
                let m = (0..n.max(1))
                    .map(|k| sheet.point(j, k)[axis].abs())
                    .fold(0.0, f64::max);
                r += m;
            }
            radius = radius.max(r);
        }
        Self::with_bin_width(d, bin_width, radius + margin)
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_width / self.bins as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.bin_width().powi(self.d as i32)
    }

    pub fn half_bins(&self) -> i64 {
        (self.bins / 2) as i64
    }

    fn axis_cell(&self, x: f64) -> i64 {
        (x / self.bin_width() + 0.5).floor() as i64
    }

    /// Cell index of `x`; returns false when `x` lies outside the grid.
    pub fn cell_of(&self, x: &[f64], out: &mut [i64]) -> bool {
        let h = self.half_bins();
        let mut inside = true;
        for (o, &xi) in out.iter_mut().zip(x) {
            let i = self.axis_cell(xi);
            *o = i;
            inside &= i.abs() <= h;
        }
        inside
    }

    pub fn cell_center(&self, idx: &[i64]) -> Vec<f64> {
        let w = self.bin_width();
        idx.iter().map(|&i| i as f64 * w).collect()
    }
}

/// Histogram estimate of `x -> eta^x(time box)`, stored sparsely.
///
/// `indices` holds `d` signed cell coordinates per stored cell, sorted
/// lexicographically; `values` is in units of time^p / space^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField {
    pub grid: SpatialGrid,
    pub time_box: Vec<f64>,
    pub indices: Vec<i64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub mass: f64,
    pub max: f64,
    pub argmax: Vec<f64>,
    pub origin: f64,
    pub occupied_cells: usize,
}

impl LocalTimeField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell(&self, i: usize) -> &[i64] {
        let d = self.grid.d;
        &self.indices[i * d..(i + 1) * d]
    }

    /// `sum value * cell_volume`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn value_at_cell(&self, idx: &[i64]) -> f64 {
        let d = self.grid.d;
        let n = self.values.len();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.indices[mid * d..(mid + 1) * d].cmp(idx) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return self.values[mid],
            }
        }
        0.0
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let mut idx = vec![0i64; self.grid.d];
        if !self.grid.cell_of(x, &mut idx) {
            return 0.0;
        }
        self.value_at_cell(&idx)
    }

    pub fn origin_value(&self) -> f64 {
        self.value_at_cell(&vec![0i64; self.grid.d])
    }

    pub fn summary(&self) -> FieldSummary {
        let (argmax, max) = sup_local_time(self);
        FieldSummary {
            mass: self.mass(),
            max,
            argmax,
            origin: self.origin_value(),
            occupied_cells: self.len(),
        }
    }

    /// CSV rows `x1,..,xd,value` for every occupied cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.d;
        let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for i in 0..self.len() {
            let c = self.grid.cell_center(self.cell(i));
            for x in c {
                write!(w, "{x},")?;
            }
            writeln!(w, "{}", self.values[i])?;
        }
        Ok(())
    }
}

/// Centre and value of the largest cell.
pub fn sup_local_time(field: &LocalTimeField) -> (Vec<f64>, f64) {
    let mut best = None;
    for (i, &v) in field.values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    match best {
        Some((i, v)) => (field.grid.cell_center(field.cell(i)), v),
        None => (vec![0.0; field.grid.d], 0.0),
    }
}

/// Number of whole time cells of each path inside the box.
fn box_counts(grid: &TimeGrid, p: usize, time_box: &[f64]) -> Result<Vec<usize>> {
    if time_box.len() != p {
        return Err(invalid(
            "time_box",
            format!("expected {p} horizons, got {}", time_box.len()),
        ));
    }
    time_box.iter().map(|&t| grid.steps_for(t)).collect()
}

/// Calls `f(time indices, field value)` for every tuple with `k_j < counts[j]`.
fn for_each_point<F: FnMut(&[usize], &[f64])>(sheet: &SheetSample, counts: &[usize], mut f: F) {
    let d = sheet.d();
    let p = counts.len();
    if counts.iter().any(|&n| n == 0) {
        return;
    }
    let mut idx = vec![0usize; p];
    let mut partial = vec![0.0; (p + 1) * d];
    recurse(sheet, counts, 0, &mut idx, &mut partial, &mut f);

    fn recurse<F: FnMut(&[usize], &[f64])>(
        sheet: &SheetSample,
        counts: &[usize],
        level: usize,
        idx: &mut [usize],
        partial: &mut [f64],
        f: &mut F,
    ) {
        let d = sheet.d();
        let p = counts.len();
        if level == p {
            f(idx, &partial[p * d..(p + 1) * d]);
            return;
        }
        for k in 0..counts[level] {
            idx[level] = k;
            let x = sheet.point(level, k);
            let (head, tail) = partial.split_at_mut((level + 1) * d);
            let prev = &head[level * d..];
            for i in 0..d {
                tail[i] = prev[i] + x[i];
            }
            recurse(sheet, counts, level + 1, idx, partial, f);
        }
    }
}

/// Occupation-measure histogram of the field over the time box.
///
/// Every tuple of time cells contributes `dt^p / cell_volume` to the cell
/// holding the field value at its left endpoints.
pub fn occupation_histogram(
    sheet: &SheetSample,
    sgrid: &SpatialGrid,
    time_box: &[f64],
) -> Result<LocalTimeField> {
    let p = sheet.p();
    let d = sheet.d();
    if p > MAX_P {
        return Err(invalid("p", format!("histogram supports p <= {MAX_P}, got {p}")));
    }
    if sgrid.d != d {
        return Err(invalid("grid", "spatial grid dimension differs from the sheet"));
    }
    let counts = box_counts(&sheet.grid, p, time_box)?;

    // Per-axis bounds of the reachable cells, for a dense accumulator.
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    let h = sgrid.half_bins();
    for axis in 0..d {
        let (mut a, mut b) = (0.0, 0.0);
        for (j, &n) in counts.iter().enumerate() {
            let vals = (0..n).map(|k| sheet.point(j, k)[axis]);
            a += vals.clone().fold(f64::INFINITY, f64::min);
            b += vals.fold(f64::NEG_INFINITY, f64::max);
        }
        lo[axis] = sgrid.axis_cell(a).clamp(-h, h);
        hi[axis] = sgrid.axis_cell(b).clamp(-h, h);
    }
    let dense_len = lo
        .iter()
        .zip(&hi)
        .try_fold(1usize, |acc, (l, u)| acc.checked_mul((u - l + 1).max(0) as usize));

    let mut cell = vec![0i64; d];
    let mut failure: Option<Error> = None;
    let (indices, counts_per_cell) = match dense_len {
        Some(len) if len <= DENSE_LIMIT && counts.iter().all(|&n| n > 0) => {
            let mut acc = vec![0u64; len];
            for_each_point(sheet, &counts, |ks, x| {
                if failure.is_some() {
                    return;
                }
                if !sgrid.cell_of(x, &mut cell) {
                    failure = Some(out_of_grid(ks, x, sgrid));
                    return;
                }
                let mut flat = 0usize;
                for axis in 0..d {
                    let span = (hi[axis] - lo[axis] + 1) as usize;
                    flat = flat * span + (cell[axis] - lo[axis]) as usize;
                }
                acc[flat] += 1;
            });
            let mut indices = Vec::new();
            let mut cnt = Vec::new();
            for (flat, &c) in acc.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let mut rem = flat;
                let start = indices.len();
                indices.resize(start + d, 0);
                for axis in (0..d).rev() {
                    let span = (hi[axis] - lo[axis] + 1) as usize;
                    indices[start + axis] = lo[axis] + (rem % span) as i64;
                    rem /= span;
                }
                cnt.push(c);
            }
            (indices, cnt)
        }
        _ => {
            let mut keys: Vec<i64> = Vec::new();
            for_each_point(sheet, &counts, |ks, x| {
                if failure.is_some() {
                    return;
                }
                if !sgrid.cell_of(x, &mut cell) {
                    failure = Some(out_of_grid(ks, x, sgrid));
                    return;
                }
                keys.extend_from_slice(&cell);
            });
            let mut rows: Vec<&[i64]> = keys.chunks(d).collect();
            rows.sort_unstable();
            let mut indices = Vec::new();
            let mut cnt: Vec<u64> = Vec::new();
            for r in rows {
                if indices.len() >= d && &indices[indices.len() - d..] == r {
                    *cnt.last_mut().unwrap() += 1;
                } else {
                    indices.extend_from_slice(r);
                    cnt.push(1);
                }
            }
            (indices, cnt)
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let dt = sheet.grid.dt();
    let unit = dt.powi(p as i32) / sgrid.cell_volume();
    Ok(LocalTimeField {
        grid: *sgrid,
        time_box: time_box.to_vec(),
        indices,
        values: counts_per_cell.iter().map(|&c| c as f64 * unit).collect(),
    })
}

fn out_of_grid(ks: &[usize], x: &[f64], sgrid: &SpatialGrid) -> Error {
    Error::OutOfGrid {
        indices: ks.to_vec(),
        value: x.to_vec(),
        half_width: sgrid.half_width,
    }
}

/// Histogram value in the origin cell of an unbounded grid with cell width
/// `bin_width`; equal to `occupation_histogram(..).origin_value()` whenever
/// the histogram exists. Uses sorting instead of a full histogram when
/// `d = 1, p = 2`.
pub fn origin_occupation(sheet: &SheetSample, bin_width: f64, time_box: &[f64]) -> Result<f64> {
    let p = sheet.p();
    let d = sheet.d();
    let counts = box_counts(&sheet.grid, p, time_box)?;
    let dt = sheet.grid.dt();
    let unit = dt.powi(p as i32) / bin_width.powi(d as i32);
    let in_origin = |x: f64| (x / bin_width + 0.5).floor() as i64;
    let hits: u64 = if d == 1 && p == 2 {
        let mut b: Vec<f64> = (0..counts[1]).map(|k| sheet.point(1, k)[0]).collect();
        b.sort_by(|u, v| u.total_cmp(v));
        (0..counts[0])
            .map(|k| {
                let a = sheet.point(0, k)[0];
                let first = b.partition_point(|&y| in_origin(a + y) < 0);
                let end = b.partition_point(|&y| in_origin(a + y) <= 0);
                (end - first) as u64
            })
            .sum()
    } else {
        if p > MAX_P {
            return Err(invalid("p", format!("histogram supports p <= {MAX_P}, got {p}")));
        }
        let mut n = 0u64;
        for_each_point(sheet, &counts, |_, x| {
            if x.iter().all(|&xi| in_origin(xi) == 0) {
                n += 1;
            }
        });
        n
    };
    Ok(hits as f64 * unit)
}

/// Fejér-type mollifier `h(x) = (4 pi)^-d prod (2 sin x_k / x_k)^2`, rescaled
/// to `h_eps(x) = eps^-d h(x / eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub epsilon: f64,
    pub d: usize,
}

impl Mollifier {
    pub fn new(epsilon: f64, d: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("eps", format!("must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, d })
    }

    pub fn normalizer(&self) -> f64 {
        (4.0 * std::f64::consts::PI).powi(self.d as i32)
    }

    /// Unscaled one-dimensional factor `(2 sin u / u)^2`.
    pub fn fejer(u: f64) -> f64 {
        let s = if u.abs() < 1e-4 {
            1.0 - u * u / 6.0
        } else {
            u.sin() / u
        };
        4.0 * s * s
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let e = self.epsilon;
        let prod: f64 = x.iter().map(|&xi| Self::fejer(xi / e)).product();
        prod / (self.normalizer() * e.powi(self.d as i32))
    }

    /// `int h_eps(x) e^{i lambda x} dx = prod (1 - eps |lambda_k| / 2)_+`.
    pub fn fourier(&self, lambda: &[f64]) -> f64 {
        lambda
            .iter()
            .map(|&l| (1.0 - self.epsilon * l.abs() / 2.0).max(0.0))
            .product()
    }
}

/// Left-endpoint quadrature weights of `[0, horizon]` on the sheet's time grid.
pub fn horizon_weights(grid: &TimeGrid, horizon: f64) -> Result<Vec<f64>> {
    let dt = grid.dt();
    if !(horizon >= 0.0) || horizon > grid.t_max * (1.0 + 1e-12) {
        return Err(invalid(
            "time_box",
            format!("horizon {horizon} outside [0, {}]", grid.t_max),
        ));
    }
    let n = ((horizon / dt).ceil() as usize).min(grid.steps);
    Ok((0..n)
        .map(|k| (horizon - k as f64 * dt).clamp(0.0, dt))
        .collect())
}

/// `eta_eps^x` over a grid-aligned time box: `sum h_eps(Xbar(s) - x) dt^p`.
pub fn mollified_local_time(sheet: &SheetSample, eps: f64, x: &[f64], time_box: &[f64]) -> Result<f64> {
    box_counts(&sheet.grid, sheet.p(), time_box)?;
    let m = Mollifier::new(eps, sheet.d())?;
    mollified_local_time_weighted(sheet, &m, x, time_box)
}

/// Mollified local time over `prod [0, horizons_j]` with arbitrary horizons;
/// a partial last time cell enters with its fractional length.
pub fn mollified_local_time_weighted(
    sheet: &SheetSample,
    moll: &Mollifier,
    x: &[f64],
    horizons: &[f64],
) -> Result<f64> {
    let p = sheet.p();
    if horizons.len() != p {
        return Err(invalid("time_box", format!("expected {p} horizons")));
    }
    if x.len() != sheet.d() {
        return Err(invalid("x", "point dimension differs from the sheet"));
    }
    let weights: Vec<Vec<f64>> = horizons
        .iter()
        .map(|&t| horizon_weights(&sheet.grid, t))
        .collect::<Result<_>>()?;
    let counts: Vec<usize> = weights.iter().map(Vec::len).collect();
    let mut total = 0.0;
    let mut shifted = vec![0.0; x.len()];
    for_each_point(sheet, &counts, |ks, y| {
        let w: f64 = ks.iter().zip(&weights).map(|(&k, wj)| wj[k]).product();
        for i in 0..y.len() {
            shifted[i] = y[i] - x[i];
        }
        total += w * moll.density(&shifted);
    });
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussLegendre;
    use crate::stablesim::simulate_sheet;

    fn zero_sheet(p: usize, steps: usize) -> SheetSample {
        let params = ModelParams { d: 1, p, alpha: 2.0, c: 1.0 };
        let grid = TimeGrid::new(1.0, steps).unwrap();
        SheetSample::from_paths(params, grid, vec![vec![0.0; steps + 1]; p]).unwrap()
    }

    #[test]
    fn degenerate_path_puts_all_mass_at_origin() {
        let sheet = zero_sheet(1, 10);
        let g = SpatialGrid::new(1, 1.0, 5).unwrap();
        let f = occupation_histogram(&sheet, &g, &[1.0]).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.cell(0), &[0]);
        assert!((f.values[0] - 1.0 / g.cell_volume()).abs() < 1e-12);
    }

    #[test]
    fn oversized_grid_is_an_error() {
        assert!(SpatialGrid::with_bin_width(1, 0.05, 1e20).is_err());
        assert!(SpatialGrid::with_bin_width(1, 0.05, f64::INFINITY).is_err());
        assert_eq!(SpatialGrid::with_bin_width(1, 0.5, 1.0).unwrap().half_bins(), 2);
    }

    #[test]
    fn mass_is_conserved() {
        let params = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 60).unwrap();
        for s in 0..5 {
            let sheet = simulate_sheet(&params, &grid, 1, s);
            let g = SpatialGrid::auto(&sheet, &[1.0, 0.5], 0.05, 0.0).unwrap();
            let f = occupation_histogram(&sheet, &g, &[1.0, 0.5]).unwrap();
            assert!((f.mass() - 0.5).abs() < 1e-12, "{}", f.mass());
        }
    }

    #[test]
    fn dense_and_sorted_accumulators_agree() {
        let params = ModelParams { d: 2, p: 2, alpha: 1.5, c: 1.0 };
        let grid = TimeGrid::new(1.0, 30).unwrap();
        let sheet = simulate_sheet(&params, &grid, 2, 0);
        let g = SpatialGrid::auto(&sheet, &[1.0, 1.0], 0.1, 0.0).unwrap();
        let dense = occupation_histogram(&sheet, &g, &[1.0, 1.0]).unwrap();
        // Points are binned identically; only the bookkeeping path differs.
        let mut keys = Vec::new();
        let mut cell = [0i64; 2];
        for_each_point(&sheet, &[30, 30], |_, x| {
            assert!(g.cell_of(x, &mut cell));
            keys.push(cell);
        });
        keys.sort();
        keys.dedup();
        let flat: Vec<i64> = keys.concat();
        assert_eq!(flat, dense.indices);
    }

    #[test]
    fn out_of_grid_is_reported() {
        let params = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let sheet = simulate_sheet(&params, &grid, 3, 0);
        let g = SpatialGrid::new(1, 1e-6, 1).unwrap();
        match occupation_histogram(&sheet, &g, &[1.0, 1.0]) {
            Err(Error::OutOfGrid { indices, .. }) => assert_eq!(indices.len(), 2),
            other => panic!("expected OutOfGrid, got {other:?}"),
        }
    }

    #[test]
    fn fast_origin_matches_histogram() {
        let params = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        for s in 0..10 {
            let sheet = simulate_sheet(&params, &grid, 4, s);
            let w = 0.01;
            let g = SpatialGrid::auto(&sheet, &[1.0, 1.0], w, 0.0).unwrap();
            let f = occupation_histogram(&sheet, &g, &[1.0, 1.0]).unwrap();
            let fast = origin_occupation(&sheet, w, &[1.0, 1.0]).unwrap();
            assert!((fast - f.origin_value()).abs() <= 1e-12 * fast.max(1.0));
        }
    }

    #[test]
    fn sup_dominates_origin() {
        let params = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let sheet = simulate_sheet(&params, &grid, 5, 0);
        let g = SpatialGrid::auto(&sheet, &[1.0, 1.0], 0.02, 0.0).unwrap();
        let f = occupation_histogram(&sheet, &g, &[1.0, 1.0]).unwrap();
        let (_, m) = sup_local_time(&f);
        assert!(m >= f.origin_value());
        let single = LocalTimeField {
            grid: g,
            time_box: vec![1.0],
            indices: vec![3],
            values: vec![2.0],
        };
        assert_eq!(sup_local_time(&single), (vec![3.0 * g.bin_width()], 2.0));
    }

    /// Uniform-panel integral over `[-x_max, x_max]` plus the mean tail of
    /// an integrand behaving like `4 sin^2(u) / u^2`.
    fn fejer_like_integral<F: Fn(f64) -> f64>(f: F, x_max: f64, tail: f64) -> f64 {
        let gl = GaussLegendre::new(8);
        let panels = (2.0 * x_max / 0.25) as usize;
        let w = 2.0 * x_max / panels as f64;
        let body: f64 = (0..panels)
            .map(|i| {
                let a = -x_max + i as f64 * w;
                gl.integrate(a, a + w, &f)
            })
            .sum();
        body + tail
    }

    #[test]
    fn mollifier_normalization() {
        let x_max = 2000.0 * std::f64::consts::PI;
        // int_{|u| > X} 4 sin^2 u / u^2 du is 4 / X up to O(X^-2).
        let total = fejer_like_integral(Mollifier::fejer, x_max, 4.0 / x_max);
        assert!((total / (4.0 * std::f64::consts::PI) - 1.0).abs() < 1e-6, "{total}");
        let m = Mollifier::new(0.3, 1).unwrap();
        let scaled = fejer_like_integral(|x| m.density(&[x]), x_max, 4.0 * 0.3 / x_max / m.normalizer());
        assert!((scaled - 1.0).abs() < 1e-6, "{scaled}");
        let m2 = Mollifier::new(1.0, 2).unwrap();
        assert_eq!(m2.fourier(&[0.0, 0.0]), 1.0);
        assert_eq!(m2.fourier(&[2.0, 0.0]), 0.0);
        // Fourier value at zero is C^-1 (2 pi)^d 2^d.
        let c = m2.normalizer();
        assert!(((2.0 * std::f64::consts::PI).powi(2) * 4.0 / c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mollified_fourier_transform_matches_quadrature() {
        let m = Mollifier::new(0.5, 1).unwrap();
        for lam in [0.5, 1.7, 3.0, 5.0] {
            let v = fejer_like_integral(|x| m.density(&[x]) * (lam * x).cos(), 2000.0, 0.0);
            assert!((v - m.fourier(&[lam])).abs() < 1e-4, "{lam}: {v}");
        }
    }

    #[test]
    fn weighted_horizon_matches_aligned_box() {
        let params = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let sheet = simulate_sheet(&params, &grid, 6, 0);
        let a = mollified_local_time(&sheet, 0.1, &[0.0], &[1.0, 0.5]).unwrap();
        let m = Mollifier::new(0.1, 1).unwrap();
        let b = mollified_local_time_weighted(&sheet, &m, &[0.0], &[1.0, 0.5]).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());
        let w = horizon_weights(&grid, 0.3333).unwrap();
        assert!((w.iter().sum::<f64>() - 0.3333).abs() < 1e-12);
    }

    #[test]
    fn csv_export_lists_cells() {
        let sheet = zero_sheet(2, 4);
        let g = SpatialGrid::new(1, 1.0, 3).unwrap();
        let f = occupation_histogram(&sheet, &g, &[1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,value\n0,"));
        let s = f.summary();
        assert!((s.mass - 1.0).abs() < 1e-12);
        assert_eq!(s.argmax, vec![0.0]);
    }
}
