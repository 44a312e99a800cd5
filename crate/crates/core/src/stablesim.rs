//! Exact-in-distribution sampling of symmetric stable increments.
//!
//! The increment over a step `dt` has characteristic function
//! `exp(-dt * c * |l|^alpha)`:
//!
//! * `alpha = 2`: centred Gaussian with variance `2 c dt` per coordinate;
//! * `d = 1`: Chambers–Mallows–Stuck transform;
//! * `d >= 2`, `alpha < 2`: `sqrt(A) Z` with `Z` standard normal and `A` a
//!   positive `(alpha/2)`-stable variable, `E exp(-u A) = exp(-dt c (2u)^{alpha/2})`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, steps: usize) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(invalid("t_max", format!("must be positive, got {t_max}")));
        }
        if steps == 0 {
            return Err(invalid("steps", "need at least one step"));
        }
        Ok(Self { t_max, steps })
    }

    /// Grid with a fixed step covering at least `t_max`.
    pub fn with_step(t_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let steps = ((t_max / dt) - 1e-9).ceil().max(1.0) as usize;
        Self::new(steps as f64 * dt, steps)
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Number of whole steps in `[0, t]`; errors unless `t` is on the grid.
    pub fn steps_for(&self, t: f64) -> Result<usize> {
        let k = t / self.dt();
        let kr = k.round();
        if (k - kr).abs() > 1e-6 || kr < 0.0 || kr as usize > self.steps {
            return Err(invalid(
                "time_box",
                format!("t = {t} is not a grid time of {self:?}"),
            ));
        }
        Ok(kr as usize)
    }
}

/// Draw one increment of `X` over a step of length `dt` into `out` (length `d`).
pub fn sample_increment_into(params: &ModelParams, dt: f64, rng: &mut StreamRng, out: &mut [f64]) {
    debug_assert_eq!(out.len(), params.d);
    let alpha = params.alpha;
    let scale_time = params.c * dt;
    if alpha == 2.0 {
        let sd = (2.0 * scale_time).sqrt();
        for x in out.iter_mut() {
            *x = sd * rng.normal();
        }
    } else if params.d == 1 {
        out[0] = scale_time.powf(1.0 / alpha) * standard_symmetric_stable(alpha, rng);
    } else {
        let beta = alpha / 2.0;
        // E exp(-u A) = exp(-(k u)^beta) with k^beta = c dt 2^{alpha/2}.
        let k = 2.0 * scale_time.powf(1.0 / beta);
        let a = k * positive_stable(beta, rng);
        let s = a.sqrt();
        for x in out.iter_mut() {
            *x = s * rng.normal();
        }
    }
}

pub fn sample_increment(params: &ModelParams, dt: f64, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if !(params.alpha > 0.0 && params.alpha <= 2.0) {
        return Err(invalid("alpha", format!("must lie in (0, 2], got {}", params.alpha)));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let mut out = vec![0.0; params.d];
    sample_increment_into(params, dt, rng, &mut out);
    Ok(out)
}

/// Standard symmetric stable variable with `E exp(i l S) = exp(-|l|^alpha)`.
pub fn standard_symmetric_stable(alpha: f64, rng: &mut StreamRng) -> f64 {
    let v = rng.uniform(-FRAC_PI_2, FRAC_PI_2);
    if alpha == 1.0 {
        return v.tan();
    }
    if alpha == 2.0 {
        return std::f64::consts::SQRT_2 * rng.normal();
    }
    let w = rng.exp1();
    let cos_v = v.cos();
    (alpha * v).sin() / cos_v.powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Positive stable variable with `E exp(-u S) = exp(-u^beta)`, `0 < beta < 1`
/// (Kanter's representation).
pub fn positive_stable(beta: f64, rng: &mut StreamRng) -> f64 {
    debug_assert!(beta > 0.0 && beta < 1.0);
    let u = rng.uniform(0.0, PI);
    let w = rng.exp1();
    let a = (beta * u).sin().powf(beta / (1.0 - beta))
        * ((1.0 - beta) * u).sin()
        / u.sin().powf(1.0 / (1.0 - beta));
    (a / w).powf((1.0 - beta) / beta)
}

/// Positions of `X_1..X_p` at the grid times of one replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheetSample {
    pub params: ModelParams,
    pub grid: TimeGrid,
    /// `paths[j]` holds `(steps + 1) * d` coordinates, time-major.
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
    pub stream_id: u64,
}

impl SheetSample {
    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn p(&self) -> usize {
        self.params.p
    }

    /// `X_j` at grid index `k`.
    pub fn point(&self, j: usize, k: usize) -> &[f64] {
        let d = self.params.d;
        &self.paths[j][k * d..(k + 1) * d]
    }

    /// Build a sheet from explicit paths (tests and degenerate harnesses).
    pub fn from_paths(params: ModelParams, grid: TimeGrid, paths: Vec<Vec<f64>>) -> Result<Self> {
        if paths.len() != params.p {
            return Err(invalid("paths", format!("expected {} paths", params.p)));
        }
        for path in &paths {
            if path.len() != (grid.steps + 1) * params.d {
                return Err(invalid("paths", "path length does not match the grid"));
            }
        }
        Ok(Self {
            params,
            grid,
            paths,
            seed: 0,
            stream_id: 0,
        })
    }

    /// Little-endian binary dump: magic, header, then every path in order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SHEET_MAGIC)?;
        w.write_all(&(self.params.d as u32).to_le_bytes())?;
        w.write_all(&(self.params.p as u32).to_le_bytes())?;
        w.write_all(&self.params.alpha.to_le_bytes())?;
        w.write_all(&self.params.c.to_le_bytes())?;
        w.write_all(&self.grid.t_max.to_le_bytes())?;
        w.write_all(&(self.grid.steps as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.stream_id.to_le_bytes())?;
        for path in &self.paths {
            for x in path {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SHEET_MAGIC {
            return Err(Error::Format("not a sheet dump (bad magic)".into()));
        }
        let d = read_u32(&mut r)? as usize;
        let p = read_u32(&mut r)? as usize;
        let alpha = read_f64(&mut r)?;
        let c = read_f64(&mut r)?;
        let t_max = read_f64(&mut r)?;
        let steps = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let stream_id = read_u64(&mut r)?;
        let params = ModelParams { d, p, alpha, c };
        let grid = TimeGrid::new(t_max, steps)?;
        let mut paths = Vec::with_capacity(p);
        for _ in 0..p {
            let mut path = Vec::with_capacity((steps + 1) * d);
            for _ in 0..(steps + 1) * d {
                path.push(read_f64(&mut r)?);
            }
            paths.push(path);
        }
        Ok(Self {
            params,
            grid,
            paths,
            seed,
            stream_id,
        })
    }
}

const SHEET_MAGIC: &[u8; 8] = b"STSHEET1";

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// One path of `steps` exact increments starting at the origin.
pub fn simulate_path(params: &ModelParams, grid: &TimeGrid, rng: &mut StreamRng) -> Vec<f64> {
    let d = params.d;
    let dt = grid.dt();
    let mut path = vec![0.0; (grid.steps + 1) * d];
    let mut inc = vec![0.0; d];
    for k in 1..=grid.steps {
        sample_increment_into(params, dt, rng, &mut inc);
        for i in 0..d {
            path[k * d + i] = path[(k - 1) * d + i] + inc[i];
        }
    }
    path
}

/// `p` independent paths from the stream `(seed, stream_id)`.
pub fn simulate_sheet(params: &ModelParams, grid: &TimeGrid, seed: u64, stream_id: u64) -> SheetSample {
    let mut rng = StreamRng::new(seed, stream_id);
    let paths = (0..params.p)
        .map(|_| simulate_path(params, grid, &mut rng))
        .collect();
    SheetSample {
        params: *params,
        grid: *grid,
        paths,
        seed,
        stream_id,
    }
}

/// Replicas on consecutive stream ids starting at `first_stream`, computed in
/// parallel and returned in stream order.
pub fn map_replicas<T, F>(count: usize, first_stream: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| f(first_stream + i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean_and_se};

    fn params(d: usize, alpha: f64, c: f64) -> ModelParams {
        ModelParams { d, p: 2, alpha, c }
    }

    fn ecf(xs: &[f64], lambda: f64) -> (f64, f64) {
        let vals: Vec<f64> = xs.iter().map(|x| (lambda * x).cos()).collect();
        mean_and_se(&vals)
    }

    #[test]
    fn gaussian_case_has_unit_variance() {
        let prm = params(1, 2.0, 0.5);
        let mut rng = StreamRng::new(11, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_increment(&prm, 1.0, &mut rng).unwrap()[0])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        // sd of the sample variance of N(0,1) is sqrt(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn cauchy_characteristic_function() {
        let prm = params(1, 1.0, 1.0);
        let mut rng = StreamRng::new(12, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_increment(&prm, 1.0, &mut rng).unwrap()[0])
            .collect();
        for lambda in [0.5, 1.0, 2.0] {
            let (m, se) = ecf(&xs, lambda);
            let expect = (-lambda).exp();
            assert!((m - expect).abs() < 3.0 * se, "lambda={lambda}: {m} vs {expect}");
        }
    }

    #[test]
    fn characteristic_function_across_indices() {
        for alpha in [0.8, 1.0, 1.5, 2.0] {
            for d in [1usize, 2] {
                let prm = ModelParams { d, p: 2, alpha, c: 0.7 };
                let t = 1.3;
                let mut rng = StreamRng::new(13, (alpha * 10.0) as u64 + d as u64);
                let n = 40_000;
                let xs: Vec<Vec<f64>> = (0..n)
                    .map(|_| sample_increment(&prm, t, &mut rng).unwrap())
                    .collect();
                let lambdas: [&[f64]; 5] = if d == 1 {
                    [&[0.3], &[0.7], &[1.0], &[1.6], &[-2.2]]
                } else {
                    [&[0.3, 0.0], &[0.5, 0.5], &[0.0, 1.0], &[-1.2, 0.4], &[1.5, -1.0]]
                };
                for lam in lambdas {
                    let vals: Vec<f64> = xs
                        .iter()
                        .map(|x| x.iter().zip(lam).map(|(a, b)| a * b).sum::<f64>().cos())
                        .collect();
                    let (m, se) = mean_and_se(&vals);
                    let expect = (-t * prm.psi(lam)).exp();
                    assert!(
                        (m - expect).abs() < 4.0 * se.max(1e-4),
                        "alpha={alpha} d={d} lam={lam:?}: {m} vs {expect} (se {se})"
                    );
                }
            }
        }
    }

    #[test]
    fn two_half_steps_match_one_step() {
        for alpha in [0.7, 1.0, 1.6] {
            let prm = params(1, alpha, 1.0);
            let mut rng = StreamRng::new(14, 1);
            let n = 5000;
            let one: Vec<f64> = (0..n)
                .map(|_| sample_increment(&prm, 1.0, &mut rng).unwrap()[0])
                .collect();
            let two: Vec<f64> = (0..n)
                .map(|_| {
                    sample_increment(&prm, 0.5, &mut rng).unwrap()[0]
                        + sample_increment(&prm, 0.5, &mut rng).unwrap()[0]
                })
                .collect();
            let ks = ks_two_sample(&one, &two);
            assert!(ks.p_value > 0.01, "alpha={alpha}: {ks:?}");
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        let prm = ModelParams { d: 1, p: 2, alpha: 2.5, c: 1.0 };
        assert!(sample_increment(&prm, 1.0, &mut StreamRng::new(0, 0)).is_err());
    }

    #[test]
    fn sheet_single_step_gaussian_variance() {
        let prm = ModelParams { d: 1, p: 1, alpha: 2.0, c: 0.8 };
        let grid = TimeGrid::new(1.5, 1).unwrap();
        let xs: Vec<f64> = (0..20_000)
            .map(|s| simulate_sheet(&prm, &grid, 5, s).point(0, 1)[0])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let expect = 2.0 * 0.8 * 1.5;
        assert!((var / expect - 1.0).abs() < 3.0 * (2.0 / xs.len() as f64).sqrt());
    }

    #[test]
    fn sheets_are_deterministic_and_start_at_origin() {
        let prm = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let a = simulate_sheet(&prm, &grid, 99, 3);
        let b = simulate_sheet(&prm, &grid, 99, 3);
        assert_eq!(a, b);
        for j in 0..2 {
            assert_eq!(a.point(j, 0), &[0.0]);
        }
        let c = simulate_sheet(&prm, &grid, 99, 4);
        assert_ne!(a.paths, c.paths);
    }

    #[test]
    fn self_similarity_of_sheets() {
        let alpha = 1.3;
        let prm = ModelParams { d: 1, p: 2, alpha, c: 1.0 };
        let g1 = TimeGrid::new(1.0, 8).unwrap();
        let g2 = TimeGrid::new(2.0, 8).unwrap();
        let n = 3000;
        let scale = 2f64.powf(1.0 / alpha);
        let a: Vec<f64> = (0..n).map(|s| simulate_sheet(&prm, &g1, 1, s).point(0, 5)[0]).collect();
        let b: Vec<f64> = (0..n)
            .map(|s| simulate_sheet(&prm, &g2, 2, s).point(1, 5)[0] / scale)
            .collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn binary_dump_round_trip() {
        let prm = ModelParams { d: 2, p: 2, alpha: 1.5, c: 1.0 };
        let grid = TimeGrid::new(1.0, 7).unwrap();
        let s = simulate_sheet(&prm, &grid, 3, 9);
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 8 * 6 + 2 * 8 * 8 * 2);
        let back = SheetSample::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(SheetSample::read_binary(&b"garbage!"[..]).is_err());
    }

    #[test]
    fn replicas_are_independent_of_worker_count() {
        let prm = ModelParams::cauchy_pair();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let f = |s| simulate_sheet(&prm, &grid, 4, s).point(1, 10)[0];
        let serial: Vec<f64> = (10..30).map(f).collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = pool.install(|| map_replicas(20, 10, f));
        assert_eq!(serial, par);
    }
}
