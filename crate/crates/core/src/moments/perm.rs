//! Sums over permutations of products of `Q` at prefix sums.
//!
//! `P(l_1..l_n) = sum_sigma prod_k Q(l_sigma(1) + ... + l_sigma(k))`.
//! The `k`-th factor depends only on the set `{sigma(1), .., sigma(k)}`, so
//! `F(S) = Q(sum S) * sum_{i in S} F(S \ {i})` with `F({}) = 1` gives the sum
//! in `O(2^n n)` instead of `O(n! n)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const NAIVE_MAX_N: usize = 8;
pub const DP_MAX_N: usize = 24;

/// `n` points of `R^d`, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTuple {
    pub d: usize,
    pub points: Vec<f64>,
}

impl FrequencyTuple {
    pub fn new(d: usize, points: Vec<f64>) -> Result<Self> {
        if d == 0 || points.len() % d != 0 {
            return Err(invalid("tuple", "length is not a multiple of d"));
        }
        Ok(Self { d, points })
    }

    pub fn from_scalars(xs: &[f64]) -> Self {
        Self {
            d: 1,
            points: xs.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.d..(k + 1) * self.d]
    }
}

/// Explicit enumeration of all `n!` orderings.
pub fn perm_prefix_sum_naive<Q: Fn(&[f64]) -> f64>(tuple: &FrequencyTuple, q: Q) -> Result<f64> {
    let n = tuple.n();
    if n > NAIVE_MAX_N {
        return Err(invalid("n", format!("naive enumeration refuses n = {n} > {NAIVE_MAX_N}")));
    }
    let d = tuple.d;
    let mut sums = vec![0.0; (n + 1) * d];
    Ok(naive_rec(tuple, &q, 0, 0u32, &mut sums))
}

fn naive_rec<Q: Fn(&[f64]) -> f64>(
    tuple: &FrequencyTuple,
    q: &Q,
    depth: usize,
    used: u32,
    sums: &mut [f64],
) -> f64 {
    let n = tuple.n();
    if depth == n {
        return 1.0;
    }
    let d = tuple.d;
    let mut total = 0.0;
    for i in 0..n {
        if used & (1 << i) != 0 {
            continue;
        }
        let (head, tail) = sums.split_at_mut((depth + 1) * d);
        let prev = &head[depth * d..];
        let x = tuple.point(i);
        for a in 0..d {
            tail[a] = prev[a] + x[a];
        }
        let factor = q(&tail[..d]);
        total += factor * naive_rec(tuple, q, depth + 1, used | (1 << i), sums);
    }
    total
}

/// Reusable buffers for the subset recursion.
#[derive(Clone, Debug, Default)]
pub struct PrefixSumDp {
    table: Vec<f64>,
    sum: Vec<f64>,
}

impl PrefixSumDp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn eval<Q: Fn(&[f64]) -> f64>(&mut self, tuple: &FrequencyTuple, q: Q) -> Result<f64> {
        let n = tuple.n();
        if n > DP_MAX_N {
            return Err(invalid("n", format!("subset recursion refuses n = {n} > {DP_MAX_N}")));
        }
        let d = tuple.d;
        let full = 1usize << n;
        self.table.clear();
        self.table.resize(full, 0.0);
        self.sum.clear();
        self.sum.resize(d, 0.0);
        self.table[0] = 1.0;
        for s in 1..full {
            self.sum.iter_mut().for_each(|v| *v = 0.0);
            let mut acc = 0.0;
            let mut bits = s;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                acc += self.table[s ^ (1 << i)];
                let x = tuple.point(i);
                for a in 0..d {
                    self.sum[a] += x[a];
                }
            }
            self.table[s] = q(&self.sum) * acc;
        }
        Ok(self.table[full - 1])
    }
}

/// Subset recursion; agrees with [`perm_prefix_sum_naive`] up to rounding.
pub fn perm_prefix_sum_dp<Q: Fn(&[f64]) -> f64>(tuple: &FrequencyTuple, q: Q) -> Result<f64> {
    PrefixSumDp::new().eval(tuple, q)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cauchy_q(x: &[f64]) -> f64 {
        1.0 / (1.0 + x[0].abs())
    }

    #[test]
    fn small_cases() {
        let t1 = FrequencyTuple::from_scalars(&[1.5]);
        assert_eq!(perm_prefix_sum_naive(&t1, cauchy_q).unwrap(), 0.4);
        assert_eq!(perm_prefix_sum_dp(&t1, cauchy_q).unwrap(), 0.4);
        let t3 = FrequencyTuple::from_scalars(&[0.3, -2.0, 7.0]);
        assert_eq!(perm_prefix_sum_naive(&t3, |_| 1.0).unwrap(), 6.0);
        assert_eq!(perm_prefix_sum_dp(&t3, |_| 1.0).unwrap(), 6.0);
        let t2 = FrequencyTuple::from_scalars(&[1.0, -1.0]);
        assert_eq!(perm_prefix_sum_naive(&t2, cauchy_q).unwrap(), 1.0);
        assert_eq!(perm_prefix_sum_dp(&t2, cauchy_q).unwrap(), 1.0);
    }

    #[test]
    fn size_limits() {
        let t9 = FrequencyTuple::from_scalars(&[0.0; 9]);
        assert!(perm_prefix_sum_naive(&t9, cauchy_q).is_err());
        assert!(perm_prefix_sum_dp(&t9, cauchy_q).is_ok());
        let t25 = FrequencyTuple::from_scalars(&[0.0; 25]);
        assert!(perm_prefix_sum_dp(&t25, cauchy_q).is_err());
    }

    #[test]
    fn constant_kernel_factorizes() {
        let t = FrequencyTuple::from_scalars(&[0.1, 0.2, -0.4, 3.0, 1.0, 2.0, -5.0, 0.5, 0.25, 9.0]);
        let v = perm_prefix_sum_dp(&t, |_| 0.7).unwrap();
        let expect = factorial(10) * 0.7f64.powi(10);
        assert!((v / expect - 1.0).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dp_matches_naive(xs in prop::collection::vec(-5.0f64..5.0, 1..=7), d2 in any::<bool>()) {
            let d = if d2 && xs.len() % 2 == 0 { 2 } else { 1 };
            let t = FrequencyTuple::new(d, xs).unwrap();
            let q = |x: &[f64]| 1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(1.3));
            let a = perm_prefix_sum_naive(&t, q).unwrap();
            let b = perm_prefix_sum_dp(&t, q).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }

        #[test]
        fn invariant_under_shuffle_and_reflection(xs in prop::collection::vec(-5.0f64..5.0, 1..=8), rot in 0usize..8) {
            let t = FrequencyTuple::from_scalars(&xs);
            let base = perm_prefix_sum_dp(&t, cauchy_q).unwrap();
            let mut ys = xs.clone();
            let k = rot % ys.len();
            ys.rotate_left(k);
            let last = ys.len() - 1;
            ys.swap(0, last);
            let shuffled = perm_prefix_sum_dp(&FrequencyTuple::from_scalars(&ys), cauchy_q).unwrap();
            prop_assert!((shuffled - base).abs() <= 1e-12 * base);
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            let reflected = perm_prefix_sum_dp(&FrequencyTuple::from_scalars(&neg), cauchy_q).unwrap();
            prop_assert!((reflected - base).abs() <= 1e-12 * base);
        }
    }
}
