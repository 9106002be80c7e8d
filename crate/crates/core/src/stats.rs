//! Goodness-of-fit helpers for comparing sampled events with quadrature.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Asymptotic Kolmogorov coefficient at the 1% level.
const KS_C_1PCT: f64 = 1.628;

/// One-sample KS statistic of `samples` against `cdf`. Sorts in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// Two-sample KS statistic. Sorts both inputs in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_critical_1pct(n: usize) -> f64 {
    KS_C_1PCT / (n as f64).sqrt()
}

pub fn ks_two_sample_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_C_1PCT * ((n + m) / (n * m)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `observed` counts against cell probabilities
/// `expected`. Adjacent cells are pooled until each expects at least
/// `min_expected` counts; a short tail is folded into the last pool.
pub fn chi_square(observed: &[u64], expected: &[f64], min_expected: f64) -> ChiSquare {
    assert_eq!(observed.len(), expected.len());
    let n: u64 = observed.iter().sum();
    let n = n as f64;
    let mut pools: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in observed.iter().zip(expected) {
        o += c as f64;
        e += p * n;
        if e >= min_expected {
            pools.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pools.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pools.push((o, e)),
        }
    }
    let statistic = pools.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pools.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map(|d| d.sf(statistic))
            .unwrap_or(f64::NAN)
    };
    ChiSquare {
        statistic,
        dof,
        p_value,
    }
}

/// Half the L1 distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_uniform_grid() {
        let mut xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&mut xs, |x| x);
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let mut a = vec![3.0, 1.0, 2.0];
        let mut b = a.clone();
        assert_eq!(ks_two_sample(&mut a, &mut b), 0.0);
        let mut c = vec![10.0, 11.0, 12.0];
        assert_eq!(ks_two_sample(&mut a, &mut c), 1.0);
    }

    #[test]
    fn chi_square_exact_fit() {
        let c = chi_square(&[25, 25, 25, 25], &[0.25; 4], 5.0);
        assert_eq!(c.statistic, 0.0);
        assert_eq!(c.dof, 3);
        assert!((c.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_pools_sparse_cells() {
        let c = chi_square(&[0, 1, 50, 49, 0], &[0.001, 0.009, 0.5, 0.489, 0.001], 5.0);
        assert_eq!(c.dof, 1);
    }

    #[test]
    fn chi_square_detects_mismatch() {
        let c = chi_square(&[900, 100], &[0.5, 0.5], 5.0);
        assert!(c.p_value < 1e-10);
    }

    #[test]
    fn tv_bounds() {
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(total_variation(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }
}
