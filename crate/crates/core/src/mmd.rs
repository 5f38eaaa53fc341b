//! Maximum mean discrepancy with a Gaussian kernel.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{arg, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median heuristic over paired squared distances.
    Auto,
    /// Explicit sigma squared.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    U2,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    AnalyticLinear,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    pub significance: Significance,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Auto,
            significance: Significance::Permutation,
            permutations: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    pub estimator: Estimator,
    pub value: f64,
    /// `2 Var(h)` for the linear estimator.
    pub variance_estimate: Option<f64>,
    pub sigma2: f64,
    /// One-sided tail probability; small values indicate a difference.
    pub p_value: f64,
    pub reject: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn kern(a: &[f64], b: &[f64], sigma2: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * sigma2)).exp()
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return arg(format!("bandwidth must be positive, got {sigma2}"));
    }
    if x.len() != y.len() {
        return arg("kernel arguments differ in dimension");
    }
    Ok(kern(x, y, sigma2))
}

fn check_pair(r: &[&[f64]], w: &[&[f64]], even: bool) -> Result<()> {
    if r.len() != w.len() {
        return arg(format!("MMD needs equal windows, got {} and {}", r.len(), w.len()));
    }
    if r.len() < 2 {
        return arg("MMD needs at least two points per window");
    }
    if even && r.len() % 2 == 1 {
        return arg(format!("window size {} is odd", r.len()));
    }
    let d = r[0].len();
    if r.iter().chain(w).any(|p| p.len() != d) {
        return arg("points differ in dimension");
    }
    Ok(())
}

/// Median of the paired squared distances `|r_a - r_b|^2`, `|w_a - w_b|^2`,
/// `|r_a - w_b|^2`, `|r_b - w_a|^2` over consecutive pairs `(a, b)`.
pub fn median_bandwidth(r: &[&[f64]], w: &[&[f64]]) -> Result<f64> {
    check_pair(r, w, true)?;
    if r.len() < 4 {
        return arg("median bandwidth needs at least four points per window");
    }
    let mut k: Vec<f64> = Vec::with_capacity(2 * r.len());
    for i in (0..r.len()).step_by(2) {
        let (a, b) = (i, i + 1);
        k.push(sq_dist(r[a], r[b]));
        k.push(sq_dist(w[a], w[b]));
        k.push(sq_dist(r[a], w[b]));
        k.push(sq_dist(r[b], w[a]));
    }
    k.sort_by(f64::total_cmp);
    let mid = k.len() / 2;
    let median = if k.len() % 2 == 0 {
        0.5 * (k[mid - 1] + k[mid])
    } else {
        k[mid]
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Ok(k.into_iter().find(|&v| v > 0.0).unwrap_or(1.0))
    }
}

fn resolve_bandwidth(r: &[&[f64]], w: &[&[f64]], bw: Bandwidth) -> Result<f64> {
    match bw {
        Bandwidth::Auto => median_bandwidth(r, w),
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        Bandwidth::Fixed(s) => arg(format!("bandwidth must be positive, got {s}")),
    }
}

fn u2_from(m: usize, k: impl Fn(usize, usize, u8) -> f64) -> f64 {
    // k(i, j, kind): 0 = r-r, 1 = w-w, 2 = r_i-w_j
    let (mut srr, mut sww, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in i + 1..m {
            srr += k(i, j, 0);
            sww += k(i, j, 1);
            cross += k(i, j, 2) + k(j, i, 2);
        }
    }
    2.0 * ((srr + sww) - cross) / (m as f64 * (m as f64 - 1.0))
}

/// Unbiased quadratic estimate.
pub fn mmd_u2_value(r: &[&[f64]], w: &[&[f64]], sigma2: f64) -> Result<f64> {
    check_pair(r, w, false)?;
    gaussian_kernel(r[0], w[0], sigma2)?;
    Ok(u2_from(r.len(), |i, j, kind| match kind {
        0 => kern(r[i], r[j], sigma2),
        1 => kern(w[i], w[j], sigma2),
        _ => kern(r[i], w[j], sigma2),
    }))
}

fn h_term(r1: &[f64], r2: &[f64], w1: &[f64], w2: &[f64], sigma2: f64) -> f64 {
    (kern(r1, r2, sigma2) + kern(w1, w2, sigma2)) - (kern(r1, w2, sigma2) + kern(r2, w1, sigma2))
}

/// Linear-time estimate and `2 Var(h)`, accumulated in one pass.
pub fn mmd_l2_value(r: &[&[f64]], w: &[&[f64]], sigma2: f64) -> Result<(f64, f64)> {
    check_pair(r, w, true)?;
    gaussian_kernel(r[0], w[0], sigma2)?;
    let (mut n, mut mean, mut m2) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in (0..r.len()).step_by(2) {
        let h = h_term(r[i], r[i + 1], w[i], w[i + 1], sigma2);
        n += 1.0;
        let delta = h - mean;
        mean += delta / n;
        m2 += delta * (h - mean);
    }
    Ok((mean, 2.0 * m2 / n))
}

fn upper_normal_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Permutation p-value: fraction of random equal splits of the pooled
/// sample whose estimate reaches `observed`.
pub fn mmd_permutation_test(
    r: &[&[f64]],
    w: &[&[f64]],
    estimator: Estimator,
    sigma2: f64,
    observed: f64,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    check_pair(r, w, estimator == Estimator::L2)?;
    if iterations < 100 {
        return arg("at least 100 permutations are required");
    }
    gaussian_kernel(r[0], w[0], sigma2)?;
    let m = r.len();
    let mut pool: Vec<&[f64]> = r.iter().chain(w).copied().collect();
    pool.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = pool.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        gram[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = kern(pool[i], pool[j], sigma2);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut hits = 0usize;
    for it in 0..iterations {
        let mut g = rng::stream(seed, &[it as u64]);
        idx.sort_unstable();
        idx.shuffle(&mut g);
        let (a, b) = idx.split_at(m);
        let k = |i: usize, j: usize| gram[i * n + j];
        let value = match estimator {
            Estimator::U2 => u2_from(m, |i, j, kind| match kind {
                0 => k(a[i], a[j]),
                1 => k(b[i], b[j]),
                _ => k(a[i], b[j]),
            }),
            Estimator::L2 => {
                let pairs = m / 2;
                (0..pairs)
                    .map(|p| {
                        let (i, j) = (2 * p, 2 * p + 1);
                        (k(a[i], a[j]) + k(b[i], b[j])) - (k(a[i], b[j]) + k(a[j], b[i]))
                    })
                    .sum::<f64>()
                    / pairs as f64
            }
        };
        if value >= observed {
            hits += 1;
        }
    }
    Ok(hits as f64 / iterations as f64)
}

pub fn mmd_u2(r: &[&[f64]], w: &[&[f64]], cfg: &KernelConfig, alpha: f64) -> Result<MmdResult> {
    let sigma2 = resolve_bandwidth(r, w, cfg.bandwidth)?;
    let value = mmd_u2_value(r, w, sigma2)?;
    let p_value = mmd_permutation_test(r, w, Estimator::U2, sigma2, value, cfg.permutations, cfg.seed)?;
    Ok(MmdResult {
        estimator: Estimator::U2,
        value,
        variance_estimate: None,
        sigma2,
        p_value,
        reject: p_value < alpha,
    })
}

pub fn mmd_l2(r: &[&[f64]], w: &[&[f64]], cfg: &KernelConfig, alpha: f64) -> Result<MmdResult> {
    let sigma2 = resolve_bandwidth(r, w, cfg.bandwidth)?;
    let (value, var) = mmd_l2_value(r, w, sigma2)?;
    let p_value = match cfg.significance {
        Significance::Permutation => {
            mmd_permutation_test(r, w, Estimator::L2, sigma2, value, cfg.permutations, cfg.seed)?
        }
        Significance::AnalyticLinear => {
            let sd = var.sqrt();
            if sd > 0.0 {
                upper_normal_tail((r.len() as f64).sqrt() * value / sd)
            } else if value > 0.0 {
                0.0
            } else {
                1.0
            }
        }
    };
    Ok(MmdResult {
        estimator: Estimator::L2,
        value,
        variance_estimate: Some(var),
        sigma2,
        p_value,
        reject: p_value < alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn one_d(v: &[f64]) -> Vec<&[f64]> {
        v.iter().map(std::slice::from_ref).collect()
    }

    fn normal_rows(seed: u64, m: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
        let mut g = rng::stream(seed, &[m as u64, d as u64]);
        (0..m)
            .map(|_| (0..d).map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut g)).collect::<Vec<f64>>())
            .collect()
    }

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        let v = gaussian_kernel(&[0.0], &[2.0], 2.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(gaussian_kernel(&[0.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn median_rules() {
        let z = [0.0; 4];
        assert_eq!(median_bandwidth(&one_d(&z), &one_d(&z)).unwrap(), 1.0);
        // two clusters one apart: squared distances {0,1,1,0, 0,1,0,1}
        let r = [0.0, 0.0, 1.0, 1.0];
        let w = [0.0, 1.0, 0.0, 1.0];
        let s = median_bandwidth(&one_d(&r), &one_d(&w)).unwrap();
        assert_eq!(s, 0.5);
        let a = [0.3, 1.1, -0.4, 2.0];
        let b = [1.5, 0.2, 0.9, -1.0];
        let base = median_bandwidth(&one_d(&a), &one_d(&b)).unwrap();
        let a3: Vec<f64> = a.iter().map(|v| v * 3.0).collect();
        let b3: Vec<f64> = b.iter().map(|v| v * 3.0).collect();
        let scaled = median_bandwidth(&one_d(&a3), &one_d(&b3)).unwrap();
        assert!((scaled - 9.0 * base).abs() < 1e-12);
        assert!(median_bandwidth(&one_d(&a[..3]), &one_d(&b[..3])).is_err());
    }

    #[test]
    fn u2_examples() {
        let r = normal_rows(1, 30, 2, 0.0);
        assert_eq!(mmd_u2_value(&rows(&r), &rows(&r), 1.0).unwrap(), 0.0);
        let v = mmd_u2_value(&one_d(&[0.0, 0.0]), &one_d(&[10.0, 10.0]), 1.0).unwrap();
        assert!((v - 2.0 * (1.0 - (-50.0f64).exp())).abs() < 1e-15);
        assert!(mmd_u2_value(&one_d(&[0.0, 1.0]), &one_d(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn u2_matches_direct_double_sum() {
        let r = normal_rows(2, 15, 3, 0.0);
        let w = normal_rows(3, 15, 3, 0.5);
        let s2 = 1.7;
        let m = r.len();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    acc += kern(&r[i], &r[j], s2) + kern(&w[i], &w[j], s2) - 2.0 * kern(&r[i], &w[j], s2);
                }
            }
        }
        let want = acc / (m * (m - 1)) as f64;
        let got = mmd_u2_value(&rows(&r), &rows(&w), s2).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert_eq!(got, mmd_u2_value(&rows(&w), &rows(&r), s2).unwrap());
    }

    #[test]
    fn l2_examples() {
        let r = normal_rows(4, 20, 2, 0.0);
        let (v, var) = mmd_l2_value(&rows(&r), &rows(&r), 1.0).unwrap();
        assert_eq!((v, var), (0.0, 0.0));
        let res = mmd_l2(&rows(&r), &rows(&r), &KernelConfig { significance: Significance::AnalyticLinear, ..KernelConfig::default() }, 0.05).unwrap();
        assert_eq!((res.p_value, res.reject), (1.0, false));

        // constant h: pairs of identical points in R, far apart pairs in W
        let rr = [0.0, 0.0, 5.0, 5.0];
        let ww = [100.0, 100.0, 200.0, 200.0];
        let (v, var) = mmd_l2_value(&one_d(&rr), &one_d(&ww), 1.0).unwrap();
        assert_eq!((v, var), (2.0, 0.0));
        assert!(mmd_l2_value(&one_d(&rr[..3]), &one_d(&ww[..3]), 1.0).is_err());

        let w = normal_rows(5, 20, 2, 1.0);
        let a = mmd_l2_value(&rows(&r), &rows(&w), 0.8).unwrap();
        let b = mmd_l2_value(&rows(&w), &rows(&r), 0.8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn welford_matches_two_pass() {
        let r = normal_rows(6, 400, 3, 0.0);
        let w = normal_rows(7, 400, 3, 0.3);
        let s2 = 2.0;
        let (mean, var) = mmd_l2_value(&rows(&r), &rows(&w), s2).unwrap();
        let h: Vec<f64> = (0..200)
            .map(|p| h_term(&r[2 * p], &r[2 * p + 1], &w[2 * p], &w[2 * p + 1], s2))
            .collect();
        let m = h.iter().sum::<f64>() / h.len() as f64;
        let v = 2.0 * h.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / h.len() as f64;
        assert!(((mean - m) / m).abs() < 1e-10);
        assert!(((var - v) / v).abs() < 1e-10);
    }

    #[test]
    fn gram_matrix_is_positive_semidefinite() {
                for seed in 0..5 {
            let pts = normal_rows(seed, 20, 3, 0.0);
            let n = pts.len();
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = kern(&pts[i], &pts[j], 1.3);
                }
            }
            assert!(jacobi::min_eigenvalue(a) >= -1e-8);
        }
    }

    /// Cyclic Jacobi eigenvalues for small symmetric matrices.
    mod jacobi {
        pub fn min_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
            let n = a.len();
            for _ in 0..100 {
                let off: f64 = (0..n)
                    .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| a[i][j] * a[i][j])
                    .sum();
                if off < 1e-22 {
                    break;
                }
                for p in 0..n {
                    for q in p + 1..n {
                        if a[p][q].abs() < 1e-300 {
                            continue;
                        }
                        let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let t = if theta == 0.0 { 1.0 } else { t };
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let (akp, akq) = (a[k][p], a[k][q]);
                            a[k][p] = c * akp - s * akq;
                            a[k][q] = s * akp + c * akq;
                        }
                        for k in 0..n {
                            let (apk, aqk) = (a[p][k], a[q][k]);
                            a[p][k] = c * apk - s * aqk;
                            a[q][k] = s * apk + c * aqk;
                        }
                    }
                }
            }
            (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
        }
    }

    #[test]
    fn permutation_properties() {
        let r = normal_rows(8, 30, 2, 0.0);
        let w = normal_rows(9, 30, 2, 0.0);
        let s2 = median_bandwidth(&rows(&r), &rows(&w)).unwrap();
        for est in [Estimator::U2, Estimator::L2] {
            let a = mmd_permutation_test(&rows(&r), &rows(&w), est, s2, 0.1, 200, 3).unwrap();
            let b = mmd_permutation_test(&rows(&w), &rows(&r), est, s2, 0.1, 200, 3).unwrap();
            assert_eq!(a, b);
            assert_eq!(mmd_permutation_test(&rows(&r), &rows(&w), est, s2, 1e9, 200, 3).unwrap(), 0.0);
        }
        assert!(mmd_permutation_test(&rows(&r), &rows(&w), Estimator::U2, s2, 0.0, 50, 3).is_err());

        let far = normal_rows(10, 30, 2, 5.0);
        let res = mmd_u2(&rows(&r), &rows(&far), &KernelConfig { permutations: 200, ..KernelConfig::default() }, 0.05).unwrap();
        assert!(res.reject && res.p_value <= 1.0 / 200.0);
    }
}
