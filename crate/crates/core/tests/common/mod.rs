//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use poismix::CountSample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `log(e^{-l r} (l r)^x)` written out directly.
fn log_kernel(lambda: f64, x: u64, r: f64) -> f64 {
    let m = lambda * r;
    if x == 0 {
        -m
    } else if m == 0.0 {
        f64::NEG_INFINITY
    } else {
        -m + x as f64 * m.ln()
    }
}

/// Mean log-likelihood (without `log x!`) by direct summation.
pub fn phi_direct(support: &[f64], weights: &[f64], s: &CountSample) -> f64 {
    let total: f64 = s
        .counts()
        .iter()
        .zip(s.read_depths())
        .map(|(&x, &r)| {
            let logs: Vec<f64> = support
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&l, &w)| w.ln() + log_kernel(l, x, r))
                .collect();
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                m
            } else {
                m + logs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            }
        })
        .sum();
    total / s.len() as f64
}

/// Brute-force NPMLE on a fixed uniform grid of `[0, B]`: plain EM on the
/// grid weights until the largest weight change is below `tol`.
pub fn grid_em(s: &CountSample, points: usize, tol: f64, max_iters: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let b = s.bound();
    let grid: Vec<f64> = (0..points).map(|k| b * k as f64 / (points - 1) as f64).collect();
    let n = s.len();
    // per-observation kernel values relative to their row maximum
    let mut kern = vec![vec![0.0; points]; n];
    for (i, (&x, &r)) in s.counts().iter().zip(s.read_depths()).enumerate() {
        let logs: Vec<f64> = grid.iter().map(|&l| log_kernel(l, x, r)).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for k in 0..points {
            let v = (logs[k] - m).exp();
            kern[i][k] = if v < 1e-200 { 0.0 } else { v };
        }
    }
    let mut w = vec![1.0 / points as f64; points];
    for _ in 0..max_iters {
        let mut next = vec![0.0; points];
        for row in &kern {
            let inv = 1.0 / row.iter().zip(&w).map(|(k, w)| k * w).sum::<f64>();
            for k in 0..points {
                next[k] += row[k] * inv;
            }
        }
        let mut change: f64 = 0.0;
        for k in 0..points {
            next[k] *= w[k] / n as f64;
            // avoid subnormal arithmetic; such weights never recover under EM
            if next[k] < 1e-200 {
                next[k] = 0.0;
            }
            change = change.max((next[k] - w[k]).abs());
        }
        w = next;
        if change < tol {
            break;
        }
    }
    let phi = phi_direct(&grid, &w, s);
    (grid, w, phi)
}

/// Minimum-cost transport between two discrete distributions on the line,
/// by enumerating every basic feasible solution of the transportation LP.
pub fn transport_lp(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> f64 {
    let (m, n) = (xa.len(), xb.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let basis = m + n - 1;
    let mut best = f64::INFINITY;
    let mut rhs = DVector::zeros(m + n);
    for i in 0..m {
        rhs[i] = wa[i];
    }
    for j in 0..n {
        rhs[m + j] = wb[j];
    }
    for subset in combinations(cells.len(), basis) {
        let a = DMatrix::from_fn(m + n, basis, |row, c| {
            let (i, j) = cells[subset[c]];
            if row == i || row == m + j {
                1.0
            } else {
                0.0
            }
        });
        let svd = a.clone().svd(true, true);
        let Ok(x) = svd.solve(&rhs, 1e-12) else { continue };
        if (&a * &x - &rhs).norm() > 1e-11 || x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let cost: f64 = subset
            .iter()
            .zip(x.iter())
            .map(|(&c, &v)| {
                let (i, j) = cells[c];
                v * (xa[i] - xb[j]).abs()
            })
            .sum();
        best = best.min(cost);
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// One-way ANOVA sums of squares `(SSB, SSW)`.
pub fn anova_ss(y: &[f64], groups: &[usize]) -> (f64, f64) {
    let k = groups.iter().max().map_or(0, |g| g + 1);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (&v, &g) in y.iter().zip(groups) {
        sums[g] += v;
        sizes[g] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect();
    let ssb = (0..k).map(|g| sizes[g] as f64 * (means[g] - mean).powi(2)).sum();
    let ssw = y.iter().zip(groups).map(|(&v, &g)| (v - means[g]).powi(2)).sum();
    (ssb, ssw)
}

/// `J (-D/2) J` with negative eigenvalues set to zero, via the library
/// symmetric eigensolver.
pub fn clipped_gower(d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows();
    let j = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let g = &j * (d * -0.5) * &j;
    let eig = nalgebra::SymmetricEigen::new(g);
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `tr(H G H) / tr((I - H) G (I - H))` with `G` the clipped Gower matrix and
/// `H = Z (Z'Z)^{-1} Z'` formed explicitly.
pub fn dense_covariate_f(d: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    let g = clipped_gower(d);
    let ztz_inv = (z.transpose() * z).try_inverse().expect("full rank");
    let h = z * ztz_inv * z.transpose();
    let r = DMatrix::identity(n, n) - &h;
    (&h * &g * &h).trace() / (&r * &g * &r).trace()
}

/// Random count sample: counts from a Poisson mixture with up to three
/// components inside `[0, 0.7 B]`, unit or uniform read depths.
pub fn random_sample<R: Rng>(rng: &mut R, max_n: usize) -> CountSample {
    let bound = [10.0, 20.0, 50.0][rng.random_range(0..3)];
    let n = rng.random_range(5..=max_n);
    let k = rng.random_range(1..=3);
    let centres: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.7) * bound).collect();
    let unit = rng.random_bool(0.5);
    let mut counts = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n);
    for _ in 0..n {
        let lambda = centres[rng.random_range(0..k)];
        let r = if unit { 1.0 } else { rng.random_range(0.5..1.5) };
        let x: f64 = Poisson::new(lambda * r).unwrap().sample(rng);
        counts.push(x as u64);
        depths.push(r);
    }
    if counts.iter().all(|&c| c == 0) {
        counts[0] = 1;
    }
    CountSample::new(counts, depths, bound).unwrap()
}

/// Random measure with `k` atoms on `[0, bound]`.
pub fn random_atoms<R: Rng>(rng: &mut R, k: usize, bound: f64) -> (Vec<f64>, Vec<f64>) {
    let support = (0..k).map(|_| rng.random_range(0.0..bound)).collect();
    let weights = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    (support, weights)
}
