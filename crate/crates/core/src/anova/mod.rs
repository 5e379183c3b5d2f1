//! Pseudo-F statistics on squared-W1 distance matrices and their
//! Fisher-Pitman permutation tests.
//!
//! With `d_ij` the squared distance between subjects `i` and `j`,
//!
//! ```text
//! SS_T = (1/n)   sum_{i,j}            d_ij
//! SS_k = (1/n_k) sum_{i,j in group k} d_ij
//! F    = (SS_T - sum_k SS_k) / sum_k SS_k
//! ```
//!
//! Sums run over ordered pairs. `SS_T` does not depend on the labelling, so
//! it is computed once per test.

mod covariate;
mod eigen;
mod fdr;
mod gower;

pub use covariate::{
    covariate_permutation_test, covariate_pseudo_f, covariate_pseudo_f_from_gram, hat_matrix,
    CovariateMatrix,
};
pub use eigen::{sym_eigen, SymEigen};
pub use fdr::{benjamini_hochberg, BhResult};
pub use gower::{gower_center, GowerMatrix};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{poisson_smooth, w1_measures, w1_pmfs, DiscreteMeasure};
use crate::rng;

/// Relative slack under which a permuted statistic counts as a tie with the
/// observed one.
const TIE_REL_TOL: f64 = 1e-10;

/// Assignment of `n` subjects to `K >= 2` nonempty groups labelled `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyLayout {
    group_of: Vec<usize>,
    group_sizes: Vec<usize>,
}

impl StudyLayout {
    pub fn new(group_of: Vec<usize>) -> Result<Self> {
        let k = group_of.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(Error::domain("a layout needs at least two groups"));
        }
        let mut group_sizes = vec![0; k];
        for &g in &group_of {
            group_sizes[g] += 1;
        }
        if let Some(empty) = group_sizes.iter().position(|&c| c == 0) {
            return Err(Error::domain(format!("group {empty} has no subjects")));
        }
        Ok(Self {
            group_of,
            group_sizes,
        })
    }

    /// Subjects are numbered group by group: the first `sizes[0]` belong to
    /// group 0, and so on.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let group_of = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
            .collect();
        Self::new(group_of)
    }

    pub fn n(&self) -> usize {
        self.group_of.len()
    }

    pub fn k(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }
}

/// Symmetric matrix of squared distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() {
            return Err(Error::domain("distance matrix must be square"));
        }
        let n = d.nrows();
        let scale = d.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::domain(format!("nonzero diagonal entry at {i}")));
            }
            for j in 0..i {
                let (a, b) = (d[(i, j)], d[(j, i)]);
                if !(a.is_finite() && a >= 0.0 && b >= 0.0) {
                    return Err(Error::domain(format!("invalid distance at ({i}, {j})")));
                }
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::domain(format!("asymmetric entries at ({i}, {j})")));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("distance matrix rows must all have length n"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Squared distances between points on the real line.
    pub fn from_scalars(x: &[f64]) -> Self {
        let n = x.len();
        Self {
            d: DMatrix::from_fn(n, n, |i, j| (x[i] - x[j]).powi(2)),
        }
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }
}

/// Squared-W1 matrix between fitted mixing distributions (`smoothed =
/// false`) or between their Poisson-smoothed PMFs (`smoothed = true`).
pub fn distance_matrix(
    fits: &[DiscreteMeasure],
    smoothed: bool,
    tail_tol: f64,
) -> Result<DistanceMatrix> {
    if let Some(first) = fits.first() {
        for g in fits {
            crate::measures::check_same_bound(first.bound(), g.bound())?;
        }
    }
    let n = fits.len();
    let mut d = DMatrix::zeros(n, n);
    if smoothed {
        let pmfs = fits
            .iter()
            .map(|g| poisson_smooth(g, tail_tol))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..n {
            for j in 0..i {
                let v = w1_pmfs(&pmfs[i], &pmfs[j]).powi(2);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
    } else {
        for i in 0..n {
            for j in 0..i {
                let v = w1_measures(&fits[i], &fits[j]).powi(2);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
    }
    Ok(DistanceMatrix { d })
}

/// Pseudo-F with the total sum of squares cached.
struct PseudoF<'a> {
    d: &'a DistanceMatrix,
    ss_total: f64,
    sizes: Vec<usize>,
}

impl<'a> PseudoF<'a> {
    fn new(d: &'a DistanceMatrix, layout: &StudyLayout) -> Result<Self> {
        if d.n() != layout.n() {
            return Err(Error::domain(format!(
                "distance matrix has {} subjects, layout has {}",
                d.n(),
                layout.n()
            )));
        }
        let n = d.n();
        let mut lower = 0.0;
        for i in 0..n {
            for j in 0..i {
                lower += d.d[(i, j)];
            }
        }
        Ok(Self {
            d,
            ss_total: 2.0 * lower / n as f64,
            sizes: layout.group_sizes.clone(),
        })
    }

    fn within(&self, labels: &[usize]) -> f64 {
        let mut sums = vec![0.0; self.sizes.len()];
        let n = labels.len();
        for i in 0..n {
            let gi = labels[i];
            for (j, &gj) in labels[..i].iter().enumerate() {
                if gj == gi {
                    sums[gi] += self.d.d[(i, j)];
                }
            }
        }
        sums.iter()
            .zip(&self.sizes)
            .map(|(s, &nk)| 2.0 * s / nk as f64)
            .sum()
    }

    /// `None` when the within-group sum is zero.
    fn statistic(&self, labels: &[usize]) -> Option<f64> {
        let w = self.within(labels);
        if w > 0.0 {
            Some((self.ss_total - w) / w)
        } else {
            None
        }
    }
}

/// Pseudo-F statistic of `d` under `layout`.
pub fn pseudo_f(d: &DistanceMatrix, layout: &StudyLayout) -> Result<f64> {
    PseudoF::new(d, layout)?
        .statistic(layout.group_of())
        .ok_or_else(|| Error::Degenerate("within-group sum of squares is zero".into()))
}

/// Total sum of squares `SS_T`; identical under every relabelling.
pub fn total_sum_of_squares(d: &DistanceMatrix) -> f64 {
    let n = d.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += d.d[(i, j)];
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaDecision {
    pub alpha: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Observed statistic; `None` when degenerate.
    pub statistic: Option<f64>,
    /// `(1 + #exceedances) / (1 + n_permutations)`.
    pub p_value: f64,
    pub n_permutations: usize,
    pub n_exceedances: usize,
    pub reject_at: Vec<AlphaDecision>,
    pub seed: u64,
    /// The observed statistic had a zero denominator; `p_value` is 1.
    pub degenerate: bool,
}

impl TestResult {
    fn from_counts(
        statistic: Option<f64>,
        n_exceedances: usize,
        n_permutations: usize,
        seed: u64,
        alphas: &[f64],
    ) -> Self {
        let p_value = (1 + n_exceedances) as f64 / (1 + n_permutations) as f64;
        Self {
            statistic,
            p_value,
            n_permutations,
            n_exceedances,
            reject_at: decisions(p_value, alphas),
            seed,
            degenerate: false,
        }
    }

    fn degenerate(n_permutations: usize, seed: u64, alphas: &[f64]) -> Self {
        Self {
            statistic: None,
            p_value: 1.0,
            n_permutations,
            n_exceedances: n_permutations,
            reject_at: decisions(1.0, alphas),
            seed,
            degenerate: true,
        }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

fn decisions(p: f64, alphas: &[f64]) -> Vec<AlphaDecision> {
    alphas
        .iter()
        .map(|&alpha| AlphaDecision {
            alpha,
            reject: p <= alpha,
        })
        .collect()
}

#[inline]
pub(crate) fn exceeds(permuted: f64, observed: f64) -> bool {
    permuted >= observed - TIE_REL_TOL * observed.abs()
}

/// Uniform random relabelling number `index` of the stream keyed by `seed`.
pub(crate) fn permuted_labels(labels: &[usize], seed: u64, index: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, index);
    let mut out = labels.to_vec();
    out.shuffle(&mut rng);
    out
}

/// Monte Carlo Fisher-Pitman test: `n_perm` uniform relabellings of the
/// subjects, exceedance counted as `F_perm >= F`.
pub fn permutation_test(
    d: &DistanceMatrix,
    layout: &StudyLayout,
    n_perm: usize,
    seed: u64,
    alphas: &[f64],
) -> Result<TestResult> {
    if n_perm == 0 {
        return Err(Error::domain("n_perm must be at least 1"));
    }
    let stat = PseudoF::new(d, layout)?;
    let Some(observed) = stat.statistic(layout.group_of()) else {
        return Ok(TestResult::degenerate(n_perm, seed, alphas));
    };
    let exceed = (0..n_perm as u64)
        .into_par_iter()
        .filter(|&p| {
            let labels = permuted_labels(layout.group_of(), seed, p);
            let f = stat.statistic(&labels).unwrap_or(f64::INFINITY);
            exceeds(f, observed)
        })
        .count();
    Ok(TestResult::from_counts(Some(observed), exceed, n_perm, seed, alphas))
}

/// Permutation test over an explicit list of relabellings, each a
/// permutation `pi` of `0..n` giving subject `i` the label of subject `pi[i]`.
pub fn permutation_test_with(
    d: &DistanceMatrix,
    layout: &StudyLayout,
    permutations: &[Vec<usize>],
    alphas: &[f64],
) -> Result<TestResult> {
    if permutations.is_empty() {
        return Err(Error::domain("at least one permutation is required"));
    }
    let stat = PseudoF::new(d, layout)?;
    let Some(observed) = stat.statistic(layout.group_of()) else {
        return Ok(TestResult::degenerate(permutations.len(), 0, alphas));
    };
    let mut exceed = 0;
    for pi in permutations {
        let mut seen = vec![false; layout.n()];
        if pi.len() != layout.n() || pi.iter().any(|&j| j >= seen.len() || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::domain("not a permutation of the subjects"));
        }
        let labels: Vec<usize> = pi.iter().map(|&j| layout.group_of()[j]).collect();
        if exceeds(stat.statistic(&labels).unwrap_or(f64::INFINITY), observed) {
            exceed += 1;
        }
    }
    Ok(TestResult::from_counts(Some(observed), exceed, permutations.len(), 0, alphas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::point_mass;
    use approx::assert_abs_diff_eq;

    #[test]
    fn layout_validation() {
        assert!(StudyLayout::new(vec![0, 0, 0]).is_err());
        assert!(StudyLayout::new(vec![0, 2, 2]).is_err());
        let l = StudyLayout::from_sizes(&[2, 3]).unwrap();
        assert_eq!(l.group_of(), &[0, 0, 1, 1, 1]);
        assert_eq!(l.n(), 5);
        assert_eq!(l.k(), 2);
    }

    #[test]
    fn distance_matrix_examples() {
        let same = vec![point_mass(2.0, 10.0).unwrap(); 3];
        let d = distance_matrix(&same, false, 1e-10).unwrap();
        assert!(d.matrix().iter().all(|&v| v == 0.0));

        let two = vec![point_mass(1.0, 10.0).unwrap(), point_mass(4.0, 10.0).unwrap()];
        let d = distance_matrix(&two, false, 1e-10).unwrap();
        assert_abs_diff_eq!(d.get(0, 1), 9.0, epsilon = 1e-12);
        let d = distance_matrix(&two, true, 1e-12).unwrap();
        // Poisson(1) vs Poisson(4) are ordered, so W1 is the mean gap of 3.
        assert!(d.get(0, 1) <= 25.0 && d.get(0, 1) >= 9.0 * (1.0 - 1e-9));

        let mismatched = vec![point_mass(1.0, 10.0).unwrap(), point_mass(1.0, 20.0).unwrap()];
        assert!(distance_matrix(&mismatched, false, 1e-10).is_err());
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn pseudo_f_hand_values() {
        let c = 1.7;
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else { c }).collect())
            .collect();
        let d = DistanceMatrix::from_rows(&rows).unwrap();
        let layout = StudyLayout::from_sizes(&[2, 2]).unwrap();
        assert_abs_diff_eq!(total_sum_of_squares(&d), 3.0 * c, epsilon = 1e-12);
        assert_abs_diff_eq!(pseudo_f(&d, &layout).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pseudo_f_zero_within_is_degenerate() {
        let d = DistanceMatrix::from_scalars(&[0.0, 0.0, 1.0, 1.0]);
        let layout = StudyLayout::from_sizes(&[2, 2]).unwrap();
        assert_abs_diff_eq!(total_sum_of_squares(&d), 2.0, epsilon = 1e-12);
        assert!(matches!(pseudo_f(&d, &layout), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_matrix_is_flagged() {
        let d = DistanceMatrix::from_scalars(&[1.0; 6]);
        let layout = StudyLayout::from_sizes(&[3, 3]).unwrap();
        let r = permutation_test(&d, &layout, 50, 1, &[0.05]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn identity_permutation_counts_as_exceedance() {
        let d = DistanceMatrix::from_scalars(&[0.1, 0.5, 0.3, 2.0, 2.4, 1.9]);
        let layout = StudyLayout::from_sizes(&[3, 3]).unwrap();
        let identity: Vec<usize> = (0..6).collect();
        let r = permutation_test_with(&d, &layout, &[identity], &[0.05]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject_at[0].reject);
    }

    #[test]
    fn p_value_formula_and_determinism() {
        let d = DistanceMatrix::from_scalars(&[0.1, 0.5, 0.3, 0.2, 2.0, 2.4, 1.9, 2.2]);
        let layout = StudyLayout::from_sizes(&[4, 4]).unwrap();
        let a = permutation_test(&d, &layout, 999, 42, &[0.01, 0.05]).unwrap();
        let b = permutation_test(&d, &layout, 999, 42, &[0.01, 0.05]).unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.p_value, (1 + a.n_exceedances) as f64 / 1000.0);
        // Only the 2 perfectly separating relabellings of 70 reach the observed F.
        assert!(a.p_value < 0.06, "{}", a.p_value);
        assert!(permutation_test(&d, &layout, 0, 42, &[]).is_err());
    }

    #[test]
    fn relabelling_groups_leaves_statistic_unchanged() {
        let x = [0.3, 1.2, 0.8, 2.5, 3.1, 2.2, 0.4];
        let d = DistanceMatrix::from_scalars(&x);
        let a = StudyLayout::new(vec![0, 0, 0, 1, 1, 1, 0]).unwrap();
        let b = StudyLayout::new(vec![1, 1, 1, 0, 0, 0, 1]).unwrap();
        assert_abs_diff_eq!(pseudo_f(&d, &a).unwrap(), pseudo_f(&d, &b).unwrap(), epsilon = 1e-12);
    }
}
