//! Covariate-adjusted pseudo-F: with `G` the clipped Gower matrix and `H` the
//! hat matrix of the design `Z`,
//!
//! ```text
//! F_Z = tr(H G H) / tr((I - H) G (I - H))
//! ```
//!
//! Since `H` is a symmetric idempotent projector, `tr(H G H) = <G, H>` and
//! the denominator is `tr(G) - <G, H>`, so each permutation costs one QR of
//! `Z` plus an `O(n^2)` inner product.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::gower::gower_center;
use super::{exceeds, DistanceMatrix, TestResult};
use crate::error::{Error, Result};
use crate::rng;

const RANK_TOL: f64 = 1e-10;

/// `n x p` numeric design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    z: DMatrix<f64>,
    names: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(z: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != z.ncols() {
            return Err(Error::Design(format!(
                "{} column names for {} columns",
                names.len(),
                z.ncols()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Design("covariates must be finite".into()));
        }
        let (_, rank) = projector(&z);
        if rank < z.ncols() {
            return Err(Error::Design(format!(
                "design matrix has rank {rank} < {} columns",
                z.ncols()
            )));
        }
        Ok(Self { z, names })
    }

    pub fn from_columns(columns: &[(&str, Vec<f64>)]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(Error::Design("covariate columns differ in length".into()));
        }
        let z = DMatrix::from_fn(n, columns.len(), |i, j| columns[j].1[i]);
        Self::new(z, columns.iter().map(|c| c.0.to_string()).collect())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }
}

/// Orthogonal projector onto the column space of `z`, with the numerical
/// rank from a column-pivoted QR.
fn projector(z: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = z.nrows();
    if z.ncols() == 0 || n == 0 {
        return (DMatrix::zeros(n, n), 0);
    }
    let qr = z.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let top = diag.first().copied().unwrap_or(0.0);
    let rank = if top == 0.0 {
        0
    } else {
        diag.iter().take_while(|&&v| v > RANK_TOL * top).count()
    };
    let q = qr.q();
    let basis = q.columns(0, rank);
    (basis * basis.transpose(), rank)
}

/// Hat matrix `Z (Z'Z)^{-1} Z'`.
pub fn hat_matrix(z: &CovariateMatrix) -> DMatrix<f64> {
    projector(&z.z).0
}

fn ratio_from_projector(g: &DMatrix<f64>, h: &DMatrix<f64>, trace_g: f64) -> Option<f64> {
    let numerator = g.dot(h);
    let denominator = trace_g - numerator;
    if denominator <= 1e-12 * trace_g.abs() || trace_g <= 0.0 {
        None
    } else {
        Some(numerator / denominator)
    }
}

/// `F_Z` for an already centred (and clipped) inner-product matrix `g`.
pub fn covariate_pseudo_f_from_gram(g: &DMatrix<f64>, z: &CovariateMatrix) -> Result<f64> {
    if g.nrows() != z.n() || g.ncols() != z.n() {
        return Err(Error::domain(format!(
            "Gram matrix is {}x{} but design has {} rows",
            g.nrows(),
            g.ncols(),
            z.n()
        )));
    }
    ratio_from_projector(g, &hat_matrix(z), g.trace())
        .ok_or_else(|| Error::Degenerate("residual trace tr((I-H)G(I-H)) is zero".into()))
}

/// Covariate-adjusted pseudo-F of a squared-distance matrix.
pub fn covariate_pseudo_f(d: &DistanceMatrix, z: &CovariateMatrix) -> Result<f64> {
    if d.n() != z.n() {
        return Err(Error::domain(format!("{} subjects but {} design rows", d.n(), z.n())));
    }
    covariate_pseudo_f_from_gram(&gower_center(d)?.g, z)
}

/// Permutation test that shuffles only the `diagnosis_col` column of `Z`,
/// keeping every other covariate fixed.
pub fn covariate_permutation_test(
    d: &DistanceMatrix,
    z: &CovariateMatrix,
    diagnosis_col: usize,
    n_perm: usize,
    seed: u64,
    alphas: &[f64],
) -> Result<TestResult> {
    if diagnosis_col >= z.z.ncols() {
        return Err(Error::domain(format!(
            "diagnosis column {diagnosis_col} out of range for {} columns",
            z.z.ncols()
        )));
    }
    if n_perm == 0 {
        return Err(Error::domain("n_perm must be at least 1"));
    }
    if d.n() != z.n() {
        return Err(Error::domain(format!("{} subjects but {} design rows", d.n(), z.n())));
    }
    let gower = gower_center(d)?;
    let g = &gower.g;
    let trace_g = g.trace();
    let Some(observed) = ratio_from_projector(g, &hat_matrix(z), trace_g) else {
        return Ok(TestResult::degenerate(n_perm, seed, alphas));
    };
    let diagnosis: Vec<f64> = z.z.column(diagnosis_col).iter().copied().collect();
    let exceed = (0..n_perm as u64)
        .into_par_iter()
        .filter(|&p| {
            let mut rng = rng::stream(seed, p);
            let mut col = diagnosis.clone();
            rand::seq::SliceRandom::shuffle(col.as_mut_slice(), &mut rng);
            let mut zp = z.z.clone();
            zp.set_column(diagnosis_col, &nalgebra::DVector::from_vec(col));
            let (h, _) = projector(&zp);
            let f = ratio_from_projector(g, &h, trace_g).unwrap_or(f64::INFINITY);
            exceeds(f, observed)
        })
        .count();
    Ok(TestResult::from_counts(Some(observed), exceed, n_perm, seed, alphas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rank_deficient_design_is_rejected() {
        let r = CovariateMatrix::from_columns(&[
            ("a", vec![1.0, 2.0, 3.0, 4.0]),
            ("b", vec![2.0, 4.0, 6.0, 8.0]),
        ]);
        assert!(matches!(r, Err(Error::Design(_))));
    }

    #[test]
    fn saturated_design_is_degenerate() {
        let n = 4;
        let z = CovariateMatrix::new(DMatrix::identity(n, n), (0..n).map(|i| format!("e{i}")).collect()).unwrap();
        let d = DistanceMatrix::from_scalars(&[0.0, 1.0, 3.0, 7.0]);
        assert!(matches!(covariate_pseudo_f(&d, &z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identity_gram_with_single_basis_column() {
        let n = 6;
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        let z = CovariateMatrix::from_columns(&[("e1", e1)]).unwrap();
        let f = covariate_pseudo_f_from_gram(&DMatrix::identity(n, n), &z).unwrap();
        assert_abs_diff_eq!(f, 1.0 / (n as f64 - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn constant_diagnosis_gives_p_one() {
        let d = DistanceMatrix::from_scalars(&[0.2, 1.5, 0.7, 2.9, 3.3, 1.1]);
        let z = CovariateMatrix::from_columns(&[
            ("dx", vec![1.0; 6]),
            ("age", vec![30.0, 41.0, 25.0, 52.0, 38.0, 47.0]),
        ])
        .unwrap();
        let r = covariate_permutation_test(&d, &z, 0, 200, 9, &[0.05]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.degenerate);
        assert!(covariate_permutation_test(&d, &z, 2, 200, 9, &[0.05]).is_err());
    }
}
