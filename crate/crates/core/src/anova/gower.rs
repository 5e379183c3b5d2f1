use nalgebra::{DMatrix, DVector};

use super::eigen::sym_eigen;
use super::DistanceMatrix;
use crate::error::Result;

/// Eigenvalues in `(-ROUNDOFF, 0)` are round-off and zeroed silently; more
/// negative ones mark a non-Euclidean distance matrix and are logged.
const ROUNDOFF: f64 = 1e-10;

/// Gower-centred inner-product matrix with negative eigenvalues clipped to 0.
#[derive(Debug, Clone)]
pub struct GowerMatrix {
    pub g: DMatrix<f64>,
    /// Eigenvalues below `-1e-10` that were clipped.
    pub clipped: usize,
    /// Smallest eigenvalue before clipping.
    pub min_eigenvalue: f64,
}

/// `G = (I - 11'/n) (-D/2) (I - 11'/n)`, made positive semidefinite by
/// zeroing negative eigenvalues.
pub fn gower_center(d: &DistanceMatrix) -> Result<GowerMatrix> {
    let n = d.n();
    let a = d.matrix() * -0.5;
    let row_means: Vec<f64> = (0..n).map(|i| a.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n.max(1) as f64;
    let centred = DMatrix::from_fn(n, n, |i, j| a[(i, j)] - row_means[i] - row_means[j] + grand);

    let eig = sym_eigen(&centred)?;
    let min_eigenvalue = eig.values.first().copied().unwrap_or(0.0);
    let clipped = eig.values.iter().filter(|&&l| l <= -ROUNDOFF).count();
    if clipped > 0 {
        log::warn!(
            "Gower matrix has {clipped} negative eigenvalue(s) (min {min_eigenvalue:.3e}); clipped to 0"
        );
    }
    if eig.values.iter().all(|&l| l >= 0.0) {
        return Ok(GowerMatrix {
            g: centred,
            clipped,
            min_eigenvalue,
        });
    }
    let kept = DVector::from_iterator(n, eig.values.iter().map(|&l| l.max(0.0)));
    let mut g = &eig.vectors * DMatrix::from_diagonal(&kept) * eig.vectors.transpose();
    // restore exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(GowerMatrix {
        g,
        clipped,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_matrix_stays_zero() {
        let d = DistanceMatrix::from_scalars(&[2.0; 4]);
        let g = gower_center(&d).unwrap();
        assert!(g.g.iter().all(|&v| v == 0.0));
        assert_eq!(g.clipped, 0);
    }

    #[test]
    fn scalar_points_give_centred_gram() {
        let x = [0.5, -1.0, 3.0, 2.2, 0.0];
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let g = gower_center(&DistanceMatrix::from_scalars(&x)).unwrap();
        for i in 0..x.len() {
            for j in 0..x.len() {
                assert_abs_diff_eq!(g.g[(i, j)], (x[i] - mean) * (x[j] - mean), epsilon = 1e-12);
            }
        }
        assert_eq!(g.clipped, 0);
    }

    #[test]
    fn non_euclidean_input_is_clipped() {
        // Squared distances violating the triangle inequality badly.
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 100.0],
            vec![1.0, 0.0, 1.0],
            vec![100.0, 1.0, 0.0],
        ])
        .unwrap();
        let g = gower_center(&d).unwrap();
        assert!(g.clipped >= 1);
        assert!(g.min_eigenvalue < -1e-10);
        let e = sym_eigen(&g.g).unwrap();
        assert!(e.values[0] >= -1e-8);
    }
}
