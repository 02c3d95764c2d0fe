//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold on `|R_ii| / max |R_jj|` below which a column is
/// treated as linearly dependent.
pub const RANK_TOL: f64 = 1e-11;

#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    pub residual_norm: f64,
    pub rank: usize,
    /// `max |R_ii| / min |R_ii|`, a cheap lower bound on the 2-norm
    /// condition number.
    pub condition_estimate: f64,
}

/// Minimizes `||A c - b||_2` through a Householder QR factorization.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LeastSquares> {
    let (n, r) = a.shape();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if n < r {
        return Err(Error::Underdetermined { rows: n, cols: r });
    }
    if r == 0 {
        return Ok(LeastSquares {
            coefficients: DVector::zeros(0),
            residual_norm: b.norm(),
            rank: 0,
            condition_estimate: 1.0,
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares system"));
    }
    let qr = a.clone().qr();
    let rmat = qr.r();
    let (rank, condition_estimate) = diag_rank(&rmat);
    if rank < r {
        return Err(Error::RankDeficient { rank, cols: r });
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let head = qtb.rows(0, r).into_owned();
    let residual_norm = qtb.rows(r, n - r).norm();
    let coefficients = rmat
        .solve_upper_triangular(&head)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(LeastSquares { coefficients, residual_norm, rank, condition_estimate })
}

fn diag_rank(rmat: &DMatrix<f64>) -> (usize, f64) {
    let k = rmat.nrows().min(rmat.ncols());
    let diag: Vec<f64> = (0..k).map(|i| rmat[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return (0, f64::INFINITY);
    }
    let rank = diag.iter().filter(|&&v| v > RANK_TOL * max).count();
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    (rank, if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Upper-triangular factor of `A = Q R` with a nonnegative diagonal.
pub fn qr_r_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, r) = a.shape();
    if n < r {
        return Err(Error::Underdetermined { rows: n, cols: r });
    }
    let mut rmat = a.clone().qr().r();
    for i in 0..r {
        if rmat[(i, i)] < 0.0 {
            for j in i..r {
                rmat[(i, j)] = -rmat[(i, j)];
            }
        }
    }
    let (rank, _) = diag_rank(&rmat);
    if rank < r {
        return Err(Error::RankDeficient { rank, cols: r });
    }
    Ok(rmat)
}

/// Orthonormal basis of the column span of a full-column-rank matrix, with
/// the sign convention of Householder QR.
pub fn orthonormal_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in
/// descending order.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population covariance (divides by `n`).
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_overdetermined_system() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let ls = least_squares(&a, &b).unwrap();
        assert_abs_diff_eq!(ls.coefficients[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ls.coefficients[1], 2.0, epsilon = 1e-12);
        assert!(ls.residual_norm < 1e-12);
        assert_eq!(ls.rank, 2);
    }

    #[test]
    fn detects_rank_deficiency() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(least_squares(&a, &b), Err(Error::RankDeficient { rank: 1, cols: 2 })));
        let wide = DMatrix::zeros(1, 2);
        assert!(matches!(
            least_squares(&wide, &DVector::zeros(1)),
            Err(Error::Underdetermined { rows: 1, cols: 2 })
        ));
    }

    #[test]
    fn r_factor_has_positive_diagonal() {
        let a = DMatrix::from_row_slice(3, 2, &[-1.0, 2.0, 0.0, -1.0, 0.5, 0.3]);
        let r = qr_r_factor(&a).unwrap();
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0);
        let ata = a.transpose() * &a;
        let rtr = r.transpose() * &r;
        assert_abs_diff_eq!((ata - rtr).abs().max(), 0.0, epsilon = 1e-12);
    }
}
