use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Least-squares fit of `y` on a subset of columns.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Coefficients for `columns`, in the same order.
    pub coefficients: DVector<Complex64>,
    pub residual: DVector<Complex64>,
    /// The selected submatrix lost rank; `coefficients` is the minimum-norm solution.
    pub rank_deficient: bool,
}

impl LeastSquares {
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Minimum-norm least squares `min ||y - Phi[:, columns] g||` via SVD.
pub fn least_squares(phi: &DMatrix<Complex64>, columns: &[usize], y: &DVector<Complex64>) -> LeastSquares {
    if columns.is_empty() {
        return LeastSquares {
            coefficients: DVector::zeros(0),
            residual: y.clone(),
            rank_deficient: false,
        };
    }
    let sub = phi.select_columns(columns);
    let svd = sub.clone().svd(true, true);
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = largest * 1e-12 * phi.nrows().max(columns.len()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let coefficients = if largest == 0.0 {
        DVector::zeros(columns.len())
    } else {
        svd.solve(y, tol).expect("U and V were computed")
    };
    let residual = y - &sub * &coefficients;
    LeastSquares {
        coefficients,
        residual,
        rank_deficient: rank < columns.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exact_fit_on_full_rank_columns() {
        let phi = DMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, -1.0)]);
        let g = DVector::from_vec(vec![c(0.5, -0.25), c(-1.0, 2.0)]);
        let y = &phi * &g;
        let fit = least_squares(&phi, &[0, 1], &y);
        assert!((&fit.coefficients - &g).norm() < 1e-12);
        assert!(fit.residual_norm() < 1e-12);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn duplicate_columns_flag_rank_and_give_min_norm() {
        let phi = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let y = DVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        let fit = least_squares(&phi, &[0, 1], &y);
        assert!(fit.rank_deficient);
        assert!((fit.coefficients[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((fit.coefficients[1] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let phi = DMatrix::from_fn(4, 3, |r, k| c((r * 3 + k) as f64 * 0.3, (r as f64 - k as f64).sin()));
        let y = DVector::from_fn(4, |r, _| c(r as f64 - 1.5, 0.7));
        let fit = least_squares(&phi, &[0, 2], &y);
        for &k in &[0, 2] {
            let ip: Complex64 = phi.column(k).iter().zip(fit.residual.iter()).map(|(a, b)| a.conj() * b).sum();
            assert!(ip.norm() < 1e-12);
        }
    }
}
