//! SVD-based rank and least-squares helpers over complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub(crate) type CMatrix = DMatrix<Complex64>;

/// Singular values in descending order.
pub(crate) fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub(crate) struct LeastSquares {
    pub x: Vec<Complex64>,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Minimum-norm solution of `min ‖A x − b‖`, discarding singular values
/// below `rcond · σ_max`.
pub(crate) fn least_squares(a: &CMatrix, b: &[Complex64], rcond: f64) -> LeastSquares {
    let (_, n) = a.shape();
    if n == 0 {
        return LeastSquares {
            x: Vec::new(),
            singular_values: Vec::new(),
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let rhs = DVector::from_column_slice(b);
    let mut x = DVector::<Complex64>::zeros(n);
    for k in 0..s.len() {
        if s[k] > rcond * smax && s[k] > 0.0 {
            let coeff = u.column(k).dotc(&rhs) / s[k];
            for j in 0..n {
                x[j] += v_t[(k, j)].conj() * coeff;
            }
        }
    }
    let mut sv: Vec<f64> = s.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    LeastSquares {
        x: x.iter().copied().collect(),
        singular_values: sv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_square_system() {
        let a = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(3.0, 0.0)]);
        let x_true = [c(0.5, -1.0), c(2.0, 0.25)];
        let b: Vec<Complex64> = (0..2).map(|i| a[(i, 0)] * x_true[0] + a[(i, 1)] * x_true[1]).collect();
        let ls = least_squares(&a, &b, 1e-14);
        for (x, t) in ls.x.iter().zip(&x_true) {
            assert!((x - t).norm() < 1e-13);
        }
        assert!(ls.singular_values[1] > 0.5);
    }

    #[test]
    fn minimum_norm_for_rank_deficient() {
        // x1 + x2 = 2 has minimum-norm solution (1, 1)
        let a = CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let ls = least_squares(&a, &[c(2.0, 0.0)], 1e-14);
        assert!((ls.x[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((ls.x[1] - c(1.0, 0.0)).norm() < 1e-14);
        assert_eq!(ls.singular_values.len(), 1);
    }

    #[test]
    fn singular_values_sorted() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)]);
        assert_eq!(singular_values(&a), vec![5.0, 1.0]);
    }
}
