//! Dense reference results and comparison utilities.

use serde::Serialize;

use crate::{BOperand, DenseMatrix, Error, FusedProblem, Result, Scalar};

/// Largest `n` the dense oracle will materialize.
pub const ORACLE_MAX_N: usize = 4096;

/// `A (B C)` computed densely in double precision with plain triple loops,
/// regardless of the problem's precision.
pub fn dense_oracle<T: Scalar>(problem: &FusedProblem<'_, T>) -> Result<DenseMatrix<f64>> {
    let n = problem.n();
    if n > ORACLE_MAX_N {
        return Err(Error::OracleTooLarge { n, limit: ORACLE_MAX_N });
    }
    let a = problem.a.to_dense().cast::<f64>();
    let b = match problem.b {
        BOperand::Dense(b) => b.cast::<f64>(),
        BOperand::Sparse(b) => b.to_dense().cast::<f64>(),
    };
    let c = problem.c.cast::<f64>();
    let (b_col, c_col) = (b.n_cols(), c.n_cols());

    let mut d1 = DenseMatrix::<f64>::zeros(n, c_col);
    for i in 0..n {
        for k in 0..c_col {
            let mut acc = 0.0;
            for m in 0..b_col {
                acc += b.get(i, m) * c.get(m, k);
            }
            *d1.get_mut(i, k) = acc;
        }
    }
    let mut d = DenseMatrix::<f64>::zeros(n, c_col);
    for j in 0..n {
        for k in 0..c_col {
            let mut acc = 0.0;
            for i in 0..n {
                acc += a.get(j, i) * d1.get(i, k);
            }
            *d.get_mut(j, k) = acc;
        }
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub max_abs_diff: f64,
    pub rel_frobenius: f64,
    pub pass: bool,
}

/// `rel_frobenius = ||x - y||_F / max(||y||_F, tiny)`.
pub fn compare<X: Scalar, Y: Scalar>(x: &DenseMatrix<X>, y: &DenseMatrix<Y>, tol: f64) -> Result<ComparisonReport> {
    if x.n_rows() != y.n_rows() || x.n_cols() != y.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare {}x{} with {}x{}",
            x.n_rows(),
            x.n_cols(),
            y.n_rows(),
            y.n_cols()
        )));
    }
    let mut max_abs_diff = 0.0f64;
    let mut diff_sq = 0.0f64;
    let mut ref_sq = 0.0f64;
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (a, b) = (a.to_f64(), b.to_f64());
        let diff = (a - b).abs();
        max_abs_diff = max_abs_diff.max(diff);
        diff_sq += diff * diff;
        ref_sq += b * b;
    }
    let rel_frobenius = diff_sq.sqrt() / ref_sq.sqrt().max(f64::MIN_POSITIVE);
    Ok(ComparisonReport {
        max_abs_diff,
        rel_frobenius,
        pass: rel_frobenius <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gen_random_sparse;
    use crate::SparseMatrixCsr;

    #[test]
    fn identity_operands() {
        let a = SparseMatrixCsr::<f64>::identity(4);
        let b = DenseMatrix::identity(4);
        let c = DenseMatrix::random(4, 3, 1);
        let d = dense_oracle(&FusedProblem::gemm_spmm(&a, &b, &c).unwrap()).unwrap();
        assert_eq!(d, c);
    }

    #[test]
    fn scalar_case() {
        let a = SparseMatrixCsr::from_triplets(1, 1, vec![(0, 0, 2.0f32)]).unwrap();
        let b = DenseMatrix::from_vec(1, 1, vec![3.0f32]).unwrap();
        let c = DenseMatrix::from_vec(1, 1, vec![5.0f32]).unwrap();
        let d = dense_oracle(&FusedProblem::gemm_spmm(&a, &b, &c).unwrap()).unwrap();
        assert_eq!(d.data(), &[30.0]);
    }

    #[test]
    fn matches_reassociated_product() {
        // (A B) C with i-k-j loop order, independent of the oracle's code path.
        let n = 50;
        let a = gen_random_sparse::<f64>(n, 0.1, 4);
        let b = DenseMatrix::<f64>::random(n, 6, 5);
        let c = DenseMatrix::<f64>::random(6, 4, 6);
        let d = dense_oracle(&FusedProblem::gemm_spmm(&a, &b, &c).unwrap()).unwrap();

        let ad = a.to_dense();
        let mut ab = vec![0.0; n * 6];
        for i in 0..n {
            for k in 0..n {
                let aik = *ad.get(i, k);
                for j in 0..6 {
                    ab[i * 6 + j] += aik * b.get(k, j);
                }
            }
        }
        let mut abc = vec![0.0; n * 4];
        for i in 0..n {
            for k in 0..6 {
                for j in 0..4 {
                    abc[i * 4 + j] += ab[i * 6 + k] * c.get(k, j);
                }
            }
        }
        let other = DenseMatrix::from_vec(n, 4, abc).unwrap();
        assert!(compare(&d, &other, 1e-12).unwrap().pass);
    }

    #[test]
    fn size_guard() {
        let a = SparseMatrixCsr::<f32>::identity(ORACLE_MAX_N + 1);
        let b = DenseMatrix::zeros(ORACLE_MAX_N + 1, 1);
        let c = DenseMatrix::zeros(1, 1);
        let p = FusedProblem::gemm_spmm(&a, &b, &c).unwrap();
        assert!(matches!(dense_oracle(&p), Err(Error::OracleTooLarge { .. })));
    }

    #[test]
    fn compare_cases() {
        let x = DenseMatrix::<f64>::random(3, 3, 1);
        let r = compare(&x, &x, 0.0).unwrap();
        assert_eq!((r.rel_frobenius, r.max_abs_diff, r.pass), (0.0, 0.0, true));

        let z = DenseMatrix::<f64>::zeros(2, 2);
        let r = compare(&z, &z, 0.0).unwrap();
        assert_eq!(r.rel_frobenius, 0.0);
        assert!(r.pass);

        let y = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let mut x = y.clone();
        *x.get_mut(1, 0) += 0.5;
        let r = compare(&x, &y, 0.2).unwrap();
        assert_eq!(r.rel_frobenius, 0.5 / 5.0);
        assert_eq!(r.max_abs_diff, 0.5);
        assert!(r.pass);
        assert!(!compare(&x, &y, 0.05).unwrap().pass);

        assert!(compare(&z, &x.cast::<f32>(), 1.0).is_ok());
        assert!(compare(&z, &DenseMatrix::<f64>::zeros(2, 3), 1.0).is_err());
    }

    #[test]
    fn compare_is_symmetric_for_small_perturbations() {
        let y = DenseMatrix::<f64>::random(10, 10, 3);
        let mut x = y.clone();
        for v in x.data_mut().iter_mut().step_by(7) {
            *v *= 1.0 + 1e-12;
        }
        let tol = 1e-11;
        assert_eq!(compare(&x, &y, tol).unwrap().pass, compare(&y, &x, tol).unwrap().pass);
    }
}
