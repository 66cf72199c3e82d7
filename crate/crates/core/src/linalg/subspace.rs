use super::{orthonormal_basis, DenseMatrix, LinalgError};

/// Sum of squared cosines of the principal angles between `span(v1)` and
/// `span(v2)`, computed as `‖Q₁ᵀ Q₂‖_F²`. Lies in `[0, min(rank₁, rank₂)]`.
pub fn subspace_similarity(v1: &DenseMatrix, v2: &DenseMatrix) -> Result<f64, LinalgError> {
    if v1.rows() != v2.rows() {
        return Err(LinalgError::DimensionMismatch { expected: v1.rows(), got: v2.rows() });
    }
    let q1 = orthonormal_basis(v1)?;
    let q2 = orthonormal_basis(v2)?;
    let cross = q1.transpose().matmul(&q2)?;
    let k = q1.cols().min(q2.cols()) as f64;
    Ok(cross.frobenius_norm().powi(2).min(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::thin_svd;
    use crate::linalg::tests_support::random_matrix;

    #[test]
    fn identical_and_orthogonal() {
        let v = random_matrix(6, 3, 1);
        assert!((subspace_similarity(&v, &v).unwrap() - 3.0).abs() < 1e-12);
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert_eq!(subspace_similarity(&x, &y).unwrap(), 0.0);
        assert_eq!(subspace_similarity(&x, &DenseMatrix::zeros(2, 1)), Err(LinalgError::ZeroSubspace));
    }

    #[test]
    fn matches_singular_values_of_cross_product() {
        let q1 = orthonormal_basis(&random_matrix(150, 4, 2)).unwrap();
        let q2 = orthonormal_basis(&random_matrix(150, 4, 3)).unwrap();
        let cross = q1.transpose().matmul(&q2).unwrap();
        let sv = thin_svd(&cross, 4).unwrap().singular_values;
        let oracle: f64 = sv.iter().map(|s| s * s).sum();
        assert!((subspace_similarity(&q1, &q2).unwrap() - oracle).abs() < 1e-8);
    }
}
