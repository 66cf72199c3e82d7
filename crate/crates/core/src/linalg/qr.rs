use super::{dot, norm, DenseMatrix, LinalgError, RANK_TOL};

/// Orthonormal basis for the column span of `g`.
///
/// Modified Gram-Schmidt with one re-orthogonalization pass. A column whose
/// residual falls below `RANK_TOL` times the largest input column norm is
/// dropped, so the returned width equals the numerical rank.
pub fn orthonormal_basis(g: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if g.cols() == 0 {
        return Err(LinalgError::ZeroSubspace);
    }
    let columns: Vec<Vec<f64>> = (0..g.cols()).map(|j| g.column(j)).collect();
    let max_norm = columns.iter().map(|c| norm(c)).fold(0.0_f64, f64::max);
    if max_norm == 0.0 {
        return Err(LinalgError::ZeroSubspace);
    }
    let cutoff = RANK_TOL * max_norm;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for mut c in columns {
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &c);
                c.iter_mut().zip(q).for_each(|(x, qi)| *x -= proj * qi);
            }
        }
        let n = norm(&c);
        if n > cutoff {
            c.iter_mut().for_each(|x| *x /= n);
            basis.push(c);
        }
    }
    if basis.is_empty() {
        return Err(LinalgError::ZeroSubspace);
    }
    DenseMatrix::from_columns(&basis)
}

/// `Q Qᵀ g` for a matrix `Q` with orthonormal columns.
pub fn project_onto_span(g: &[f64], q: &DenseMatrix) -> Result<Vec<f64>, LinalgError> {
    let coeffs = q.tr_matvec(g)?;
    q.matvec(&coeffs)
}
