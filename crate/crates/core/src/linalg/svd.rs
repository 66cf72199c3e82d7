use serde::{Deserialize, Serialize};

use super::{dot, DenseMatrix, LinalgError, RANK_TOL};

const MAX_SWEEPS: usize = 60;

/// Truncated singular value decomposition `A ≈ U diag(σ) Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinSvd {
    /// rows × r, orthonormal columns.
    pub u: DenseMatrix,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// r × cols, orthonormal rows.
    pub vt: DenseMatrix,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Number of singular values above `RANK_TOL * σ₁`.
    pub fn numerical_rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.singular_values.iter().take_while(|&&s| s > RANK_TOL * top).count()
    }

    /// `U diag(σ) Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformant")
    }
}

/// Top-`r` singular triplets by one-sided Jacobi.
///
/// Sign convention: the largest-magnitude entry of every left singular vector
/// is positive; among entries within `1e-12` of the maximum the earliest wins.
pub fn thin_svd(a: &DenseMatrix, r: usize) -> Result<ThinSvd, LinalgError> {
    let (m, n) = a.shape();
    let max = m.min(n);
    if r == 0 || r > max {
        return Err(LinalgError::RankOutOfRange { rank: r, max });
    }
    if let Some(pos) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite { row: pos / n, col: pos % n });
    }

    // Jacobi on the columns of whichever orientation is tall.
    let tall = m >= n;
    let work = if tall { a.clone() } else { a.transpose() };
    let (cols_w, rot) = jacobi_orthogonalize(&work);
    let k = cols_w.len();
    let norms: Vec<f64> = cols_w.iter().map(|c| dot(c, c).sqrt()).collect();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let top = sigma[0];

    // Normalized Jacobi columns; numerically null ones are completed later.
    let mut w_hat: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&i| {
            if top > 0.0 && norms[i] > RANK_TOL * top {
                Some(cols_w[i].iter().map(|v| v / norms[i]).collect())
            } else {
                None
            }
        })
        .collect();
    complete_orthonormal(&mut w_hat, cols_w.first().map_or(0, Vec::len));
    let w_hat: Vec<Vec<f64>> = w_hat.into_iter().map(|c| c.expect("completed")).collect();
    let rot_cols: Vec<Vec<f64>> = order.iter().map(|&i| rot.column(i)).collect();

    // Left vectors live in the row space of the original A.
    let (mut left, mut right) = if tall { (w_hat, rot_cols) } else { (rot_cols, w_hat) };
    left.truncate(r);
    right.truncate(r);
    let mut sigma = sigma;
    sigma.truncate(r);

    for (l, rt) in left.iter_mut().zip(right.iter_mut()) {
        let peak = l.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let lead = l.iter().position(|v| v.abs() >= peak - 1e-12).unwrap_or(0);
        if l[lead] < 0.0 {
            l.iter_mut().for_each(|v| *v = -*v);
            rt.iter_mut().for_each(|v| *v = -*v);
        }
    }

    let u = DenseMatrix::from_columns(&left)?;
    let vt = DenseMatrix::from_columns(&right)?.transpose();
    Ok(ThinSvd { u, singular_values: sigma, vt })
}

/// One-sided Jacobi: returns the rotated columns `A V` (mutually orthogonal)
/// and the accumulated rotation `V`.
fn jacobi_orthogonalize(a: &DenseMatrix) -> (Vec<Vec<f64>>, DenseMatrix) {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = (m as f64 * f64::EPSILON).max(1e-15);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let vm = DenseMatrix::from_columns(&v).expect("rotation is finite");
    (cols, vm)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let a = *xp;
        let b = *xq;
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other slot.
pub(crate) fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], dim: usize) {
    let mut candidate = 0;
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let proj = dot(other, &e);
                    e.iter_mut().zip(other).for_each(|(x, o)| *x -= proj * o);
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > 0.5 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[slot] = Some(e);
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::tests_support::{jacobi_eigenvalues, random_matrix};

    fn ortho_err(q: &DenseMatrix) -> f64 {
        let g = q.transpose().matmul(q).unwrap();
        g.sub(&DenseMatrix::identity(g.rows())).unwrap().max_abs()
    }

    #[test]
    fn diagonal_matrix() {
        let a = DenseMatrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let s = thin_svd(&a, 2).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 2.0]);
        assert_eq!(s.u.as_slice(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rank_one_two_by_two() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let s = thin_svd(&a, 1).unwrap();
        assert!((s.singular_values[0] - 1.0).abs() < 1e-15);
        let full = thin_svd(&a, 2).unwrap();
        assert!(ortho_err(&full.u) < 1e-12);
        assert!(ortho_err(&full.vt.transpose()) < 1e-12);
    }

    #[test]
    fn random_matches_gram_eigenvalues() {
        let a = random_matrix(8, 5, 11);
        let s = thin_svd(&a, 5).unwrap();
        let recon = s.reconstruct().sub(&a).unwrap().frobenius_norm();
        assert!(recon <= 1e-8 * a.frobenius_norm());
        let eig = jacobi_eigenvalues(&a.transpose().matmul(&a).unwrap());
        for (sv, ev) in s.singular_values.iter().zip(&eig) {
            assert!((sv - ev.max(0.0).sqrt()).abs() < 1e-8, "{sv} vs {ev}");
        }
        assert!(ortho_err(&s.u) < 1e-10);
        assert!(ortho_err(&s.vt.transpose()) < 1e-10);
    }

    #[test]
    fn wide_matrix_goes_through_transpose() {
        let a = random_matrix(4, 9, 3);
        let s = thin_svd(&a, 4).unwrap();
        assert!(s.reconstruct().sub(&a).unwrap().frobenius_norm() <= 1e-8 * a.frobenius_norm());
        assert!(ortho_err(&s.u) < 1e-10);
        assert!(ortho_err(&s.vt.transpose()) < 1e-10);
    }

    #[test]
    fn sign_convention_is_stable() {
        let a = random_matrix(6, 4, 5);
        let s = thin_svd(&a, 3).unwrap();
        let s2 = thin_svd(&a.scale(-1.0), 3).unwrap();
        for j in 0..3 {
            let col = s.u.column(j);
            let peak = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let first = col.iter().find(|v| v.abs() >= peak - 1e-12).unwrap();
            assert!(*first > 0.0);
        }
        assert!(s.u.sub(&s2.u).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = DenseMatrix::identity(3);
        assert!(matches!(thin_svd(&a, 0), Err(LinalgError::RankOutOfRange { .. })));
        assert!(matches!(thin_svd(&a, 4), Err(LinalgError::RankOutOfRange { .. })));
    }

    #[test]
    fn rank_deficient_completion_keeps_orthonormality() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
            .unwrap();
        let s = thin_svd(&a, 3).unwrap();
        assert_eq!(s.numerical_rank(), 1);
        assert!(ortho_err(&s.u) < 1e-10);
        assert!(ortho_err(&s.vt.transpose()) < 1e-10);
        assert!(s.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-12);
    }
}
