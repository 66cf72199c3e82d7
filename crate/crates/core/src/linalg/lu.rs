use super::{DenseMatrix, LinalgError};

/// LU factorization with partial pivoting of a square matrix, `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    swaps: usize,
}

impl LuFactors {
    pub fn factor(a: &DenseMatrix) -> Self {
        let n = a.rows();
        assert_eq!(n, a.cols(), "LU requires a square matrix");
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
                swaps += 1;
            }
            let d = lu[k * n + k];
            if d == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Self { n, lu, perm, swaps }
    }

    /// Diagonal of `U`.
    pub fn pivots(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.lu[k * self.n + k]).collect()
    }

    pub fn det(&self) -> f64 {
        let sign = if self.swaps % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.pivots().iter().product::<f64>()
    }

    pub fn is_singular(&self) -> bool {
        self.pivots().iter().any(|&p| p == 0.0)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
        }
        if self.is_singular() {
            return Err(LinalgError::Singular);
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        Ok(x)
    }
}

pub fn abs_det(a: &DenseMatrix) -> f64 {
    LuFactors::factor(a).det().abs()
}

pub fn log_abs_det(a: &DenseMatrix) -> f64 {
    LuFactors::factor(a).pivots().iter().map(|p| p.abs().ln()).sum()
}

/// Solves `X P = V` for `X`, i.e. returns `V P⁻¹` (rows of `V` expressed in the rows of `P`).
pub fn solve_transposed_rows(v: &DenseMatrix, p: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if v.cols() != p.rows() {
        return Err(LinalgError::DimensionMismatch { expected: p.rows(), got: v.cols() });
    }
    let lu = LuFactors::factor(&p.transpose());
    if lu.is_singular() {
        return Err(LinalgError::Singular);
    }
    let mut out = DenseMatrix::zeros(v.rows(), v.cols());
    for i in 0..v.rows() {
        let x = lu.solve(v.row(i))?;
        out.row_mut(i).copy_from_slice(&x);
    }
    Ok(out)
}
