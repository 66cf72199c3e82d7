//! Row-subset selection by (approximate) maximum volume.
//!
//! [`fast_maxvol`] picks `R` rows in `R` greedy steps: the first row is the
//! largest entry of the most relevant column, and every subsequent row is the
//! largest entry of the residual column left after eliminating the rows picked
//! so far. The residual satisfies
//!
//! ```text
//! det V([p, i], 1:j) = det V(p, 1:j-1) · r_j(i)
//! ```
//!
//! so maximizing `|r_j(i)|` maximizes the volume of the grown submatrix, and
//! the product of the chosen residual magnitudes is `|det V(p, 1:R)|`.
//!
//! [`conventional_maxvol`] is the classical swap iteration that refines a
//! starting set until every interpolation coefficient is bounded by
//! `swap_tol`. [`brute_force_maxvol`] enumerates all subsets and is only
//! meant as a test oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve_transposed_rows, DenseMatrix, LinalgError, LuFactors, RANK_TOL};

pub const DEFAULT_SWAP_TOL: f64 = 1.05;
const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaxvolError {
    #[error("cannot select {requested} rows from a {rows}x{cols} feature matrix")]
    RankOutOfRange { requested: usize, rows: usize, cols: usize },
    #[error("starting submatrix is singular")]
    SingularStart,
    #[error("{combinations} subsets exceed the brute-force limit")]
    TooLarge { combinations: u128 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected rows in selection order.
    pub indices: Vec<usize>,
    /// `|r_j(p_j)|` for each step.
    pub pivot_magnitudes: Vec<f64>,
    pub log_abs_det: f64,
    /// Selection stopped early on a vanishing pivot.
    pub truncated: bool,
    /// Multiplies and adds spent on the selection.
    pub elementary_op_count: u64,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn abs_det(&self) -> f64 {
        self.log_abs_det.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionalResult {
    pub selection: SelectionResult,
    pub swaps: usize,
    /// `max |B(i, j)|` of the final interpolation matrix.
    pub max_interpolation: f64,
    pub max_sweeps_reached: bool,
}

fn check_rank(v: &DenseMatrix, r: usize) -> Result<(), MaxvolError> {
    if r == 0 || r > v.cols() || r > v.rows() {
        return Err(MaxvolError::RankOutOfRange { requested: r, rows: v.rows(), cols: v.cols() });
    }
    Ok(())
}

/// Greedy volume-maximizing selection of `r` rows using the leading `r`
/// columns of `v`.
pub fn fast_maxvol(v: &DenseMatrix, r: usize) -> Result<SelectionResult, MaxvolError> {
    eliminate(v, r).map(|(sel, _)| sel)
}

/// Same as [`fast_maxvol`], also returning the eliminated working matrix `W`.
/// Column `j` of `W` is the residual the `j`-th pivot was taken from, so
/// `W(p_i, j) = 0` for every `i < j`.
pub fn fast_maxvol_with_residuals(
    v: &DenseMatrix,
    r: usize,
) -> Result<(SelectionResult, DenseMatrix), MaxvolError> {
    let (sel, cols) = eliminate(v, r)?;
    let k = v.rows();
    let data = (0..k).flat_map(|i| cols.chunks_exact(k).map(move |c| c[i])).collect();
    Ok((sel, DenseMatrix::new(k, r, data)?))
}

/// The elimination itself, on a column-major working copy so the inner
/// updates run over contiguous memory.
fn eliminate(v: &DenseMatrix, r: usize) -> Result<(SelectionResult, Vec<f64>), MaxvolError> {
    check_rank(v, r)?;
    let k = v.rows();
    let mut w = vec![0.0; k * r];
    for i in 0..k {
        for (j, x) in v.row(i)[..r].iter().enumerate() {
            w[j * k + i] = *x;
        }
    }
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = RANK_TOL * scale;

    let mut selected = vec![false; k];
    let mut indices = Vec::with_capacity(r);
    let mut pivots = Vec::with_capacity(r);
    let mut ops: u64 = 0;
    let mut truncated = false;

    for j in 0..r {
        let (done, rest) = w.split_at_mut((j + 1) * k);
        let col = &done[j * k..];
        let mut best = -1.0;
        let mut best_row = usize::MAX;
        for (i, (x, taken)) in col.iter().zip(&selected).enumerate() {
            if !*taken && x.abs() > best {
                best = x.abs();
                best_row = i;
            }
        }
        if best_row == usize::MAX || scale == 0.0 || best < floor {
            truncated = true;
            break;
        }
        selected[best_row] = true;
        indices.push(best_row);
        pivots.push(best);

        // Eliminate the pivot row from the remaining columns.
        let pivot = col[best_row];
        for target in rest.chunks_exact_mut(k) {
            let factor = target[best_row] / pivot;
            ops += 1;
            for (t, c) in target.iter_mut().zip(col) {
                *t -= c * factor;
            }
            ops += 2 * k as u64;
        }
    }

    let log_abs_det = pivots.iter().map(|p| p.ln()).sum();
    Ok((SelectionResult { indices, pivot_magnitudes: pivots, log_abs_det, truncated, elementary_op_count: ops }, w))
}

/// Classical swap-based maxvol started from the [`fast_maxvol`] selection.
///
/// Each step finds the largest interpolation coefficient `|B(i, j)|` of
/// `B = V(:, 1:r) V(p, 1:r)⁻¹`; if it exceeds `swap_tol`, row `i` replaces
/// `p_j` and `B` is refreshed by a rank-one update. Every swap multiplies the
/// volume by `|B(i, j)| > 1`.
pub fn conventional_maxvol(
    v: &DenseMatrix,
    r: usize,
    swap_tol: f64,
    max_sweeps: usize,
) -> Result<ConventionalResult, MaxvolError> {
    assert!(swap_tol >= 1.0, "swap_tol must be at least 1");
    let start = fast_maxvol(v, r)?;
    if start.truncated {
        return Err(MaxvolError::SingularStart);
    }
    let vr = v.leading_cols(r);
    let k = vr.rows();
    let mut p = start.indices.clone();
    let mut ops = start.elementary_op_count;

    let mut b = match solve_transposed_rows(&vr, &vr.select_rows(&p)) {
        Ok(b) => b,
        Err(LinalgError::Singular) => return Err(MaxvolError::SingularStart),
        Err(e) => return Err(e.into()),
    };
    // LU of the r×r block plus a triangular solve pair per row
    ops += (2 * r * r * r / 3) as u64 + (2 * k * r * r) as u64;

    let mut swaps = 0;
    let mut max_sweeps_reached = false;
    let max_interpolation = loop {
        let (mut bi, mut bj, mut bmax) = (0, 0, -1.0);
        for i in 0..k {
            for (j, val) in b.row(i).iter().enumerate() {
                if val.abs() > bmax {
                    bmax = val.abs();
                    bi = i;
                    bj = j;
                }
            }
        }
        if bmax <= swap_tol {
            break bmax;
        }
        if swaps >= max_sweeps {
            max_sweeps_reached = true;
            break bmax;
        }
        // B ← B − B(:, j) (B(i, :) − e_j)ᵀ / B(i, j)
        let x = b.column(bj);
        let mut y = b.row(bi).to_vec();
        y[bj] -= 1.0;
        let denom = b[(bi, bj)];
        for row in 0..k {
            let f = x[row] / denom;
            if f == 0.0 {
                continue;
            }
            for (bv, yv) in b.row_mut(row).iter_mut().zip(&y) {
                *bv -= f * yv;
            }
        }
        ops += (k + 2 * k * r) as u64;
        p[bj] = bi;
        swaps += 1;
    };

    let lu = LuFactors::factor(&vr.select_rows(&p));
    let pivots: Vec<f64> = lu.pivots().iter().map(|x| x.abs()).collect();
    let log_abs_det = pivots.iter().map(|x| x.ln()).sum();
    Ok(ConventionalResult {
        selection: SelectionResult {
            indices: p,
            pivot_magnitudes: pivots,
            log_abs_det,
            truncated: false,
            elementary_op_count: ops,
        },
        swaps,
        max_interpolation,
        max_sweeps_reached,
    })
}

/// Exhaustive search over all `r`-subsets of rows for the largest
/// `|det V(S, 1:r)|`. Ties resolve to the lexicographically smallest set.
pub fn brute_force_maxvol(v: &DenseMatrix, r: usize) -> Result<SelectionResult, MaxvolError> {
    check_rank(v, r)?;
    let k = v.rows();
    let combinations = binomial(k, r);
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(MaxvolError::TooLarge { combinations });
    }
    let vr = v.leading_cols(r);
    let mut subset: Vec<usize> = (0..r).collect();
    let mut best = (-1.0_f64, subset.clone());
    let mut ops: u64 = 0;
    loop {
        let d = LuFactors::factor(&vr.select_rows(&subset)).det().abs();
        ops += (2 * r * r * r / 3) as u64;
        if d > best.0 * (1.0 + 1e-12) {
            best = (d, subset.clone());
        }
        if !next_combination(&mut subset, k) {
            break;
        }
    }
    let (det, indices) = best;
    let pivots: Vec<f64> = LuFactors::factor(&vr.select_rows(&indices)).pivots().iter().map(|x| x.abs()).collect();
    Ok(SelectionResult {
        indices,
        log_abs_det: pivots.iter().map(|x| x.ln()).sum(),
        pivot_magnitudes: pivots,
        truncated: det <= 0.0,
        elementary_op_count: ops,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let r = c.len();
    for pos in (0..r).rev() {
        if c[pos] < n - r + pos {
            c[pos] += 1;
            for q in pos + 1..r {
                c[q] = c[q - 1] + 1;
            }
            return true;
        }
    }
    false
}
