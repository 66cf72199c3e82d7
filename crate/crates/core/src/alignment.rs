//! Gradient alignment between a batch and a selected subset.
//!
//! The batch mean gradient `ḡ` is compared against the span of the selected
//! samples' gradients `G_R`. The residual energy `‖ḡ − Q Qᵀ ḡ‖²` (with `Q` an
//! orthonormal basis of `G_R`) drives the choice of subset size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm, orthonormal_basis, thin_svd, DenseMatrix, LinalgError};
use crate::maxvol::{fast_maxvol, MaxvolError, SelectionResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error("gradient vector is zero")]
    ZeroGradient,
    #[error("candidate rank set must be non-empty and strictly ascending")]
    BadRankSet,
    #[error("no candidate rank produced a usable subset: {}", .0.join("; "))]
    NoViableCandidate(Vec<String>),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Maxvol(#[from] MaxvolError),
}

/// Whether projection errors are reported relative to `‖ḡ‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    #[default]
    Normalized,
    Absolute,
}

/// Per-sample gradients of one batch, one column per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    per_sample: DenseMatrix,
    mean: Vec<f64>,
}

impl GradientBundle {
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, LinalgError> {
        if columns.is_empty() {
            return Err(LinalgError::ZeroSubspace);
        }
        let per_sample = DenseMatrix::from_columns(columns)?;
        let k = columns.len() as f64;
        let mut mean = vec![0.0; per_sample.rows()];
        for c in columns {
            mean.iter_mut().zip(c).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= k);
        Ok(Self { per_sample, mean })
    }

    pub fn per_sample(&self) -> &DenseMatrix {
        &self.per_sample
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.per_sample.rows()
    }

    pub fn batch_size(&self) -> usize {
        self.per_sample.cols()
    }

    /// `G(:, idx)`
    pub fn columns(&self, idx: &[usize]) -> DenseMatrix {
        self.per_sample.select_cols(idx)
    }

    /// Unweighted mean of the selected columns.
    pub fn subset_mean(&self, idx: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &j in idx {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.per_sample[(i, j)];
            }
        }
        let n = idx.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Residual energy of `ḡ` outside `span(G_R)`.
///
/// Returns `0` for a zero `ḡ`. In normalized mode the result is divided by
/// `‖ḡ‖²` and lies in `[0, 1]`.
pub fn projection_error(g_bar: &[f64], g_r: &DenseMatrix, mode: ErrorMode) -> Result<f64, AlignmentError> {
    if g_bar.len() != g_r.rows() {
        return Err(LinalgError::DimensionMismatch { expected: g_r.rows(), got: g_bar.len() }.into());
    }
    let q = orthonormal_basis(g_r)?;
    let energy = dot(g_bar, g_bar);
    if energy == 0.0 {
        return Ok(0.0);
    }
    let coeffs = q.tr_matvec(g_bar)?;
    let proj = q.matvec(&coeffs)?;
    let residual: f64 = g_bar.iter().zip(&proj).map(|(g, p)| (g - p) * (g - p)).sum();
    Ok(match mode {
        ErrorMode::Absolute => residual,
        ErrorMode::Normalized => (residual / energy).min(1.0),
    })
}

/// Angle between `ḡ` and `span(G_R)`, in `[0, π/2]`.
pub fn angular_error(g_bar: &[f64], g_r: &DenseMatrix) -> Result<f64, AlignmentError> {
    let n = norm(g_bar);
    if n == 0.0 {
        return Err(AlignmentError::ZeroGradient);
    }
    let q = orthonormal_basis(g_r)?;
    let unit: Vec<f64> = g_bar.iter().map(|g| g / n).collect();
    let captured = dot(&q.tr_matvec(&unit)?, &q.tr_matvec(&unit)?);
    Ok((1.0 - captured).clamp(0.0, 1.0).sqrt().asin())
}

pub fn cosine_alignment(a: &[f64], b: &[f64]) -> Result<f64, AlignmentError> {
    if a.len() != b.len() {
        return Err(LinalgError::DimensionMismatch { expected: a.len(), got: b.len() }.into());
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(AlignmentError::ZeroGradient);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCandidate {
    pub rank: usize,
    pub error: f64,
    pub selection: SelectionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub candidates: Vec<RankCandidate>,
    pub chosen_rank: usize,
    pub satisfied: bool,
    pub epsilon: f64,
    pub diagnostics: Vec<String>,
}

impl RankDecision {
    pub fn chosen(&self) -> &RankCandidate {
        self.candidates.iter().find(|c| c.rank == self.chosen_rank).expect("chosen rank is a candidate")
    }
}

/// Picks the subset size from `rset`.
///
/// Every candidate `R` selects rows by [`fast_maxvol`] on the leading `R`
/// feature columns and scores them by [`projection_error`]. Among candidates
/// within `epsilon`, the smallest error wins (near-equal errors resolve to the
/// smaller `R`). If none is within `epsilon`, the largest candidate is used.
/// Candidates that cannot be evaluated are skipped and logged in
/// `diagnostics`.
pub fn select_rank(
    features: &DenseMatrix,
    grads: &GradientBundle,
    rset: &[usize],
    epsilon: f64,
    mode: ErrorMode,
) -> Result<RankDecision, AlignmentError> {
    if rset.is_empty() || rset.windows(2).any(|w| w[0] >= w[1]) || rset[0] == 0 {
        return Err(AlignmentError::BadRankSet);
    }
    if features.rows() != grads.batch_size() {
        return Err(LinalgError::DimensionMismatch { expected: grads.batch_size(), got: features.rows() }.into());
    }
    let g_bar = grads.mean();
    let tie_tol = match mode {
        ErrorMode::Normalized => 1e-12,
        ErrorMode::Absolute => 1e-12 * dot(g_bar, g_bar),
    };

    let mut candidates = Vec::with_capacity(rset.len());
    let mut diagnostics = Vec::new();
    for &r in rset {
        let selection = match fast_maxvol(features, r) {
            Ok(s) => s,
            Err(e) => {
                diagnostics.push(format!("rank {r}: {e}"));
                continue;
            }
        };
        if selection.is_empty() {
            diagnostics.push(format!("rank {r}: no rows selected"));
            continue;
        }
        if selection.truncated {
            diagnostics.push(format!("rank {r}: truncated to {} rows", selection.len()));
        }
        match projection_error(g_bar, &grads.columns(&selection.indices), mode) {
            Ok(error) => candidates.push(RankCandidate { rank: r, error, selection }),
            Err(e) => diagnostics.push(format!("rank {r}: {e}")),
        }
    }
    if candidates.is_empty() {
        return Err(AlignmentError::NoViableCandidate(diagnostics));
    }
    debug_assert!(
        candidates.windows(2).all(|w| w[1].error <= w[0].error + tie_tol.max(1e-12)),
        "projection error must not grow along nested selections"
    );

    let feasible = candidates.iter().filter(|c| c.error <= epsilon);
    let best = feasible.fold(None::<&RankCandidate>, |best, c| match best {
        Some(b) if c.error >= b.error - tie_tol => Some(b),
        _ => Some(c),
    });
    let (chosen_rank, satisfied) = match best {
        Some(c) => (c.rank, true),
        None => (candidates.last().expect("non-empty").rank, false),
    };
    Ok(RankDecision { candidates, chosen_rank, satisfied, epsilon, diagnostics })
}

/// Per-sample gradient map used by [`remark1_check`].
pub trait GradientOracle {
    fn gradient(&self, sample: &[f64]) -> Vec<f64>;
}

/// Gradient of `½ (aᵀθ − aᵀw*)²` with respect to `θ`: `a aᵀ (θ − w*)`.
///
/// On the ball `‖a‖ ≤ ρ` this map is Lipschitz in `a` with constant
/// `2ρ‖θ − w*‖`.
#[derive(Debug, Clone)]
pub struct LeastSquaresGradient {
    delta: Vec<f64>,
}

impl LeastSquaresGradient {
    pub fn new(theta: &[f64], teacher: &[f64]) -> Self {
        Self { delta: theta.iter().zip(teacher).map(|(t, w)| t - w).collect() }
    }

    pub fn lipschitz_on_ball(&self, radius: f64) -> f64 {
        2.0 * radius * norm(&self.delta)
    }
}

impl GradientOracle for LeastSquaresGradient {
    fn gradient(&self, sample: &[f64]) -> Vec<f64> {
        let s = dot(sample, &self.delta);
        sample.iter().map(|a| a * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    /// `‖ḡ(A) − ḡ(A(S, :))‖`
    pub lhs: f64,
    /// `(K / R) · L_g · σ_{R+1}(A)`
    pub rhs: f64,
    pub sigma_next: f64,
    pub selected: Vec<usize>,
}

/// Gap between the batch mean gradient and the mean over the rows that
/// [`fast_maxvol`] picks from the top-`r` left singular vectors of `a`,
/// next to the bound `(K/R) L_g σ_{R+1}`. `σ_{R+1}` is taken as zero when `r`
/// already equals `min(K, M)`.
pub fn remark1_check(
    a: &DenseMatrix,
    oracle: &dyn GradientOracle,
    r: usize,
    lipschitz: f64,
) -> Result<GapBound, AlignmentError> {
    let (k, m) = a.shape();
    let full = thin_svd(a, k.min(m))?;
    let sigma_next = full.singular_values.get(r).copied().unwrap_or(0.0);
    let basis = full.u.leading_cols(r);
    if basis.cols() < r {
        return Err(LinalgError::RankOutOfRange { rank: r, max: k.min(m) }.into());
    }
    let selected = fast_maxvol(&basis, r)?.indices;

    let mean_over = |rows: &mut dyn Iterator<Item = usize>, count: usize| {
        let mut acc: Option<Vec<f64>> = None;
        for i in rows {
            let g = oracle.gradient(a.row(i));
            match acc.as_mut() {
                Some(s) => s.iter_mut().zip(&g).for_each(|(x, y)| *x += y),
                None => acc = Some(g),
            }
        }
        let mut s = acc.unwrap_or_default();
        s.iter_mut().for_each(|x| *x /= count as f64);
        s
    };
    let batch = mean_over(&mut (0..k), k);
    let subset = mean_over(&mut selected.iter().copied(), selected.len());
    let lhs = norm(&batch.iter().zip(&subset).map(|(x, y)| x - y).collect::<Vec<_>>());
    let rhs = (k as f64 / r as f64) * lipschitz * sigma_next;
    Ok(GapBound { lhs, rhs, sigma_next, selected })
}
