//! Relevance-ordered low-rank embeddings of a batch.
//!
//! A batch `A` (K samples × M inputs) is mapped to a `K × R` matrix whose
//! columns are sorted by non-increasing relevance. Row sampling only looks at
//! the leading columns, so the ordering is part of the contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{thin_svd, DenseMatrix, LinalgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractorId {
    SvdTopR,
    VarianceOrder,
    External,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("requested {requested} features, allowed range is 1..={max}")]
    RankOutOfRange { requested: usize, max: usize },
    #[error("batch has zero variance in every column")]
    DegenerateBatch,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    values: DenseMatrix,
    relevance: Vec<f64>,
    extractor: ExtractorId,
    /// Fewer columns than requested because the batch has lower numerical rank.
    truncated: bool,
}

impl FeatureMatrix {
    /// Wraps caller-supplied embeddings; columns are reordered by the given
    /// relevance scores (stable in column index).
    pub fn from_external(values: DenseMatrix, relevance: Vec<f64>) -> Result<Self, FeatureError> {
        if relevance.len() != values.cols() {
            return Err(LinalgError::DimensionMismatch { expected: values.cols(), got: relevance.len() }.into());
        }
        let order = descending_order(&relevance);
        Ok(Self {
            values: values.select_cols(&order),
            relevance: order.iter().map(|&j| relevance[j]).collect(),
            extractor: ExtractorId::External,
            truncated: false,
        })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn relevance(&self) -> &[f64] {
        &self.relevance
    }

    pub fn extractor(&self) -> ExtractorId {
        self.extractor
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }
}

/// Top-`r` left singular vectors of the (uncentered) batch, relevance = σ.
pub fn extract_svd_features(a: &DenseMatrix, r: usize) -> Result<FeatureMatrix, FeatureError> {
    let max = a.rows().min(a.cols());
    if r == 0 || r > max {
        return Err(FeatureError::RankOutOfRange { requested: r, max });
    }
    let svd = thin_svd(a, r)?;
    let rank = svd.numerical_rank();
    if rank == 0 {
        return Err(FeatureError::DegenerateBatch);
    }
    let keep = rank.min(r);
    Ok(FeatureMatrix {
        values: svd.u.leading_cols(keep),
        relevance: svd.singular_values[..keep].to_vec(),
        extractor: ExtractorId::SvdTopR,
        truncated: keep < r,
    })
}

/// The `r` raw columns with the largest sample variance, mean-centered.
pub fn extract_variance_features(a: &DenseMatrix, r: usize) -> Result<FeatureMatrix, FeatureError> {
    let (k, m) = a.shape();
    if r == 0 || r > m {
        return Err(FeatureError::RankOutOfRange { requested: r, max: m });
    }
    let means: Vec<f64> = (0..m).map(|j| (0..k).map(|i| a[(i, j)]).sum::<f64>() / k as f64).collect();
    let variances: Vec<f64> = (0..m)
        .map(|j| {
            if k < 2 {
                return 0.0;
            }
            (0..k).map(|i| (a[(i, j)] - means[j]).powi(2)).sum::<f64>() / (k - 1) as f64
        })
        .collect();
    if variances.iter().all(|&v| v == 0.0) {
        return Err(FeatureError::DegenerateBatch);
    }
    let order = descending_order(&variances);
    let chosen = &order[..r];
    let mut values = a.select_cols(chosen);
    for i in 0..k {
        for (jj, &j) in chosen.iter().enumerate() {
            values[(i, jj)] -= means[j];
        }
    }
    Ok(FeatureMatrix {
        values,
        relevance: chosen.iter().map(|&j| variances[j]).collect(),
        extractor: ExtractorId::VarianceOrder,
        truncated: false,
    })
}

fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // sort_by is stable, so equal scores keep column order
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    order
}
