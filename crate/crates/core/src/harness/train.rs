use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::data::{Dataset, Target};
use super::model::Model;
use crate::alignment::{cosine_alignment, select_rank, ErrorMode, GradientBundle};
use crate::features::{extract_svd_features, extract_variance_features};
use crate::linalg::DenseMatrix;
use crate::par::map_ordered;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampler {
    Graft,
    GraftWarm {
        #[serde(default = "default_warm_fraction")]
        warm_fraction: f64,
    },
    Random {
        fraction: f64,
    },
    Full,
}

fn default_warm_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to zero over the run.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    #[default]
    RawSvd,
    VarianceOrder,
    ExternalEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    #[serde(default = "default_selection_period")]
    pub selection_period: usize,
    pub batch_size: usize,
    #[serde(default = "default_rset")]
    pub rset: Vec<usize>,
    /// `"inf"` in JSON disables the threshold.
    #[serde(default = "default_epsilon", with = "epsilon_repr")]
    pub epsilon: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub seed: u64,
    pub sampler: Sampler,
    #[serde(default)]
    pub error_mode: ErrorMode,
    #[serde(default)]
    pub feature_source: FeatureSource,
    /// Run per-batch selection on the rayon pool.
    #[serde(default)]
    pub parallel_batches: bool,
    /// Record `‖∇L(Θ_t)‖²` over the training split each iteration. Not
    /// charged to the gradient-evaluation counter.
    #[serde(default)]
    pub track_full_gradient: bool,
}

fn default_selection_period() -> usize {
    50
}
fn default_rset() -> Vec<usize> {
    vec![8]
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_learning_rate() -> f64 {
    0.1
}

mod epsilon_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

impl TrainConfig {
    pub fn new(iterations: usize, batch_size: usize, sampler: Sampler) -> Self {
        Self {
            iterations,
            selection_period: default_selection_period(),
            batch_size,
            rset: default_rset(),
            epsilon: default_epsilon(),
            learning_rate: default_learning_rate(),
            schedule: Schedule::default(),
            seed: 0,
            sampler,
            error_mode: ErrorMode::default(),
            feature_source: FeatureSource::default(),
            parallel_batches: false,
            track_full_gradient: false,
        }
    }

    pub fn validate(&self, data: &Dataset, model: &Model) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        let n = data.train().len();
        if self.selection_period == 0 {
            return bad("selection_period must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(format!("batch_size {} must lie in 1..={n}", self.batch_size));
        }
        if self.rset.is_empty() || self.rset[0] == 0 || self.rset.windows(2).any(|w| w[0] >= w[1]) {
            return bad("rset must be non-empty, positive and strictly ascending".into());
        }
        if *self.rset.last().expect("non-empty") > self.batch_size {
            return bad(format!("max(rset) exceeds batch_size {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad("epsilon must be non-negative".into());
        }
        match self.sampler {
            Sampler::GraftWarm { warm_fraction } if !(warm_fraction > 0.0 && warm_fraction < 1.0) => {
                return bad("warm_fraction must lie in (0, 1)".into());
            }
            Sampler::Random { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                return bad("random fraction must lie in (0, 1]".into());
            }
            _ => {}
        }
        if self.feature_source == FeatureSource::ExternalEmbedding && data.embeddings().is_none() {
            return bad("feature_source external_embedding needs dataset embeddings".into());
        }
        if model.input_dim() != data.input_dim() {
            return bad(format!("model expects {} inputs, data has {}", model.input_dim(), data.input_dim()));
        }
        if model.is_classifier() != data.is_classification() {
            return bad("model and label type disagree".into());
        }
        if let Model::Logistic { classes, .. } | Model::Mlp { classes, .. } = *model {
            if classes < data.class_count() {
                return bad(format!("model has {classes} classes, data has {}", data.class_count()));
            }
        }
        Ok(())
    }

    fn warm_iterations(&self) -> usize {
        match self.sampler {
            Sampler::GraftWarm { warm_fraction } => (warm_fraction * self.iterations as f64).ceil() as usize,
            _ => 0,
        }
    }

    fn learning_rate_at(&self, t: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                let phase = (t - 1) as f64 / self.iterations.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * phase).cos())
            }
        }
    }
}

/// Outcome of Stage 1 for one batch at one refresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub batch: usize,
    pub subset_size: usize,
    pub rank: Option<usize>,
    pub projection_error: Option<f64>,
    /// Cosine between the batch mean gradient and the subset mean gradient.
    pub cosine: Option<f64>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub learning_rate: f64,
    pub refreshed: bool,
    pub samples_used: usize,
    /// One entry per batch, present only on iterations that ran Stage 1.
    pub selections: Vec<SelectionRecord>,
    pub gradient_evaluations_cumulative: u64,
    pub full_gradient_norm_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Per class, how many samples entered a model update this epoch.
    pub class_histogram: Vec<u64>,
    pub gradient_evaluations_cumulative: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
    pub final_test_accuracy: f64,
    pub total_gradient_evaluations: u64,
    pub mean_subset_fraction: f64,
    pub final_params: Vec<f64>,
    pub diagnostics: Vec<String>,
    /// Kept out of serialized traces so they stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_seconds: f64,
}

impl RunTrace {
    pub fn refresh_count(&self) -> usize {
        self.iterations.iter().filter(|r| !r.selections.is_empty()).count()
    }

    pub fn min_full_gradient_norm_sq(&self) -> Option<f64> {
        self.iterations.iter().filter_map(|r| r.full_gradient_norm_sq).reduce(f64::min)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model diverged at iteration {iteration}")]
    DivergedModel { iteration: usize, trace: Box<RunTrace> },
}

struct BatchOutcome {
    /// Dataset indices used for Stage 2.
    subset: Vec<usize>,
    evaluations: u64,
    record: SelectionRecord,
    diagnostic: Option<String>,
    finite: bool,
}

fn select_for_batch(
    cfg: &TrainConfig,
    data: &Dataset,
    model: &Model,
    params: &[f64],
    b: usize,
    batch: &[usize],
) -> BatchOutcome {
    let k = batch.len();
    let mut finite = true;
    let columns: Vec<Vec<f64>> = batch
        .iter()
        .map(|&i| {
            let (loss, g) = model.sample_gradient(params, data.sample(i), data.target(i));
            finite &= loss.is_finite() && g.iter().all(|v| v.is_finite());
            g
        })
        .collect();
    let fallback = |diagnostic: String, finite: bool| BatchOutcome {
        subset: batch.to_vec(),
        evaluations: k as u64,
        record: SelectionRecord {
            batch: b,
            subset_size: k,
            rank: None,
            projection_error: None,
            cosine: None,
            satisfied: false,
        },
        diagnostic: Some(diagnostic),
        finite,
    };
    if !finite {
        return fallback(format!("batch {b}: non-finite gradient"), false);
    }
    let max_r = *cfg.rset.last().expect("validated");
    let features = match cfg.feature_source {
        FeatureSource::RawSvd => svd_features(&data.features().select_rows(batch), max_r),
        FeatureSource::ExternalEmbedding => {
            svd_features(&data.embeddings().expect("validated").select_rows(batch), max_r)
        }
        FeatureSource::VarianceOrder => {
            let a = data.features().select_rows(batch);
            extract_variance_features(&a, max_r.min(a.cols())).map(|f| f.values().clone())
        }
    };
    let features = match features {
        Ok(f) => f,
        Err(e) => return fallback(format!("batch {b}: {e}; using full batch"), true),
    };
    let grads = match GradientBundle::from_columns(&columns) {
        Ok(g) => g,
        Err(e) => return fallback(format!("batch {b}: {e}; using full batch"), true),
    };
    let decision = match select_rank(&features, &grads, &cfg.rset, cfg.epsilon, cfg.error_mode) {
        Ok(d) => d,
        Err(e) => return fallback(format!("batch {b}: {e}; using full batch"), true),
    };
    let chosen = decision.chosen();
    let positions = &chosen.selection.indices;
    let cosine = cosine_alignment(grads.mean(), &grads.subset_mean(positions)).ok();
    BatchOutcome {
        subset: positions.iter().map(|&p| batch[p]).collect(),
        evaluations: k as u64,
        record: SelectionRecord {
            batch: b,
            subset_size: positions.len(),
            rank: Some(decision.chosen_rank),
            projection_error: Some(chosen.error),
            cosine,
            satisfied: decision.satisfied,
        },
        diagnostic: (!decision.diagnostics.is_empty())
            .then(|| format!("batch {b}: {}", decision.diagnostics.join("; "))),
        finite: true,
    }
}

fn svd_features(a: &DenseMatrix, max_r: usize) -> Result<DenseMatrix, crate::features::FeatureError> {
    let r = max_r.min(a.rows()).min(a.cols());
    extract_svd_features(a, r).map(|f| f.values().clone())
}

/// Runs `config.iterations` SGD steps.
///
/// The training split is cut into `⌊n / K⌋` batches (a trailing remainder is
/// dropped for that partition). Iteration `t` updates on batch
/// `(t − 1) mod B`. At `t = 1` and whenever `t mod S = 0` the partition is
/// reshuffled and, for the subset samplers, a subset is chosen for every
/// batch; between refreshes partition and subsets are held fixed.
pub fn train(config: &TrainConfig, data: &Dataset, model: &Model) -> Result<RunTrace, TrainError> {
    config.validate(data, model)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.init_params(&mut rng);
    let k = config.batch_size;
    let n_batches = data.train().len() / k;
    let warm_end = config.warm_iterations();

    let mut trace = RunTrace { batch_size: k, batches_per_epoch: n_batches, ..RunTrace::default() };
    let mut order: Vec<usize> = data.train().to_vec();
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut subsets: Option<Vec<Vec<usize>>> = None;
    let mut evals: u64 = 0;
    let mut used_total = 0usize;
    let mut histogram = vec![0u64; data.class_count()];

    for t in 1..=config.iterations {
        let b = (t - 1) % n_batches;
        let epoch = (t - 1) / n_batches;
        let in_warm = t <= warm_end;
        let refresh = t == 1 || t % config.selection_period == 0;
        if refresh {
            order.shuffle(&mut rng);
            batches = order.chunks_exact(k).map(<[usize]>::to_vec).collect();
            subsets = None;
        }

        let mut selections = Vec::new();
        match config.sampler {
            _ if in_warm => {}
            Sampler::Graft | Sampler::GraftWarm { .. } if subsets.is_none() => {
                let outcomes =
                    map_ordered(&batches.iter().enumerate().collect::<Vec<_>>(), config.parallel_batches, |(bi, batch)| {
                        select_for_batch(config, data, model, &params, *bi, batch)
                    });
                let mut chosen = Vec::with_capacity(outcomes.len());
                let mut finite = true;
                for o in outcomes {
                    evals += o.evaluations;
                    finite &= o.finite;
                    trace.diagnostics.extend(o.diagnostic.map(|d| format!("iteration {t}: {d}")));
                    selections.push(o.record);
                    chosen.push(o.subset);
                }
                if !finite {
                    trace.final_params = params;
                    trace.total_gradient_evaluations = evals;
                    trace.wall_time_seconds = start.elapsed().as_secs_f64();
                    return Err(TrainError::DivergedModel { iteration: t, trace: Box::new(trace) });
                }
                subsets = Some(chosen);
            }
            Sampler::Random { fraction } if subsets.is_none() => {
                let m = ((fraction * k as f64).ceil() as usize).clamp(1, k);
                let chosen: Vec<Vec<usize>> = batches
                    .iter()
                    .map(|batch| index::sample(&mut rng, k, m).into_iter().map(|p| batch[p]).collect())
                    .collect();
                subsets = Some(chosen);
            }
            _ => {}
        }

        let idx: &[usize] = match &subsets {
            Some(s) if !in_warm => &s[b],
            _ => &batches[b],
        };
        let (loss, grad) = model.mean_gradient(&params, data, idx);
        evals += idx.len() as u64;
        used_total += idx.len();
        for &i in idx {
            if let Target::Class(c) = data.target(i) {
                histogram[c] += 1;
            }
        }
        let lr = config.learning_rate_at(t);
        let finite = loss.is_finite() && grad.iter().all(|g| g.is_finite());
        if finite {
            params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= lr * g);
        }
        let full_gradient_norm_sq = (config.track_full_gradient && finite).then(|| {
            let (_, g) = model.mean_gradient(&params, data, data.train());
            g.iter().map(|v| v * v).sum()
        });
        trace.iterations.push(IterationRecord {
            iteration: t,
            epoch,
            batch: b,
            loss,
            learning_rate: lr,
            refreshed: refresh,
            samples_used: idx.len(),
            selections,
            gradient_evaluations_cumulative: evals,
            full_gradient_norm_sq,
        });
        if !finite || params.iter().any(|p| !p.is_finite()) {
            trace.final_params = params;
            trace.total_gradient_evaluations = evals;
            trace.wall_time_seconds = start.elapsed().as_secs_f64();
            return Err(TrainError::DivergedModel { iteration: t, trace: Box::new(trace) });
        }

        if t % n_batches == 0 || t == config.iterations {
            trace.epochs.push(EpochRecord {
                epoch,
                train_loss: model.mean_loss(&params, data, data.train()),
                test_accuracy: model.score(&params, data, data.test()),
                class_histogram: std::mem::replace(&mut histogram, vec![0; data.class_count()]),
                gradient_evaluations_cumulative: evals,
            });
        }
    }

    trace.final_test_accuracy = model.score(&params, data, data.test());
    trace.total_gradient_evaluations = evals;
    trace.mean_subset_fraction =
        if config.iterations == 0 { 0.0 } else { used_total as f64 / (config.iterations * k) as f64 };
    trace.final_params = params;
    trace.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(trace)
}
