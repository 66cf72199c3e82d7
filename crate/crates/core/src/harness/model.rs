use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Target};

/// Differentiable models with analytic per-sample gradients.
///
/// Parameters are a flat vector. Layouts:
/// * `LinearRegression`: `w (d) | b`
/// * `Logistic`: `W (C×d, row-major) | b (C)`
/// * `Mlp`: `W1 (H×d) | b1 (H) | W2 (C×H) | b2 (C)`, tanh hidden layer
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    LinearRegression { input_dim: usize },
    Logistic { input_dim: usize, classes: usize },
    Mlp { input_dim: usize, hidden: usize, classes: usize },
}

impl Model {
    pub fn num_params(&self) -> usize {
        match *self {
            Model::LinearRegression { input_dim } => input_dim + 1,
            Model::Logistic { input_dim, classes } => classes * (input_dim + 1),
            Model::Mlp { input_dim, hidden, classes } => hidden * (input_dim + 1) + classes * (hidden + 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Model::LinearRegression { input_dim }
            | Model::Logistic { input_dim, .. }
            | Model::Mlp { input_dim, .. } => input_dim,
        }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self, Model::LinearRegression { .. })
    }

    /// Zeros for the linear models; scaled Gaussian weights and zero biases
    /// for the MLP.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.num_params()];
        if let Model::Mlp { input_dim, hidden, classes } = *self {
            let s1 = (1.0 / input_dim as f64).sqrt();
            for w in &mut p[..hidden * input_dim] {
                let z: f64 = StandardNormal.sample(rng);
                *w = s1 * z;
            }
            let off = hidden * (input_dim + 1);
            let s2 = (1.0 / hidden as f64).sqrt();
            for w in &mut p[off..off + classes * hidden] {
                let z: f64 = StandardNormal.sample(rng);
                *w = s2 * z;
            }
        }
        p
    }

    /// Loss of one sample; when `grad` is given, its gradient is *added* to it.
    pub fn loss_grad(&self, params: &[f64], x: &[f64], y: Target, grad: Option<&mut [f64]>) -> f64 {
        debug_assert_eq!(params.len(), self.num_params());
        match *self {
            Model::LinearRegression { input_dim: d } => {
                let Target::Value(y) = y else { panic!("regression model needs real targets") };
                let r = dot(&params[..d], x) + params[d] - y;
                if let Some(g) = grad {
                    for (gi, xi) in g[..d].iter_mut().zip(x) {
                        *gi += r * xi;
                    }
                    g[d] += r;
                }
                0.5 * r * r
            }
            Model::Logistic { input_dim: d, classes: c } => {
                let Target::Class(y) = y else { panic!("classifier needs class targets") };
                let (w, b) = params.split_at(c * d);
                let mut z: Vec<f64> = (0..c).map(|k| dot(&w[k * d..(k + 1) * d], x) + b[k]).collect();
                let loss = softmax_xent(&mut z, y);
                if let Some(g) = grad {
                    let (gw, gb) = g.split_at_mut(c * d);
                    for k in 0..c {
                        for (gi, xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *gi += z[k] * xi;
                        }
                        gb[k] += z[k];
                    }
                }
                loss
            }
            Model::Mlp { input_dim: d, hidden: h, classes: c } => {
                let Target::Class(y) = y else { panic!("classifier needs class targets") };
                let (w1, rest) = params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                let a: Vec<f64> = (0..h).map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh()).collect();
                let mut z: Vec<f64> = (0..c).map(|k| dot(&w2[k * h..(k + 1) * h], &a) + b2[k]).collect();
                let loss = softmax_xent(&mut z, y);
                if let Some(g) = grad {
                    let (gw1, rest) = g.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(c * h);
                    let mut da = vec![0.0; h];
                    for k in 0..c {
                        for j in 0..h {
                            gw2[k * h + j] += z[k] * a[j];
                            da[j] += z[k] * w2[k * h + j];
                        }
                        gb2[k] += z[k];
                    }
                    for j in 0..h {
                        let dpre = da[j] * (1.0 - a[j] * a[j]);
                        for (gi, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *gi += dpre * xi;
                        }
                        gb1[j] += dpre;
                    }
                }
                loss
            }
        }
    }

    /// Gradient of one sample's loss.
    pub fn sample_gradient(&self, params: &[f64], x: &[f64], y: Target) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; params.len()];
        let loss = self.loss_grad(params, x, y, Some(&mut g));
        (loss, g)
    }

    /// Class scores (classifiers) or the single regression output.
    pub fn outputs(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        match *self {
            Model::LinearRegression { input_dim: d } => vec![dot(&params[..d], x) + params[d]],
            Model::Logistic { input_dim: d, classes: c } => {
                let (w, b) = params.split_at(c * d);
                (0..c).map(|k| dot(&w[k * d..(k + 1) * d], x) + b[k]).collect()
            }
            Model::Mlp { input_dim: d, hidden: h, classes: c } => {
                let (w1, rest) = params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                let a: Vec<f64> = (0..h).map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh()).collect();
                (0..c).map(|k| dot(&w2[k * h..(k + 1) * h], &a) + b2[k]).collect()
            }
        }
    }

    /// Mean loss over `idx`.
    pub fn mean_loss(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        let total: f64 = idx.iter().map(|&i| self.loss_grad(params, data.sample(i), data.target(i), None)).sum();
        total / idx.len() as f64
    }

    /// Mean loss and mean gradient over `idx`, summed in index order.
    pub fn mean_gradient(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; params.len()];
        let mut loss = 0.0;
        for &i in idx {
            loss += self.loss_grad(params, data.sample(i), data.target(i), Some(&mut g));
        }
        let n = idx.len().max(1) as f64;
        g.iter_mut().for_each(|v| *v /= n);
        (loss / n, g)
    }

    /// Classification accuracy on `idx`, or `R²` for regression. Empty → 0.
    pub fn score(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        if self.is_classifier() {
            let hits = idx
                .iter()
                .filter(|&&i| {
                    let out = self.outputs(params, data.sample(i));
                    let pred = argmax(&out);
                    data.target(i) == Target::Class(pred)
                })
                .count();
            hits as f64 / idx.len() as f64
        } else {
            let ys: Vec<f64> = idx
                .iter()
                .map(|&i| match data.target(i) {
                    Target::Value(v) => v,
                    Target::Class(c) => c as f64,
                })
                .collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
            let ss_res: f64 =
                idx.iter().zip(&ys).map(|(&i, y)| (self.outputs(params, data.sample(i))[0] - y).powi(2)).sum();
            if ss_tot == 0.0 {
                0.0
            } else {
                1.0 - ss_res / ss_tot
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Overwrites logits with `softmax − e_y` and returns `−log p_y`.
fn softmax_xent(z: &mut [f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted_y = z[y] - m;
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    let loss = sum.ln() - shifted_y;
    for v in z.iter_mut() {
        *v /= sum;
    }
    z[y] -= 1.0;
    loss
}
