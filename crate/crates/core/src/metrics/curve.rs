use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{DenseMatrix, LuFactors};

const LAMBDA_GRID: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 4.0, 8.0];
const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;

/// `E(x) = E0 + (H − E0)(1 − exp(−λ x / x_max))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub lambda: f64,
    pub x_max: f64,
    pub r_squared: f64,
}

impl EfficiencyCurve {
    pub fn eval(&self, x: f64) -> f64 {
        self.e0 + (self.h - self.e0) * (1.0 - (-self.lambda * x / self.x_max).exp())
    }

    /// `1 − SSres/SStot` of this curve on `points`, with `0/0` taken as 0.
    pub fn r_squared_on(&self, points: &[(f64, f64)]) -> f64 {
        let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
        let ss_tot: f64 = points.iter().map(|p| (p.1 - mean).powi(2)).sum();
        let ss_res: f64 = points.iter().map(|&(x, y)| (y - self.eval(x)).powi(2)).sum();
        if ss_tot == 0.0 {
            0.0
        } else {
            1.0 - ss_res / ss_tot
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid points: {0}")]
    InvalidInput(String),
    #[error("Gauss-Newton did not converge from any starting rate")]
    FitFailed,
}

/// Least-squares fit of the exponential gain curve with `x_max = max x`.
///
/// Each rate on a fixed grid seeds `(E0, H)` by linear least squares; seeds
/// are refined by Gauss-Newton with step halving in order of their initial
/// residual until one converges. Points are sorted first, so the result does
/// not depend on input order.
pub fn fit_gain_curve(points: &[(f64, f64)]) -> Result<EfficiencyCurve, CurveError> {
    if points.len() < 4 {
        return Err(CurveError::TooFewPoints(points.len()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(CurveError::InvalidInput("non-finite coordinate".into()));
    }
    if points.iter().any(|p| p.0 < 0.0) {
        return Err(CurveError::InvalidInput("x must be non-negative".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if pts[0].0 == pts[pts.len() - 1].0 {
        return Err(CurveError::InvalidInput("all x values are equal".into()));
    }
    let x_max = pts[pts.len() - 1].0;
    let u: Vec<f64> = pts.iter().map(|p| p.0 / x_max).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();

    if y.iter().all(|&v| v == y[0]) {
        // the mean of identical values, without summation round-off
        return Ok(EfficiencyCurve { e0: y[0], h: y[0], lambda: LAMBDA_GRID[0], x_max, r_squared: 0.0 });
    }

    let mut seeds: Vec<([f64; 3], f64)> = LAMBDA_GRID
        .iter()
        .filter_map(|&lambda| {
            let (e0, h) = linear_levels(&u, &y, lambda)?;
            let theta = [e0, h, lambda];
            Some((theta, sse(&u, &y, &theta)))
        })
        .collect();
    // stable: equal residuals keep grid order
    seeds.sort_by(|a, b| a.1.total_cmp(&b.1));

    for (theta, _) in seeds {
        if let Some([e0, h, lambda]) = gauss_newton(&u, &y, theta) {
            let mut curve = EfficiencyCurve { e0, h, lambda, x_max, r_squared: 0.0 };
            curve.r_squared = curve.r_squared_on(&pts);
            return Ok(curve);
        }
    }
    Err(CurveError::FitFailed)
}

fn model(u: f64, [e0, h, lambda]: &[f64; 3]) -> f64 {
    e0 + (h - e0) * (1.0 - (-lambda * u).exp())
}

fn sse(u: &[f64], y: &[f64], theta: &[f64; 3]) -> f64 {
    u.iter().zip(y).map(|(&ui, &yi)| (yi - model(ui, theta)).powi(2)).sum()
}

/// Best `(E0, H)` for a fixed rate: `y ≈ E0·e^{−λu} + H·(1 − e^{−λu})`.
fn linear_levels(u: &[f64], y: &[f64], lambda: f64) -> Option<(f64, f64)> {
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ui, &yi) in u.iter().zip(y) {
        let a = (-lambda * ui).exp();
        let b = 1.0 - a;
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        say += a * yi;
        sby += b * yi;
    }
    let det = saa * sbb - sab * sab;
    if det.abs() <= 1e-14 * saa * sbb {
        return None;
    }
    Some(((sbb * say - sab * sby) / det, (saa * sby - sab * say) / det))
}

fn gauss_newton(u: &[f64], y: &[f64], mut theta: [f64; 3]) -> Option<[f64; 3]> {
    let mut current = sse(u, y, &theta);
    for _ in 0..MAX_ITERATIONS {
        let [e0, h, lambda] = theta;
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&ui, &yi) in u.iter().zip(y) {
            let decay = (-lambda * ui).exp();
            let jac = [decay, 1.0 - decay, (h - e0) * ui * decay];
            let r = yi - model(ui, &theta);
            for i in 0..3 {
                jtr[i] += jac[i] * r;
                for j in 0..3 {
                    jtj[i][j] += jac[i] * jac[j];
                }
            }
        }
        let lu = LuFactors::factor(&DenseMatrix::from_rows(&jtj).ok()?);
        let delta = lu.solve(&jtr).ok()?;
        if delta.iter().any(|d| !d.is_finite()) {
            return None;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = [e0 + step * delta[0], h + step * delta[1], lambda + step * delta[2]];
            if trial[2] > 0.0 {
                let s = sse(u, y, &trial);
                if s <= current {
                    accepted = Some((trial, s, step));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, s, step)) = accepted else {
            // no descent left along the Gauss-Newton direction: at a minimum
            // to working precision, unless the rate is pinned at the boundary
            return (lambda > 0.0).then_some(theta);
        };
        let scale = 1.0 + theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let moved = delta.iter().fold(0.0f64, |m, d| m.max((step * d).abs()));
        theta = trial;
        current = s;
        if moved <= STEP_TOL * scale {
            return Some(theta);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(e0: f64, h: f64, lambda: f64, n: usize) -> Vec<(f64, f64)> {
        let truth = EfficiencyCurve { e0, h, lambda, x_max: 5.0, r_squared: 1.0 };
        (0..n).map(|i| 5.0 * i as f64 / (n - 1) as f64).map(|x| (x, truth.eval(x))).collect()
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let c = fit_gain_curve(&synthetic(0.2, 0.9, 3.0, 10)).unwrap();
        assert!((c.e0 - 0.2).abs() < 1e-6);
        assert!((c.h - 0.9).abs() < 1e-6);
        assert!((c.lambda - 3.0).abs() < 1e-6);
        assert!(c.r_squared >= 0.9999);
    }

    #[test]
    fn constant_data_is_flat() {
        let pts: Vec<_> = (0..6).map(|i| (i as f64, 0.7)).collect();
        let c = fit_gain_curve(&pts).unwrap();
        assert_eq!((c.e0, c.h, c.lambda, c.r_squared), (0.7, 0.7, 0.1, 0.0));
    }

    #[test]
    fn order_does_not_matter() {
        let mut pts = synthetic(0.1, 0.8, 1.5, 12);
        for (i, p) in pts.iter_mut().enumerate() {
            p.1 += 0.01 * ((i * 7919) % 13) as f64 / 13.0;
        }
        let a = fit_gain_curve(&pts).unwrap();
        pts.reverse();
        pts.swap(2, 9);
        let b = fit_gain_curve(&pts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reported_r_squared_matches_direct_formula() {
        let pts = [(0.0, 0.1), (1.0, 0.5), (2.0, 0.62), (3.0, 0.71), (4.0, 0.69), (6.0, 0.8)];
        let c = fit_gain_curve(&pts).unwrap();
        let mean = pts.iter().map(|p| p.1).sum::<f64>() / 6.0;
        let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
        let ss_res: f64 = pts.iter().map(|&(x, y)| (y - c.eval(x)).powi(2)).sum();
        assert!((c.r_squared - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        assert_eq!(fit_gain_curve(&[(0.0, 1.0); 3]), Err(CurveError::TooFewPoints(3)));
        assert!(matches!(fit_gain_curve(&[(1.0, 1.0), (1.0, 2.0), (1.0, 0.0), (1.0, 3.0)]), Err(CurveError::InvalidInput(_))));
        assert!(matches!(fit_gain_curve(&[(-1.0, 1.0), (1.0, 2.0), (2.0, 0.0), (3.0, 3.0)]), Err(CurveError::InvalidInput(_))));
    }
}
