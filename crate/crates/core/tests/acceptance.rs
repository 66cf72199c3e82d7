//! Acceptance criteria, one test per criterion.
//!
//! Every test writes a single `[PASS]` or `[FAIL]` line straight to stderr
//! (bypassing the test harness capture) before asserting, so a plain
//! `cargo test --test acceptance` shows the full scorecard. Reference values
//! are recomputed here by small, deliberately naive routines rather than
//! through the library.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use graft::alignment::{projection_error, remark1_check, ErrorMode, LeastSquaresGradient};
use graft::harness::{self, Dataset, Model, RunTrace, Sampler, Schedule, TrainConfig};
use graft::linalg::DenseMatrix;
use graft::maxvol::{conventional_maxvol, fast_maxvol, fast_maxvol_with_residuals, DEFAULT_SWAP_TOL};
use graft::metrics::{emissions, emissions_integrated, fit_gain_curve, EfficiencyCurve};
use graft::{extract_svd_features, select_rank, GradientBundle};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(id: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {id} {detail}");
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Determinant by Gaussian elimination with full pivoting.
fn det_full_pivot(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for k in 0..n {
        let (mut pi, mut pj) = (k, k);
        for i in k..n {
            for j in k..n {
                if a[i][j].abs() > a[pi][pj].abs() {
                    (pi, pj) = (i, j);
                }
            }
        }
        if a[pi][pj] == 0.0 {
            return 0.0;
        }
        if pi != k {
            a.swap(pi, k);
            det = -det;
        }
        if pj != k {
            for row in a.iter_mut() {
                row.swap(pj, k);
            }
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det
}

fn det3(r: [&[f64]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
fn inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
        a.swap(p, k);
        let d = a[k][k];
        a[k].iter_mut().for_each(|v| *v /= d);
        for i in 0..n {
            if i != k {
                let f = a[i][k];
                let pivot_row = a[k].clone();
                a[i].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Orthonormal columns by classical Gram-Schmidt applied twice.
fn gram_schmidt(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for _ in 0..2 {
            let coeffs: Vec<f64> = q.iter().map(|qi| dot(qi, &v)).collect();
            for (qi, a) in q.iter().zip(coeffs) {
                v.iter_mut().zip(qi).for_each(|(x, y)| *x -= a * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        q.push(v.into_iter().map(|x| x / n).collect());
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// `P(Bin(n, 1/2) ≥ k)`.
fn binomial_upper_tail(n: u32, k: u32) -> f64 {
    let mut choose = 1.0f64;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            choose = choose * (n - i + 1) as f64 / i as f64;
        }
        if i >= k {
            total += choose;
        }
    }
    total / 2f64.powi(n as i32)
}

/// One-sided sign test that `favoured` beats `other`, ties dropped.
/// Returns `(wins, losses, p)`.
fn sign_test(favoured: &[f64], other: &[f64]) -> (u32, u32, f64) {
    let wins = favoured.iter().zip(other).filter(|(a, b)| a > b).count() as u32;
    let losses = favoured.iter().zip(other).filter(|(a, b)| a < b).count() as u32;
    (wins, losses, binomial_upper_tail(wins + losses, wins))
}

fn rows_of(m: &DenseMatrix, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| m.row(i).to_vec()).collect()
}

#[test]
fn ac01_fast_maxvol_residuals_and_determinant() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_residual, mut worst_rel) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let v = uniform(&mut rng, 100, 8);
        let (sel, w) = fast_maxvol_with_residuals(&v, 8).unwrap();
        assert_eq!(sel.len(), 8);
        for j in 0..8 {
            for &p in &sel.indices[..j] {
                worst_residual = worst_residual.max(w[(p, j)].abs());
            }
        }
        let det = det_full_pivot(&rows_of(&v, &sel.indices)).abs();
        let prod: f64 = sel.pivot_magnitudes.iter().product();
        worst_rel = worst_rel.max((det - prod).abs() / det);
    }
    let elapsed = start.elapsed();
    let pass = worst_residual <= 1e-10 && worst_rel <= 1e-6 && elapsed < Duration::from_secs(5);
    report(
        "AC-01",
        pass,
        &format!("max |W(p_i,j)| = {worst_residual:.2e}, max rel det error = {worst_rel:.2e}, {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn ac02_greedy_quality_and_dominance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_ratio, mut worst_b, mut near_optimal) = (f64::INFINITY, 0.0f64, 0);
    let mut capped = 0;
    for _ in 0..500 {
        let v = uniform(&mut rng, 10, 3);
        let mut best = 0.0f64;
        for a in 0..10 {
            for b in a + 1..10 {
                for c in b + 1..10 {
                    best = best.max(det3([v.row(a), v.row(b), v.row(c)]).abs());
                }
            }
        }
        let fast = fast_maxvol(&v, 3).unwrap();
        let p = &fast.indices;
        let fast_det = det3([v.row(p[0]), v.row(p[1]), v.row(p[2])]).abs();
        worst_ratio = worst_ratio.min(fast_det / best);
        if fast_det >= 0.99 * best {
            near_optimal += 1;
        }

        let conv = conventional_maxvol(&v, 3, DEFAULT_SWAP_TOL, 100).unwrap();
        capped += conv.max_sweeps_reached as usize;
        let inv = inverse(&rows_of(&v, &conv.selection.indices));
        for i in 0..10 {
            for j in 0..3 {
                let b: f64 = (0..3).map(|k| v[(i, k)] * inv[k][j]).sum();
                worst_b = worst_b.max(b.abs());
            }
        }
    }
    let elapsed = start.elapsed();
    // the recomputed interpolation matrix carries its own rounding
    let pass = worst_ratio >= 1.0 / 6.0
        && capped == 0
        && worst_b <= DEFAULT_SWAP_TOL * (1.0 + 1e-12)
        && elapsed < Duration::from_secs(10);
    report(
        "AC-02",
        pass,
        &format!(
            "min fast/brute = {worst_ratio:.4} (>= 1/6), within 1% of optimum {near_optimal}/500, \
             max |B| = {worst_b:.6}, sweep cap hit {capped}x, {elapsed:.2?}"
        ),
    );
    assert!(pass);
}

#[test]
fn ac03_projection_error_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let r = 1 + i % 8;
        let cols: Vec<Vec<f64>> = (0..r).map(|_| gaussian_vec(&mut rng, 30)).collect();
        let g = gaussian_vec(&mut rng, 30);
        let lhs = projection_error(&g, &DenseMatrix::from_columns(&cols).unwrap(), ErrorMode::Absolute).unwrap();
        let q = gram_schmidt(&cols);
        let gg = dot(&g, &g);
        let unit: Vec<f64> = g.iter().map(|x| x / gg.sqrt()).collect();
        let captured: f64 = q.iter().map(|qi| dot(qi, &unit).powi(2)).sum();
        let rhs = gg * (1.0 - captured);
        worst = worst.max((lhs - rhs).abs());
    }
    let pass = worst <= 1e-10;
    report("AC-03", pass, &format!("max |lhs - rhs| = {worst:.2e} over 1000 instances"));
    assert!(pass);
}

#[test]
fn ac04_gradient_gap_bound() {
    let (k, m, r) = (32, 16, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut held, mut worst_ratio) = (0, 0.0f64);
    for _ in 0..100 {
        let a = gaussian(&mut rng, k, m);
        let theta = gaussian_vec(&mut rng, m);
        let teacher = gaussian_vec(&mut rng, m);
        let delta: Vec<f64> = theta.iter().zip(&teacher).map(|(t, w)| t - w).collect();
        let radius = (0..k).map(|i| dot(a.row(i), a.row(i)).sqrt()).fold(0.0, f64::max);
        let lipschitz = 2.0 * radius * dot(&delta, &delta).sqrt();

        let gap = remark1_check(&a, &LeastSquaresGradient::new(&theta, &teacher), r, lipschitz).unwrap();

        let grad = |i: usize| -> Vec<f64> {
            let s = dot(a.row(i), &delta);
            a.row(i).iter().map(|x| x * s).collect()
        };
        let mean = |idx: &[usize]| -> Vec<f64> {
            let mut acc = vec![0.0; m];
            for &i in idx {
                acc.iter_mut().zip(grad(i)).for_each(|(s, g)| *s += g);
            }
            acc.into_iter().map(|s| s / idx.len() as f64).collect()
        };
        let all: Vec<usize> = (0..k).collect();
        let diff: Vec<f64> = mean(&all).iter().zip(mean(&gap.selected)).map(|(x, y)| x - y).collect();
        let lhs = dot(&diff, &diff).sqrt();

        let ata: Vec<Vec<f64>> =
            (0..m).map(|i| (0..m).map(|j| (0..k).map(|s| a[(s, i)] * a[(s, j)]).sum()).collect()).collect();
        let sigma_next = symmetric_eigenvalues(ata)[r].max(0.0).sqrt();
        let rhs = (k as f64 / r as f64) * lipschitz * sigma_next;

        assert!((lhs - gap.lhs).abs() <= 1e-9 * (1.0 + lhs), "{lhs} vs {}", gap.lhs);
        assert!((rhs - gap.rhs).abs() <= 1e-8 * rhs, "{rhs} vs {}", gap.rhs);
        if lhs <= rhs {
            held += 1;
        }
        worst_ratio = worst_ratio.max(lhs / rhs);
    }
    let pass = held == 100;
    report("AC-04", pass, &format!("bound held in {held}/100 batches, max lhs/rhs = {worst_ratio:.4}"));
    assert!(pass);
}

#[test]
fn ac05_rank_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut violations = 0;
    for _ in 0..200 {
        let features = uniform(&mut rng, 32, 16);
        let cols: Vec<Vec<f64>> = (0..32).map(|_| gaussian_vec(&mut rng, 24)).collect();
        let grads = GradientBundle::from_columns(&cols).unwrap();
        let decision = select_rank(&features, &grads, &[2, 4, 8, 16], f64::INFINITY, ErrorMode::Normalized).unwrap();
        assert_eq!(decision.candidates.len(), 4);
        for w in decision.candidates.windows(2) {
            assert_eq!(w[0].selection.indices[..], w[1].selection.indices[..w[0].rank]);
            if w[1].error > w[0].error {
                violations += 1;
            }
        }
    }
    let pass = violations == 0;
    report("AC-05", pass, &format!("{violations} increases of d_R over 200 instances with Rset {{2,4,8,16}}"));
    assert!(pass);
}

/// `Σ_{i∈S} h_i` with `h` the leverage scores of `a`: the similarity between
/// the coordinate subspace of rows `S` and the column space of `a`.
fn leverage_similarity(a: &DenseMatrix, rows: &[usize]) -> f64 {
    let m = a.cols();
    let ata: Vec<Vec<f64>> =
        (0..m).map(|i| (0..m).map(|j| (0..a.rows()).map(|s| a[(s, i)] * a[(s, j)]).sum()).collect()).collect();
    let inv = inverse(&ata);
    rows.iter()
        .map(|&i| {
            let x = a.row(i);
            (0..m).map(|p| (0..m).map(|q| x[p] * inv[p][q] * x[q]).sum::<f64>()).sum::<f64>()
        })
        .sum()
}

/// Best-of-rounds mean time per call, each round running for at least 20 ms.
fn per_call_ns<T>(mut f: impl FnMut() -> T) -> f64 {
    (0..5)
        .map(|_| {
            let start = Instant::now();
            let mut reps = 0u32;
            while start.elapsed() < Duration::from_millis(20) {
                std::hint::black_box(f());
                reps += 1;
            }
            start.elapsed().as_nanos() as f64 / reps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn ac06_iris_similarity_and_speed() {
    let iris = harness::iris(0.0, 0);
    let a = iris.features();
    let r = 4;
    let features = extract_svd_features(a, r).unwrap();
    let v = features.values();
    let fast = fast_maxvol(v, r).unwrap();
    let sim = leverage_similarity(a, &fast.indices);
    let lib = graft::cli::indicator_similarity(&fast.indices, v).unwrap();
    assert!((sim - lib).abs() < 1e-8, "{sim} vs {lib}");

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut all: Vec<usize> = (0..a.rows()).collect();
    let random_mean = (0..100)
        .map(|_| {
            all.shuffle(&mut rng);
            leverage_similarity(a, &all[..r])
        })
        .sum::<f64>()
        / 100.0;

    let fast_ns = per_call_ns(|| fast_maxvol(v, r));
    let conv_ns = per_call_ns(|| conventional_maxvol(v, r, DEFAULT_SWAP_TOL, 100));
    let speedup = conv_ns / fast_ns;

    let pass = sim >= 0.60 && sim > random_mean && speedup >= 5.0;
    report(
        "AC-06",
        pass,
        &format!(
            "similarity {sim:.4} (need >= 0.60), random mean {random_mean:.4}, \
             speedup {speedup:.2}x (need >= 5; fast {fast_ns:.0} ns, conventional {conv_ns:.0} ns)"
        ),
    );
    assert!(pass);
}

#[test]
fn ac07_operation_count_scaling() {
    let k = 256;
    let ranks = [4usize, 8, 16, 32, 64];
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut pts = Vec::new();
    for &r in &ranks {
        let counts: Vec<u64> = (0..3).map(|_| fast_maxvol(&uniform(&mut rng, k, r), r).unwrap().elementary_op_count).collect();
        // the count depends on K and R only
        assert!(counts.iter().all(|&c| c == counts[0]));
        assert_eq!(counts[0], (2 * k as u64 + 1) * (r * (r - 1) / 2) as u64);
        pts.push(((r as f64).ln(), (counts[0] as f64).ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();

    // a K-row batch drawn from a small and a large dataset costs the same
    let small = harness::two_gaussians(100, 20, 3.0, 0.0, 1);
    let large = harness::two_gaussians(20_000, 20, 3.0, 0.0, 1);
    let batch: Vec<usize> = (0..64).collect();
    let cost = |d: &Dataset| {
        let f = extract_svd_features(&d.features().select_rows(&batch), 8).unwrap();
        fast_maxvol(f.values(), 8).unwrap().elementary_op_count
    };
    let size_free = cost(&small) == cost(&large);

    let pass = (1.8..=2.2).contains(&slope) && size_free;
    report("AC-07", pass, &format!("fitted R-exponent {slope:.4} at K = {k}; dataset-size independent: {size_free}"));
    assert!(pass);
}

fn run(data: &Dataset, model: &Model, cfg: &TrainConfig) -> RunTrace {
    harness::train(cfg, data, model).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn ac08_two_gaussian_training() {
    let start = Instant::now();
    let (mut full, mut graft, mut random) = (Vec::new(), Vec::new(), Vec::new());
    let mut worst_cost = 0.0f64;
    let mut fractions = Vec::new();
    for seed in 0..10 {
        let data = harness::two_gaussians(2000, 20, 3.0, 0.2, seed);
        let model = Model::Logistic { input_dim: 20, classes: 2 };
        let base = |sampler| TrainConfig {
            selection_period: 750,
            rset: vec![8],
            epsilon: f64::INFINITY,
            learning_rate: 0.1,
            schedule: Schedule::Cosine,
            seed,
            ..TrainConfig::new(2000, 32, sampler)
        };
        let f = run(&data, &model, &base(Sampler::Full));
        let g = run(&data, &model, &base(Sampler::Graft));
        let r = run(&data, &model, &base(Sampler::Random { fraction: 0.25 }));
        assert_eq!(f.epochs.len(), g.epochs.len());
        worst_cost = worst_cost.max(g.total_gradient_evaluations as f64 / f.total_gradient_evaluations as f64);
        fractions.push(g.mean_subset_fraction);
        full.push(f.final_test_accuracy);
        graft.push(g.final_test_accuracy);
        random.push(r.final_test_accuracy);
    }
    let elapsed = start.elapsed();
    let gap_points = 100.0 * (mean(&full) - mean(&graft));
    let (wins, losses, p) = sign_test(&graft, &random);
    let pass = gap_points <= 2.0
        && worst_cost <= 0.35
        && p < 0.05
        && elapsed < Duration::from_secs(120);
    report(
        "AC-08",
        pass,
        &format!(
            "mean accuracy full {:.4} graft {:.4} random {:.4}; gap {gap_points:.2} pts (need <= 2.0); \
             graft fraction {:.3}, max cost {:.1}% of full (need <= 35%); \
             graft beats random {wins}, loses {losses}, sign-test p = {p:.4} (need < 0.05); {elapsed:.1?}",
            mean(&full),
            mean(&graft),
            mean(&random),
            mean(&fractions),
            100.0 * worst_cost
        ),
    );
    assert!(pass);
}

#[test]
fn ac09_warm_start_ordering() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (label, rank) in [("5%", 2usize), ("10%", 4)] {
        let (mut warm, mut cold) = (Vec::new(), Vec::new());
        for seed in 0..10 {
            let data = harness::two_gaussians(2000, 20, 3.0, 0.2, seed);
            let model = Model::Logistic { input_dim: 20, classes: 2 };
            let cfg = |sampler| TrainConfig {
                selection_period: 750,
                rset: vec![rank],
                epsilon: f64::INFINITY,
                learning_rate: 0.1,
                schedule: Schedule::Cosine,
                seed,
                ..TrainConfig::new(1600, 40, sampler)
            };
            warm.push(run(&data, &model, &cfg(Sampler::GraftWarm { warm_fraction: 0.1 })).final_test_accuracy);
            cold.push(run(&data, &model, &cfg(Sampler::Graft)).final_test_accuracy);
        }
        let (wins, losses, p) = sign_test(&warm, &cold);
        pass &= losses <= wins && p < 0.05;
        lines.push(format!(
            "{label}: warm {:.4} cold {:.4}, warm wins {wins} loses {losses}, p = {p:.4}",
            mean(&warm),
            mean(&cold)
        ));
    }
    report("AC-09", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn ac10_min_gradient_norm_decreases_with_horizon() {
    let data = harness::two_gaussians(2000, 20, 3.0, 0.2, 10);
    let model = Model::Logistic { input_dim: 20, classes: 2 };
    let mins: Vec<f64> = [100usize, 400, 1600]
        .iter()
        .map(|&t| {
            let cfg = TrainConfig {
                epsilon: 0.1,
                rset: vec![4, 8],
                track_full_gradient: true,
                seed: 3,
                ..TrainConfig::new(t, 32, Sampler::Graft)
            };
            run(&data, &model, &cfg).min_full_gradient_norm_sq().unwrap()
        })
        .collect();
    let pass = mins.windows(2).all(|w| w[1] < w[0]);
    report(
        "AC-10",
        pass,
        &format!("min ||grad||^2 at T = 100, 400, 1600: {:.3e}, {:.3e}, {:.3e}", mins[0], mins[1], mins[2]),
    );
    assert!(pass);
}

#[test]
fn ac11_emissions_arithmetic() {
    let closed = emissions(0.3, 2.0, 0.366).unwrap().kg_co2;
    let exact = closed == 0.2196;
    let mut worst = 0.0f64;
    for (kw, hours) in [(0.3, 2.0), (1.5, 0.25), (0.05, 10.0)] {
        let samples: Vec<(f64, f64)> = vec![(kw * 1000.0, 1.0); (hours * 3600.0) as usize];
        let integrated = emissions_integrated(&samples, 0.366).unwrap().kg_co2;
        worst = worst.max((integrated - emissions(kw, hours, 0.366).unwrap().kg_co2).abs());
    }
    let pass = exact && worst <= 1e-10;
    report("AC-11", pass, &format!("0.3 kW x 2 h x 0.366 = {closed} kg; max closed/integrated gap {worst:.2e}"));
    assert!(pass);
}

#[test]
fn ac12_curve_fit_recovery() {
    let truth = EfficiencyCurve { e0: 0.2, h: 0.9, lambda: 3.0, x_max: 1.0, r_squared: 1.0 };
    let pts: Vec<(f64, f64)> = (0..20).map(|i| i as f64 / 19.0).map(|x| (x, truth.eval(x))).collect();
    let fit = fit_gain_curve(&pts).unwrap();
    let rel = [(fit.e0, 0.2), (fit.h, 0.9), (fit.lambda, 3.0)].map(|(a, b): (f64, f64)| (a - b).abs() / b);
    let worst = rel.iter().copied().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    let mut shuffled = pts.clone();
    let invariant = (0..20).all(|_| {
        shuffled.shuffle(&mut rng);
        let other = fit_gain_curve(&shuffled).unwrap();
        [other.e0, other.h, other.lambda, other.x_max, other.r_squared].map(f64::to_bits)
            == [fit.e0, fit.h, fit.lambda, fit.x_max, fit.r_squared].map(f64::to_bits)
    });

    let pass = worst <= 0.01 && fit.r_squared >= 0.9999 && invariant;
    report(
        "AC-12",
        pass,
        &format!(
            "E0 {:.6} H {:.6} lambda {:.6}, max rel error {worst:.2e}, r^2 {:.8}, order invariant: {invariant}",
            fit.e0, fit.h, fit.lambda, fit.r_squared
        ),
    );
    assert!(pass);
}

#[test]
fn ac13_repeated_runs_are_byte_identical() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/two_gaussians_graft.json");
    let dir = tempfile::tempdir().unwrap();
    let traces: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let status = Command::new(env!("CARGO_BIN_EXE_graft"))
                .args(["train", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .env_remove("GRAFT_SEED")
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            std::fs::read(out.join("trace.json")).unwrap()
        })
        .collect();
    let pass = !traces[0].is_empty() && traces[0] == traces[1];
    report("AC-13", pass, &format!("two runs of the bundled config, trace.json {} bytes, identical: {pass}", traces[0].len()));
    assert!(pass);
}
