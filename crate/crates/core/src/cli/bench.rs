use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{io_err, CliError, EXIT_OK};
use crate::linalg::DenseMatrix;
use crate::maxvol::{conventional_maxvol, fast_maxvol, DEFAULT_SWAP_TOL};

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Rows per matrix.
    #[arg(long, default_value_t = 256)]
    pub k: usize,
    /// Comma-separated ranks.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
    pub rset: Vec<usize>,
    /// Random matrices per rank.
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, env = "GRAFT_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub r: usize,
    pub mean_ops: f64,
    pub mean_wall_ns: f64,
    pub conventional_wall_ns: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.conventional_wall_ns / self.mean_wall_ns
    }
}

/// Mean time of `f` in nanoseconds, repeating it until at least 2 ms have
/// elapsed so short calls are not dominated by clock resolution.
fn time_ns<T>(mut f: impl FnMut() -> T) -> f64 {
    let budget = Duration::from_millis(2);
    let start = Instant::now();
    let mut reps = 0u32;
    while start.elapsed() < budget || reps == 0 {
        std::hint::black_box(f());
        reps += 1;
    }
    start.elapsed().as_nanos() as f64 / reps as f64
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::new(rows, cols, data).expect("finite")
}

pub fn bench_table(k: usize, rset: &[usize], trials: usize, seed: u64) -> Result<Vec<BenchRow>, CliError> {
    if rset.is_empty() || trials == 0 {
        return Err(CliError::User("need at least one rank and one trial".into()));
    }
    if let Some(&r) = rset.iter().find(|&&r| r == 0 || r > k) {
        return Err(CliError::User(format!("rank {r} outside 1..={k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(rset.len());
    for &r in rset {
        let (mut ops, mut fast_ns, mut conv_ns) = (0.0, 0.0, 0.0);
        for _ in 0..trials {
            let v = random_matrix(&mut rng, k, r);
            let sel = fast_maxvol(&v, r).map_err(|e| CliError::Numerical(e.to_string()))?;
            ops += sel.elementary_op_count as f64;
            fast_ns += time_ns(|| fast_maxvol(&v, r));
            conv_ns += time_ns(|| conventional_maxvol(&v, r, DEFAULT_SWAP_TOL, 100));
        }
        let t = trials as f64;
        rows.push(BenchRow { k, r, mean_ops: ops / t, mean_wall_ns: fast_ns / t, conventional_wall_ns: conv_ns / t });
    }
    Ok(rows)
}

/// Least-squares slope of `log(ops)` against `log(R)`; needs two distinct ranks.
pub fn fit_exponent(rows: &[BenchRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.r as f64).ln(), r.mean_ops.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0 && pts.iter().all(|p| p.1.is_finite())).then(|| sxy / sxx)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let rows = bench_table(args.k, &args.rset, args.trials, args.seed)?;
    writeln!(out, "K,R,mean_ops,mean_wall_ns,conventional_wall_ns,speedup").map_err(io_err)?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{:.1},{:.1},{:.3}",
            r.k,
            r.r,
            r.mean_ops,
            r.mean_wall_ns,
            r.conventional_wall_ns,
            r.speedup()
        )
        .map_err(io_err)?;
    }
    if let Some(e) = fit_exponent(&rows) {
        writeln!(out, "# fitted R-exponent: {e:.4}").map_err(io_err)?;
    }
    Ok(EXIT_OK)
}
