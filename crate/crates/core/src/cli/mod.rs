//! Command-line front end. Exit codes: 0 success, 1 bad input, 2 degraded
//! but usable result, 3 numerical failure.

pub mod bench;
pub mod config;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::features::{extract_svd_features, extract_variance_features, FeatureError};
use crate::harness::{self, data, Sampler, TrainError};
use crate::linalg::{subspace_similarity, DenseMatrix};
use crate::maxvol::{brute_force_maxvol, conventional_maxvol, fast_maxvol, MaxvolError, SelectionResult};
use crate::metrics::{self, CurveError};

pub use config::{RunConfigFile, CONFIG_HELP};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USER: u8 = 1;
pub const EXIT_DEGRADED: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "graft", version, about = "Gradient-aligned subset selection for mini-batch training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select rows of a numeric matrix and print them as JSON.
    Sample(SampleArgs),
    /// Run a training job from a JSON config and export its trace.
    #[command(after_long_help = CONFIG_HELP)]
    Train(TrainArgs),
    /// Time fast max-volume selection and count its operations.
    Bench(bench::BenchArgs),
    /// Fit the exponential gain curve to an efficiency CSV.
    FitCurve(FitCurveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Fast,
    Conventional,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Extractor {
    Svd,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinMatrix {
    Iris,
}

#[derive(Debug, clap::Args)]
pub struct SampleArgs {
    /// Numeric CSV; a header row is optional and a `label` column is ignored.
    #[arg(long, required_unless_present = "builtin", conflicts_with = "builtin")]
    pub input: Option<PathBuf>,
    /// Use a bundled table instead of --input.
    #[arg(long, value_enum)]
    pub builtin: Option<BuiltinMatrix>,
    /// Number of rows (and feature columns) to select.
    #[arg(long)]
    pub rank: usize,
    #[arg(long, value_enum, default_value_t = Method::Fast)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = Extractor::Svd)]
    pub extractor: Extractor,
    /// Swap threshold for the conventional method.
    #[arg(long, default_value_t = crate::maxvol::DEFAULT_SWAP_TOL)]
    pub swap_tol: f64,
    /// Sweep limit for the conventional method.
    #[arg(long, default_value_t = 100)]
    pub max_sweeps: usize,
    /// Run fast and conventional selection and report how far they agree.
    #[arg(long, default_value_t = false)]
    pub compare: bool,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, env = "GRAFT_SEED")]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run per-batch selection on all cores.
    #[arg(long, default_value_t = false)]
    pub parallel_batches: bool,
}

#[derive(Debug, clap::Args)]
pub struct FitCurveArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "x")]
    pub x_col: String,
    #[arg(long, default_value = "y")]
    pub y_col: String,
}

/// Runs one command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    match cli.command {
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Bench(a) => bench::cmd_bench(&a, out),
        Command::FitCurve(a) => cmd_fit_curve(&a, out),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::User(format!("write failed: {e}"))
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("plain JSON values serialize");
    writeln!(out, "{text}").map_err(io_err)
}

fn load_matrix(args: &SampleArgs) -> Result<DenseMatrix, CliError> {
    match (&args.input, args.builtin) {
        (Some(path), _) => data::load_matrix_csv(path).map_err(|e| CliError::User(format!("{}: {e}", path.display()))),
        (None, Some(BuiltinMatrix::Iris)) => Ok(harness::iris(0.0, 0).features().clone()),
        (None, None) => Err(CliError::User("need --input or --builtin".into())),
    }
}

fn maxvol_error(e: MaxvolError) -> CliError {
    match e {
        MaxvolError::RankOutOfRange { .. } | MaxvolError::TooLarge { .. } => CliError::User(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

fn selection_json(sel: &SelectionResult, features: &DenseMatrix) -> Value {
    json!({
        "indices": sel.indices,
        "log_abs_det": sel.log_abs_det,
        "truncated": sel.truncated,
        "elementary_op_count": sel.elementary_op_count,
        "similarity_to_features": indicator_similarity(&sel.indices, features),
    })
}

/// `subspace_similarity` between the coordinate subspace of the selected
/// rows and the column span of `features`.
pub fn indicator_similarity(rows: &[usize], features: &DenseMatrix) -> Option<f64> {
    subspace_similarity(&indicator_matrix(features.rows(), rows), features).ok()
}

fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let a = load_matrix(args)?;
    let features = match args.extractor {
        Extractor::Svd => extract_svd_features(&a, args.rank),
        Extractor::Variance => extract_variance_features(&a, args.rank),
    }
    .map_err(|e| match e {
        FeatureError::RankOutOfRange { .. } | FeatureError::DegenerateBatch => CliError::User(e.to_string()),
        FeatureError::Linalg(_) => CliError::Numerical(e.to_string()),
    })?;
    let v = features.values();
    let r = v.cols();
    let extractor = format!("{:?}", args.extractor).to_lowercase();

    let (body, truncated) = if args.compare {
        let t0 = Instant::now();
        let fast = fast_maxvol(v, r).map_err(maxvol_error)?;
        let fast_ns = t0.elapsed().as_nanos() as u64;
        let t1 = Instant::now();
        let conv = conventional_maxvol(v, r, args.swap_tol, args.max_sweeps).map_err(maxvol_error)?;
        let conv_ns = t1.elapsed().as_nanos() as u64;
        let mutual = indicator_similarity(&fast.indices, &indicator_matrix(v.rows(), &conv.selection.indices));
        let body = json!({
            "extractor": extractor,
            "rank": args.rank,
            "fast": selection_json(&fast, v),
            "conventional": selection_json(&conv.selection, v),
            "conventional_swaps": conv.swaps,
            "similarity": mutual,
            "fast_wall_ns": fast_ns,
            "conventional_wall_ns": conv_ns,
        });
        (body, fast.truncated || features.is_truncated())
    } else {
        let sel = match args.method {
            Method::Fast => fast_maxvol(v, r),
            Method::Conventional => conventional_maxvol(v, r, args.swap_tol, args.max_sweeps).map(|c| c.selection),
            Method::Brute => brute_force_maxvol(v, r),
        }
        .map_err(maxvol_error)?;
        let mut body = selection_json(&sel, v);
        body["method"] = json!(format!("{:?}", args.method).to_lowercase());
        body["extractor"] = json!(extractor);
        body["rank"] = json!(args.rank);
        (body, sel.truncated || features.is_truncated())
    };
    emit(out, &body)?;
    Ok(if truncated { EXIT_DEGRADED } else { EXIT_OK })
}

fn indicator_matrix(rows: usize, idx: &[usize]) -> DenseMatrix {
    let mut e = DenseMatrix::zeros(rows, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        e[(i, j)] = 1.0;
    }
    e
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let mut cfg = RunConfigFile::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    cfg.train.parallel_batches |= args.parallel_batches;
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let data = cfg.load_dataset()?;
    let model = cfg.model.build(&data);

    let trace = match harness::train(&cfg.train, &data, &model) {
        Ok(t) => t,
        Err(TrainError::InvalidConfig(m)) => return Err(CliError::User(format!("config: {m}"))),
        Err(TrainError::DivergedModel { iteration, trace }) => {
            metrics::export_trace(&trace, &out_dir, &cfg.metrics).map_err(|e| CliError::User(e.to_string()))?;
            return Err(CliError::Numerical(format!(
                "model diverged at iteration {iteration}; partial trace in {}",
                out_dir.display()
            )));
        }
    };

    let mut opts = cfg.metrics;
    let baseline = if cfg.baseline {
        let mut full_cfg = cfg.train.clone();
        full_cfg.sampler = Sampler::Full;
        let full = harness::train(&full_cfg, &data, &model)
            .map_err(|e| CliError::Numerical(format!("baseline run: {e}")))?;
        opts.reference_accuracy.get_or_insert(full.final_test_accuracy);
        Some(full)
    } else {
        None
    };
    metrics::export_trace(&trace, &out_dir, &opts).map_err(|e| CliError::User(e.to_string()))?;

    let kg = opts.kg_co2(trace.total_gradient_evaluations);
    let mut summary = json!({
        "final_acc": trace.final_test_accuracy,
        "grad_evals": trace.total_gradient_evaluations,
        "kg_co2": kg,
        "mean_subset_fraction": trace.mean_subset_fraction,
        "wall_time_seconds": trace.wall_time_seconds,
    });
    writeln!(out, "final_acc={} grad_evals={} kg_co2={kg:e}", trace.final_test_accuracy, trace.total_gradient_evaluations)
        .map_err(io_err)?;
    if let Some(full) = &baseline {
        let kg_full = opts.kg_co2(full.total_gradient_evaluations);
        summary["baseline"] = json!({
            "final_acc": full.final_test_accuracy,
            "grad_evals": full.total_gradient_evaluations,
            "kg_co2": kg_full,
            "wall_time_seconds": full.wall_time_seconds,
        });
        match metrics::fidelity_and_utilization(&trace, full) {
            Ok(f) => {
                summary["phi"] = json!(f.phi);
                summary["psi"] = json!(f.psi);
                summary["utilization_gap_rule"] = json!(metrics::utilization_gap_rule(f.fraction));
                writeln!(out, "baseline_acc={} psi={}", full.final_test_accuracy, f.psi).map_err(io_err)?;
            }
            Err(e) => summary["fidelity_error"] = json!(e.to_string()),
        }
    }
    let path = out_dir.join("summary.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&summary).expect("plain JSON values serialize"))
        .map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;

    let fallbacks = trace.iterations.iter().flat_map(|r| &r.selections).filter(|s| s.rank.is_none()).count();
    if fallbacks > 0 {
        eprintln!("{fallbacks} batch selections fell back to the full batch; see diagnostics in trace.json");
        return Ok(EXIT_DEGRADED);
    }
    Ok(EXIT_OK)
}

fn cmd_fit_curve(args: &FitCurveArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let points = read_points(args)?;
    let curve = metrics::fit_gain_curve(&points).map_err(|e| match e {
        CurveError::FitFailed => CliError::Numerical(e.to_string()),
        _ => CliError::User(e.to_string()),
    })?;
    emit(out, &serde_json::to_value(curve).expect("curve serializes"))?;
    Ok(EXIT_OK)
}

fn read_points(args: &FitCurveArgs) -> Result<Vec<(f64, f64)>, CliError> {
    let user = |m: String| CliError::User(format!("{}: {m}", args.input.display()));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&args.input).map_err(|e| user(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| user(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| user(format!("no column `{name}`")));
    let (xi, yi) = (col(&args.x_col)?, col(&args.y_col)?);
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| user(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, CliError> {
            let s = rec.get(i).unwrap_or("");
            s.parse().map_err(|_| user(format!("line {line}: cannot parse {s:?} as a number")))
        };
        points.push((field(xi)?, field(yi)?));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (Result<u8, CliError>, String) {
        let cli = Cli::try_parse_from(std::iter::once("graft").chain(args.iter().copied())).unwrap();
        let mut buf = Vec::new();
        let code = run(cli, &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn identity_sample() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eye.csv");
        std::fs::write(&p, "1,0,0\n0,1,0\n0,0,1\n").unwrap();
        let (code, out) = run_args(&["sample", "--input", p.to_str().unwrap(), "--rank", "2"]);
        assert_eq!(code.unwrap(), EXIT_OK);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["indices"], json!([0, 1]));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "1,2\n3,4\n5,oops\n").unwrap();
        let (code, _) = run_args(&["sample", "--input", p.to_str().unwrap(), "--rank", "1"]);
        let err = code.unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USER);
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn truncated_selection_is_degraded() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dup.csv");
        std::fs::write(&p, "1,2\n1,2\n1,2\n").unwrap();
        let (code, out) = run_args(&["sample", "--input", p.to_str().unwrap(), "--rank", "2"]);
        assert_eq!(code.unwrap(), EXIT_DEGRADED);
        assert!(out.contains("indices"));
    }

    #[test]
    fn brute_force_guard() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("big.csv");
        let rows: String = (0..200).map(|i| format!("{},{},{},{}\n", i, i * i % 7, (i * 3) % 11, i % 5)).collect();
        std::fs::write(&p, rows).unwrap();
        let (code, _) = run_args(&["sample", "--input", p.to_str().unwrap(), "--rank", "4", "--method", "brute"]);
        assert_eq!(code.unwrap_err().exit_code(), EXIT_USER);
    }

    #[test]
    fn iris_compare_prints_both() {
        let (code, out) = run_args(&["sample", "--builtin", "iris", "--rank", "4", "--compare"]);
        assert_eq!(code.unwrap(), EXIT_OK);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["fast"]["indices"].as_array().unwrap().len(), 4);
        assert_eq!(v["conventional"]["indices"].as_array().unwrap().len(), 4);
        assert!(v["similarity"].as_f64().unwrap() <= 4.0);
    }

    #[test]
    fn fit_curve_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eff.csv");
        let mut text = String::from("x,y\n");
        for i in 0..10 {
            let x = i as f64 / 9.0;
            text += &format!("{x},{}\n", 0.2 + 0.7 * (1.0 - (-3.0 * x).exp()));
        }
        std::fs::write(&p, text).unwrap();
        let (code, out) = run_args(&["fit-curve", "--input", p.to_str().unwrap()]);
        assert_eq!(code.unwrap(), EXIT_OK);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["lambda"].as_f64().unwrap() - 3.0).abs() < 0.03);

        std::fs::write(&p, "x,y\n0,1\n1,2\n").unwrap();
        let (code, _) = run_args(&["fit-curve", "--input", p.to_str().unwrap()]);
        assert_eq!(code.unwrap_err().exit_code(), EXIT_USER);
    }
}
