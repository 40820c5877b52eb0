//! Command-line interface: simulate benchmark data, fit models, and compare
//! solver variants against the coordinate-ascent reference.
//!
//! Commands are deterministic given their flags and seeds. Result documents
//! go to stdout (or --out) as JSON; progress and tables go to stderr. Exit
//! codes: 0 success, 1 I/O or runtime failure, 2 invalid arguments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Serialize;

use gradvi::io::{
    json_to_string, read_json, read_matrix_csv, read_vector_csv, write_json, write_matrix_csv,
    write_vector_csv, MetricsDocument, ResultDocument, TruthDocument,
};
use gradvi::{
    cavi_fit, fit, fit_trendfilter, objective_direct, rmse, sim_linreg, sim_trendfilter,
    AshPrior, CaviOptions, DenseOperator, DesignKind, Error, FitOptions, LinearOperator,
    LinregSpec, ObjectiveForm, PackedParams, PointNormalPrior, Prior, RegressionData, Result,
    SolverOptions, TrendfilterSpec,
};

#[derive(Parser)]
#[command(
    name = "gradvi",
    version,
    about = "Variational empirical Bayes regression, fit by quasi-Newton optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset
    Simulate {
        #[command(subcommand)]
        design: SimulateCommand,
    },
    /// Fit the regression model to X.csv and y.csv
    Fit(FitArgs),
    /// Fit a trend-filtering model to y.csv
    Trendfilter(TrendfilterArgs),
    /// Fit both objective forms plus the coordinate-ascent reference
    Compare(CompareArgs),
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Sparse linear regression design
    Linreg(SimLinregArgs),
    /// Piecewise-constant series with Gaussian noise
    Trendfilter(SimTrendArgs),
}

#[derive(Args)]
struct SimLinregArgs {
    /// Number of samples
    #[arg(long)]
    n: usize,
    /// Number of predictors
    #[arg(long)]
    p: usize,
    /// Number of causal predictors
    #[arg(long)]
    s: usize,
    /// Target proportion of variance explained
    #[arg(long, value_parser = parse_pve)]
    pve: f64,
    /// Column correlation structure
    #[arg(long, value_enum, default_value_t = DesignArg::Iid)]
    design: DesignArg,
    /// Minimum block size for the block design (default p/5)
    #[arg(long)]
    min_block: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Output directory for X.csv, y.csv, truth.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimTrendArgs {
    /// Series length
    #[arg(long)]
    n: usize,
    /// Number of level changes
    #[arg(long)]
    changepoints: usize,
    /// Noise standard deviation
    #[arg(long, value_parser = parse_nonneg)]
    sigma: f64,
    #[arg(long)]
    seed: u64,
    /// Output directory for y.csv, truth.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Directory holding X.csv, y.csv, and optionally truth.json
    #[arg(long, default_value = ".")]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Compound)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = PriorArg::Ash)]
    prior: PriorArg,
    /// Mixture components for the ash prior
    #[arg(long, default_value_t = 20, value_parser = parse_positive_usize)]
    k_mix: usize,
    /// "null" or a CSV file of warm-start coefficients
    #[arg(long, default_value = "null")]
    init: String,
    #[arg(long, default_value_t = 2000, value_parser = parse_positive_usize)]
    max_iter: usize,
    /// Rescale columns to unit norm during the solve
    #[arg(long)]
    standardize: bool,
    /// Write the result document here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrendfilterArgs {
    /// Directory holding y.csv and optionally truth.json
    #[arg(long, default_value = ".")]
    data: PathBuf,
    /// Trend order: 0 piecewise constant, 1 linear, 2 quadratic
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=2))]
    order: u8,
    /// Use the variance-matched column scaling
    #[arg(long)]
    scaled: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::Compound)]
    method: MethodArg,
    #[arg(long, default_value_t = 2000, value_parser = parse_positive_usize)]
    max_iter: usize,
    /// Where to write trend.csv (default: the data directory)
    #[arg(long)]
    trend_out: Option<PathBuf>,
    /// Write the result document here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Simulation directory holding X.csv, y.csv, truth.json
    #[arg(long, default_value = ".")]
    data: PathBuf,
    #[arg(long, default_value_t = 2000, value_parser = parse_positive_usize)]
    max_iter: usize,
    /// Report the coefficient gradient norm at the CAVI fixed point
    #[arg(long)]
    check_stationarity: bool,
    /// Also time compound trend-filter fits over a grid of sizes
    #[arg(long)]
    timing_sweep: bool,
    /// Seed for the timing sweep's synthetic series
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the comparison document here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Iid,
    Block,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    Compound,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Ash,
    PointNormal,
}

impl MethodArg {
    fn form(self) -> ObjectiveForm {
        match self {
            MethodArg::Direct => ObjectiveForm::Direct,
            MethodArg::Compound => ObjectiveForm::Compound,
        }
    }

    fn label(self) -> &'static str {
        match self {
            MethodArg::Direct => "direct",
            MethodArg::Compound => "compound",
        }
    }
}

fn parse_pve(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

fn parse_nonneg(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err("must be finite and nonnegative".into())
    }
}

fn parse_positive_usize(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("not an integer: {s:?}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { design } => match design {
            SimulateCommand::Linreg(args) => cmd_simulate_linreg(args),
            SimulateCommand::Trendfilter(args) => cmd_simulate_trendfilter(args),
        },
        Command::Fit(args) => cmd_fit(args),
        Command::Trendfilter(args) => cmd_trendfilter(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn emit_document<T: Serialize>(doc: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, doc),
        None => {
            print!("{}", json_to_string(doc)?);
            Ok(())
        }
    }
}

fn cmd_simulate_linreg(args: SimLinregArgs) -> Result<()> {
    let spec = LinregSpec {
        n: args.n,
        p: args.p,
        s: args.s,
        pve: args.pve,
        design: match args.design {
            DesignArg::Iid => DesignKind::Iid,
            DesignArg::Block => DesignKind::Block,
        },
        min_block: args.min_block,
        seed: args.seed,
    };
    let data = sim_linreg(&spec)?;
    ensure_dir(&args.out)?;
    write_matrix_csv(&args.out.join("X.csv"), &data.x)?;
    write_vector_csv(&args.out.join("y.csv"), data.y.as_slice().expect("contiguous"))?;
    let truth = TruthDocument {
        kind: "linreg".into(),
        seed: args.seed,
        sigma2: data.sigma2_true,
        spec: serde_json::to_value(&spec)
            .map_err(|e| Error::Internal(format!("spec serialization failed: {e}")))?,
        b_true: Some(data.b_true.to_vec()),
        mu_true: None,
        changepoints: None,
    };
    write_json(&args.out.join("truth.json"), &truth)?;
    eprintln!(
        "wrote {} x {} design to {} (sigma2 = {:.6})",
        args.n,
        args.p,
        args.out.display(),
        data.sigma2_true
    );
    Ok(())
}

fn cmd_simulate_trendfilter(args: SimTrendArgs) -> Result<()> {
    let spec = TrendfilterSpec {
        n: args.n,
        n_changepoints: args.changepoints,
        sigma: args.sigma,
        seed: args.seed,
    };
    let data = sim_trendfilter(&spec)?;
    ensure_dir(&args.out)?;
    write_vector_csv(&args.out.join("y.csv"), data.y.as_slice().expect("contiguous"))?;
    let truth = TruthDocument {
        kind: "trendfilter".into(),
        seed: args.seed,
        sigma2: args.sigma * args.sigma,
        spec: serde_json::to_value(&spec)
            .map_err(|e| Error::Internal(format!("spec serialization failed: {e}")))?,
        b_true: None,
        mu_true: Some(data.mu_true.to_vec()),
        changepoints: Some(data.changepoints.clone()),
    };
    write_json(&args.out.join("truth.json"), &truth)?;
    eprintln!(
        "wrote series of length {} with {} changepoints to {}",
        args.n,
        data.changepoints.len(),
        args.out.display()
    );
    Ok(())
}

fn load_truth(dir: &Path) -> Option<TruthDocument> {
    let path = dir.join("truth.json");
    if !path.exists() {
        return None;
    }
    match read_json::<TruthDocument>(&path) {
        Ok(t) => Some(t),
        Err(e) => {
            eprintln!("warning: ignoring unreadable {}: {e}", path.display());
            None
        }
    }
}

fn build_prior(prior: PriorArg, k_mix: usize) -> Result<Prior> {
    Ok(match prior {
        PriorArg::Ash => Prior::Ash(AshPrior::default_with_components(k_mix)?),
        PriorArg::PointNormal => {
            Prior::PointNormal(PointNormalPrior::new(0.5, 1.0).expect("valid defaults"))
        }
    })
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let x = read_matrix_csv(&args.data.join("X.csv"))?;
    let y = read_vector_csv(&args.data.join("y.csv"))?;
    let init = match args.init.as_str() {
        "null" => None,
        path => Some(read_vector_csv(Path::new(path))?),
    };
    let truth = load_truth(&args.data);

    let op: Arc<dyn LinearOperator> = Arc::new(DenseOperator::new(x.clone())?);
    let data = RegressionData::new(op, Array1::from_vec(y.clone()))?;
    let opts = FitOptions {
        method: args.method.form(),
        prior: build_prior(args.prior, args.k_mix)?,
        init,
        standardize: args.standardize,
        solver: SolverOptions {
            max_iters: args.max_iter,
            ..SolverOptions::default()
        },
        ..FitOptions::default()
    };
    let res = fit(&data, &opts)?;

    let mut doc = ResultDocument::from_fit(args.method.label(), &res);
    if let Some(truth) = &truth {
        if let Some(b_true) = &truth.b_true {
            if b_true.len() == res.coefficients.len() {
                let signal = x.dot(&Array1::from_vec(b_true.clone()));
                let fitted = x.dot(&res.coefficients);
                doc.metrics = Some(MetricsDocument {
                    rmse: rmse(signal.as_slice().unwrap(), fitted.as_slice().unwrap())?,
                    delta_rmse_pct: None,
                    delta_elbo: None,
                    mse_y: Some(mean_sq_diff(&y, signal.as_slice().unwrap())),
                    mse_fit: Some(mean_sq_diff(
                        fitted.as_slice().unwrap(),
                        signal.as_slice().unwrap(),
                    )),
                });
            }
        }
        doc.seed = Some(truth.seed);
    }
    eprintln!(
        "{}: elbo {:.6}, {} iterations, status {}",
        args.method.label(),
        res.elbo,
        res.n_iters,
        res.status
    );
    emit_document(&doc, args.out.as_deref())
}

fn cmd_trendfilter(args: TrendfilterArgs) -> Result<()> {
    let y = read_vector_csv(&args.data.join("y.csv"))?;
    let truth = load_truth(&args.data);
    let opts = FitOptions {
        method: args.method.form(),
        solver: SolverOptions {
            max_iters: args.max_iter,
            ..SolverOptions::default()
        },
        ..FitOptions::default()
    };
    let res = fit_trendfilter(&y, args.order as usize, args.scaled, &opts)?;

    let trend_dir = args.trend_out.clone().unwrap_or_else(|| args.data.clone());
    ensure_dir(&trend_dir)?;
    let trend_path = trend_dir.join("trend.csv");
    write_vector_csv(&trend_path, res.trend.as_slice().expect("contiguous"))?;

    let mut doc = ResultDocument::from_fit(args.method.label(), &res.fit);
    if let Some(truth) = &truth {
        if let Some(mu) = &truth.mu_true {
            if mu.len() == y.len() {
                doc.metrics = Some(MetricsDocument {
                    rmse: rmse(mu, res.trend.as_slice().unwrap())?,
                    delta_rmse_pct: None,
                    delta_elbo: None,
                    mse_y: Some(mean_sq_diff(&y, mu)),
                    mse_fit: Some(mean_sq_diff(res.trend.as_slice().unwrap(), mu)),
                });
            }
        }
        doc.seed = Some(truth.seed);
    }
    eprintln!(
        "order-{} trend written to {} ({} iterations, status {})",
        args.order,
        trend_path.display(),
        res.fit.n_iters,
        res.fit.status
    );
    emit_document(&doc, args.out.as_deref())
}

#[derive(Serialize)]
struct MethodSummary {
    method: String,
    elbo: f64,
    sigma2: f64,
    n_iters: usize,
    status: String,
    total_secs: f64,
    secs_per_iter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricsDocument>,
}

#[derive(Serialize)]
struct TimingRow {
    n: usize,
    n_iters: usize,
    secs_per_iter: f64,
}

#[derive(Serialize)]
struct TimingSweep {
    rows: Vec<TimingRow>,
    /// Least-squares slope of log(seconds per iteration) against log(n).
    loglog_slope: f64,
}

#[derive(Serialize)]
struct CompareDocument {
    methods: Vec<MethodSummary>,
    delta_elbo_direct_compound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stationarity_grad_inf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing_sweep: Option<TimingSweep>,
}

/// Concurrency cap from GRADVI_THREADS; 0 or unset defers to the host.
fn thread_cap() -> usize {
    match std::env::var("GRADVI_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(n) if n >= 1 => n,
        _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let x = read_matrix_csv(&args.data.join("X.csv"))?;
    let y = read_vector_csv(&args.data.join("y.csv"))?;
    let truth = load_truth(&args.data);
    let op: Arc<dyn LinearOperator> = Arc::new(DenseOperator::new(x.clone())?);
    let data = RegressionData::new(op, Array1::from_vec(y.clone()))?;

    let opts_for = |method: ObjectiveForm| FitOptions {
        method,
        solver: SolverOptions {
            max_iters: args.max_iter,
            ..SolverOptions::default()
        },
        ..FitOptions::default()
    };

    // The coordinate-ascent reference reuses the compound fit's prior and
    // noise variance, so that fit must finish first; the direct fit is
    // independent and may run on a second thread.
    let (compound, direct) = if thread_cap() >= 2 {
        std::thread::scope(|scope| {
            let direct_handle = scope.spawn(|| fit(&data, &opts_for(ObjectiveForm::Direct)));
            let compound = fit(&data, &opts_for(ObjectiveForm::Compound));
            let direct = direct_handle.join().expect("direct fit thread panicked");
            (compound, direct)
        })
    } else {
        (
            fit(&data, &opts_for(ObjectiveForm::Compound)),
            fit(&data, &opts_for(ObjectiveForm::Direct)),
        )
    };
    let compound = compound?;
    let direct = direct?;
    eprintln!(
        "compound: elbo {:.6} in {} iterations; direct: elbo {:.6} in {} iterations",
        compound.elbo, compound.n_iters, direct.elbo, direct.n_iters
    );

    let cavi_start = Instant::now();
    let cavi = cavi_fit(&data, &compound.prior, compound.sigma2, &CaviOptions::default())?;
    let cavi_secs = cavi_start.elapsed().as_secs_f64();
    let cavi_params = PackedParams {
        coefs: cavi.bbar.clone(),
        prior: compound.prior.clone(),
        sigma2: compound.sigma2,
    };
    let cavi_obj = objective_direct(&cavi_params, &data)?;
    let cavi_elbo = -cavi_obj.value;
    eprintln!(
        "cavi reference: elbo {:.6} in {} sweeps ({})",
        cavi_elbo,
        cavi.n_sweeps,
        if cavi.converged { "converged" } else { "sweep budget exhausted" }
    );

    // Signal RMSE against the true coefficients when the sidecar has them.
    let signal_true: Option<Array1<f64>> = truth
        .as_ref()
        .and_then(|t| t.b_true.as_ref())
        .filter(|b| b.len() == x.ncols())
        .map(|b| x.dot(&Array1::from_vec(b.clone())));
    let metrics_against_cavi = |coefs: &Array1<f64>, elbo: f64| -> Result<Option<MetricsDocument>> {
        let Some(signal) = &signal_true else {
            return Ok(None);
        };
        let fitted = x.dot(coefs);
        let ref_fitted = x.dot(&cavi.bbar);
        let m = gradvi::comparison_metrics(
            signal.as_slice().unwrap(),
            fitted.as_slice().unwrap(),
            ref_fitted.as_slice().unwrap(),
            elbo,
            cavi_elbo,
        )?;
        Ok(Some(MetricsDocument::from_comparison(&m)))
    };

    let summary = |label: &str, res: &gradvi::FitResult| -> Result<MethodSummary> {
        Ok(MethodSummary {
            method: label.into(),
            elbo: res.elbo,
            sigma2: res.sigma2,
            n_iters: res.n_iters,
            status: res.status.to_string(),
            total_secs: res.timings.total_secs,
            secs_per_iter: res.timings.total_secs / res.n_iters.max(1) as f64,
            metrics: metrics_against_cavi(&res.coefficients, res.elbo)?,
        })
    };

    let mut methods = vec![summary("direct", &direct)?, summary("compound", &compound)?];
    methods.push(MethodSummary {
        method: "cavi".into(),
        elbo: cavi_elbo,
        sigma2: compound.sigma2,
        n_iters: cavi.n_sweeps,
        status: if cavi.converged {
            "converged".into()
        } else {
            "max_sweeps".into()
        },
        total_secs: cavi_secs,
        secs_per_iter: cavi_secs / cavi.n_sweeps.max(1) as f64,
        metrics: metrics_against_cavi(&cavi.bbar, cavi_elbo)?,
    });

    let stationarity_grad_inf = if args.check_stationarity {
        let p = x.ncols();
        let grad_inf = cavi_obj.grad[..p]
            .iter()
            .fold(0.0_f64, |m, &g| m.max(g.abs()));
        eprintln!("coefficient gradient at CAVI fixed point: {grad_inf:.3e}");
        Some(grad_inf)
    } else {
        None
    };

    let timing_sweep = if args.timing_sweep {
        Some(run_timing_sweep(args.seed, args.max_iter)?)
    } else {
        None
    };

    let doc = CompareDocument {
        delta_elbo_direct_compound: direct.elbo - compound.elbo,
        methods,
        stationarity_grad_inf,
        timing_sweep,
    };
    eprintln!("delta elbo (direct - compound): {:.6e}", doc.delta_elbo_direct_compound);
    emit_document(&doc, args.out.as_deref())
}

fn run_timing_sweep(seed: u64, max_iter: usize) -> Result<TimingSweep> {
    let mut rows = Vec::new();
    eprintln!("timing sweep (order-0 compound trend filter):");
    eprintln!("{:>8} {:>8} {:>14}", "n", "iters", "secs/iter");
    for exp in 10..=14_u32 {
        let n = 1_usize << exp;
        let sim = sim_trendfilter(&TrendfilterSpec {
            n,
            n_changepoints: 10,
            sigma: 1.0,
            seed,
        })?;
        let opts = FitOptions {
            solver: SolverOptions {
                max_iters: max_iter,
                ..SolverOptions::default()
            },
            ..FitOptions::default()
        };
        let res = fit_trendfilter(sim.y.as_slice().unwrap(), 0, false, &opts)?;
        let per_iter = res.fit.timings.total_secs / res.fit.n_iters.max(1) as f64;
        eprintln!("{:>8} {:>8} {:>14.6e}", n, res.fit.n_iters, per_iter);
        rows.push(TimingRow {
            n,
            n_iters: res.fit.n_iters,
            secs_per_iter: per_iter,
        });
    }
    let slope = loglog_slope(&rows);
    eprintln!("log-log slope: {slope:.3}");
    Ok(TimingSweep {
        rows,
        loglog_slope: slope,
    })
}

fn loglog_slope(rows: &[TimingRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.secs_per_iter.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    num / den
}
