//! Command-line driver: Monte Carlo tables, smoothing, EDF export, and the
//! normality test over CSV samples.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use resid_edf::data::{self, ErrorLaw};
use resid_edf::edf::{self, ImputationMode};
use resid_edf::harness::{self, MseConfig, PowerConfig};
use resid_edf::normtest::{self, TransformTables};
use resid_edf::polybasis::ProductKernel;
use resid_edf::smoother::{self, DomainBox, MarSample};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

const SEED_ENV: &str = "RESID_EDF_SEED";

#[derive(Parser)]
#[command(
    name = "resid-edf",
    version,
    about = "Error-distribution estimation under responses missing at random"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scaled MSE table for the complete-case and tuned EDF
    /// estimators.
    Mse(MseArgs),
    /// Simulate level and power of the martingale-transform normality tests.
    Power(PowerArgs),
    /// Fit the complete-case smoother to a CSV sample and export it on a grid.
    Fit(FitArgs),
    /// Export the residual EDF of a CSV sample.
    Edf(EdfArgs),
    /// Test a CSV sample's residuals for normal errors
    /// (exit code 0 = retain, 1 = reject, 2 = error).
    Normtest(NormtestArgs),
}

#[derive(Args)]
struct MseArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50,250,1000")]
    n: Vec<usize>,
    /// Evaluation points, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1.5,-1,0,1,1.5")]
    t: Vec<f64>,
    /// Monte Carlo replicates per sample size.
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    /// Master seed (falls back to RESID_EDF_SEED, then a fixed default).
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PowerArgs {
    /// Error laws: any of n01,n02,chisq1,t4,laplace.
    #[arg(long, value_delimiter = ',', default_value = "n02,chisq1,t4,laplace")]
    laws: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "50,200")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SmoothingArgs {
    /// Scale factor of the bandwidth rule scale * (n ln n)^(-1/(2s)).
    #[arg(long = "bw-scale", default_value_t = 1.25)]
    bandwidth_scale: f64,
    /// Smoothness exponent s of the bandwidth rule.
    #[arg(long = "bw-smoothness", default_value_t = 2.0)]
    bandwidth_smoothness: f64,
    /// Local polynomial degree.
    #[arg(long, default_value_t = 1)]
    degree: u32,
    /// Kernel exponent k in w(u) = C_k (1 - u^2)^k.
    #[arg(long = "kernel-exponent", default_value_t = harness::HARNESS_KERNEL_EXPONENT)]
    kernel_exponent: u32,
}

#[derive(Clone, Copy, Debug)]
enum Bandwidth {
    Auto,
    Fixed(f64),
}

impl FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        s.parse::<f64>()
            .map(Bandwidth::Fixed)
            .map_err(|_| format!("expected `auto` or a number, got {s:?}"))
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with columns x1,...,xm,y,delta.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    degree: u32,
    /// `auto` for the bandwidth rule, or an explicit value.
    #[arg(long, default_value = "auto")]
    bandwidth: Bandwidth,
    /// Number of grid points for the exported fit.
    #[arg(long, default_value_t = 201)]
    grid: usize,
    #[arg(long = "bw-scale", default_value_t = 1.25)]
    bandwidth_scale: f64,
    #[arg(long = "bw-smoothness", default_value_t = 2.0)]
    bandwidth_smoothness: f64,
    #[arg(long = "kernel-exponent")]
    kernel_exponent: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EdfArgs {
    #[arg(long)]
    data: PathBuf,
    /// Use the tuned (impute-and-refit) estimator instead of the plain
    /// complete-case one.
    #[arg(long)]
    tuned: bool,
    /// With --tuned, keep observed responses and impute only the missing
    /// ones instead of replacing every response.
    #[arg(long, requires = "tuned")]
    partial_imputation: bool,
    #[arg(long, default_value_t = 1)]
    degree: u32,
    #[arg(long, default_value = "auto")]
    bandwidth: Bandwidth,
    #[arg(long = "bw-scale", default_value_t = 1.25)]
    bandwidth_scale: f64,
    #[arg(long = "bw-smoothness", default_value_t = 2.0)]
    bandwidth_smoothness: f64,
    #[arg(long = "kernel-exponent")]
    kernel_exponent: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NormtestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    degree: u32,
    #[arg(long, default_value = "auto")]
    bandwidth: Bandwidth,
    #[arg(long = "bw-scale", default_value_t = 1.25)]
    bandwidth_scale: f64,
    #[arg(long = "bw-smoothness", default_value_t = 2.0)]
    bandwidth_smoothness: f64,
    #[arg(long = "kernel-exponent")]
    kernel_exponent: Option<u32>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Mse(args) => report_plain(run_mse(args)),
        Command::Power(args) => report_plain(run_power(args)),
        Command::Fit(args) => report_plain(run_fit(args)),
        Command::Edf(args) => report_plain(run_edf(args)),
        Command::Normtest(args) => run_normtest(args),
    }
}

fn report_plain(result: Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Flag beats environment beats the built-in default.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got {text:?}")),
        Err(_) => Ok(harness::DEFAULT_MASTER_SEED),
    }
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    out.write_all(contents.as_bytes())?;
    Ok(())
}

fn run_mse(args: MseArgs) -> Result<()> {
    let mut config = MseConfig::new(resolve_seed(args.seed)?);
    config.sample_sizes = args.n;
    config.eval_points = args.t;
    config.runs = args.runs;
    config.bandwidth_scale = args.smoothing.bandwidth_scale;
    config.bandwidth_smoothness = args.smoothing.bandwidth_smoothness;
    config.degree = args.smoothing.degree;
    config.kernel_exponent = args.smoothing.kernel_exponent;
    let report = harness::run_mse(&config)?;
    write_output(&args.out, &report.to_csv())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_power(args: PowerArgs) -> Result<()> {
    let laws = args
        .laws
        .iter()
        .map(|label| {
            ErrorLaw::parse(label)
                .with_context(|| format!("unknown error law {label:?}; expected one of n01,n02,chisq1,t4,laplace"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = PowerConfig::new(resolve_seed(args.seed)?);
    config.laws = laws;
    config.sample_sizes = args.n;
    config.runs = args.runs;
    config.alpha = args.alpha;
    config.bandwidth_scale = args.smoothing.bandwidth_scale;
    config.bandwidth_smoothness = args.smoothing.bandwidth_smoothness;
    config.degree = args.smoothing.degree;
    config.kernel_exponent = args.smoothing.kernel_exponent;
    let report = harness::run_power(&config)?;
    write_output(&args.out, &report.to_csv())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_sample(path: &Path) -> Result<MarSample> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(data::read_mar_csv(BufReader::new(file))?)
}

struct Pipeline {
    sample: MarSample,
    kernel: ProductKernel,
    bandwidth: f64,
    degree: u32,
    domain: DomainBox,
}

fn build_pipeline(
    path: &Path,
    degree: u32,
    bandwidth: Bandwidth,
    bandwidth_scale: f64,
    bandwidth_smoothness: f64,
    kernel_exponent: Option<u32>,
) -> Result<Pipeline> {
    let sample = load_sample(path)?;
    let m = sample.dimension();
    let kernel = match kernel_exponent {
        Some(k) => ProductKernel::new(k, m),
        None => ProductKernel::default_for_dimension(m),
    };
    let bandwidth = match bandwidth {
        Bandwidth::Fixed(value) => {
            if !(value.is_finite() && value > 0.0) {
                bail!("bandwidth must be positive, got {value}");
            }
            value
        }
        Bandwidth::Auto => {
            smoother::bandwidth_rule_smoothness(sample.len(), bandwidth_scale, bandwidth_smoothness)?
        }
    };
    let domain = DomainBox::from_sample(&sample)?;
    Ok(Pipeline {
        sample,
        kernel,
        bandwidth,
        degree,
        domain,
    })
}

fn run_fit(args: FitArgs) -> Result<()> {
    if args.grid < 2 {
        bail!("grid needs at least 2 points");
    }
    let p = build_pipeline(
        &args.data,
        args.degree,
        args.bandwidth,
        args.bandwidth_scale,
        args.bandwidth_smoothness,
        args.kernel_exponent,
    )?;
    if p.sample.dimension() != 1 {
        bail!("fit exports x,rhat pairs and supports one-dimensional covariates only");
    }
    let fit = smoother::fit_local_poly_in(
        &p.sample,
        p.degree,
        &p.kernel,
        p.bandwidth,
        p.domain.clone(),
    )?;
    let (lo, hi) = p.domain.bounds()[0];
    let mut out = format!(
        "# resid-edf {} | fit | data={} | degree={} | bandwidth={} | grid={}\n",
        env!("CARGO_PKG_VERSION"),
        args.data.display(),
        p.degree,
        p.bandwidth,
        args.grid
    );
    out.push_str("x,rhat\n");
    for i in 0..args.grid {
        let x = lo + (hi - lo) * i as f64 / (args.grid - 1) as f64;
        let value = fit.evaluate(&[x])?;
        out.push_str(&format!("{x},{value}\n"));
    }
    write_output(&args.out, &out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_edf(args: EdfArgs) -> Result<()> {
    let p = build_pipeline(
        &args.data,
        args.degree,
        args.bandwidth,
        args.bandwidth_scale,
        args.bandwidth_smoothness,
        args.kernel_exponent,
    )?;
    let estimate = if args.tuned {
        let mode = if args.partial_imputation {
            ImputationMode::Partial
        } else {
            ImputationMode::Full
        };
        edf::edf_tuned_in(
            &p.sample,
            p.degree,
            &p.kernel,
            p.bandwidth,
            p.bandwidth,
            &p.domain,
            mode,
        )?
    } else {
        let fit = smoother::fit_local_poly_in(
            &p.sample,
            p.degree,
            &p.kernel,
            p.bandwidth,
            p.domain.clone(),
        )?;
        edf::edf_complete_case(&p.sample, &fit)?
    };
    let mut payload = format!(
        "# resid-edf {} | edf | data={} | tuned={} | degree={} | bandwidth={} | N={}\n",
        env!("CARGO_PKG_VERSION"),
        args.data.display(),
        args.tuned,
        p.degree,
        p.bandwidth,
        estimate.n_complete()
    );
    let mut body = Vec::new();
    estimate.write_csv(&mut body)?;
    payload.push_str(std::str::from_utf8(&body).expect("csv body is utf-8"));
    write_output(&args.out, &payload)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_normtest(args: NormtestArgs) -> ExitCode {
    match normtest_inner(args) {
        Ok(reject) => {
            if reject {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn normtest_inner(args: NormtestArgs) -> Result<bool> {
    let p = build_pipeline(
        &args.data,
        args.degree,
        args.bandwidth,
        args.bandwidth_scale,
        args.bandwidth_smoothness,
        args.kernel_exponent,
    )?;
    let fit = smoother::fit_local_poly_in(
        &p.sample,
        p.degree,
        &p.kernel,
        p.bandwidth,
        p.domain.clone(),
    )?;
    let residuals: Vec<f64> = smoother::residuals_complete_case(&fit, &p.sample)?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    let result = normtest::t_statistic(&residuals, TransformTables::standard(), args.alpha)?;
    println!(
        "{{\"statistic\":{},\"critical_value\":{},\"N\":{},\"truncated_points\":{},\"alpha\":{},\"reject\":{}}}",
        result.statistic,
        result.critical_value,
        result.n_used,
        result.truncated_points,
        result.alpha,
        result.reject
    );
    Ok(result.reject)
}
