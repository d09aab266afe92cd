use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser};

use homlab::{output, run, Experiment, RawConfig, RunError};

#[derive(Parser, Debug)]
#[command(name = "homlab", version, about = "Random conductance experiments on the discrete torus")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,

    #[command(flatten)]
    run: RunArgs,

    #[command(flatten)]
    keys: KeyArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, env = "HOMLAB_OUT")]
    out: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

/// Flags mirroring config keys.
#[derive(Args, Debug)]
struct KeyArgs {
    /// modified-bernoulli, iid-bernoulli, iid-uniform or deterministic.
    #[arg(long, global = true)]
    ensemble: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    open_axis: Option<usize>,
    #[arg(long, global = true)]
    lo: Option<f64>,
    #[arg(long, global = true)]
    hi: Option<f64>,
    #[arg(long, global = true)]
    value: Option<f64>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    side: Option<usize>,
    /// Comma-separated T grid.
    #[arg(long, global = true)]
    t: Option<String>,
    /// Comma-separated exponents.
    #[arg(long, global = true)]
    p: Option<String>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    /// Comma-separated direction, normalized on input.
    #[arg(long, global = true)]
    e: Option<String>,
    #[arg(long, global = true)]
    h: Option<f64>,
    #[arg(long, global = true)]
    h_ratio: Option<f64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    pairs: Option<usize>,
    #[arg(long, global = true)]
    leibniz_p: Option<String>,
    #[arg(long, global = true)]
    r0: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    slope_tol: Option<f64>,
    #[arg(long, global = true)]
    slope_max: Option<f64>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    radii: Option<String>,
    #[arg(long, global = true)]
    axis: Option<usize>,
    #[arg(long, global = true)]
    band: Option<f64>,
    #[arg(long, global = true)]
    ratio_lo: Option<f64>,
    #[arg(long, global = true)]
    ratio_hi: Option<f64>,
}

impl KeyArgs {
    fn into_raw(self) -> RawConfig {
        let mut raw = RawConfig::default();
        macro_rules! put {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { raw.set(stringify!($field), v); })*
            };
        }
        put!(
            ensemble,
            lambda,
            open_axis,
            lo,
            hi,
            value,
            dim,
            side,
            t,
            p,
            samples,
            tolerance,
            max_iterations,
            e,
            h,
            h_ratio,
            trials,
            pairs,
            leibniz_p,
            r0,
            k,
            slope_tol,
            slope_max,
            theta,
            radii,
            axis,
            band,
            ratio_lo,
            ratio_hi
        );
        raw
    }
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    let mut raw = match &cli.run.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    raw.overlay(&cli.keys.into_raw());
    if let Some(seed) = cli.run.seed {
        raw.set("seed", seed);
    }
    let cfg = raw.resolve(cli.experiment)?;
    let out_dir =
        cli.run.out.or_else(|| cfg.out.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("homlab-out"));

    let start = Instant::now();
    let output = with_workers(cli.run.workers, || run(&cfg))??;
    let elapsed = start.elapsed().as_secs_f64();
    output::write_outputs(&out_dir, &output, elapsed, cli.run.workers)
        .map_err(|e| RunError::Failure(format!("cannot write to {}: {e}", out_dir.display())))?;

    let report = &output.report;
    eprintln!(
        "{}: verdict {:?}, {} failures, {:.1}s -> {}",
        cfg.experiment.name(),
        report.verdict,
        report.failures.len(),
        elapsed,
        out_dir.display()
    );
    Ok(report.exit_code())
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(RunError::Usage("--workers must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::Failure(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    if workers.is_some_and(|n| n > 1) {
        eprintln!("built without the `parallel` feature; running on one thread");
    }
    Ok(f())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
