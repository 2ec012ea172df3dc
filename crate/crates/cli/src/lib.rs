//! Command-line front end: flags and a JSON config become a [`RunConfig`],
//! which is dispatched to the library and written out as CSV, text and SVG.

pub mod config;
pub mod fail;
pub mod run;
pub mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_grid_axis, parse_vector, ModelKind, RunConfig, SourceName};
use fail::Failure;

#[derive(Debug, Parser)]
#[command(name = "qbgmm", version, about = "Quasi-Bayes and robust inference for weakly identified GMM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// CUE point estimate, plus the objective on the grid for two parameters.
    Fit,
    /// Quasi-posterior draws, summary and HPD set on the grid.
    Posterior,
    /// Conditional robust test of `theta0`.
    Test,
    /// Confidence set by inverting the robust test over the grid.
    Confset,
    /// Rejection rates and the limit-of-Bayes sequence in a finite Gaussian experiment.
    Limitlab,
    /// Replications of the CUE estimator in the design calibrated to the data.
    Simulate,
    /// SVG figures from an earlier run's CSV files.
    Plot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Posterior => "posterior",
            Command::Test => "test",
            Command::Confset => "confset",
            Command::Limitlab => "limitlab",
            Command::Simulate => "simulate",
            Command::Plot => "plot",
        }
    }
}

/// Flags override the config file field by field.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON config, or the manifest of an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "F")]
    pub alpha: Option<f64>,
    /// One grid axis, 1-based; repeat for each axis.
    #[arg(long, global = true, value_name = "AX:MIN:MAX:COUNT")]
    pub grid: Vec<String>,
    #[arg(long, global = true, value_name = "F")]
    pub tau: Option<f64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Cap on worker threads (0 keeps the default pool).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// MCMC iterations per chain after burn-in.
    #[arg(long, global = true, value_name = "N")]
    pub draws: Option<usize>,
    /// Conditional draws for critical values.
    #[arg(long = "cond-draws", global = true, value_name = "B")]
    pub cond_draws: Option<usize>,
    /// Dataset CSV with columns y, w1.., z1...
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, global = true, value_name = "KIND", value_parser = ["quantile_iv", "linear_iv"])]
    pub model: Option<String>,
    /// Prior box lower corner, comma separated.
    #[arg(long, global = true, value_name = "V", allow_hyphen_values = true)]
    pub lower: Option<String>,
    /// Prior box upper corner, comma separated.
    #[arg(long, global = true, value_name = "V", allow_hyphen_values = true)]
    pub upper: Option<String>,
    /// Hypothesized parameter for `test`, comma separated.
    #[arg(long, global = true, value_name = "V", allow_hyphen_values = true)]
    pub theta0: Option<String>,
    /// Experiment spec JSON for `limitlab`.
    #[arg(long, global = true, value_name = "PATH")]
    pub experiment: Option<PathBuf>,
    /// Replications for `limitlab` and `simulate`.
    #[arg(long, global = true, value_name = "N")]
    pub reps: Option<usize>,
    /// Sample size for `simulate`.
    #[arg(long, global = true, value_name = "N")]
    pub n: Option<usize>,
    #[arg(long, global = true, value_name = "SOURCE", value_parser = ["pstar", "p0", "mixture"])]
    pub source: Option<String>,
    /// Run directory read by `plot`.
    #[arg(long, global = true, value_name = "DIR")]
    pub input: Option<PathBuf>,
}

/// Config file (if any) with the flags applied on top.
pub fn effective_config(flags: &Flags) -> Result<RunConfig, Failure> {
    let mut c = match &flags.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = flags.seed {
        c.seed = Some(s);
    }
    if let Some(a) = flags.alpha {
        c.alpha = a;
    }
    if let Some(t) = flags.tau {
        c.model.tau = t;
    }
    if let Some(o) = &flags.out {
        c.out = o.clone();
    }
    if let Some(w) = flags.workers {
        c.workers = w;
    }
    if let Some(d) = flags.draws {
        c.mcmc.draws = d;
    }
    if let Some(b) = flags.cond_draws {
        c.cond_draws = b;
    }
    if let Some(d) = &flags.data {
        c.data = Some(config::DataConfig {
            path: d.clone(),
            columns: c.data.take().and_then(|d| d.columns),
        });
    }
    if let Some(m) = &flags.model {
        c.model.kind = if m == "linear_iv" { ModelKind::LinearIv } else { ModelKind::QuantileIv };
    }
    match (&flags.lower, &flags.upper) {
        (None, None) => {}
        (lo, up) => {
            let current = c.prior.take();
            let pick = |flag: &Option<String>, old: Option<Vec<f64>>| -> Result<Vec<f64>, Failure> {
                match flag {
                    Some(s) => parse_vector(s).map_err(Failure::config),
                    None => old.ok_or_else(|| Failure::config("--lower and --upper must be given together".into())),
                }
            };
            let lower = pick(lo, current.as_ref().map(|p| p.lower.clone()))?;
            let upper = pick(up, current.as_ref().map(|p| p.upper.clone()))?;
            c.prior = Some(config::PriorConfig {
                lower,
                upper,
                density: current.map_or_else(|| "flat".into(), |p| p.density),
            });
        }
    }
    if let Some(t) = &flags.theta0 {
        c.theta0 = Some(parse_vector(t).map_err(Failure::config)?);
    }
    if let Some(p) = &flags.experiment {
        let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
        c.experiment = Some(serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?);
    }
    if let Some(r) = flags.reps {
        c.reps = r;
        c.simulate.reps = r;
    }
    if let Some(n) = flags.n {
        c.simulate.n = Some(n);
    }
    if let Some(s) = &flags.source {
        c.simulate.source = match s.as_str() {
            "p0" => SourceName::P0,
            "mixture" => SourceName::Mixture,
            _ => SourceName::Pstar,
        };
    }
    if let Some(i) = &flags.input {
        c.input = Some(i.clone());
    }
    if !flags.grid.is_empty() {
        let mut axes = match &c.grid {
            Some(a) => a.clone(),
            None if c.prior.is_some() => c.grid_spec()?.axes,
            None => Vec::new(),
        };
        for g in &flags.grid {
            let (ax, axis) = parse_grid_axis(g).map_err(Failure::config)?;
            if axes.len() < ax {
                axes.resize(ax, qbgmm::param::Axis { min: 0.0, max: 0.0, count: 0 });
            }
            axes[ax - 1] = axis;
        }
        if let Some(i) = axes.iter().position(|a| a.count == 0) {
            return Err(Failure::config(format!("grid axis {} was not given", i + 1)));
        }
        c.grid = Some(axes);
    }
    Ok(c)
}

/// Parse arguments, run, and turn failures into the exit code and one stderr line.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = effective_config(&cli.flags).and_then(|cfg| run::run(cli.command, cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.kind.exit_code())
        }
    }
}
