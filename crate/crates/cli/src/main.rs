use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use longmem::config::ExperimentConfig;
use longmem::harness::{self, Experiment, VerificationReport};
use longmem::report::{quantiles_csv, to_json};
use longmem::stable::{StableCdf, StableLaw};
use serde_json::json;

/// Limit theorems for functionals of long-memory linear processes with
/// heavy-tailed innovations: constants, simulation and verification.
#[derive(Debug, Parser)]
#[command(name = "longmem", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the limit-law constants and normalizers of a configuration
    Constants(Common),
    /// Simulate normalized partial sums and write them with sample paths
    Simulate(Common),
    /// Run the marginal verification and the enabled diagnostics
    Verify(Common),
    /// Run the decomposition-rate and eta_K tail diagnostics
    Diagnose(Common),
    /// Tabulate a stable CDF and density
    StableTable(TableArgs),
    /// Check the statistics pipeline on draws from the limit laws
    Selftest(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in configuration: thm1, thm2 or thm3
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    preset: Option<String>,
    /// Master seed (overrides the configuration)
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output directory; nothing is written outside it
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Configuration override, e.g. m=500 or diagnostics.decomposition=true (repeatable)
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Suppress progress messages on standard error
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct TableArgs {
    /// Stability index in (0, 2]
    #[arg(long)]
    alpha: f64,
    /// Skewness in [-1, 1]
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    skew: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    shift: f64,
    /// First abscissa
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    from: f64,
    /// Last abscissa
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    to: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
}

/// Exit status for unmet verification criteria.
const EXIT_FAILED: u8 = 1;
/// Exit status for usage, configuration and runtime errors.
const EXIT_ERROR: u8 = 2;

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn load(c: &Common) -> Result<ExperimentConfig, Failure> {
    let base = match (&c.config, &c.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Failure("a configuration is required (--config PATH or --preset NAME)".into())),
    };
    let mut overrides = c.overrides.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(w) = c.workers {
        overrides.push(format!("workers={w}"));
    }
    Ok(base.with_overrides(&overrides)?)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("longmem-out"));
    fs::create_dir_all(&dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn logger(quiet: bool) -> impl Fn(&str) + Sync {
    let start = Instant::now();
    move |msg: &str| {
        if !quiet {
            eprintln!("[{:>8.1}s] {msg}", start.elapsed().as_secs_f64());
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string(v)?)?;
    Ok(())
}

fn write_report(dir: &Path, report: &VerificationReport) -> Result<Vec<PathBuf>, Failure> {
    let mut files = vec![write_file(dir, "report.json", to_json(report)?.as_bytes())?];
    if !report.quantiles.is_empty() {
        files.push(write_file(dir, "quantiles.csv", quantiles_csv(&report.quantiles).as_bytes())?);
    }
    Ok(files)
}

fn summary(report: &VerificationReport, files: &[PathBuf]) -> serde_json::Value {
    json!({
        "mode": report.mode,
        "pass": report.pass,
        "criteria": report.criteria,
        "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    })
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Constants(c) => {
            let cfg = load(&c)?;
            let log = logger(c.quiet);
            let mut exp = Experiment::new(&cfg, &log)?;
            let constants = exp.constants()?;
            let mut rows = Vec::new();
            for &n in &cfg.n_grid {
                let j = cfg.j_policy.resolve(cfg.beta, &cfg.ell, n)?;
                let k0 = exp.model(j, &log)?.kinf.at_zero();
                rows.push(json!({
                    "n": n,
                    "j": j,
                    "kInf0Truncated": k0,
                    "norm": exp.normalizers.theorem(n as f64)?,
                    "normThm1": exp.normalizers.thm1_companion(n as f64)?,
                }));
            }
            print_json(&json!({ "constants": constants, "normalizers": rows }))?;
            Ok(true)
        }
        Command::Simulate(c) => {
            let cfg = load(&c)?;
            let dir = out_dir(&c, &cfg)?;
            let log = logger(c.quiet);
            let mut exp = Experiment::new(&cfg, &log)?;
            let sums = harness::run_partial_sums_with(&mut exp, false, &log)?;
            let mut csv = String::from("N,t,replication,normalized_sum\n");
            for (k, slice) in sums.slices.iter().enumerate() {
                for &t in &cfg.t_grid {
                    for (r, v) in sums.normalized(k, t).iter().enumerate() {
                        csv.push_str(&format!("{},{:.16e},{r},{v:.16e}\n", slice.n, t));
                    }
                }
            }
            let mut files = vec![write_file(&dir, "sums.csv", csv.as_bytes())?];
            let paths = harness::sample_paths(&exp, &sums)?;
            let mut bin = Vec::new();
            paths.write_to(&mut bin)?;
            files.push(write_file(&dir, "samples.bin", &bin)?);
            print_json(&json!({ "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() }))?;
            Ok(true)
        }
        Command::Verify(c) => {
            let cfg = load(&c)?;
            let dir = out_dir(&c, &cfg)?;
            let log = logger(c.quiet);
            let (report, paths) = harness::verify(&cfg, &log)?;
            let mut files = write_report(&dir, &report)?;
            if let Some(p) = paths {
                let mut bin = Vec::new();
                p.write_to(&mut bin)?;
                files.push(write_file(&dir, "samples.bin", &bin)?);
            }
            print_json(&summary(&report, &files))?;
            Ok(report.pass)
        }
        Command::Diagnose(c) => {
            let cfg = load(&c)?;
            let dir = out_dir(&c, &cfg)?;
            let report = harness::diagnose(&cfg, &logger(c.quiet))?;
            let files = write_report(&dir, &report)?;
            print_json(&summary(&report, &files))?;
            Ok(report.pass)
        }
        Command::Selftest(c) => {
            let configs = if c.config.is_none() && c.preset.is_none() {
                ["thm1", "thm2", "thm3"]
                    .iter()
                    .map(|name| {
                        let sub = Common { preset: Some(name.to_string()), config: None, overrides: c.overrides.clone(), out: None, ..c };
                        load(&sub).map(|cfg| (name.to_string(), cfg))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                vec![("selftest".to_string(), load(&c)?)]
            };
            let log = logger(c.quiet);
            let mut all_pass = true;
            let mut results = Vec::new();
            for (name, cfg) in &configs {
                let report = harness::selftest(cfg, &log)?;
                let files = match &c.out {
                    Some(dir) => {
                        let d = dir.join(name);
                        fs::create_dir_all(&d)?;
                        write_report(&d, &report)?
                    }
                    None => vec![],
                };
                all_pass &= report.pass;
                results.push(json!({ "name": name, "summary": summary(&report, &files) }));
            }
            print_json(&json!({ "pass": all_pass, "runs": results }))?;
            Ok(all_pass)
        }
        Command::StableTable(a) => {
            if a.points < 2 || !(a.to > a.from) {
                return Err(Failure("stable-table needs --points >= 2 and --to > --from".into()));
            }
            let cdf = StableCdf::new(StableLaw::new(a.alpha, a.scale, a.skew, a.shift)?)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "x,cdf,pdf")?;
            for k in 0..a.points {
                let x = a.from + (a.to - a.from) * k as f64 / (a.points - 1) as f64;
                writeln!(out, "{x:.16e},{:.16e},{:.16e}", cdf.cdf(x), cdf.pdf(x))?;
            }
            Ok(true)
        }
    }
}
