//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags or config),
//! 1 for runtime failures.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{load_csv, write_csv, TaskLayout, TaskMode, TimeSeries};
use crate::error::Error;
use crate::experiment::{
    export_trace, forecast_test, median, run_comparison, run_seeds, run_table, train_arm,
    Comparison, ExperimentConfig,
};
use crate::network::MlpParams;
use crate::synthgen::generate;

pub const CONFIG_ENV: &str = "TRAFFIC_MTL_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "traffic-mtl", version, about = "Single-task vs multitask LM-trained flow forecasting")]
pub struct Cli {
    /// Run configuration (key = value lines).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic flow series as CSV.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one arm and write the model and its `epoch,mse,mu` history.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = parse_mode)]
        mode: TaskMode,
        /// Model output path; history goes to `<out>.history.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train both arms and write the report and both prediction traces.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Inclusive seed range such as `1..10`.
        #[arg(long, value_parser = parse_seed_range)]
        seeds: Option<SeedRange>,
    },
    /// Compare both arms on every link in the data file.
    Table {
        #[arg(long)]
        data: PathBuf,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forecast the test slice with a saved model and write the trace CSV.
    Export {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Flow CSV with header `link_id,index,value`.
    #[arg(long)]
    pub data: PathBuf,
    /// Link to use; defaults to the first in the file.
    #[arg(long)]
    pub link: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> Vec<u64> {
        (self.first..=self.last).collect()
    }
}

fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let first: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
    let last: u64 = b.trim().parse().map_err(|_| format!("bad seed `{b}`"))?;
    if first > last {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(SeedRange { first, last })
}

fn parse_mode(s: &str) -> Result<TaskMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(format!("config: {e}"))),
    }
}

fn pick_series(path: &Path, link: Option<&str>) -> CliResult<TimeSeries> {
    let mut all = load_csv(path)?;
    match link {
        None => Ok(all.swap_remove(0)),
        Some(id) => all
            .into_iter()
            .find(|s| s.link_id() == id)
            .ok_or_else(|| CliError::Usage(format!("link `{id}` not found in {}", path.display()))),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path, seed: Option<u64>, log: &mut dyn Write) -> CliResult<()> {
    let mut synth = cfg.synth.clone();
    if let Some(s) = seed {
        synth.seed = s;
    }
    synth
        .validate()
        .map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let series = generate(&synth, &cfg.link_id)?;
    write_csv(std::slice::from_ref(&series), out)?;
    let _ = writeln!(log, "generated {} points for link {}", series.len(), series.link_id());
    Ok(())
}

pub fn cmd_train(
    cfg: &RunConfig,
    data: &DataArgs,
    mode: TaskMode,
    out: &Path,
    seed: Option<u64>,
    log: &mut dyn Write,
) -> CliResult<()> {
    let series = pick_series(&data.data, data.link.as_deref())?;
    let exp = with_seed(cfg, seed);
    let trained = train_arm(&series, mode, &exp)?;
    trained.params.save(out)?;
    let history = history_path(out);
    trained.state.write_history(&history)?;
    let _ = writeln!(
        log,
        "{mode} {} on {}: {} after {} epochs, mse {}",
        trained.params.dims(),
        series.link_id(),
        trained.stop,
        trained.state.epoch,
        trained.state.mse
    );
    Ok(())
}

pub fn history_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".history.csv");
    PathBuf::from(s)
}

fn with_seed(cfg: &RunConfig, seed: Option<u64>) -> ExperimentConfig {
    let mut exp = cfg.experiment.clone();
    if let Some(s) = seed {
        exp.lm.seed = s;
        for lm in exp.link_overrides.values_mut() {
            lm.seed = s;
        }
    }
    exp
}

fn write_comparison(dir: &Path, c: &Comparison) -> CliResult<()> {
    create_dir(dir)?;
    c.report.write(dir.join("report.txt"))?;
    export_trace(&c.stl_trace, dir.join("trace_stl.csv"))?;
    export_trace(&c.mtl_trace, dir.join("trace_mtl.csv"))?;
    Ok(())
}

fn table_line(c: &Comparison) -> String {
    let r = &c.report;
    format!(
        "{}: RMSE_STL {:.2}  RMSE_MTL {:.2}  e {:.2}%  (seed {}, {} test points)",
        r.link_id, r.rmse_stl, r.rmse_mtl, r.improvement_pct, r.seed, r.test_count
    )
}

pub fn cmd_compare(
    cfg: &RunConfig,
    data: &DataArgs,
    out: &Path,
    seed: Option<u64>,
    seeds: Option<SeedRange>,
    log: &mut dyn Write,
) -> CliResult<()> {
    let series = pick_series(&data.data, data.link.as_deref())?;
    match seeds {
        None => {
            let exp = with_seed(cfg, seed);
            let c = run_comparison(&series, exp.window_len, &exp)?;
            write_comparison(out, &c)?;
            let _ = writeln!(log, "{}", table_line(&c));
        }
        Some(range) => {
            let comps = run_seeds(&series, &cfg.experiment, &range.seeds())?;
            create_dir(out)?;
            let mut summary = String::from("seed,rmse_stl,rmse_mtl,improvement_pct\n");
            for c in &comps {
                write_comparison(&out.join(format!("seed-{}", c.report.seed)), c)?;
                let r = &c.report;
                let _ = writeln!(summary, "{},{},{},{}", r.seed, r.rmse_stl, r.rmse_mtl, r.improvement_pct);
                let _ = writeln!(log, "{}", table_line(c));
            }
            write_file(&out.join("summary.csv"), &summary)?;
            let imps: Vec<f64> = comps.iter().map(|c| c.report.improvement_pct).collect();
            let med = median(&imps).expect("non-empty seed range");
            let _ = writeln!(
                log,
                "median improvement over {} seeds: {:.2}%",
                comps.len(),
                med
            );
        }
    }
    Ok(())
}

pub fn cmd_table(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    log: &mut dyn Write,
) -> CliResult<()> {
    let series = load_csv(data)?;
    let exp = with_seed(cfg, seed);
    let (table, _) = run_table(&series, &exp)?;
    write_file(out, &table.to_csv())?;
    let _ = write!(log, "{}", table.to_text());
    Ok(())
}

pub fn cmd_export(
    cfg: &RunConfig,
    data: &DataArgs,
    model: &Path,
    out: &Path,
    log: &mut dyn Write,
) -> CliResult<()> {
    let series = pick_series(&data.data, data.link.as_deref())?;
    let params = MlpParams::load(model)?;
    let dims = params.dims();
    let layout = match dims.output {
        1 => TaskLayout::stl(dims.input)?,
        3 => TaskLayout::mtl(dims.input)?,
        k => {
            return Err(CliError::Usage(format!(
                "model has {k} outputs; expected 1 (stl) or 3 (mtl)"
            )))
        }
    };
    let trace = forecast_test(&params, &layout, &series, cfg.experiment.train_count)?;
    export_trace(&trace, out)?;
    let _ = writeln!(
        log,
        "{} test forecasts for {} written, RMSE {:.2}",
        trace.len(),
        series.link_id(),
        trace.rmse()?
    );
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let mut stdout = std::io::stdout();
    let mut sink = std::io::sink();
    let log: &mut dyn Write = if cli.quiet { &mut sink } else { &mut stdout };
    match &cli.command {
        Command::Gen { out, seed } => cmd_gen(&cfg, out, *seed, log),
        Command::Train {
            data,
            mode,
            out,
            seed,
        } => cmd_train(&cfg, data, *mode, out, *seed, log),
        Command::Compare {
            data,
            out,
            seed,
            seeds,
        } => cmd_compare(&cfg, data, out, *seed, *seeds, log),
        Command::Table { data, out, seed } => cmd_table(&cfg, data, out, *seed, log),
        Command::Export { data, model, out } => cmd_export(&cfg, data, model, out, log),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
