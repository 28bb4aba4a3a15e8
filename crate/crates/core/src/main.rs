use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pads::config::{RunConfig, SamplerKind};
use pads::runner::{self, PlotData};
use pads::trainer;
use pads::Error;

#[derive(Parser, Debug)]
#[command(
    name = "pads",
    version,
    about = "Adaptive negative sampling for deep metric learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a key after the file is read, e.g. `--set pmf.k=30`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run seed; shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> pads::Result<RunConfig> {
        let mut config = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let mut problems = match config.apply_overrides(&self.overrides) {
            Err(Error::Config(p)) => p,
            Err(e) => return Err(e),
            Ok(()) => Vec::new(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        problems.extend(config.validate());
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(problems))
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| format!("cannot parse {p:?}")))
        .collect()
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one configuration and write its run directory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short, default_value = "runs/run")]
        out: PathBuf,
    },
    /// Run several samplers over several seeds on identical data.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated sampler kinds.
        #[arg(long, default_value = "random,semihard,distweighted,pads")]
        samplers: String,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        #[arg(long, short, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Vary one key over a list of values.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        key: String,
        /// Comma-separated values; use `;` to separate list-valued entries.
        #[arg(long)]
        values: String,
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long, short, default_value = "runs/sweep")]
        out: PathBuf,
    },
    /// Write the configured synthetic dataset as CSV.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Export the histogram progression of a run as long-format CSV.
    PlotData {
        run_dir: PathBuf,
        /// Destination file; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> pads::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(command: Command) -> pads::Result<()> {
    match command {
        Command::Run { config, out } => {
            let config = config.resolve()?;
            let summary = trainer::train(&config, &out)?;
            let f = summary.final_snapshot;
            println!(
                "{} episodes  R@1 {:.4}  R@2 {:.4}  R@4 {:.4}  NMI {:.4}  -> {}",
                summary.episodes,
                f.recall[0],
                f.recall[1],
                f.recall[2],
                f.nmi,
                summary.run_dir.display()
            );
        }
        Command::Compare {
            config,
            samplers,
            seeds,
            out,
        } => {
            let base = config.resolve()?;
            let kinds: Vec<SamplerKind> = samplers
                .split(',')
                .map(|s| SamplerKind::parse(s.trim()))
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Config(vec![e]))?;
            let seeds: Vec<u64> = parse_list(&seeds).map_err(|e| Error::Config(vec![format!("--seeds: {e}")]))?;
            let table = runner::compare(&base, &kinds, &seeds, &out)?;
            print!("{}", table.to_csv("sampler"));
        }
        Command::Sweep {
            config,
            key,
            values,
            seeds,
            out,
        } => {
            let base = config.resolve()?;
            let sep = if values.contains(';') { ';' } else { ',' };
            let values: Vec<String> = values.split(sep).map(|v| v.trim().to_string()).collect();
            let seeds: Vec<u64> = parse_list(&seeds).map_err(|e| Error::Config(vec![format!("--seeds: {e}")]))?;
            let table = runner::sweep(&base, &key, &values, &seeds, &out)?;
            print!("{}", table.to_csv(&key));
        }
        Command::GenData { config, out } => {
            let mut config = config.clone();
            // The seed flag picks the dataset here, not the run.
            let data_seed = config.seed.take();
            let mut resolved = config.resolve()?;
            if let Some(s) = data_seed {
                resolved.data_seed = s;
            }
            let ds = runner::gen_data(&resolved, &out)?;
            println!("{} rows, {} classes -> {}", ds.len(), ds.num_classes(), out.display());
        }
        Command::PlotData { run_dir, out } => match runner::plot_data(&run_dir)? {
            PlotData::NoPmfStream => println!("{}", runner::NO_PMF_STREAM),
            PlotData::Rows(rows) => write_or_print(out.as_deref(), &runner::progression_csv(&rows))?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
