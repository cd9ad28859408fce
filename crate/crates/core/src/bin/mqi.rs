use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mqi::config::{load_config, ExperimentConfig};
use mqi::evaluation::read_summary_csv;
use mqi::format::sig6;
use mqi::harness::{create_run_dir, run_experiment_in, ExperimentPlan, RunOptions, DEFAULT_SEED, SUMMARY_FILE};
use mqi::{derive_parameters, DerivedParams, Error, Scenario, StreamSeed};

#[derive(Parser)]
#[command(name = "mqi", version, about = "Multilevel quality indicator simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the parameters implied by a scenario.
    Derive {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate one dataset and write it as CSV.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run a Monte Carlo experiment.
    Run(RunArgs),
    /// Render a summary CSV to SVG figures.
    Plot {
        summary: PathBuf,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory in which the run directory is created.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long, env = "MQI_WORKERS")]
    workers: Option<usize>,
    /// Also write every replication's dataset and indicator tables.
    #[arg(long)]
    dump_datasets: bool,
    /// Continue an interrupted run in this directory instead of starting a new one.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn config(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(ExperimentConfig { scenario: Scenario::baseline(), sweep: None }),
    }
}

fn derived_block(s: &Scenario, d: &DerivedParams) -> String {
    let lines = [
        ("expected_patients", s.expected_patients()),
        ("lambda_w0", f64::from(d.max_volume_w0)),
        ("lambda_w1", f64::from(d.max_volume_w1)),
        ("zeta", d.patient_share_w1),
        ("En_patient", d.patient_mean_volume),
        ("sigma_n2", d.volume_var),
        ("delta", d.region_coef),
        ("sigma_v2", d.region_resid_var),
        ("gamma", d.volume_coef),
        ("sigma_u2", d.hospital_resid_var),
        ("chi", d.casemix_slope),
        ("sigma_eps2", d.casemix_resid_var),
        ("alpha", d.intercept),
        ("x_mean", d.covariate_mean),
        ("x_var", d.covariate_var),
    ];
    lines.iter().map(|(k, v)| format!("{k} = {}\n", sig6(*v))).collect()
}

fn write_out(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), Error> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| Error::io(p.display().to_string(), e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)
        }
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Derive { config: path } => {
            let c = config(path.as_deref())?;
            print!("{}", derived_block(&c.scenario, &derive_parameters(&c.scenario)?));
            if c.sweep.is_some() {
                eprintln!("note: the sweep section is ignored by derive");
            }
        }
        Command::Simulate { config: path, out, seed } => {
            let c = config(path.as_deref())?;
            let ds = mqi::dgp::generate_dataset(&c.scenario, StreamSeed::single(seed))?;
            write_out(out.as_deref(), |w| ds.write_csv(w))?;
        }
        Command::Run(args) => {
            let c = config(args.config.as_deref())?;
            let mut plan = ExperimentPlan::new(c);
            plan.master_seed = args.seed;
            if let Some(r) = args.reps {
                plan.replications = r;
            }
            if let Some(w) = args.workers {
                plan.workers = w;
            }
            mqi::harness::expand_plan(&plan)?;
            let dir = match args.resume {
                Some(d) => d,
                None => create_run_dir(&args.out, plan.master_seed)?,
            };
            let opts = RunOptions { dump_datasets: args.dump_datasets, checkpoint_every: 0, progress: true };
            let out = run_experiment_in(&plan, &dir, &opts)?;
            let failed =
                out.ledger.rows.iter().filter(|r| r.statuses.iter().any(|s| !s.is_some_and(|s| s.is_usable()))).count();
            println!("run directory: {}", dir.display());
            println!("summary: {}", dir.join(SUMMARY_FILE).display());
            println!("replications: {} ({} with at least one unusable fit)", out.ledger.rows.len(), failed);
        }
        Command::Plot { summary, out } => {
            let text = std::fs::read_to_string(&summary).map_err(|e| Error::io(summary.display().to_string(), e))?;
            let rows = read_summary_csv(&text)?;
            let files = mqi::plot::write_figures(&rows, &out)?;
            if files.is_empty() {
                eprintln!("warning: {} has no values to plot", summary.display());
            }
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
