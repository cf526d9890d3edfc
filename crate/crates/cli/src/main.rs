use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adjscore_core::betabin::{BetaBinLinks, BetaBinModel};
use adjscore_core::betareg::{BetaRegLinks, BetaRegModel};
use adjscore_core::data::{load_betabin, load_betareg, ColumnSpec, Table};
use adjscore_core::links::Link;
use adjscore_core::report::FitReport;
use adjscore_core::simulation::{run_study, write_dump, SimulationConfig};
use adjscore_core::{selftest, solve, Error, Method, ModelContract, SolverOptions};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "adjscore",
    version,
    about = "Maximum likelihood and bias-reduced fits of beta and beta-binomial regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV file.
    Fit(FitArgs),
    /// Run a Monte Carlo study described by a config file.
    Simulate(SimulateArgs),
    /// Run the embedded oracle checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Betareg,
    Betabinom,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ml,
    MeanBr,
    MedianBr,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Ml => Method::Ml,
            MethodArg::MeanBr => Method::MeanBr,
            MethodArg::MedianBr => Method::MedianBr,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "median-br")]
    method: MethodArg,
    #[arg(long)]
    data: PathBuf,
    /// Response column (beta regression).
    #[arg(long)]
    response: Option<String>,
    /// Successes column (beta-binomial).
    #[arg(long)]
    successes: Option<String>,
    /// Trials column (beta-binomial).
    #[arg(long)]
    trials: Option<String>,
    /// Drop rows with more trials than this.
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    mean_cols: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    prec_cols: Vec<String>,
    #[arg(long)]
    no_mean_intercept: bool,
    #[arg(long)]
    no_prec_intercept: bool,
    #[arg(long)]
    link_mean: Option<String>,
    #[arg(long)]
    link_prec: Option<String>,
    /// JSON output file; without it the JSON goes to stdout and the table to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Report JSON file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replication CSV dump.
    #[arg(long)]
    dump: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Selftest => Ok(cmd_selftest()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn parse_link(name: &Option<String>, default: Link) -> Result<Link, Error> {
    name.as_deref().map(Link::from_name).unwrap_or(Ok(default))
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn cmd_fit(args: FitArgs) -> Result<u8, Error> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::Argument(format!(
            "--level must lie in (0, 1), got {}",
            args.level
        )));
    }
    let table = Table::read(&args.data)?;
    let mut spec = ColumnSpec {
        response: String::new(),
        trials: args.trials.clone(),
        mean_cols: args.mean_cols.clone(),
        prec_cols: args.prec_cols.clone(),
        mean_intercept: !args.no_mean_intercept,
        prec_intercept: !args.no_prec_intercept,
        max_trials: args.max_trials,
    };
    let (model, n, names, name): (Box<dyn ModelContract>, usize, Vec<String>, &str) = match args
        .model
    {
        ModelArg::Betareg => {
            spec.response = args
                .response
                .clone()
                .ok_or_else(|| Error::Argument("--response is required for betareg".into()))?;
            let links = BetaRegLinks::new(
                parse_link(&args.link_mean, Link::Logit)?,
                parse_link(&args.link_prec, Link::Log)?,
            )?;
            let (data, names) = load_betareg(&table, &spec)?;
            let n = data.n();
            (
                Box::new(BetaRegModel::new(data, links)),
                n,
                names,
                "betareg",
            )
        }
        ModelArg::Betabinom => {
            spec.response = args
                .successes
                .clone()
                .or(args.response.clone())
                .ok_or_else(|| Error::Argument("--successes is required for betabinom".into()))?;
            if spec.trials.is_none() {
                return Err(Error::Argument("--trials is required for betabinom".into()));
            }
            let links = BetaBinLinks::new(
                parse_link(&args.link_mean, Link::Logit)?,
                parse_link(&args.link_prec, Link::Logit)?,
            )?;
            let (data, names) = load_betabin(&table, &spec)?;
            let n = data.n();
            (
                Box::new(BetaBinModel::new(data, links)),
                n,
                names,
                "betabinom",
            )
        }
    };
    let opts = SolverOptions {
        max_iterations: args.max_iter,
        tolerance: args.tol,
        ..SolverOptions::for_method(args.method.into())
    };
    let fit = solve(model.as_ref(), &opts)?;
    let report = FitReport::new(name, n, names, model.as_ref(), &fit, args.level)?;
    match &args.out {
        Some(path) => {
            write_text(path, &(report.to_json() + "\n"))?;
            print!("{}", report.table());
        }
        None => {
            println!("{}", report.to_json());
            eprint!("{}", report.table());
        }
    }
    if fit.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: the solver did not converge; the last iterate was written");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Error> {
    let mut cfg = SimulationConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    let out = run_study(&cfg)?;
    let json = out.report.to_json() + "\n";
    match &args.out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    if let Some(path) = &args.dump {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        write_dump(&out.records, BufWriter::new(file))?;
    }
    for m in &out.report.methods {
        eprintln!(
            "{}: {} converged, {} not converged, {} diverging, {} failed",
            m.method, m.converged, m.non_converged, m.diverged, m.failed
        );
    }
    Ok(EXIT_OK)
}

fn cmd_selftest() -> u8 {
    let mut all = true;
    for g in selftest::run_all() {
        let status = if g.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<22} {:>5} checks, worst error/tolerance {:.3e}",
            g.name, g.checks, g.worst_ratio
        );
        if let Some(msg) = &g.failure {
            println!("     {msg}");
        }
        all &= g.passed();
    }
    if all {
        EXIT_OK
    } else {
        EXIT_INPUT
    }
}
