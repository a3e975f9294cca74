//! `driftmle` command-line tool: simulate paths, estimate the drift, solve
//! weight functions and run the Monte Carlo tables.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftmle::continuous::{
    estimate_continuous, ht_closed_form_fbm, ht_neumann, ht_nystrom_direct, solve_weight, write_weight_csv,
    NystromOptions, WeightCache, WeightMethod,
};
use driftmle::discrete::{estimate_discrete, estimate_discrete_any_grid};
use driftmle::experiment::{self, run_discrete_consistency, run_table1, Table1Config};
use driftmle::sim::{read_path_csv, simulate_path, write_path_csv, SimConfig};
use driftmle::{Error, ErrorClass, Model, Result, Weight};

const OUT_DIR_VAR: &str = "DRIFTMLE_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "driftmle", version, about = "Drift estimation for Gaussian processes with stationary increments")]
struct Cli {
    /// Worker threads for Monte Carlo loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate X_t = theta t + B_t on a uniform grid and write it as CSV.
    Simulate {
        #[arg(long)]
        model: Model,
        #[arg(long)]
        theta: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate theta from a path CSV and print a JSON report.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: Model,
        #[arg(long, value_enum, default_value_t = SchemeArg::Discrete)]
        scheme: SchemeArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Directory for cached weight functions (continuous scheme).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve Gamma_T h = 1 and write the weight function as CSV.
    SolveHt {
        #[arg(long)]
        model: Model,
        #[arg(long = "T")]
        horizon: f64,
        /// closed-form, neumann or direct; picked from the model when omitted.
        #[arg(long)]
        method: Option<WeightMethod>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo means and variances of the continuous estimator, fBm plus Wiener.
    Table1 {
        #[arg(long = "H-list", value_delimiter = ',', default_values_t = [0.6, 0.7, 0.8, 0.9])]
        hurst_list: Vec<f64>,
        #[arg(long = "T-list", value_delimiter = ',', default_values_t = [1.0, 10.0])]
        horizon_list: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        theta: f64,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 1000)]
        steps_per_unit: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discrete estimator on nested prefixes of simulated paths.
    Consistency {
        #[arg(long)]
        model: Model,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long = "N-list", value_delimiter = ',', default_values_t = [10, 100, 1000])]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 2.0)]
        theta: f64,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Nyström cells per unit of T.
    #[arg(long, default_value_t = NystromOptions::default().cells_per_unit)]
    cells_per_unit: usize,
    #[arg(long, default_value_t = NystromOptions::default().max_cells)]
    max_cells: usize,
    #[arg(long, default_value_t = NystromOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = NystromOptions::default().max_iter)]
    max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> NystromOptions {
        NystromOptions {
            cells_per_unit: self.cells_per_unit,
            max_cells: self.max_cells,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SchemeArg {
    Discrete,
    Continuous,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

/// `--out` if given, else `name` inside `$DRIFTMLE_OUT_DIR`, else `name` in
/// the working directory.
fn default_out(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) => PathBuf::from(dir).join(name),
        None => PathBuf::from(name),
    })
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

fn emit_text(text: &str, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => create(&path)?.write_all(text.as_bytes())?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn solve(model: &Model, horizon: f64, method: Option<WeightMethod>, opts: &NystromOptions) -> Result<Weight> {
    let cells = opts.cells_for(horizon);
    match method {
        None => solve_weight(model, horizon, opts),
        Some(WeightMethod::Neumann) => ht_neumann(model, horizon, cells, opts.tol, opts.max_iter),
        Some(WeightMethod::Direct) => {
            model.require_continuous()?;
            ht_nystrom_direct(model, horizon, cells)
        }
        Some(WeightMethod::ClosedForm) => match *model {
            Model::Fbm { hurst } => ht_closed_form_fbm(hurst, horizon, cells),
            _ => Err(Error::UnsupportedModel(format!("{model}: the closed form exists only for pure fBm"))),
        },
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { model, theta, horizon, steps, seed, out } => {
            let path = simulate_path(&SimConfig { model, theta, horizon, n_steps: steps, seed })?;
            write_path_csv(&path, create(&default_out(out, "path.csv"))?)
        }
        Command::Estimate { input, model, scheme, solver, cache_dir, out } => {
            let path = read_path_csv::<f64, _>(File::open(&input)?)?;
            let report = match scheme {
                SchemeArg::Discrete if path.regular_step().is_some() => estimate_discrete(&path, &model)?,
                SchemeArg::Discrete => estimate_discrete_any_grid(&path, &model)?,
                SchemeArg::Continuous => {
                    model.require_continuous()?;
                    let opts = solver.options();
                    let horizon = path.horizon();
                    let ht = match cache_dir {
                        Some(dir) => WeightCache::new(dir).load_or_solve(
                            &model,
                            horizon,
                            opts.cells_for(horizon),
                            opts.tol,
                            opts.max_iter,
                        )?,
                        None => solve_weight(&model, horizon, &opts)?,
                    };
                    estimate_continuous(&path, &ht, &model)?
                }
            };
            emit_text(&(report.to_json() + "\n"), out)
        }
        Command::SolveHt { model, horizon, method, solver, out } => {
            let ht = solve(&model, horizon, method, &solver.options())?;
            write_weight_csv(&ht, create(&default_out(out, "ht.csv"))?)?;
            eprintln!(
                "{} on [0, {horizon}]: {} cells, variance {:.6e}, residual {:.2e}",
                ht.method,
                ht.cells(),
                ht.variance(),
                ht.residual
            );
            Ok(())
        }
        Command::Table1 { hurst_list, horizon_list, theta, reps, steps_per_unit, seed, solver, format, out } => {
            let cfg = Table1Config {
                hurst_list,
                horizon_list,
                theta,
                n_reps: reps,
                steps_per_unit,
                seed,
                nystrom: solver.options(),
            };
            let rows = run_table1(&cfg)?;
            match format {
                Format::Csv => experiment::write_table1_csv(&rows, create(&default_out(out, "table1.csv"))?),
                Format::Json => emit_text(&(experiment::to_json(&rows) + "\n"), Some(default_out(out, "table1.json"))),
            }
        }
        Command::Consistency { model, h, n_list, theta, reps, seed, format, out } => {
            let rows = run_discrete_consistency(&model, h, &n_list, theta, reps, seed)?;
            match format {
                Format::Csv => {
                    experiment::write_consistency_csv(&rows, create(&default_out(out, "consistency.csv"))?)
                }
                Format::Json => {
                    emit_text(&(experiment::to_json(&rows) + "\n"), Some(default_out(out, "consistency.json")))
                }
            }
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Validation => 2,
        ErrorClass::Numeric => 3,
        ErrorClass::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
