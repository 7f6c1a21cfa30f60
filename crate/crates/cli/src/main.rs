use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use robust_choice::decision_problems::{solve, value_comparative_statics};
use robust_choice::divergences::{conjugate_self_test, Penalty};
use robust_choice::document::{self, parse_lambda};
use robust_choice::preferences::dominance;
use robust_choice::robust_solver::{criterion_value, duality_gap_suite, lambda_sweep};
use robust_choice::{DecisionProblem, Error, Lambda, PhiFunction};

const THREADS_VAR: &str = "ROBUST_CHOICE_THREADS";

#[derive(Parser)]
#[command(
    name = "robust-choice",
    version,
    about = "Misspecification-robust evaluation of acts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Criterion value, binding model and worst-case model for each act.
    Evaluate {
        problem: PathBuf,
        /// Evaluate only this act.
        #[arg(long)]
        act: Option<String>,
        /// Override the document's lambda (a number or "inf").
        #[arg(long)]
        lambda: Option<String>,
    },
    /// Model-by-model comparison of two acts.
    Dominance {
        problem: PathBuf,
        #[arg(long)]
        f: String,
        #[arg(long)]
        g: String,
    },
    /// Optimal, weakly admissible and admissible acts.
    Solve { problem: PathBuf },
    /// Criterion value along a list of lambdas, ending with the max-min row.
    Sweep {
        problem: PathBuf,
        #[arg(long)]
        act: String,
        /// Comma-separated ascending lambdas, e.g. 0.1,1,10,inf.
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<String>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Value of the problem against the value with a larger structured set.
    Compare { problem: PathBuf, superset: PathBuf },
    /// Conjugate self-tests and the duality-gap suite.
    Selftest {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        resolution: f64,
    },
}

enum Failure {
    Input(String, Option<Error>),
    Library(Error),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Library(err)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Library(Error::Convergence(_)) => 3,
            _ => 2,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Failure::Input(message, _) => json!({ "error": { "kind": "input", "message": message } }),
            Failure::Library(err) => {
                let (kind, pointer) = match err {
                    Error::Dimension { .. } => ("dimension", None),
                    Error::Domain(_) => ("domain", None),
                    Error::Convergence(_) => ("convergence", None),
                    Error::Parse { pointer, .. } => ("parse", Some(pointer.clone())),
                    Error::Validation { pointer, .. } => ("validation", Some(pointer.clone())),
                };
                json!({ "error": { "kind": kind, "pointer": pointer, "message": err.to_string() } })
            }
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Input(message, Some(err)) => format!("{message}: {err}"),
            Failure::Input(message, None) => message.clone(),
            Failure::Library(err) => err.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load(path: &Path) -> CliResult<DecisionProblem> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display()), None))?;
    document::parse_problem(&text).map_err(|e| match e {
        Error::Parse { .. } | Error::Validation { .. } => Failure::Library(e),
        other => Failure::Input(format!("invalid problem {}", path.display()), Some(other)),
    })
}

fn act_named<'a>(problem: &'a DecisionProblem, name: &str) -> CliResult<&'a robust_choice::Act> {
    problem
        .act(name)
        .ok_or_else(|| Failure::Input(format!("no act named `{name}`"), None))
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Input(format!("{THREADS_VAR} must be a positive integer, got `{raw}`"), None))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Input(format!("cannot configure thread pool: {e}"), None))
}

/// Returns the JSON to print and whether the command succeeded.
fn run(command: Command) -> CliResult<(Option<Value>, bool)> {
    match command {
        Command::Evaluate { problem, act, lambda } => {
            let mut problem = load(&problem)?;
            if let Some(lambda) = lambda {
                let lambda = parse_lambda(&lambda)?;
                problem = problem.with_spec(problem.spec().with_lambda(lambda)?);
            }
            let acts: Vec<_> = match &act {
                Some(name) => vec![act_named(&problem, name)?],
                None => problem.acts().iter().collect(),
            };
            let results = acts
                .into_iter()
                .map(|a| Ok((a, criterion_value(a, problem.models(), problem.spec())?)))
                .collect::<CliResult<Vec<_>>>()?;
            Ok((Some(document::evaluations_json(&problem, &results)), true))
        }
        Command::Dominance { problem, f, g } => {
            let problem = load(&problem)?;
            let (fa, ga) = (act_named(&problem, &f)?, act_named(&problem, &g)?);
            let verdict = dominance(fa, ga, problem.models(), problem.spec())?;
            Ok((Some(document::dominance_json(&problem, &f, &g, &verdict)), true))
        }
        Command::Solve { problem } => {
            let problem = load(&problem)?;
            let report = solve(&problem)?;
            Ok((Some(document::report_json(&problem, &report)), true))
        }
        Command::Sweep {
            problem,
            act,
            lambdas,
            csv,
        } => {
            let problem = load(&problem)?;
            let act = act_named(&problem, &act)?;
            let Penalty::Phi(phi) = problem.spec().penalty() else {
                return Err(Failure::Input(
                    "sweep needs a relative_entropy or gini divergence".into(),
                    None,
                ));
            };
            let mut lambdas = lambdas.iter().map(|l| parse_lambda(l)).collect::<Result<Vec<_>, _>>()?;
            if lambdas.last() != Some(&Lambda::Infinite) {
                lambdas.push(Lambda::Infinite);
            }
            let rows = lambda_sweep(act, problem.models(), phi, &lambdas)?;
            let text = document::sweep_csv(&rows);
            match csv {
                Some(path) => fs::write(&path, text)
                    .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display()), None))?,
                None => print!("{text}"),
            }
            Ok((None, true))
        }
        Command::Compare { problem, superset } => {
            let problem = load(&problem)?;
            let superset = load(&superset)?;
            let statics = value_comparative_statics(&problem, superset.models())?;
            Ok((Some(document::statics_json(&statics)), true))
        }
        Command::Selftest {
            instances,
            seed,
            resolution,
        } => {
            let conjugates = [PhiFunction::relative_entropy(), PhiFunction::gini()]
                .iter()
                .map(|phi| conjugate_self_test(phi, &phi.default_self_test_grid()))
                .collect::<Result<Vec<_>, _>>()?;
            let duality = duality_gap_suite(instances, seed, resolution)?;
            let passed = conjugates.iter().all(|c| c.passed) && duality.passed;
            let out = json!({
                "passed": passed,
                "conjugate_self_tests": conjugates.iter().map(|c| json!({
                    "phi": c.phi,
                    "points": c.points,
                    "max_abs_deviation": document::number(c.max_abs_deviation),
                    "worst_y": document::number(c.worst_y),
                    "passed": c.passed,
                })).collect::<Vec<_>>(),
                "duality_gap": {
                    "instances": duality.instances,
                    "comparisons": duality.comparisons,
                    "max_gap": document::number(duality.max_gap),
                    "tolerance": document::number(duality.tolerance),
                    "passed": duality.passed,
                },
            });
            Ok((Some(out), passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok((json, passed)) => {
            if let Some(json) = json {
                println!("{}", serde_json::to_string_pretty(&json).expect("values serialize"));
            }
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            println!("{}", failure.to_json());
            ExitCode::from(failure.exit_code())
        }
    }
}
