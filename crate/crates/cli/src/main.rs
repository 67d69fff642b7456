//! `emt` — experiment runner for the evolutionary multitasking workspace.
//!
//! `emt run` executes a problem × algorithm × seed grid and writes
//! `convergence.csv`, `summary.csv`, `events.jsonl` and `config.echo` into
//! the output directory. `emt jl` emits a random-projection distortion
//! report as CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use emt_core::benchmarks::{ProblemSpec, Suite};
use emt_core::harness::{run_experiment, Algorithm, ExperimentConfig};
use emt_core::mfea_rl::MfeaRlConfig;
use emt_core::projection::{distortion_report, gaussian_projection, write_distortion_csv, JlConfig};
use emt_core::stats::{render_table, summarize};

#[derive(Parser)]
#[command(name = "emt", version, about = "Evolutionary multitasking experiment runner")]
struct CliArgs {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a problem x algorithm x seed experiment grid.
    Run(RunArgs),
    /// Verify random-projection distance preservation and write a CSV report.
    Jl(JlArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct RunArgs {
    /// Problems: `cec17:P1[,P2,...]` or `custom:<file.json>`.
    #[arg(long)]
    problem: Option<String>,

    /// Comma-separated algorithms: mfea, mfea-rl:full, mfea-rl:vdsr,
    /// mfea-rl:res, random-search. The first listed is the comparison base.
    #[arg(long)]
    algo: Option<String>,

    /// Either a replication count (`--seeds 5`) or an explicit seed list
    /// (`--seeds 3,17,99`).
    #[arg(long)]
    seeds: Option<String>,

    /// Objective-evaluation budget per run.
    #[arg(long = "max-evals")]
    max_evals: Option<u64>,

    /// Replications per (problem, algorithm) cell.
    #[arg(long)]
    reps: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Force sequential, single-threaded execution.
    #[arg(long)]
    deterministic: bool,

    /// Directory with `<problem>_T<k>_shift.txt` / `_rot.txt` instance files.
    #[arg(long = "data-dir")]
    data_dir: Option<PathBuf>,

    /// Flat key=value config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Per-task dimensions, e.g. `50` or `50,25`.
    #[arg(long)]
    dims: Option<String>,

    /// Population size (default 100).
    #[arg(long)]
    population: Option<usize>,

    /// Seed for synthetic shift/rotation instance generation.
    #[arg(long = "instance-seed")]
    instance_seed: Option<u64>,

    /// Use small desk-scale networks instead of the full-size defaults.
    #[arg(long = "desk-nets")]
    desk_nets: bool,
}

#[derive(Args, Debug)]
struct JlArgs {
    /// Number of points.
    #[arg(long, default_value_t = 100)]
    n: usize,

    /// Ambient dimension (D*D for flattened composed matrices).
    #[arg(long, default_value_t = 2500)]
    ambient: usize,

    /// Distortion tolerance in (0,1).
    #[arg(long, default_value_t = 0.5)]
    eps: f64,

    /// Target dimension; defaults to ceil(8 ln n / eps^2).
    #[arg(long)]
    k: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Values read from a `key=value` config file; flags take precedence.
#[derive(Debug, Default)]
struct FileValues {
    problem: Option<String>,
    algo: Option<String>,
    seeds: Option<String>,
    max_evals: Option<u64>,
    reps: Option<usize>,
    out: Option<PathBuf>,
    deterministic: Option<bool>,
    data_dir: Option<PathBuf>,
    dims: Option<String>,
    population: Option<usize>,
    instance_seed: Option<u64>,
    desk_nets: Option<bool>,
}

fn parse_config_file(path: &PathBuf) -> anyhow::Result<FileValues> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut values = FileValues::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key=value", path.display(), lineno + 1))?;
        let key = key.trim();
        let value = value.trim().to_string();
        let fail = |what: &str| format!("{}:{}: bad {what}", path.display(), lineno + 1);
        match key {
            "problem" => values.problem = Some(value),
            "algo" => values.algo = Some(value),
            "seeds" => values.seeds = Some(value),
            "max-evals" => values.max_evals = Some(value.parse().with_context(|| fail("integer"))?),
            "reps" => values.reps = Some(value.parse().with_context(|| fail("integer"))?),
            "out" => values.out = Some(PathBuf::from(value)),
            "deterministic" => {
                values.deterministic = Some(value.parse().with_context(|| fail("bool"))?)
            }
            "data-dir" => values.data_dir = Some(PathBuf::from(value)),
            "dims" => values.dims = Some(value),
            "population" => values.population = Some(value.parse().with_context(|| fail("integer"))?),
            "instance-seed" => {
                values.instance_seed = Some(value.parse().with_context(|| fail("integer"))?)
            }
            "desk-nets" => values.desk_nets = Some(value.parse().with_context(|| fail("bool"))?),
            other => anyhow::bail!("{}:{}: unknown key '{other}'", path.display(), lineno + 1),
        }
    }
    Ok(values)
}

fn parse_dims(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .map(|part| part.trim().parse::<usize>().context("bad dimension"))
        .collect()
}

/// Resolves flags plus optional config file into an experiment config.
fn build_experiment_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => FileValues::default(),
    };

    let problem = args
        .problem
        .clone()
        .or(file.problem)
        .context("missing --problem (cec17:P1[,P2,...] or custom:<file>)")?;
    let algo = args
        .algo
        .clone()
        .or(file.algo)
        .unwrap_or_else(|| "mfea-rl:full,mfea".to_string());
    let seeds = args.seeds.clone().or(file.seeds);
    let max_evals = args.max_evals.or(file.max_evals).unwrap_or(50_000);
    let out = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("results"));
    let deterministic = args.deterministic || file.deterministic.unwrap_or(false);
    let data_dir = args.data_dir.clone().or(file.data_dir);
    let dims = match args.dims.clone().or(file.dims) {
        Some(text) => Some(parse_dims(&text)?),
        None => None,
    };
    let population = args.population.or(file.population);
    let instance_seed = args.instance_seed.or(file.instance_seed).unwrap_or(0);
    let desk_nets = args.desk_nets || file.desk_nets.unwrap_or(false);

    let problems = parse_problem_list(&problem, instance_seed, dims, data_dir)?;
    let algorithms: Vec<Algorithm> = algo
        .split(',')
        .map(|name| Algorithm::parse(name.trim()).map_err(anyhow::Error::from))
        .collect::<anyhow::Result<_>>()?;

    let mut config = ExperimentConfig::new(problems, algorithms, out);
    config.max_evals = max_evals;
    config.deterministic = deterministic;
    if desk_nets {
        config.rl = MfeaRlConfig::desk_scale();
    }
    if let Some(n) = population {
        config.mfea.population_size = n;
    }

    // Seeds: a bare count sets the replication count; a comma list pins
    // explicit seeds. An explicit --reps must agree when both are given.
    let mut reps = args.reps.or(file.reps);
    if let Some(text) = seeds {
        if text.contains(',') {
            let list: Vec<u64> = text
                .split(',')
                .map(|part| part.trim().parse::<u64>().context("bad seed"))
                .collect::<anyhow::Result<_>>()?;
            if let Some(r) = reps {
                anyhow::ensure!(
                    r == list.len(),
                    "--reps {} conflicts with {} explicit seeds",
                    r,
                    list.len()
                );
            }
            reps = Some(list.len());
            config.seed_list = Some(list);
        } else {
            let count: usize = text.trim().parse().context("bad --seeds value")?;
            if let Some(r) = reps {
                anyhow::ensure!(r == count, "--reps {r} conflicts with --seeds {count}");
            }
            reps = Some(count);
        }
    }
    config.reps = reps.unwrap_or(30);
    Ok(config)
}

fn parse_problem_list(
    text: &str,
    instance_seed: u64,
    dims: Option<Vec<usize>>,
    data_dir: Option<PathBuf>,
) -> anyhow::Result<Vec<ProblemSpec>> {
    if let Some(ids) = text.strip_prefix("cec17:") {
        anyhow::ensure!(!ids.trim().is_empty(), "empty cec17 problem list");
        Ok(ids
            .split(',')
            .map(|id| {
                let mut spec = ProblemSpec::cec17(id.trim(), instance_seed);
                spec.dims = dims.clone();
                spec.data_dir = data_dir.clone();
                spec
            })
            .collect())
    } else if let Some(path) = text.strip_prefix("custom:") {
        Ok(vec![ProblemSpec {
            suite: Suite::Custom,
            problem_id: path.to_string(),
            dims,
            seed: instance_seed,
            data_dir,
            custom_path: Some(PathBuf::from(path)),
        }])
    } else {
        anyhow::bail!("--problem must start with 'cec17:' or 'custom:', got '{text}'")
    }
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let config = build_experiment_config(args)?;
    let records = run_experiment(&config)?;
    let base = if config.algorithms.len() > 1 {
        Some(config.algorithms[0].name())
    } else {
        None
    };
    let table = summarize(&records, base)?;
    print!("{}", render_table(&table));
    println!("outputs written to {}", config.out_dir.display());
    Ok(())
}

fn cmd_jl(args: &JlArgs) -> anyhow::Result<()> {
    let k = args.k.unwrap_or_else(|| JlConfig::jl_dimension(args.n, args.eps));
    let config = JlConfig { n: args.n, ambient_dim: args.ambient, k, epsilon: args.eps, trials: 1 };
    config.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let points: Vec<Vec<f64>> = (0..args.n)
        .map(|_| {
            (0..args.ambient)
                .map(|_| rand_distr::StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let projected = gaussian_projection(&points, k, &mut rng);
    let report = distortion_report(&points, &projected, args.eps)?;

    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_distortion_csv(&report, std::io::BufWriter::new(file))?;
    println!(
        "n={} ambient={} k={} eps={}: {:.2}% of pairs within tolerance, max deviation {:.4}",
        args.n,
        args.ambient,
        k,
        args.eps,
        report.fraction_within_epsilon * 100.0,
        report.max_deviation
    );
    println!("report written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = CliArgs::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Jl(args) => cmd_jl(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(argv: &[&str]) -> RunArgs {
        let mut full = vec!["emt", "run"];
        full.extend_from_slice(argv);
        match CliArgs::try_parse_from(full).unwrap().command {
            Command::Run(args) => args,
            _ => panic!("expected run subcommand"),
        }
    }

    #[test]
    fn seeds_count_sets_reps() {
        let args = run_args(&["--problem", "cec17:P1", "--algo", "mfea", "--seeds", "5"]);
        let config = build_experiment_config(&args).unwrap();
        assert_eq!(config.reps, 5);
        assert!(config.seed_list.is_none());
        assert_eq!(config.problems.len(), 1);
        assert_eq!(config.algorithms, vec![Algorithm::Mfea]);
    }

    #[test]
    fn seed_list_is_kept_verbatim() {
        let args = run_args(&["--problem", "cec17:P1", "--seeds", "3,17,99"]);
        let config = build_experiment_config(&args).unwrap();
        assert_eq!(config.reps, 3);
        assert_eq!(config.seed_list, Some(vec![3, 17, 99]));
    }

    #[test]
    fn missing_problem_is_a_usage_error() {
        let args = run_args(&["--algo", "mfea"]);
        assert!(build_experiment_config(&args).is_err());
    }

    #[test]
    fn standard_protocol_defaults() {
        let args = run_args(&["--problem", "cec17:P1", "--reps", "30", "--max-evals", "50000"]);
        let config = build_experiment_config(&args).unwrap();
        assert_eq!(config.reps, 30);
        assert_eq!(config.max_evals, 50_000);
        assert_eq!(config.mfea.population_size, 100);
    }

    #[test]
    fn unknown_flag_is_rejected_by_the_parser() {
        let result = CliArgs::try_parse_from(["emt", "run", "--problem", "cec17:P1", "--bogus"]);
        assert!(result.is_err());
    }

    #[test]
    fn unknown_algorithm_is_rejected() {
        let args = run_args(&["--problem", "cec17:P1", "--algo", "gradient-descent"]);
        assert!(build_experiment_config(&args).is_err());
    }

    #[test]
    fn config_file_fills_gaps_and_flags_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(
            &path,
            "# experiment defaults\nproblem=cec17:P2\nalgo=mfea\nmax-evals=1000\nreps=4\n",
        )
        .unwrap();
        let args = run_args(&["--config", path.to_str().unwrap(), "--max-evals", "2000"]);
        let config = build_experiment_config(&args).unwrap();
        assert_eq!(config.problems[0].problem_id, "P2");
        assert_eq!(config.max_evals, 2000); // flag wins
        assert_eq!(config.reps, 4); // file value survives
    }

    #[test]
    fn conflicting_reps_and_seeds_error() {
        let args = run_args(&["--problem", "cec17:P1", "--seeds", "5", "--reps", "7"]);
        assert!(build_experiment_config(&args).is_err());
    }

    #[test]
    fn dims_parse_into_problem_specs() {
        let args = run_args(&["--problem", "cec17:P1,P4", "--dims", "10,10"]);
        let config = build_experiment_config(&args).unwrap();
        assert_eq!(config.problems.len(), 2);
        assert_eq!(config.problems[1].dims, Some(vec![10, 10]));
    }
}
