//! Experiment orchestration: problem × algorithm × seed grids with
//! convergence logging. Cell seeds derive from a stable hash of
//! `(base_seed, problem, algorithm, rep)`, so results are independent of
//! scheduling order and parallelism degree; output rows are written in a
//! canonical sort order, making repeated runs byte-identical.

use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::benchmarks::{make_problem, EvalCounter, ProblemSpec};
use crate::encoding::MultitaskProblem;
use crate::error::{Error, Result};
use crate::mfea::{run_mfea, MfeaConfig};
use crate::mfea_rl::{run_mfea_rl, AlgorithmMode, MfeaRlConfig};
use crate::seeding;
use crate::stats::{summarize, write_summary_csv};

/// One convergence sample: best objective after `evals` evaluations.
#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub evals: u64,
    pub best: f64,
}

/// Convergence trace of one task within one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub problem: String,
    pub task: usize,
    pub seed: u64,
    pub trace: Vec<TracePoint>,
    pub final_best: f64,
    pub wall_time_s: f64,
}

/// Network retraining outcome logged per round.
#[derive(Debug, Clone, Serialize)]
pub struct RetrainSummary {
    pub vdsr_loss_first: f64,
    pub vdsr_loss_last: f64,
    pub classifier_val_accuracy: Option<f64>,
    pub classifier_epochs: Option<usize>,
    pub classifier_skipped: bool,
    /// Objective evaluations consumed by training; must stay zero.
    pub eval_delta: u64,
}

/// One per-generation event for the JSON-lines log.
#[derive(Debug, Clone, Serialize)]
pub struct RunEvent {
    pub algorithm: String,
    pub problem: String,
    pub seed: u64,
    pub generation: u64,
    pub evals: u64,
    pub best: Vec<f64>,
    pub fallback_crossovers: u64,
    pub repairs: u64,
    pub retrain: Option<RetrainSummary>,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub events: Vec<RunEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mfea,
    MfeaRl(AlgorithmMode),
    RandomSearch,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mfea => "mfea",
            Algorithm::MfeaRl(AlgorithmMode::Full) => "mfea-rl:full",
            Algorithm::MfeaRl(AlgorithmMode::VdsrOnly) => "mfea-rl:vdsr",
            Algorithm::MfeaRl(AlgorithmMode::ResOnly) => "mfea-rl:res",
            Algorithm::RandomSearch => "random-search",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mfea" => Ok(Algorithm::Mfea),
            "mfea-rl:full" | "mfea-rl" => Ok(Algorithm::MfeaRl(AlgorithmMode::Full)),
            "mfea-rl:vdsr" => Ok(Algorithm::MfeaRl(AlgorithmMode::VdsrOnly)),
            "mfea-rl:res" => Ok(Algorithm::MfeaRl(AlgorithmMode::ResOnly)),
            "random-search" => Ok(Algorithm::RandomSearch),
            other => Err(Error::InvalidInput(format!("unknown algorithm: {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problems: Vec<ProblemSpec>,
    pub algorithms: Vec<Algorithm>,
    /// Runs per (problem, algorithm) cell.
    pub reps: usize,
    /// Explicit per-rep base seeds; length must equal `reps` when present.
    pub seed_list: Option<Vec<u64>>,
    pub base_seed: u64,
    pub max_evals: u64,
    pub out_dir: PathBuf,
    /// Forces sequential cell execution.
    pub deterministic: bool,
    pub mfea: MfeaConfig,
    pub rl: MfeaRlConfig,
}

impl ExperimentConfig {
    pub fn new(problems: Vec<ProblemSpec>, algorithms: Vec<Algorithm>, out_dir: PathBuf) -> Self {
        Self {
            problems,
            algorithms,
            reps: 30,
            seed_list: None,
            base_seed: 0,
            max_evals: 50_000,
            out_dir,
            deterministic: false,
            mfea: MfeaConfig::default(),
            rl: MfeaRlConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() {
            return Err(Error::Config("no problems configured".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms configured".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if let Some(seeds) = &self.seed_list {
            if seeds.len() != self.reps {
                return Err(Error::Config(format!(
                    "{} explicit seeds for {} reps",
                    seeds.len(),
                    self.reps
                )));
            }
        }
        if self.max_evals < self.mfea.population_size as u64 {
            return Err(Error::BudgetTooSmall {
                budget: self.max_evals,
                population: self.mfea.population_size,
            });
        }
        Ok(())
    }

    fn rep_base_seed(&self, rep: usize) -> u64 {
        self.seed_list.as_ref().map(|s| s[rep]).unwrap_or(self.base_seed)
    }

    /// Flat key=value echo of the resolved configuration.
    fn echo(&self) -> String {
        let problems: Vec<String> = self.problems.iter().map(|p| p.problem_id.clone()).collect();
        let algorithms: Vec<&str> = self.algorithms.iter().map(|a| a.name()).collect();
        let mut out = String::new();
        out.push_str(&format!("problem={}\n", problems.join(",")));
        out.push_str(&format!("algo={}\n", algorithms.join(",")));
        match &self.seed_list {
            Some(seeds) => {
                let s: Vec<String> = seeds.iter().map(u64::to_string).collect();
                out.push_str(&format!("seeds={}\n", s.join(",")));
            }
            None => out.push_str(&format!("seeds={}\n", self.reps)),
        }
        out.push_str(&format!("reps={}\n", self.reps));
        out.push_str(&format!("base-seed={}\n", self.base_seed));
        out.push_str(&format!("max-evals={}\n", self.max_evals));
        out.push_str(&format!("population={}\n", self.mfea.population_size));
        out.push_str(&format!("deterministic={}\n", self.deterministic));
        out
    }
}

/// Uniform random sampling in the unified space, batched like a generation:
/// each batch member is decoded and evaluated on one task, round-robin.
pub fn run_random_search(
    problem: &MultitaskProblem,
    batch_size: usize,
    max_evals: u64,
    seed: u64,
) -> Result<RunOutput> {
    if max_evals < batch_size as u64 {
        return Err(Error::BudgetTooSmall { budget: max_evals, population: batch_size });
    }
    let start = std::time::Instant::now();
    let n_tasks = problem.task_count();
    let d = problem.unified_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counter = EvalCounter::new();
    let mut best = vec![f64::INFINITY; n_tasks];
    let mut trace = Vec::new();
    let mut events = Vec::new();
    let mut generation = 0u64;

    while counter.count() + batch_size as u64 <= max_evals {
        for i in 0..batch_size {
            let task = &problem.tasks[i % n_tasks];
            let genome: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let x = crate::encoding::decode(&genome, task)?;
            let cost = crate::benchmarks::evaluate_task(task, &x, &counter)?;
            if cost < best[task.id] {
                best[task.id] = cost;
            }
        }
        trace.push((counter.count(), best.clone()));
        events.push(RunEvent {
            algorithm: Algorithm::RandomSearch.name().into(),
            problem: problem.problem_id.clone(),
            seed,
            generation,
            evals: counter.count(),
            best: best.clone(),
            fallback_crossovers: 0,
            repairs: 0,
            retrain: None,
        });
        generation += 1;
    }

    let records = crate::mfea::finalize_records(
        Algorithm::RandomSearch.name(),
        problem,
        seed,
        &trace,
        start.elapsed().as_secs_f64(),
    );
    Ok(RunOutput { records, events })
}

/// Runs a single (problem, algorithm, seed) cell.
pub fn run_cell(
    problem: &MultitaskProblem,
    algorithm: Algorithm,
    config: &ExperimentConfig,
    cell_seed: u64,
) -> Result<RunOutput> {
    match algorithm {
        Algorithm::Mfea => {
            let mut mfea = config.mfea.clone();
            mfea.max_evals = config.max_evals;
            run_mfea(problem, &mfea, cell_seed)
        }
        Algorithm::MfeaRl(mode) => {
            let mut rl = config.rl.clone();
            rl.base = config.mfea.clone();
            rl.base.max_evals = config.max_evals;
            rl.mode = mode;
            run_mfea_rl(problem, &rl, cell_seed)
        }
        Algorithm::RandomSearch => run_random_search(
            problem,
            config.mfea.population_size,
            config.max_evals,
            cell_seed,
        ),
    }
}

/// Executes the full grid and writes `convergence.csv`, `summary.csv`,
/// `events.jsonl` and `config.echo` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    // Probe writability before any run starts.
    std::fs::write(config.out_dir.join("config.echo"), config.echo())?;

    let problems: Vec<MultitaskProblem> =
        config.problems.iter().map(make_problem).collect::<Result<_>>()?;

    struct Cell {
        problem_idx: usize,
        algorithm: Algorithm,
        /// Stable hash feeding the cell RNG; differs per algorithm.
        rng_seed: u64,
        /// Replication seed shared across algorithms, used for pairing in
        /// reports.
        rep_seed: u64,
    }
    let mut cells = Vec::new();
    for (problem_idx, problem) in problems.iter().enumerate() {
        for &algorithm in &config.algorithms {
            for rep in 0..config.reps {
                let rng_seed = seeding::cell_seed(
                    config.rep_base_seed(rep),
                    &problem.problem_id,
                    algorithm.name(),
                    rep,
                );
                let rep_seed = config.seed_list.as_ref().map(|s| s[rep]).unwrap_or(rep as u64);
                cells.push(Cell { problem_idx, algorithm, rng_seed, rep_seed });
            }
        }
    }

    let run = |cell: &Cell| -> Result<RunOutput> {
        let mut output =
            run_cell(&problems[cell.problem_idx], cell.algorithm, config, cell.rng_seed)?;
        for record in &mut output.records {
            record.seed = cell.rep_seed;
        }
        for event in &mut output.events {
            event.seed = cell.rep_seed;
        }
        Ok(output)
    };
    let outputs: Vec<RunOutput> = if config.deterministic {
        cells.iter().map(run).collect::<Result<_>>()?
    } else {
        cells.par_iter().map(run).collect::<Result<_>>()?
    };

    let mut records: Vec<RunRecord> = Vec::new();
    let mut events: Vec<RunEvent> = Vec::new();
    for output in outputs {
        records.extend(output.records);
        events.extend(output.events);
    }
    // Canonical order regardless of scheduling.
    records.sort_by(|a, b| {
        (&a.problem, &a.algorithm, a.task, a.seed).cmp(&(&b.problem, &b.algorithm, b.task, b.seed))
    });
    events.sort_by(|a, b| {
        (&a.problem, &a.algorithm, a.seed, a.generation)
            .cmp(&(&b.problem, &b.algorithm, b.seed, b.generation))
    });

    write_convergence_csv(&records, config)?;
    write_events_jsonl(&events, config)?;
    let base = if config.algorithms.len() > 1 {
        Some(config.algorithms[0].name())
    } else {
        None
    };
    let table = summarize(&records, base)?;
    let file = std::fs::File::create(config.out_dir.join("summary.csv"))?;
    write_summary_csv(&table, std::io::BufWriter::new(file))?;

    Ok(records)
}

fn write_convergence_csv(records: &[RunRecord], config: &ExperimentConfig) -> Result<()> {
    let file = std::fs::File::create(config.out_dir.join("convergence.csv"))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "algorithm,problem,task,seed,evals,best_objective")?;
    for record in records {
        for point in &record.trace {
            writeln!(
                w,
                "{},{},{},{},{},{:e}",
                record.algorithm, record.problem, record.task, record.seed, point.evals, point.best
            )?;
        }
    }
    Ok(())
}

fn write_events_jsonl(events: &[RunEvent], config: &ExperimentConfig) -> Result<()> {
    let file = std::fs::File::create(config.out_dir.join("events.jsonl"))?;
    let mut w = std::io::BufWriter::new(file);
    for event in events {
        let line = serde_json::to_string(event)
            .map_err(|e| Error::Config(format!("event serialization: {e}")))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}
