//! Canonical multifactorial evolutionary algorithm: assortative mating with
//! simulated binary crossover, polynomial mutation, vertical cultural
//! transmission of skill factors, and elitist selection by scalar fitness.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::benchmarks::{evaluate_task, EvalCounter};
use crate::encoding::{decode, update_ranks_and_fitness, Individual, MultitaskProblem, Population};
use crate::error::{Error, Result};
use crate::harness::{RunEvent, RunOutput, RunRecord, TracePoint};

#[derive(Debug, Clone)]
pub struct MfeaConfig {
    /// Population size; must be even.
    pub population_size: usize,
    /// Random mating probability for cross-task crossover.
    pub rmp: f64,
    pub sbx_eta: f64,
    pub mutation_eta: f64,
    /// Per-gene mutation probability; defaults to `1 / D_max` when `None`.
    pub mutation_rate: Option<f64>,
    pub max_evals: u64,
}

impl Default for MfeaConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            rmp: 0.3,
            sbx_eta: 2.0,
            mutation_eta: 5.0,
            mutation_rate: None,
            max_evals: 50_000,
        }
    }
}

impl MfeaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.population_size % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "population size must be even and positive, got {}",
                self.population_size
            )));
        }
        if !(0.0..=1.0).contains(&self.rmp) {
            return Err(Error::InvalidInput(format!("rmp must lie in [0,1], got {}", self.rmp)));
        }
        if self.max_evals < self.population_size as u64 {
            return Err(Error::BudgetTooSmall {
                budget: self.max_evals,
                population: self.population_size,
            });
        }
        Ok(())
    }

    pub fn gene_mutation_rate(&self, unified_dim: usize) -> f64 {
        self.mutation_rate.unwrap_or(1.0 / unified_dim as f64)
    }
}

/// Outcome of the assortative-mating gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatingDecision {
    Crossover,
    MutateEach,
}

/// Parents crossover when they share a skill factor or a uniform draw falls
/// below `rmp`; otherwise each is mutated on its own.
pub fn assortative_mating<R: Rng>(
    p1: &Individual,
    p2: &Individual,
    rmp: f64,
    rng: &mut R,
) -> MatingDecision {
    if p1.skill_factor == p2.skill_factor || rng.random::<f64>() < rmp {
        MatingDecision::Crossover
    } else {
        MatingDecision::MutateEach
    }
}

/// Spread factor from the SBX inverse CDF with distribution index `eta`.
fn sbx_beta(u: f64, eta: f64) -> f64 {
    if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    }
}

/// Simulated binary crossover before clamping. Computed in mean/spread form,
/// `0.5 (p1 + p2) ± 0.5 beta (p1 - p2)`, so zero-distance parents reproduce
/// exactly and the per-gene sum `c1 + c2 = p1 + p2` is conserved up to
/// machine rounding.
pub fn sbx_crossover_raw<R: Rng>(
    p1: &[f64],
    p2: &[f64],
    eta: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(p1.len(), p2.len());
    let mut c1 = Vec::with_capacity(p1.len());
    let mut c2 = Vec::with_capacity(p2.len());
    for (&x1, &x2) in p1.iter().zip(p2) {
        let beta = sbx_beta(rng.random::<f64>(), eta);
        let mean = 0.5 * (x1 + x2);
        let half_spread = 0.5 * beta * (x1 - x2);
        c1.push(mean + half_spread);
        c2.push(mean - half_spread);
    }
    (c1, c2)
}

/// SBX with children clamped to the unified space `[0,1]`.
pub fn sbx_crossover<R: Rng>(
    p1: &[f64],
    p2: &[f64],
    eta: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let (mut c1, mut c2) = sbx_crossover_raw(p1, p2, eta, rng);
    for v in c1.iter_mut().chain(c2.iter_mut()) {
        *v = v.clamp(0.0, 1.0);
    }
    (c1, c2)
}

/// Bounded polynomial mutation on `[0,1]` genes: each gene mutates with
/// probability `rate` using the polynomial distribution with index `eta`.
pub fn polynomial_mutation<R: Rng>(x: &[f64], eta: f64, rate: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&gene| {
            if rng.random::<f64>() >= rate {
                return gene;
            }
            let u: f64 = rng.random();
            let delta = if u < 0.5 {
                let base = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - gene).powf(eta + 1.0);
                base.powf(1.0 / (eta + 1.0)) - 1.0
            } else {
                let base = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * gene.powf(eta + 1.0);
                1.0 - base.powf(1.0 / (eta + 1.0))
            };
            (gene + delta).clamp(0.0, 1.0)
        })
        .collect()
}

/// Keeps the `n` highest-scalar-fitness individuals from the combined pool.
/// Ties break by lower factorial cost on the individual's own skill task,
/// then by pool index.
pub fn select_next_generation(
    pool: Vec<Individual>,
    n: usize,
    n_tasks: usize,
) -> Result<Vec<Individual>> {
    if pool.len() < n {
        return Err(Error::PoolTooSmall { pool: pool.len(), wanted: n });
    }
    let mut scratch = Population { members: pool, generation: 0 };
    update_ranks_and_fitness(&mut scratch, n_tasks)?;
    let mut order: Vec<usize> = (0..scratch.len()).collect();
    order.sort_by(|&a, &b| {
        let ma = &scratch.members[a];
        let mb = &scratch.members[b];
        mb.scalar_fitness
            .partial_cmp(&ma.scalar_fitness)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                ma.skill_cost()
                    .partial_cmp(&mb.skill_cost())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then(a.cmp(&b))
    });
    let mut selected = vec![false; scratch.len()];
    for &idx in order.iter().take(n) {
        selected[idx] = true;
    }
    let keep: Vec<Individual> = scratch
        .members
        .into_iter()
        .zip(selected)
        .filter_map(|(m, s)| s.then_some(m))
        .collect();
    Ok(keep)
}

/// Uniform initial population with skill factors assigned round-robin so
/// every task starts with `N / T` members.
pub(crate) fn init_population<R: Rng>(
    problem: &MultitaskProblem,
    n: usize,
    rng: &mut R,
) -> Population {
    let d = problem.unified_dim;
    let t = problem.task_count();
    let members = (0..n)
        .map(|i| {
            let genome: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            Individual::new(genome, i % t, t)
        })
        .collect();
    Population { members, generation: 0 }
}

/// Evaluates one individual on its skill task only and folds the cost into
/// the per-task best-so-far.
pub(crate) fn evaluate_on_skill_task(
    problem: &MultitaskProblem,
    individual: &mut Individual,
    counter: &EvalCounter,
    best: &mut [f64],
) -> Result<()> {
    let task = &problem.tasks[individual.skill_factor];
    let x = decode(&individual.genome, task)?;
    let cost = evaluate_task(task, &x, counter)?;
    individual.factorial_costs[individual.skill_factor] = Some(cost);
    if cost < best[individual.skill_factor] {
        best[individual.skill_factor] = cost;
    }
    Ok(())
}

/// Splits a joint trace into one record per task.
pub(crate) fn finalize_records(
    algorithm: &str,
    problem: &MultitaskProblem,
    seed: u64,
    trace: &[(u64, Vec<f64>)],
    wall_time_s: f64,
) -> Vec<RunRecord> {
    (0..problem.task_count())
        .map(|task| {
            let per_task: Vec<TracePoint> = trace
                .iter()
                .map(|(evals, best)| TracePoint { evals: *evals, best: best[task] })
                .collect();
            let final_best = per_task.last().map(|p| p.best).unwrap_or(f64::INFINITY);
            RunRecord {
                algorithm: algorithm.to_string(),
                problem: problem.problem_id.clone(),
                task,
                seed,
                trace: per_task,
                final_best,
                wall_time_s,
            }
        })
        .collect()
}

pub const MFEA_NAME: &str = "mfea";

/// Runs the canonical MFEA loop until the evaluation budget is exhausted.
///
/// Budget accounting is generation-based: initialization and every offspring
/// generation cost `N` evaluations each, and the loop stops before exceeding
/// `max_evals`.
pub fn run_mfea(
    problem: &MultitaskProblem,
    config: &MfeaConfig,
    seed: u64,
) -> Result<RunOutput> {
    config.validate()?;
    let start = std::time::Instant::now();
    let n = config.population_size;
    let n_tasks = problem.task_count();
    let mutation_rate = config.gene_mutation_rate(problem.unified_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counter = EvalCounter::new();

    let mut pop = init_population(problem, n, &mut rng);
    let mut best = vec![f64::INFINITY; n_tasks];
    for member in &mut pop.members {
        evaluate_on_skill_task(problem, member, &counter, &mut best)?;
    }
    update_ranks_and_fitness(&mut pop, n_tasks)?;

    let mut trace = vec![(counter.count(), best.clone())];
    let mut events = vec![RunEvent {
        algorithm: MFEA_NAME.into(),
        problem: problem.problem_id.clone(),
        seed,
        generation: 0,
        evals: counter.count(),
        best: best.clone(),
        fallback_crossovers: 0,
        repairs: 0,
        retrain: None,
    }];

    while counter.count() + n as u64 <= config.max_evals {
        let offspring = make_offspring(&pop, config, mutation_rate, &mut rng);
        let mut pool = pop.members;
        for mut child in offspring {
            evaluate_on_skill_task(problem, &mut child, &counter, &mut best)?;
            pool.push(child);
        }
        pop = Population {
            members: select_next_generation(pool, n, n_tasks)?,
            generation: pop.generation + 1,
        };
        trace.push((counter.count(), best.clone()));
        events.push(RunEvent {
            algorithm: MFEA_NAME.into(),
            problem: problem.problem_id.clone(),
            seed,
            generation: pop.generation,
            evals: counter.count(),
            best: best.clone(),
            fallback_crossovers: 0,
            repairs: 0,
            retrain: None,
        });
    }

    let records = finalize_records(
        MFEA_NAME,
        problem,
        seed,
        &trace,
        start.elapsed().as_secs_f64(),
    );
    Ok(RunOutput { records, events })
}

/// One generation of offspring: shuffled pairing, assortative mating, SBX or
/// polynomial mutation, skill inheritance.
fn make_offspring<R: Rng>(
    pop: &Population,
    config: &MfeaConfig,
    mutation_rate: f64,
    rng: &mut R,
) -> Vec<Individual> {
    let n = pop.len();
    let n_tasks = pop.members[0].factorial_costs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut offspring = Vec::with_capacity(n);
    for pair in order.chunks_exact(2) {
        let p1 = &pop.members[pair[0]];
        let p2 = &pop.members[pair[1]];
        match assortative_mating(p1, p2, config.rmp, rng) {
            MatingDecision::Crossover => {
                let (g1, g2) = sbx_crossover(&p1.genome, &p2.genome, config.sbx_eta, rng);
                for genome in [g1, g2] {
                    let skill = if rng.random::<f64>() < 0.5 { p1.skill_factor } else { p2.skill_factor };
                    offspring.push(Individual::new(genome, skill, n_tasks));
                }
            }
            MatingDecision::MutateEach => {
                for parent in [p1, p2] {
                    let genome =
                        polynomial_mutation(&parent.genome, config.mutation_eta, mutation_rate, rng);
                    offspring.push(Individual::new(genome, parent.skill_factor, n_tasks));
                }
            }
        }
    }
    offspring
}
