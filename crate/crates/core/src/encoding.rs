//! Unified-space data model for multifactorial optimization.
//!
//! All individuals live in the common space `[0,1]^{D_max}` where `D_max` is
//! the largest task dimension. Per-task decoding maps the first `D_j`
//! coordinates affinely onto the task's box bounds. Skill factor, factorial
//! cost/rank and scalar fitness follow the standard MFEA definitions.

use crate::benchmarks::BaseFunction;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// One optimization task: a box-bounded minimization problem built from a
/// shifted, rotated base function.
#[derive(Debug, Clone)]
pub struct Task {
    /// 0-based task index within its problem.
    pub id: usize,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub base_function: BaseFunction,
    pub shift: Vec<f64>,
    /// Orthogonal `dim × dim` rotation applied after shifting.
    pub rotation: Tensor,
}

impl Task {
    /// Checks the structural invariants: bounds ordered, shift feasible,
    /// rotation orthogonal within `1e-9`.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("task dimension must be positive".into()));
        }
        if self.lower.len() != self.dim || self.upper.len() != self.dim || self.shift.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "task {}: bounds/shift length must equal dim {}",
                self.id, self.dim
            )));
        }
        for i in 0..self.dim {
            if self.lower[i] >= self.upper[i] {
                return Err(Error::InvalidInput(format!(
                    "task {}: lower[{}] must be < upper[{}]",
                    self.id, i, i
                )));
            }
            if self.shift[i] < self.lower[i] || self.shift[i] > self.upper[i] {
                return Err(Error::InvalidInput(format!(
                    "task {}: shift[{}] outside bounds",
                    self.id, i
                )));
            }
        }
        if self.rotation.shape() != [self.dim, self.dim] {
            return Err(Error::DimensionMismatch(format!(
                "task {}: rotation must be {d}x{d}",
                self.id,
                d = self.dim
            )));
        }
        let err = orthogonality_error(&self.rotation);
        if err >= 1e-9 {
            return Err(Error::InvalidInput(format!(
                "task {}: rotation not orthogonal (max |R'R - I| = {err:.3e})",
                self.id
            )));
        }
        Ok(())
    }
}

/// Max-norm deviation of `R'R` from the identity.
pub fn orthogonality_error(rotation: &Tensor) -> f64 {
    let d = rotation.shape()[0];
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mut dot = 0.0;
            for k in 0..d {
                dot += rotation.at2(k, i) * rotation.at2(k, j);
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// A set of `T >= 2` tasks optimized jointly over one population.
#[derive(Debug, Clone)]
pub struct MultitaskProblem {
    pub tasks: Vec<Task>,
    /// `D_max`, the unified genome length.
    pub unified_dim: usize,
    pub problem_id: String,
}

impl MultitaskProblem {
    pub fn new(problem_id: impl Into<String>, tasks: Vec<Task>) -> Result<Self> {
        if tasks.len() < 2 {
            return Err(Error::InvalidInput("a multitask problem needs at least two tasks".into()));
        }
        for task in &tasks {
            task.validate()?;
        }
        let unified_dim = tasks.iter().map(|t| t.dim).max().expect("nonempty");
        Ok(Self { tasks, unified_dim, problem_id: problem_id.into() })
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }
}

/// One member of the unified population.
#[derive(Debug, Clone)]
pub struct Individual {
    /// Genome in `[0,1]^{D_max}`.
    pub genome: Vec<f64>,
    /// The single task this individual is evaluated on.
    pub skill_factor: usize,
    /// Objective value per task; `None` means never evaluated there and
    /// orders after every finite cost.
    pub factorial_costs: Vec<Option<f64>>,
    /// 1-based rank per task, assigned over the current population.
    pub factorial_ranks: Vec<Option<usize>>,
    /// `1 / min_j rank_j`; zero until ranks are assigned.
    pub scalar_fitness: f64,
}

impl Individual {
    pub fn new(genome: Vec<f64>, skill_factor: usize, n_tasks: usize) -> Self {
        Self {
            genome,
            skill_factor,
            factorial_costs: vec![None; n_tasks],
            factorial_ranks: vec![None; n_tasks],
            scalar_fitness: 0.0,
        }
    }

    /// Cost on the skill task, `+inf` when not yet evaluated.
    pub fn skill_cost(&self) -> f64 {
        self.factorial_costs[self.skill_factor].unwrap_or(f64::INFINITY)
    }
}

/// The evolving population; all members share the same genome length.
#[derive(Debug, Clone, Default)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: u64,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Maps the first `task.dim` unified coordinates onto the task's bounds:
/// `y[i] = lower[i] + g[i] * (upper[i] - lower[i])`.
pub fn decode(genome: &[f64], task: &Task) -> Result<Vec<f64>> {
    if genome.len() < task.dim {
        return Err(Error::DimensionMismatch(format!(
            "genome length {} shorter than task dim {}",
            genome.len(),
            task.dim
        )));
    }
    Ok((0..task.dim)
        .map(|i| task.lower[i] + genome[i] * (task.upper[i] - task.lower[i]))
        .collect())
}

/// Ranks all members on one task by ascending factorial cost, 1-based.
/// Unset costs order last; ties break toward the lower member index.
pub fn factorial_ranks(pop: &Population, task_id: usize) -> Result<Vec<usize>> {
    if pop.is_empty() {
        return Err(Error::EmptyInput("population"));
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = pop.members[a].factorial_costs[task_id].unwrap_or(f64::INFINITY);
        let cb = pop.members[b].factorial_costs[task_id].unwrap_or(f64::INFINITY);
        ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut ranks = vec![0usize; pop.len()];
    for (rank_minus_one, &member) in order.iter().enumerate() {
        ranks[member] = rank_minus_one + 1;
    }
    Ok(ranks)
}

/// `1 / min` over the set ranks.
pub fn scalar_fitness(ranks: &[Option<usize>]) -> Result<f64> {
    ranks
        .iter()
        .flatten()
        .min()
        .map(|&best| 1.0 / best as f64)
        .ok_or(Error::UndefinedFitness)
}

/// Recomputes every member's factorial ranks on all tasks and the derived
/// scalar fitness. Pure function of the current costs.
pub fn update_ranks_and_fitness(pop: &mut Population, n_tasks: usize) -> Result<()> {
    for task_id in 0..n_tasks {
        let ranks = factorial_ranks(pop, task_id)?;
        for (member, rank) in pop.members.iter_mut().zip(ranks) {
            // A rank is only meaningful where a cost exists; members never
            // evaluated on this task keep an unset rank.
            member.factorial_ranks[task_id] =
                member.factorial_costs[task_id].map(|_| rank);
        }
    }
    for member in &mut pop.members {
        member.scalar_fitness = scalar_fitness(&member.factorial_ranks)?;
    }
    Ok(())
}
