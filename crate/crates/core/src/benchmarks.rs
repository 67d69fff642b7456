//! Base objective functions and CEC17-MTSO-style dual-task problems.
//!
//! Each task evaluates `base(R * (x - shift))` with an orthogonal rotation
//! `R`. Instances are loaded from plain-text data files when a data directory
//! is supplied and synthesized deterministically from a seed otherwise.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::encoding::{MultitaskProblem, Task};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::seeding;

/// Canonical constants for the Weierstrass function.
const WEIERSTRASS_A: f64 = 0.5;
const WEIERSTRASS_B: f64 = 3.0;
const WEIERSTRASS_KMAX: usize = 20;

/// Canonical Schwefel offset: the optimum sits at `420.9687 * 1`.
pub const SCHWEFEL_OPTIMUM: f64 = 420.9687;
const SCHWEFEL_CONSTANT: f64 = 418.9829;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseFunction {
    Sphere,
    Rosenbrock,
    Ackley,
    Rastrigin,
    Griewank,
    Weierstrass,
    Schwefel,
}

impl BaseFunction {
    pub fn name(self) -> &'static str {
        match self {
            BaseFunction::Sphere => "sphere",
            BaseFunction::Rosenbrock => "rosenbrock",
            BaseFunction::Ackley => "ackley",
            BaseFunction::Rastrigin => "rastrigin",
            BaseFunction::Griewank => "griewank",
            BaseFunction::Weierstrass => "weierstrass",
            BaseFunction::Schwefel => "schwefel",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sphere" => Ok(BaseFunction::Sphere),
            "rosenbrock" => Ok(BaseFunction::Rosenbrock),
            "ackley" => Ok(BaseFunction::Ackley),
            "rastrigin" => Ok(BaseFunction::Rastrigin),
            "griewank" => Ok(BaseFunction::Griewank),
            "weierstrass" => Ok(BaseFunction::Weierstrass),
            "schwefel" => Ok(BaseFunction::Schwefel),
            other => Err(Error::InvalidInput(format!("unknown base function: {other}"))),
        }
    }

    /// Canonical box bounds used by the CEC17-MTSO suite.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            BaseFunction::Sphere | BaseFunction::Griewank => (-100.0, 100.0),
            BaseFunction::Rosenbrock | BaseFunction::Ackley | BaseFunction::Rastrigin => (-50.0, 50.0),
            BaseFunction::Weierstrass => (-0.5, 0.5),
            BaseFunction::Schwefel => (-500.0, 500.0),
        }
    }

    /// Per-coordinate location of the canonical global optimum.
    pub fn optimum_coordinate(self) -> f64 {
        match self {
            BaseFunction::Rosenbrock => 1.0,
            BaseFunction::Schwefel => SCHWEFEL_OPTIMUM,
            _ => 0.0,
        }
    }
}

/// Evaluates the canonical definition of a base function at `z`.
pub fn evaluate_base(kind: BaseFunction, z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::EmptyInput("evaluation point"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate in evaluation point".into()));
    }
    let d = z.len() as f64;
    let value = match kind {
        BaseFunction::Sphere => z.iter().map(|&x| x * x).sum(),
        BaseFunction::Rosenbrock => z
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                100.0 * (b - a * a).powi(2) + (a - 1.0).powi(2)
            })
            .sum(),
        BaseFunction::Ackley => {
            let sum_sq: f64 = z.iter().map(|&x| x * x).sum();
            let sum_cos: f64 = z.iter().map(|&x| (2.0 * std::f64::consts::PI * x).cos()).sum();
            -20.0 * (-0.2 * (sum_sq / d).sqrt()).exp() - (sum_cos / d).exp()
                + 20.0
                + std::f64::consts::E
        }
        BaseFunction::Rastrigin => z
            .iter()
            .map(|&x| x * x - 10.0 * (2.0 * std::f64::consts::PI * x).cos() + 10.0)
            .sum(),
        BaseFunction::Griewank => {
            let sum: f64 = z.iter().map(|&x| x * x).sum::<f64>() / 4000.0;
            let prod: f64 = z
                .iter()
                .enumerate()
                .map(|(i, &x)| (x / ((i + 1) as f64).sqrt()).cos())
                .product();
            1.0 + sum - prod
        }
        BaseFunction::Weierstrass => {
            let mut total = 0.0;
            for &x in z {
                for k in 0..=WEIERSTRASS_KMAX {
                    let ak = WEIERSTRASS_A.powi(k as i32);
                    let bk = WEIERSTRASS_B.powi(k as i32);
                    total += ak * (2.0 * std::f64::consts::PI * bk * (x + 0.5)).cos();
                }
            }
            let mut offset = 0.0;
            for k in 0..=WEIERSTRASS_KMAX {
                let ak = WEIERSTRASS_A.powi(k as i32);
                let bk = WEIERSTRASS_B.powi(k as i32);
                offset += ak * (std::f64::consts::PI * bk).cos();
            }
            total - d * offset
        }
        BaseFunction::Schwefel => {
            SCHWEFEL_CONSTANT * d - z.iter().map(|&x| x * x.abs().sqrt().sin()).sum::<f64>()
        }
    };
    Ok(value)
}

/// Evaluation counter owned by the harness; every task evaluation increments
/// it exactly once. Atomic so distinct individuals may evaluate in parallel.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self(AtomicU64::new(0))
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn increment(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// Task objective: `base(R * (x - shift))`, counted against the budget.
pub fn evaluate_task(task: &Task, x: &[f64], counter: &EvalCounter) -> Result<f64> {
    if x.len() != task.dim {
        return Err(Error::DimensionMismatch(format!(
            "point length {} vs task dim {}",
            x.len(),
            task.dim
        )));
    }
    let centered: Vec<f64> = x.iter().zip(&task.shift).map(|(a, s)| a - s).collect();
    let z = task.rotation.matvec(&centered)?;
    counter.increment();
    evaluate_base(task.base_function, &z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Cec17,
    Custom,
}

/// Identifies one benchmark instance and how to materialize it.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub suite: Suite,
    /// "P1".."P9" for the CEC17 suite; free-form for custom files.
    pub problem_id: String,
    /// Per-task dimension override; suite default when `None`.
    pub dims: Option<Vec<usize>>,
    /// Instance seed for synthetic shift/rotation generation.
    pub seed: u64,
    /// Directory holding `<problem>_T<k>_shift.txt` / `_rot.txt` files.
    pub data_dir: Option<PathBuf>,
    /// Task definition file for `Suite::Custom`.
    pub custom_path: Option<PathBuf>,
}

impl ProblemSpec {
    pub fn cec17(problem_id: &str, seed: u64) -> Self {
        Self {
            suite: Suite::Cec17,
            problem_id: problem_id.to_string(),
            dims: None,
            seed,
            data_dir: None,
            custom_path: None,
        }
    }
}

/// The standard CEC17-MTSO task pairings.
fn cec17_pairing(problem_id: &str) -> Result<(BaseFunction, BaseFunction)> {
    use BaseFunction::*;
    match problem_id {
        "P1" => Ok((Griewank, Rastrigin)),
        "P2" => Ok((Ackley, Rastrigin)),
        "P3" => Ok((Ackley, Schwefel)),
        "P4" => Ok((Rastrigin, Sphere)),
        "P5" => Ok((Ackley, Rosenbrock)),
        "P6" => Ok((Ackley, Weierstrass)),
        "P7" => Ok((Rosenbrock, Rastrigin)),
        "P8" => Ok((Griewank, Weierstrass)),
        "P9" => Ok((Rastrigin, Schwefel)),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Random orthogonal matrix: QR of a seeded Gaussian via modified
/// Gram-Schmidt with one reorthogonalization pass.
pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for j in 0..dim {
        for _pass in 0..2 {
            for i in 0..j {
                let dot: f64 = cols[j].iter().zip(&cols[i]).map(|(a, b)| a * b).sum();
                for k in 0..dim {
                    cols[j][k] -= dot * cols[i][k];
                }
            }
        }
        let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut cols[j] {
            *v /= norm;
        }
    }
    let mut t = Tensor::zeros(&[dim, dim]);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..dim {
            *t.at2_mut(i, j) = col[i];
        }
    }
    t
}

/// Builds one task, either from data files or synthetically.
///
/// Synthetic shifts are drawn from the middle 80% of the bounds so rotated
/// optima stay feasible. Schwefel follows the standard suite convention of
/// zero shift and identity rotation, keeping its canonical optimum inside
/// the box.
fn build_task(
    id: usize,
    kind: BaseFunction,
    dim: usize,
    problem_id: &str,
    seed: u64,
    data_dir: Option<&Path>,
) -> Result<Task> {
    let (lo, hi) = kind.bounds();
    if let Some(dir) = data_dir {
        let shift_path = dir.join(format!("{problem_id}_T{}_shift.txt", id + 1));
        let rot_path = dir.join(format!("{problem_id}_T{}_rot.txt", id + 1));
        if shift_path.exists() && rot_path.exists() {
            let shift = read_matrix(&shift_path)?.into_iter().flatten().collect::<Vec<f64>>();
            let rot_rows = read_matrix(&rot_path)?;
            let d = shift.len();
            if rot_rows.len() != d || rot_rows.iter().any(|r| r.len() != d) {
                return Err(Error::DimensionMismatch(format!(
                    "{problem_id} task {}: rotation file is not {d}x{d}",
                    id + 1
                )));
            }
            let rotation = Tensor::from_vec(&[d, d], rot_rows.into_iter().flatten().collect())?;
            let task = Task {
                id,
                dim: d,
                lower: vec![lo; d],
                upper: vec![hi; d],
                base_function: kind,
                shift,
                rotation,
            };
            task.validate()?;
            return Ok(task);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seeding::instance_seed(seed, problem_id, id));
    let (shift, rotation) = match kind {
        BaseFunction::Schwefel => (vec![0.0; dim], Tensor::identity(dim)),
        _ => {
            let shift = (0..dim)
                .map(|_| {
                    let u: f64 = rng.random();
                    lo + (0.1 + 0.8 * u) * (hi - lo)
                })
                .collect();
            (shift, random_orthogonal(dim, &mut rng))
        }
    };
    let task = Task {
        id,
        dim,
        lower: vec![lo; dim],
        upper: vec![hi; dim],
        base_function: kind,
        shift,
        rotation,
    };
    task.validate()?;
    Ok(task)
}

/// Builds one of the nine standard dual-task problems. `dims` defaults to
/// 50 per task.
pub fn make_cec17_pair(
    problem_id: &str,
    seed: u64,
    dims: Option<&[usize]>,
    data_dir: Option<&Path>,
) -> Result<MultitaskProblem> {
    let (f1, f2) = cec17_pairing(problem_id)?;
    let dims: Vec<usize> = match dims {
        Some(d) if d.len() == 2 => d.to_vec(),
        Some(d) if d.len() == 1 => vec![d[0], d[0]],
        Some(d) => {
            return Err(Error::InvalidInput(format!(
                "expected 1 or 2 task dimensions, got {}",
                d.len()
            )))
        }
        None => vec![50, 50],
    };
    let tasks = vec![
        build_task(0, f1, dims[0], problem_id, seed, data_dir)?,
        build_task(1, f2, dims[1], problem_id, seed, data_dir)?,
    ];
    MultitaskProblem::new(problem_id, tasks)
}

#[derive(Debug, Deserialize)]
struct CustomTaskFile {
    function: String,
    dim: usize,
    #[serde(default)]
    lower: Option<f64>,
    #[serde(default)]
    upper: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct CustomProblemFile {
    problem_id: String,
    tasks: Vec<CustomTaskFile>,
}

/// Loads a custom problem definition (JSON) and synthesizes instances.
pub fn make_custom_problem(path: &Path, seed: u64) -> Result<MultitaskProblem> {
    let text = std::fs::read_to_string(path)?;
    let file: CustomProblemFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut tasks = Vec::with_capacity(file.tasks.len());
    for (id, spec) in file.tasks.iter().enumerate() {
        let kind = BaseFunction::parse(&spec.function)?;
        let mut task = build_task(id, kind, spec.dim, &file.problem_id, seed, None)?;
        if let (Some(lo), Some(hi)) = (spec.lower, spec.upper) {
            if lo >= hi {
                return Err(Error::InvalidInput(format!(
                    "custom task {id}: lower must be < upper"
                )));
            }
            task.lower = vec![lo; spec.dim];
            task.upper = vec![hi; spec.dim];
            // Regenerate the shift for the custom box.
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeding::instance_seed(seed, &file.problem_id, id));
            task.shift = (0..spec.dim)
                .map(|_| {
                    let u: f64 = rng.random();
                    lo + (0.1 + 0.8 * u) * (hi - lo)
                })
                .collect();
            task.validate()?;
        }
        tasks.push(task);
    }
    MultitaskProblem::new(file.problem_id, tasks)
}

/// Materializes a problem from its spec.
pub fn make_problem(spec: &ProblemSpec) -> Result<MultitaskProblem> {
    match spec.suite {
        Suite::Cec17 => make_cec17_pair(
            &spec.problem_id,
            spec.seed,
            spec.dims.as_deref(),
            spec.data_dir.as_deref(),
        ),
        Suite::Custom => {
            let path = spec
                .custom_path
                .as_ref()
                .ok_or_else(|| Error::Config("custom problem requires a file path".into()))?;
            make_custom_problem(path, spec.seed)
        }
    }
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            trimmed.split_whitespace().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| {
            Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("matrix file"));
    }
    Ok(rows)
}
