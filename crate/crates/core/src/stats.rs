//! Wilcoxon rank-sum comparison and summary tables with the `+/-/=`
//! reporting convention: `+` means the row algorithm achieved significantly
//! lower (better) final objectives than the base, `-` significantly higher,
//! `=` no significant difference at the chosen level.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::harness::RunRecord;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Largest `min(n, m)` handled by the exact null distribution.
const EXACT_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Plus,
    Minus,
    Equal,
}

impl Decision {
    pub fn symbol(self) -> &'static str {
        match self {
            Decision::Plus => "+",
            Decision::Minus => "-",
            Decision::Equal => "=",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub p_value: f64,
    pub decision: Decision,
    pub alpha: f64,
    /// Mann-Whitney U statistic of the first sample.
    pub u_statistic: f64,
    pub a_mean: f64,
    pub b_mean: f64,
    /// True when the exact null distribution was used.
    pub exact: bool,
}

/// Midranks of the pooled samples; returns (ranks of a, ranks of b, tie sizes).
fn midranks(a: &[f64], b: &[f64]) -> (f64, Vec<usize>) {
    let n = a.len();
    let mut pooled: Vec<(f64, bool)> =
        a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite sample values"));
    let total = pooled.len();
    let mut rank_sum_a = 0.0;
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < total {
        let mut j = i + 1;
        while j < total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &pooled[i..j] {
            if item.1 {
                rank_sum_a += midrank;
            }
        }
        if j - i > 1 {
            tie_sizes.push(j - i);
        }
        i = j;
    }
    let _ = n;
    (rank_sum_a, tie_sizes)
}

/// Number of size-`n` subsets of ranks `{1..N}` for every achievable rank
/// sum, indexed by `sum - n(n+1)/2`.
fn exact_rank_sum_counts(n: usize, total: usize) -> Vec<f64> {
    let min_sum = n * (n + 1) / 2;
    let max_sum = n * (2 * total - n + 1) / 2;
    let width = max_sum - min_sum + 1;
    // dp[j][s]: subsets of size j with sum s (s absolute).
    let mut dp = vec![vec![0.0f64; max_sum + 1]; n + 1];
    dp[0][0] = 1.0;
    for rank in 1..=total {
        for j in (1..=n.min(rank)).rev() {
            for s in (rank..=max_sum).rev() {
                let add = dp[j - 1][s - rank];
                if add != 0.0 {
                    dp[j][s] += add;
                }
            }
        }
    }
    (0..width).map(|off| dp[n][min_sum + off]).collect()
}

/// Exact two-sided p-value for rank sum `w` of the size-`n` sample:
/// `min(1, 2 * min(P[W <= w], P[W >= w]))`.
fn exact_p_value(w: f64, n: usize, total: usize) -> f64 {
    let counts = exact_rank_sum_counts(n, total);
    let min_sum = (n * (n + 1) / 2) as f64;
    let offset = (w - min_sum).round() as usize;
    let all: f64 = counts.iter().sum();
    let lower: f64 = counts[..=offset].iter().sum();
    let upper: f64 = counts[offset..].iter().sum();
    (2.0 * (lower / all).min(upper / all)).min(1.0)
}

/// Two-sided Wilcoxon rank-sum test with midrank tie handling. Uses the
/// exact null distribution when `min(n, m) <= 8` and the data carry no ties,
/// and the normal approximation with tie and continuity corrections
/// otherwise. `Plus` means the first sample is significantly lower
/// (minimization: better).
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], alpha: f64) -> Result<ComparisonResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("wilcoxon sample"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample value".into()));
    }
    let (n, m) = (a.len(), b.len());
    let total = n + m;
    let (rank_sum_a, tie_sizes) = midranks(a, b);
    let u = rank_sum_a - (n * (n + 1)) as f64 / 2.0;

    let exact = n.min(m) <= EXACT_LIMIT && tie_sizes.is_empty();
    let p_value = if exact {
        exact_p_value(rank_sum_a, n, total)
    } else {
        let mu = (n * m) as f64 / 2.0;
        let tie_term: f64 = tie_sizes
            .iter()
            .map(|&t| (t * t * t - t) as f64)
            .sum::<f64>()
            / (total * (total - 1)) as f64;
        let sigma_sq = (n * m) as f64 / 12.0 * ((total + 1) as f64 - tie_term);
        if sigma_sq <= 0.0 {
            1.0
        } else {
            let z = ((u - mu).abs() - 0.5).max(0.0) / sigma_sq.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
        }
    };

    let a_mean = a.iter().sum::<f64>() / n as f64;
    let b_mean = b.iter().sum::<f64>() / m as f64;
    let decision = if p_value >= alpha || a_mean == b_mean {
        Decision::Equal
    } else if a_mean < b_mean {
        Decision::Plus
    } else {
        Decision::Minus
    };
    Ok(ComparisonResult { p_value, decision, alpha, u_statistic: u, a_mean, b_mean, exact })
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub problem: String,
    pub task: usize,
    pub algorithm: String,
    pub mean: f64,
    pub std: f64,
    pub n_runs: usize,
    /// Comparison against the base algorithm; absent for the base itself or
    /// when no base applies.
    pub p_value: Option<f64>,
    pub sign: Option<Decision>,
}

#[derive(Debug, Clone)]
pub struct FooterCounts {
    pub algorithm: String,
    pub plus: usize,
    pub minus: usize,
    pub equal: usize,
}

#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub alpha: f64,
    pub base: Option<String>,
    pub rows: Vec<SummaryRow>,
    pub footer: Vec<FooterCounts>,
}

fn mean_std(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let std = if sample.len() > 1 {
        (sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Per-(problem, task, algorithm) summary of final objectives with a
/// Wilcoxon comparison against `base_algorithm`, plus the `+/-/=` footer
/// counts per algorithm. Errors when algorithms do not share the same
/// (problem, seed) cells.
pub fn summarize(records: &[RunRecord], base_algorithm: Option<&str>) -> Result<SummaryTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput("run records"));
    }
    let algorithms: BTreeSet<&str> = records.iter().map(|r| r.algorithm.as_str()).collect();
    let cells: BTreeSet<(&str, usize, u64)> =
        records.iter().map(|r| (r.problem.as_str(), r.task, r.seed)).collect();
    let present: BTreeSet<(&str, &str, usize, u64)> = records
        .iter()
        .map(|r| (r.algorithm.as_str(), r.problem.as_str(), r.task, r.seed))
        .collect();
    let mut missing = Vec::new();
    for algorithm in &algorithms {
        for (problem, task, seed) in &cells {
            if !present.contains(&(algorithm, problem, *task, *seed)) {
                missing.push(format!("{algorithm}/{problem}/T{task}/seed{seed}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    if let Some(base) = base_algorithm {
        if !algorithms.contains(base) {
            return Err(Error::InvalidInput(format!("base algorithm {base} has no runs")));
        }
    }

    // Final objectives ordered by seed so paired cells align.
    let mut finals: BTreeMap<(&str, usize, &str), BTreeMap<u64, f64>> = BTreeMap::new();
    for r in records {
        finals
            .entry((r.problem.as_str(), r.task, r.algorithm.as_str()))
            .or_default()
            .insert(r.seed, r.final_best);
    }
    let sample = |problem: &str, task: usize, algorithm: &str| -> Vec<f64> {
        finals[&(problem, task, algorithm)].values().copied().collect()
    };

    let mut rows = Vec::new();
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let problems_tasks: BTreeSet<(&str, usize)> =
        records.iter().map(|r| (r.problem.as_str(), r.task)).collect();
    for (problem, task) in &problems_tasks {
        for algorithm in &algorithms {
            let values = sample(problem, *task, algorithm);
            let (mean, std) = mean_std(&values);
            let (p_value, sign) = match base_algorithm {
                Some(base) if base != *algorithm => {
                    let base_values = sample(problem, *task, base);
                    let cmp = wilcoxon_rank_sum(&values, &base_values, DEFAULT_ALPHA)?;
                    let entry = counts.entry(algorithm).or_insert((0, 0, 0));
                    match cmp.decision {
                        Decision::Plus => entry.0 += 1,
                        Decision::Minus => entry.1 += 1,
                        Decision::Equal => entry.2 += 1,
                    }
                    (Some(cmp.p_value), Some(cmp.decision))
                }
                _ => (None, None),
            };
            rows.push(SummaryRow {
                problem: problem.to_string(),
                task: *task,
                algorithm: algorithm.to_string(),
                mean,
                std,
                n_runs: values.len(),
                p_value,
                sign,
            });
        }
    }

    let footer = counts
        .into_iter()
        .map(|(algorithm, (plus, minus, equal))| FooterCounts {
            algorithm: algorithm.to_string(),
            plus,
            minus,
            equal,
        })
        .collect();

    Ok(SummaryTable { alpha: DEFAULT_ALPHA, base: base_algorithm.map(str::to_string), rows, footer })
}

/// CSV emission; the leading comment documents the test convention.
pub fn write_summary_csv<W: Write>(table: &SummaryTable, mut w: W) -> Result<()> {
    let base = table.base.as_deref().unwrap_or("none");
    writeln!(
        w,
        "# two-sided Wilcoxon rank-sum at alpha={} vs base '{}'; sign '+' = lower final objective than base, '-' = higher, '=' = not significant",
        table.alpha, base
    )?;
    writeln!(w, "problem,task,algorithm,mean,std,n_runs,wilcoxon_vs({base}),sign")?;
    for row in &table.rows {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{},{},{}",
            row.problem,
            row.task,
            row.algorithm,
            row.mean,
            row.std,
            row.n_runs,
            row.p_value.map(|p| format!("{p:e}")).unwrap_or_default(),
            row.sign.map(|s| s.symbol().to_string()).unwrap_or_default(),
        )?;
    }
    for counts in &table.footer {
        writeln!(
            w,
            "+/-/=,,{},,,,,{}/{}/{}",
            counts.algorithm, counts.plus, counts.minus, counts.equal
        )?;
    }
    Ok(())
}

/// Text rendering in the conventional comparison-table layout: one row per
/// problem-task, one column per algorithm, and a `+ / - / =` footer.
pub fn render_table(table: &SummaryTable) -> String {
    let mut algorithms: Vec<&str> = Vec::new();
    if let Some(base) = &table.base {
        algorithms.push(base);
    }
    for row in &table.rows {
        if !algorithms.contains(&row.algorithm.as_str()) {
            algorithms.push(&row.algorithm);
        }
    }
    let mut by_cell: BTreeMap<(String, usize), BTreeMap<&str, &SummaryRow>> = BTreeMap::new();
    for row in &table.rows {
        by_cell
            .entry((row.problem.clone(), row.task))
            .or_default()
            .insert(&row.algorithm, row);
    }

    let mut out = String::new();
    out.push_str(&format!("{:<12}", "Category"));
    for algorithm in &algorithms {
        out.push_str(&format!(" | {algorithm:<28}"));
    }
    out.push('\n');
    for ((problem, task), cells) in &by_cell {
        out.push_str(&format!("{:<12}", format!("{problem}-T{}", task + 1)));
        for algorithm in &algorithms {
            let cell = cells[algorithm];
            let sign = cell.sign.map(|s| format!(" {}", s.symbol())).unwrap_or_default();
            out.push_str(&format!(" | {:<28}", format!("{:.4e} ({:.2e}){sign}", cell.mean, cell.std)));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<12}", "+ / - / ="));
    for algorithm in &algorithms {
        let entry = table
            .footer
            .iter()
            .find(|f| f.algorithm == *algorithm)
            .map(|f| format!("{} / {} / {}", f.plus, f.minus, f.equal))
            .unwrap_or_else(|| "Base".to_string());
        out.push_str(&format!(" | {entry:<28}"));
    }
    out.push('\n');
    out
}
