//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (visible with `cargo test --test acceptance -- --nocapture`). Tolerances
//! and budgets are pinned in the assertions.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use emt_core::benchmarks::ProblemSpec;
use emt_core::harness::{run_experiment, Algorithm, ExperimentConfig};
use emt_core::mfea::sbx_crossover_raw;
use emt_core::mfea_rl::{
    residual_crossover, AlgorithmMode, MfeaRlConfig,
};
use emt_core::nn::{
    gradient_check_classifier, gradient_check_vdsr, residual_compose, train_classifier,
    train_vdsr, ResidualNet, SkillClassifier, Tensor, TrainOptions,
};
use emt_core::projection::{distortion_report, gaussian_projection, JlConfig};
use emt_core::stats::{summarize, wilcoxon_rank_sum, Decision};
use emt_core::{Individual, MfeaConfig};

fn conclude(name: &str, start: Instant, budget_s: f64, pass: bool, detail: String) {
    let elapsed = start.elapsed().as_secs_f64();
    let in_budget = elapsed < budget_s;
    let status = if pass && in_budget { "PASS" } else { "FAIL" };
    println!("acceptance {name}: {status} ({elapsed:.1}s) {detail}");
    assert!(pass, "{name}: {detail}");
    assert!(in_budget, "{name}: runtime {elapsed:.1}s exceeded budget {budget_s}s");
}

fn desk_rl_config(max_evals: u64, mode: AlgorithmMode) -> MfeaRlConfig {
    let mut config = MfeaRlConfig::desk_scale();
    config.base = MfeaConfig { max_evals, ..Default::default() };
    config.mode = mode;
    config
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    // Depth-3 residual net at D = 4 with a nonzero head so every layer
    // receives gradient signal.
    let mut vdsr = ResidualNet::new(3, 8, &mut rng);
    let mut params = vdsr.params_flat();
    for p in params.iter_mut() {
        if *p == 0.0 {
            *p = rng.random_range(-0.1..0.1);
        }
    }
    vdsr.set_params_flat(&params);
    let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
    let target = Tensor::from_vec(&[4, 4], (0..16).map(|_| rng.random::<f64>()).collect()).unwrap();
    let vdsr_err = gradient_check_vdsr(&vdsr, &x, &target, 1e-5).unwrap();

    let mut classifier = SkillClassifier::new(1, 8, 2, &mut rng);
    for w in classifier.head_weights.iter_mut() {
        *w = rng.random_range(-0.5..0.5);
    }
    let matrix = Tensor::from_vec(&[4, 4], (0..16).map(|_| rng.random::<f64>()).collect()).unwrap();
    let clf_err = gradient_check_classifier(&classifier, &matrix, 1, 1e-5).unwrap();

    let pass = vdsr_err < 1e-4 && clf_err < 1e-4;
    conclude(
        "01 gradient-correctness",
        start,
        10.0,
        pass,
        format!("vdsr rel err {vdsr_err:.2e}, classifier rel err {clf_err:.2e} (limit 1e-4)"),
    );
}

#[test]
fn criterion_02_zero_residual_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut net = ResidualNet::new(3, 8, &mut rng);
    net.mark_trained();

    let genome: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
    let residual = net.vdsr_forward(&genome).unwrap();
    let composed = residual_compose(&genome, &residual).unwrap();
    let mut rows_exact = true;
    for r in 0..6 {
        for (a, b) in composed.row(r).iter().zip(&genome) {
            rows_exact &= a.to_bits() == b.to_bits();
        }
    }

    let p1 = Individual::new(genome.clone(), 0, 2);
    let p2 = Individual::new((0..6).map(|_| rng.random::<f64>()).collect(), 1, 2);
    let (c1, c2, fell_back) =
        residual_crossover(&p1, &p2, &net, AlgorithmMode::Full, 2.0, &mut rng).unwrap();
    let parents_exact = !fell_back
        && c1.iter().zip(&p1.genome).all(|(a, b)| a.to_bits() == b.to_bits())
        && c2.iter().zip(&p2.genome).all(|(a, b)| a.to_bits() == b.to_bits());

    conclude(
        "02 zero-residual-identity",
        start,
        1.0,
        rows_exact && parents_exact,
        format!("composed rows bitwise equal: {rows_exact}, crossover identity: {parents_exact}"),
    );
}

#[test]
fn criterion_03_vdsr_training_progress() {
    let start = Instant::now();
    let d = 8;
    let mut successes = 0;
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let dataset: Vec<(Vec<f64>, Tensor)> = (0..200)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                // Row-constant residual target: an affine remap of the genome.
                let remapped: Vec<f64> = x.iter().map(|v| 1.5 * v - 0.2).collect();
                (x, Tensor::broadcast_rows(&remapped, d))
            })
            .collect();
        let mut net = ResidualNet::new(3, 8, &mut rng);
        let losses = train_vdsr(&mut net, &dataset, &TrainOptions::vdsr_defaults(), &mut rng).unwrap();
        assert_eq!(losses.len(), 5);
        let ratio = losses[4] / losses[0];
        ratios.push(ratio);
        if losses[4] < 0.8 * losses[0] {
            successes += 1;
        }
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    conclude(
        "03 vdsr-training-progress",
        start,
        60.0,
        successes >= 9,
        format!("{successes}/10 seeds with epoch-5 < 0.8 x epoch-1; ratios [{}]", shown.join(", ")),
    );
}

#[test]
fn criterion_04_classifier_accuracy() {
    let start = Instant::now();
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    // Two separable clusters: matrix entries around 0.25 vs 0.75.
    let mut dataset = Vec::new();
    for _ in 0..100 {
        for (label, mean) in [(0usize, 0.25), (1usize, 0.75)] {
            let data = (0..d * d).map(|_| mean + 0.1 * (rng.random::<f64>() - 0.5)).collect();
            dataset.push((Tensor::from_vec(&[d, d], data).unwrap(), label));
        }
    }
    let mut net = SkillClassifier::new(1, 8, 2, &mut rng);
    let opts = TrainOptions::classifier_defaults();
    let report = train_classifier(&mut net, &dataset, &opts, &mut rng).unwrap();
    let pass = report.best_accuracy >= 0.95 && report.epochs_run <= 50;
    conclude(
        "04 classifier-accuracy",
        start,
        120.0,
        pass,
        format!(
            "validation accuracy {:.3} after {} epochs (needs >= 0.95 within 50)",
            report.best_accuracy, report.epochs_run
        ),
    );
}

#[test]
fn criterion_05_jl_distance_preservation() {
    let start = Instant::now();
    let n = 100;
    let ambient = 2500;
    let eps = 0.5;
    let k = JlConfig::jl_dimension(n, eps);
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..ambient).map(|_| rand_distr::StandardNormal.sample(&mut rng)).collect())
        .collect();
    let projected = gaussian_projection(&points, k, &mut rng);
    let report = distortion_report(&points, &projected, eps).unwrap();
    conclude(
        "05 jl-distance-preservation",
        start,
        30.0,
        report.fraction_within_epsilon >= 0.99,
        format!(
            "k={k}, {:.2}% of pairs within [1-eps, 1+eps] (needs >= 99%)",
            report.fraction_within_epsilon * 100.0
        ),
    );
}

#[test]
fn criterion_06_row_map_unbiasedness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let d = 10;
    let matrices: Vec<Tensor> = (0..30)
        .map(|_| {
            let data = (0..d * d)
                .map(|_| {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    z
                })
                .collect();
            Tensor::from_vec(&[d, d], data).unwrap()
        })
        .collect();
    let stats = emt_core::projection::row_map_distortion(&matrices, &mut rng, 10_000).unwrap();
    conclude(
        "06 row-map-unbiasedness",
        start,
        10.0,
        (stats.mean_ratio - 1.0).abs() <= 0.05,
        format!("mean ratio {:.4} over 10^4 draws (needs 1 +/- 0.05)", stats.mean_ratio),
    );
}

#[test]
fn criterion_07_sbx_conservation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst_rel = 0.0f64;
    let events = 100_000;
    for _ in 0..events {
        let p1 = [rng.random::<f64>()];
        let p2 = [rng.random::<f64>()];
        let (c1, c2) = sbx_crossover_raw(&p1, &p2, 2.0, &mut rng);
        let parents = p1[0] + p2[0];
        let children = c1[0] + c2[0];
        let scale = c1[0].abs().max(c2[0].abs()).max(1.0);
        worst_rel = worst_rel.max((children - parents).abs() / scale);
    }
    // Conservation is algebraically exact; in IEEE doubles the mean/spread
    // form leaves at most a few ulps of rounding.
    let pass = worst_rel <= 4.0 * f64::EPSILON;
    conclude(
        "07 sbx-conservation",
        start,
        10.0,
        pass,
        format!(
            "max |(c1+c2)-(p1+p2)| / scale = {worst_rel:.2e} over {events} events (limit 4 ulp = {:.2e})",
            4.0 * f64::EPSILON
        ),
    );
}

/// Brute-force oracle over every subset of pooled ranks.
fn enumerate_exact_p(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let total = n + b.len();
    let mut pooled: Vec<(f64, bool)> =
        a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let observed: f64 = pooled
        .iter()
        .enumerate()
        .filter(|(_, (_, is_a))| *is_a)
        .map(|(i, _)| (i + 1) as f64)
        .sum();
    let mut lower = 0u64;
    let mut upper = 0u64;
    let mut all = 0u64;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let w: f64 = (0..total).filter(|i| mask & (1 << i) != 0).map(|i| (i + 1) as f64).sum();
        all += 1;
        if w <= observed {
            lower += 1;
        }
        if w >= observed {
            upper += 1;
        }
    }
    (2.0 * (lower as f64 / all as f64).min(upper as f64 / all as f64)).min(1.0)
}

#[test]
fn criterion_08_wilcoxon_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(2..=6usize);
        let m = rng.random_range(2..=12usize);
        // Distinct integers guarantee a tie-free pooled sample.
        let mut values: Vec<i64> = (0..1000).collect();
        for i in 0..(n + m) {
            let j = rng.random_range(i..values.len());
            values.swap(i, j);
        }
        let a: Vec<f64> = values[..n].iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = values[n..n + m].iter().map(|&v| v as f64).collect();
        let result = wilcoxon_rank_sum(&a, &b, 0.05).unwrap();
        assert!(result.exact, "expected the exact path for n={n}, m={m}");
        let oracle = enumerate_exact_p(&a, &b);
        assert_eq!(
            result.p_value, oracle,
            "exact p mismatch for n={n} m={m}: {} vs oracle {}",
            result.p_value, oracle
        );
        checked += 1;
    }
    conclude(
        "08 wilcoxon-exactness",
        start,
        30.0,
        checked == 100,
        format!("{checked}/100 random integer sample pairs matched enumeration exactly"),
    );
}

#[test]
fn criterion_09_deterministic_cells() {
    let start = Instant::now();
    let run_once = |dir: &std::path::Path| {
        let mut spec = ProblemSpec::cec17("P1", 1234);
        spec.dims = Some(vec![10, 10]);
        let mut config = ExperimentConfig::new(
            vec![spec],
            vec![Algorithm::MfeaRl(AlgorithmMode::Full), Algorithm::Mfea],
            dir.to_path_buf(),
        );
        config.reps = 2;
        config.max_evals = 2_000;
        config.deterministic = true;
        config.rl = desk_rl_config(2_000, AlgorithmMode::Full);
        run_experiment(&config).unwrap();
        std::fs::read(dir.join("convergence.csv")).unwrap()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let bytes_a = run_once(dir_a.path());
    let bytes_b = run_once(dir_b.path());
    conclude(
        "09 deterministic-cells",
        start,
        300.0,
        bytes_a == bytes_b,
        format!("two --deterministic invocations produced identical convergence.csv ({} bytes)", bytes_a.len()),
    );
}

#[test]
fn criterion_10_optimization_sanity() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mk_spec = |id: &str| {
        let mut spec = ProblemSpec::cec17(id, 1234);
        spec.dims = Some(vec![10, 10]);
        spec
    };
    let mut config = ExperimentConfig::new(
        vec![mk_spec("P1"), mk_spec("P4")],
        vec![
            Algorithm::RandomSearch,
            Algorithm::Mfea,
            Algorithm::MfeaRl(AlgorithmMode::Full),
        ],
        dir.path().to_path_buf(),
    );
    config.reps = 10;
    config.max_evals = 20_000;
    config.rl = desk_rl_config(20_000, AlgorithmMode::Full);
    let records = run_experiment(&config).unwrap();

    // Wilcoxon '+' for both algorithms vs random-search on every task.
    let table = summarize(&records, Some("random-search")).unwrap();
    let mut plus_ok = true;
    let mut detail = String::new();
    for row in &table.rows {
        if row.algorithm == "random-search" {
            continue;
        }
        let sign = row.sign.expect("comparison present");
        if sign != Decision::Plus {
            plus_ok = false;
            detail.push_str(&format!(
                "{}-T{} {} vs random-search was {}; ",
                row.problem,
                row.task + 1,
                row.algorithm,
                sign.symbol()
            ));
        }
    }

    // Best-so-far monotone on every mfea-rl run.
    let mut monotone = true;
    for record in records.iter().filter(|r| r.algorithm == "mfea-rl:full") {
        let mut prev = f64::INFINITY;
        for point in &record.trace {
            if point.best > prev {
                monotone = false;
            }
            prev = point.best;
        }
    }

    // Retraining consumed zero objective evaluations (from events.jsonl).
    let events_text = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    let mut retrain_rounds = 0u64;
    let mut zero_delta = true;
    for line in events_text.lines() {
        let event: serde_json::Value = serde_json::from_str(line).unwrap();
        if let Some(retrain) = event.get("retrain").and_then(|r| r.as_object()) {
            retrain_rounds += 1;
            if retrain["eval_delta"].as_u64() != Some(0) {
                zero_delta = false;
            }
        }
    }

    let pass = plus_ok && monotone && zero_delta && retrain_rounds > 0;
    conclude(
        "10 optimization-sanity",
        start,
        1800.0,
        pass,
        format!(
            "wilcoxon-plus: {plus_ok} {detail}, monotone best: {monotone}, \
             retrain rounds {retrain_rounds} all zero eval delta: {zero_delta}"
        ),
    );
}

#[test]
fn criterion_11_ablation_harness() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let problems: Vec<ProblemSpec> = ["P3", "P4", "P8", "P9"]
        .iter()
        .map(|id| {
            let mut spec = ProblemSpec::cec17(id, 1234);
            spec.dims = Some(vec![10, 10]);
            spec
        })
        .collect();
    let mut config = ExperimentConfig::new(
        problems,
        vec![
            Algorithm::MfeaRl(AlgorithmMode::Full),
            Algorithm::MfeaRl(AlgorithmMode::VdsrOnly),
            Algorithm::MfeaRl(AlgorithmMode::ResOnly),
        ],
        dir.path().to_path_buf(),
    );
    config.reps = 3;
    config.max_evals = 5_000;
    config.rl = desk_rl_config(5_000, AlgorithmMode::Full);
    let records = run_experiment(&config).unwrap();

    // Every mode completed every cell with an identical evaluation grid.
    let expected_runs = 4 * 3 * 3 * 2; // problems x modes x seeds x tasks
    let complete = records.len() == expected_runs;
    let mut comparable = true;
    let reference: Vec<u64> = records[0].trace.iter().map(|p| p.evals).collect();
    for record in &records {
        let evals: Vec<u64> = record.trace.iter().map(|p| p.evals).collect();
        if evals != reference {
            comparable = false;
        }
    }

    let table = summarize(&records, Some("mfea-rl:full")).unwrap();
    let text = emt_core::stats::render_table(&table);
    let footer_ok = text.contains("+ / - / =") && text.contains("Base");
    let counts_ok = table
        .footer
        .iter()
        .all(|f| f.plus + f.minus + f.equal == 8); // 4 problems x 2 tasks

    let pass = complete && comparable && footer_ok && counts_ok;
    conclude(
        "11 ablation-harness",
        start,
        3600.0,
        pass,
        format!(
            "runs {}/{expected_runs}, comparable traces: {comparable}, footer rendered: {footer_ok}, counts: {counts_ok}",
            records.len()
        ),
    );
}
