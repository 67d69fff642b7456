//! Residual-learning MFEA: the crossover draws one row from each parent's
//! composed D×D representation (built by the residual generator), and a
//! classifier over the same representation assigns offspring skill factors.
//! Both networks are trained online from the evolving population; training
//! never touches the objective-function evaluation counter.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{update_ranks_and_fitness, Individual, MultitaskProblem, Population};
use crate::error::{Error, Result};
use crate::harness::{RetrainSummary, RunEvent, RunOutput};
use crate::mfea::{
    assortative_mating, evaluate_on_skill_task, finalize_records, init_population,
    polynomial_mutation, sbx_crossover, select_next_generation, MatingDecision, MfeaConfig,
};
use crate::nn::classifier::argmax_tie_lowest;
use crate::nn::{
    residual_compose, train_classifier, train_vdsr, ResidualNet, SkillClassifier, Tensor,
    TrainOptions,
};

/// Ablation switch: residual crossover only, dynamic skill assignment only,
/// or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmMode {
    Full,
    VdsrOnly,
    ResOnly,
}

impl AlgorithmMode {
    pub fn uses_residual_crossover(self) -> bool {
        matches!(self, AlgorithmMode::Full | AlgorithmMode::VdsrOnly)
    }

    pub fn uses_classifier(self) -> bool {
        matches!(self, AlgorithmMode::Full | AlgorithmMode::ResOnly)
    }
}

#[derive(Debug, Clone)]
pub struct MfeaRlConfig {
    pub base: MfeaConfig,
    /// Generations between network retraining rounds.
    pub retrain_interval: u64,
    pub vdsr_opts: TrainOptions,
    pub resnet_opts: TrainOptions,
    pub mode: AlgorithmMode,
    /// Residual generator architecture.
    pub vdsr_depth: usize,
    pub vdsr_channels: usize,
    /// Classifier architecture.
    pub classifier_blocks: usize,
    pub classifier_channels: usize,
}

impl Default for MfeaRlConfig {
    fn default() -> Self {
        Self {
            base: MfeaConfig::default(),
            retrain_interval: 10,
            vdsr_opts: TrainOptions::vdsr_defaults(),
            resnet_opts: TrainOptions::classifier_defaults(),
            mode: AlgorithmMode::Full,
            vdsr_depth: 8,
            vdsr_channels: 64,
            classifier_blocks: 3,
            classifier_channels: 16,
        }
    }
}

impl MfeaRlConfig {
    /// Desk-scale variant with small networks; used by tests and quick runs.
    pub fn desk_scale() -> Self {
        Self {
            vdsr_depth: 3,
            vdsr_channels: 8,
            classifier_blocks: 1,
            classifier_channels: 8,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.retrain_interval == 0 {
            return Err(Error::InvalidInput("retrain interval must be at least 1".into()));
        }
        Ok(())
    }

    pub fn algorithm_name(&self) -> &'static str {
        match self.mode {
            AlgorithmMode::Full => "mfea-rl:full",
            AlgorithmMode::VdsrOnly => "mfea-rl:vdsr",
            AlgorithmMode::ResOnly => "mfea-rl:res",
        }
    }
}

/// Training data harvested from the evolving population.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    /// `(genome, D×D target)` pairs for the residual generator.
    pub vdsr_pairs: Vec<(Vec<f64>, Tensor)>,
    /// `(composed matrix, skill factor)` pairs for the classifier.
    pub resnet_pairs: Vec<(Tensor, usize)>,
}

/// Member indices grouped by skill factor; empty groups are omitted.
fn skill_groups(pop: &Population, n_tasks: usize) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = (0..n_tasks).map(|t| (t, Vec::new())).collect();
    for (i, member) in pop.members.iter().enumerate() {
        groups[member.skill_factor].1.push(i);
    }
    groups.retain(|(_, g)| !g.is_empty());
    groups
}

/// Balanced sample of `(genome, skill)` entries: every remaining task
/// contributes exactly `min` group size members, majority tasks are
/// down-sampled at random.
fn balanced_sample<R: Rng>(
    pop: &Population,
    groups: &[(usize, Vec<usize>)],
    rng: &mut R,
) -> Vec<(Vec<f64>, usize)> {
    let m = groups.iter().map(|(_, g)| g.len()).min().unwrap_or(0);
    let mut sample = Vec::new();
    for (task, group) in groups {
        let chosen: Vec<usize> = if group.len() > m {
            let mut shuffled = group.clone();
            shuffled.shuffle(rng);
            shuffled.truncate(m);
            shuffled.sort_unstable();
            shuffled
        } else {
            group.clone()
        };
        for idx in chosen {
            sample.push((pop.members[idx].genome.clone(), *task));
        }
    }
    sample
}

/// The residual-generator target for genome `x` with skill `t`: a D×D matrix
/// whose rows are genomes drawn uniformly with replacement from the skill-`t`
/// group.
fn vdsr_targets<R: Rng>(
    pop: &Population,
    groups: &[(usize, Vec<usize>)],
    sample: &[(Vec<f64>, usize)],
    rng: &mut R,
) -> Vec<(Vec<f64>, Tensor)> {
    let d = pop.members[0].genome.len();
    sample
        .iter()
        .map(|(genome, task)| {
            let group = &groups.iter().find(|(t, _)| t == task).expect("sampled task").1;
            let mut data = Vec::with_capacity(d * d);
            for _ in 0..d {
                let pick = group[rng.random_range(0..group.len())];
                data.extend_from_slice(&pop.members[pick].genome);
            }
            let target = Tensor::from_vec(&[d, d], data).expect("square target");
            (genome.clone(), target)
        })
        .collect()
}

/// Classifier inputs: the composed representation of each sampled genome,
/// labeled with its skill factor.
pub fn classifier_pairs(
    net: &ResidualNet,
    sample: &[(Vec<f64>, usize)],
) -> Result<Vec<(Tensor, usize)>> {
    sample
        .iter()
        .map(|(genome, task)| {
            let residual = net.vdsr_forward(genome)?;
            Ok((residual_compose(genome, &residual)?, *task))
        })
        .collect()
}

/// Builds one balanced training batch from the population. The classifier
/// pairs use the supplied residual generator; during a retraining round the
/// run loop recomputes them after the generator has been updated.
pub fn build_training_batch<R: Rng>(
    pop: &Population,
    net: &ResidualNet,
    n_tasks: usize,
    rng: &mut R,
) -> Result<TrainingBatch> {
    if pop.is_empty() {
        return Err(Error::EmptyInput("population"));
    }
    let groups = skill_groups(pop, n_tasks);
    let sample = balanced_sample(pop, &groups, rng);
    let vdsr_pairs = vdsr_targets(pop, &groups, &sample, rng);
    let resnet_pairs = classifier_pairs(net, &sample)?;
    Ok(TrainingBatch { vdsr_pairs, resnet_pairs })
}

/// Uniform row selection: the random mapping `P` is the `i`-th standard
/// basis row, so the result is row `i` of the composed matrix.
pub fn random_row_map<R: Rng>(x_new: &Tensor, rng: &mut R) -> (usize, Vec<f64>) {
    let d = x_new.shape()[0];
    let i = rng.random_range(0..d);
    (i, x_new.row(i).to_vec())
}

/// Residual-expansion crossover. Each offspring is a random row of its own
/// parent's composed representation, clamped to the unified space. Falls
/// back to SBX while the generator is untrained (flagged) and in `ResOnly`
/// mode (by design, not flagged).
pub fn residual_crossover<R: Rng>(
    p1: &Individual,
    p2: &Individual,
    net: &ResidualNet,
    mode: AlgorithmMode,
    sbx_eta: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    if !mode.uses_residual_crossover() {
        let (c1, c2) = sbx_crossover(&p1.genome, &p2.genome, sbx_eta, rng);
        return Ok((c1, c2, false));
    }
    if !net.is_trained() {
        let (c1, c2) = sbx_crossover(&p1.genome, &p2.genome, sbx_eta, rng);
        return Ok((c1, c2, true));
    }
    let mut children = Vec::with_capacity(2);
    for parent in [p1, p2] {
        let residual = net.vdsr_forward(&parent.genome)?;
        let composed = residual_compose(&parent.genome, &residual)?;
        let (_, mut row) = random_row_map(&composed, rng);
        for v in row.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        children.push(row);
    }
    let c2 = children.pop().expect("two children");
    let c1 = children.pop().expect("two children");
    Ok((c1, c2, false))
}

/// Skill factor for a new offspring: classifier argmax over the offspring's
/// own composed representation when available, otherwise vertical cultural
/// transmission from a random parent.
pub fn assign_skill_factor<R: Rng>(
    genome: &[f64],
    classifier: &SkillClassifier,
    net: &ResidualNet,
    parent_skills: (usize, usize),
    mode: AlgorithmMode,
    rng: &mut R,
) -> Result<usize> {
    if mode.uses_classifier() && classifier.is_trained() {
        let residual = net.vdsr_forward(genome)?;
        let composed = residual_compose(genome, &residual)?;
        let logits = classifier.logits(&composed)?;
        return Ok(argmax_tie_lowest(&logits));
    }
    Ok(if rng.random::<f64>() < 0.5 { parent_skills.0 } else { parent_skills.1 })
}

/// Clamps genes to `[0,1]`; NaN genes are resampled uniformly. Returns true
/// when a NaN repair happened.
pub fn boundary_repair<R: Rng>(genome: &mut [f64], rng: &mut R) -> bool {
    let mut resampled = false;
    for gene in genome.iter_mut() {
        if gene.is_nan() {
            *gene = rng.random::<f64>();
            resampled = true;
        } else {
            *gene = gene.clamp(0.0, 1.0);
        }
    }
    resampled
}

struct RetrainOutcome {
    summary: RetrainSummary,
}

/// One retraining round per Algorithm 2: residual generator first, then the
/// classifier on representations from the freshly trained generator.
fn retrain<R: Rng>(
    pop: &Population,
    vdsr: &mut ResidualNet,
    classifier: &mut SkillClassifier,
    config: &MfeaRlConfig,
    n_tasks: usize,
    rng: &mut R,
) -> Result<RetrainOutcome> {
    let groups = skill_groups(pop, n_tasks);
    let sample = balanced_sample(pop, &groups, rng);
    let pairs = vdsr_targets(pop, &groups, &sample, rng);
    let losses = train_vdsr(vdsr, &pairs, &config.vdsr_opts, rng)?;

    let mut summary = RetrainSummary {
        vdsr_loss_first: losses.first().copied().unwrap_or(f64::NAN),
        vdsr_loss_last: losses.last().copied().unwrap_or(f64::NAN),
        classifier_val_accuracy: None,
        classifier_epochs: None,
        classifier_skipped: false,
        eval_delta: 0,
    };

    if config.mode.uses_classifier() {
        let class_count = groups.len();
        if class_count >= 2 {
            let pairs = classifier_pairs(vdsr, &sample)?;
            let report = train_classifier(classifier, &pairs, &config.resnet_opts, rng)?;
            summary.classifier_val_accuracy = Some(report.best_accuracy);
            summary.classifier_epochs = Some(report.epochs_run);
        } else {
            summary.classifier_skipped = true;
        }
    }
    Ok(RetrainOutcome { summary })
}

/// Full residual-learning MFEA loop.
pub fn run_mfea_rl(
    problem: &MultitaskProblem,
    config: &MfeaRlConfig,
    seed: u64,
) -> Result<RunOutput> {
    config.validate()?;
    let start = std::time::Instant::now();
    let n = config.base.population_size;
    let n_tasks = problem.task_count();
    let mutation_rate = config.base.gene_mutation_rate(problem.unified_dim);
    let algorithm = config.algorithm_name();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counter = crate::benchmarks::EvalCounter::new();

    let mut vdsr = ResidualNet::new(config.vdsr_depth, config.vdsr_channels, &mut rng);
    let mut classifier =
        SkillClassifier::new(config.classifier_blocks, config.classifier_channels, n_tasks, &mut rng);

    let mut pop = init_population(problem, n, &mut rng);
    let mut best = vec![f64::INFINITY; n_tasks];
    for member in &mut pop.members {
        evaluate_on_skill_task(problem, member, &counter, &mut best)?;
    }
    update_ranks_and_fitness(&mut pop, n_tasks)?;

    let mut trace = vec![(counter.count(), best.clone())];
    let mut events = vec![RunEvent {
        algorithm: algorithm.into(),
        problem: problem.problem_id.clone(),
        seed,
        generation: 0,
        evals: counter.count(),
        best: best.clone(),
        fallback_crossovers: 0,
        repairs: 0,
        retrain: None,
    }];

    let mut generation = 0u64;
    while counter.count() + n as u64 <= config.base.max_evals {
        generation += 1;
        let mut fallback_crossovers = 0u64;
        let mut repairs = 0u64;

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut offspring = Vec::with_capacity(n);
        for pair in order.chunks_exact(2) {
            let p1 = &pop.members[pair[0]];
            let p2 = &pop.members[pair[1]];
            match assortative_mating(p1, p2, config.base.rmp, &mut rng) {
                MatingDecision::Crossover => {
                    let (g1, g2, fell_back) =
                        residual_crossover(p1, p2, &vdsr, config.mode, config.base.sbx_eta, &mut rng)?;
                    fallback_crossovers += fell_back as u64;
                    for mut genome in [g1, g2] {
                        repairs += boundary_repair(&mut genome, &mut rng) as u64;
                        let skill = assign_skill_factor(
                            &genome,
                            &classifier,
                            &vdsr,
                            (p1.skill_factor, p2.skill_factor),
                            config.mode,
                            &mut rng,
                        )?;
                        offspring.push(Individual::new(genome, skill, n_tasks));
                    }
                }
                MatingDecision::MutateEach => {
                    for parent in [p1, p2] {
                        let mut genome = polynomial_mutation(
                            &parent.genome,
                            config.base.mutation_eta,
                            mutation_rate,
                            &mut rng,
                        );
                        repairs += boundary_repair(&mut genome, &mut rng) as u64;
                        offspring.push(Individual::new(genome, parent.skill_factor, n_tasks));
                    }
                }
            }
        }

        let mut pool = pop.members;
        for mut child in offspring {
            evaluate_on_skill_task(problem, &mut child, &counter, &mut best)?;
            pool.push(child);
        }
        pop = Population {
            members: select_next_generation(pool, n, n_tasks)?,
            generation,
        };

        // Networks retrain after generations 1, 1 + interval, 1 + 2*interval,
        // ... so the first round sees a labeled, evaluated population.
        let mut retrain_summary = None;
        if (generation - 1) % config.retrain_interval == 0 {
            let evals_before = counter.count();
            let outcome = retrain(&pop, &mut vdsr, &mut classifier, config, n_tasks, &mut rng)?;
            let mut summary = outcome.summary;
            summary.eval_delta = counter.count() - evals_before;
            retrain_summary = Some(summary);
        }

        trace.push((counter.count(), best.clone()));
        events.push(RunEvent {
            algorithm: algorithm.into(),
            problem: problem.problem_id.clone(),
            seed,
            generation,
            evals: counter.count(),
            best: best.clone(),
            fallback_crossovers,
            repairs,
            retrain: retrain_summary,
        });
    }

    let records = finalize_records(algorithm, problem, seed, &trace, start.elapsed().as_secs_f64());
    Ok(RunOutput { records, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::BaseFunction;
    use crate::encoding::Task;

    fn two_task_problem(d: usize) -> MultitaskProblem {
        let mk = |id: usize| Task {
            id,
            dim: d,
            lower: vec![-10.0; d],
            upper: vec![10.0; d],
            base_function: BaseFunction::Sphere,
            shift: vec![0.0; d],
            rotation: Tensor::identity(d),
        };
        MultitaskProblem::new("two-sphere", vec![mk(0), mk(1)]).unwrap()
    }

    fn seeded_population(n: usize, d: usize, seed: u64) -> Population {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members = (0..n)
            .map(|i| {
                let genome: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let mut ind = Individual::new(genome, i % 2, 2);
                ind.factorial_costs[i % 2] = Some(rng.random::<f64>());
                ind
            })
            .collect();
        Population { members, generation: 0 }
    }

    #[test]
    fn row_map_returns_the_selected_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let x = Tensor::from_vec(&[3, 3], (0..9).map(|v| v as f64).collect()).unwrap();
        let (i, row) = random_row_map(&x, &mut rng);
        assert_eq!(row, x.row(i));
    }

    #[test]
    fn row_map_on_equal_rows_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let x = Tensor::broadcast_rows(&[0.4, 0.6], 2);
        for _ in 0..20 {
            let (_, row) = random_row_map(&x, &mut rng);
            assert_eq!(row, vec![0.4, 0.6]);
        }
    }

    #[test]
    fn row_map_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let d = 5;
        let x = Tensor::zeros(&[d, d]);
        let mut counts = vec![0usize; d];
        let draws = 10_000;
        for _ in 0..draws {
            let (i, _) = random_row_map(&x, &mut rng);
            counts[i] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.2).abs() <= 0.02, "row frequency {freq}");
        }
    }

    #[test]
    fn zero_head_crossover_is_identity_on_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut net = ResidualNet::new(3, 4, &mut rng);
        net.mark_trained();
        let p1 = Individual::new(vec![0.1, 0.9, 0.4, 0.6], 0, 2);
        let p2 = Individual::new(vec![0.8, 0.2, 0.5, 0.3], 1, 2);
        let (c1, c2, fell_back) =
            residual_crossover(&p1, &p2, &net, AlgorithmMode::Full, 2.0, &mut rng).unwrap();
        assert!(!fell_back);
        assert_eq!(c1, p1.genome);
        assert_eq!(c2, p2.genome);
    }

    #[test]
    fn untrained_net_falls_back_to_sbx() {
        let seed = 54;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ResidualNet::new(3, 4, &mut rng);
        assert!(!net.is_trained());
        let p1 = Individual::new(vec![0.2; 4], 0, 2);
        let p2 = Individual::new(vec![0.7; 4], 1, 2);

        let rng_state = rng.clone();
        let (c1, c2, fell_back) =
            residual_crossover(&p1, &p2, &net, AlgorithmMode::Full, 2.0, &mut rng).unwrap();
        assert!(fell_back);

        let mut replay = rng_state;
        let (e1, e2) = sbx_crossover(&p1.genome, &p2.genome, 2.0, &mut replay);
        assert_eq!(c1, e1);
        assert_eq!(c2, e2);
    }

    #[test]
    fn res_only_mode_uses_sbx_without_flagging() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut net = ResidualNet::new(3, 4, &mut rng);
        net.mark_trained();
        let p1 = Individual::new(vec![0.2; 4], 0, 2);
        let p2 = Individual::new(vec![0.7; 4], 1, 2);
        let (_, _, fell_back) =
            residual_crossover(&p1, &p2, &net, AlgorithmMode::ResOnly, 2.0, &mut rng).unwrap();
        assert!(!fell_back);
    }

    #[test]
    fn full_pipeline_replay_matches_oracle() {
        // Compose the crossover by hand on the same RNG stream.
        let seed = 56;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = ResidualNet::new(2, 4, &mut rng);
        let mut params = net.params_flat();
        for p in params.iter_mut() {
            if *p == 0.0 {
                *p = 0.05;
            }
        }
        net.set_params_flat(&params);
        net.mark_trained();
        let p1 = Individual::new(vec![0.3, 0.4, 0.5, 0.6], 0, 2);
        let p2 = Individual::new(vec![0.9, 0.1, 0.2, 0.8], 1, 2);

        let rng_state = rng.clone();
        let (c1, c2, _) =
            residual_crossover(&p1, &p2, &net, AlgorithmMode::Full, 2.0, &mut rng).unwrap();

        let mut replay = rng_state;
        let mut expected = Vec::new();
        for parent in [&p1, &p2] {
            let residual = net.vdsr_forward(&parent.genome).unwrap();
            let composed = residual_compose(&parent.genome, &residual).unwrap();
            let i = replay.random_range(0..4usize);
            let row: Vec<f64> = composed.row(i).iter().map(|v| v.clamp(0.0, 1.0)).collect();
            expected.push(row);
        }
        assert_eq!(c1, expected[0]);
        assert_eq!(c2, expected[1]);
    }

    #[test]
    fn skill_assignment_argmax_and_tie_rule() {
        assert_eq!(argmax_tie_lowest(&[0.2, 0.9]), 1);
        assert_eq!(argmax_tie_lowest(&[0.5, 0.5]), 0);
    }

    #[test]
    fn untrained_classifier_inherits_from_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let net = ResidualNet::new(2, 4, &mut rng);
        let clf = SkillClassifier::new(1, 4, 2, &mut rng);
        assert!(!clf.is_trained());
        let genome = vec![0.5; 4];
        for _ in 0..20 {
            let skill = assign_skill_factor(
                &genome,
                &clf,
                &net,
                (1, 1),
                AlgorithmMode::Full,
                &mut rng,
            )
            .unwrap();
            assert_eq!(skill, 1);
        }
    }

    #[test]
    fn vdsr_only_mode_ignores_trained_classifier() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let net = ResidualNet::new(2, 4, &mut rng);
        let mut clf = SkillClassifier::new(1, 4, 2, &mut rng);
        clf.mark_trained();
        let genome = vec![0.5; 4];
        for _ in 0..20 {
            let skill = assign_skill_factor(
                &genome,
                &clf,
                &net,
                (0, 0),
                AlgorithmMode::VdsrOnly,
                &mut rng,
            )
            .unwrap();
            assert_eq!(skill, 0);
        }
    }

    #[test]
    fn boundary_repair_clamps_and_resamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let mut genome = vec![-0.1, 0.5, 1.2];
        assert!(!boundary_repair(&mut genome, &mut rng));
        assert_eq!(genome, vec![0.0, 0.5, 1.0]);

        let mut fine = vec![0.2, 0.8];
        assert!(!boundary_repair(&mut fine, &mut rng));
        assert_eq!(fine, vec![0.2, 0.8]);

        let mut nans = vec![f64::NAN, f64::NAN];
        assert!(boundary_repair(&mut nans, &mut rng));
        assert!(nans.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn degenerate_group_target_is_broadcast() {
        // Task 1 has exactly one member, so every target row equals it.
        let mut pop = seeded_population(4, 3, 60);
        for (i, m) in pop.members.iter_mut().enumerate() {
            m.skill_factor = if i == 0 { 1 } else { 0 };
            m.factorial_costs = vec![None, None];
            m.factorial_costs[m.skill_factor] = Some(1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let net = ResidualNet::new(2, 4, &mut rng);
        let batch = build_training_batch(&pop, &net, 2, &mut rng).unwrap();
        let lone_genome = pop.members[0].genome.clone();
        let lone_target = batch
            .vdsr_pairs
            .iter()
            .find(|(x, _)| *x == lone_genome)
            .map(|(_, t)| t.clone())
            .expect("lone member sampled");
        let expected = Tensor::broadcast_rows(&lone_genome, 3);
        assert_eq!(lone_target.data(), expected.data());
    }

    #[test]
    fn balanced_population_gives_balanced_labels() {
        let pop = seeded_population(10, 3, 62);
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let net = ResidualNet::new(2, 4, &mut rng);
        let batch = build_training_batch(&pop, &net, 2, &mut rng).unwrap();
        let zeros = batch.resnet_pairs.iter().filter(|(_, l)| *l == 0).count();
        let ones = batch.resnet_pairs.iter().filter(|(_, l)| *l == 1).count();
        assert_eq!(zeros, 5);
        assert_eq!(ones, 5);
    }

    #[test]
    fn unbalanced_population_downsamples_majority() {
        let mut pop = seeded_population(10, 3, 64);
        for (i, m) in pop.members.iter_mut().enumerate() {
            m.skill_factor = if i < 7 { 0 } else { 1 };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let net = ResidualNet::new(2, 4, &mut rng);
        let batch = build_training_batch(&pop, &net, 2, &mut rng).unwrap();
        let zeros = batch.resnet_pairs.iter().filter(|(_, l)| *l == 0).count();
        let ones = batch.resnet_pairs.iter().filter(|(_, l)| *l == 1).count();
        assert_eq!(zeros, 3);
        assert_eq!(ones, 3);
    }

    #[test]
    fn batch_targets_replay_the_seeded_draw() {
        // Balanced population: no down-sampling happens, so the only RNG
        // consumption is one uniform index per target row, in member order.
        let pop = seeded_population(10, 4, 66);
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let net = ResidualNet::new(2, 4, &mut rng);

        let oracle_rng = rng.clone();
        let batch = build_training_batch(&pop, &net, 2, &mut rng).unwrap();

        let mut replay = oracle_rng;
        let groups = skill_groups(&pop, 2);
        let mut expected: Vec<(Vec<f64>, Tensor)> = Vec::new();
        for (task, group) in &groups {
            for &idx in group {
                let genome = pop.members[idx].genome.clone();
                let mut data = Vec::new();
                for _ in 0..4 {
                    let pick = group[replay.random_range(0..group.len())];
                    data.extend_from_slice(&pop.members[pick].genome);
                }
                let _ = task;
                expected.push((genome, Tensor::from_vec(&[4, 4], data).unwrap()));
            }
        }
        assert_eq!(batch.vdsr_pairs.len(), expected.len());
        for ((g, t), (eg, et)) in batch.vdsr_pairs.iter().zip(&expected) {
            assert_eq!(g, eg);
            assert_eq!(t.data(), et.data());
        }
    }

    #[test]
    fn every_target_row_is_a_population_genome() {
        let pop = seeded_population(10, 4, 68);
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        let net = ResidualNet::new(2, 4, &mut rng);
        let batch = build_training_batch(&pop, &net, 2, &mut rng).unwrap();
        for (genome, target) in &batch.vdsr_pairs {
            let skill = pop
                .members
                .iter()
                .find(|m| &m.genome == genome)
                .map(|m| m.skill_factor)
                .expect("sampled genome exists");
            let group: Vec<&Vec<f64>> = pop
                .members
                .iter()
                .filter(|m| m.skill_factor == skill)
                .map(|m| &m.genome)
                .collect();
            for r in 0..4 {
                let row = target.row(r).to_vec();
                assert!(group.iter().any(|g| **g == row));
            }
        }
    }

    #[test]
    fn run_mfea_rl_is_deterministic_and_budgeted() {
        let problem = two_task_problem(4);
        let mut config = MfeaRlConfig::desk_scale();
        config.base.population_size = 12;
        config.base.max_evals = 120;
        config.retrain_interval = 3;
        config.vdsr_opts.epochs = 2;
        config.resnet_opts.epochs = 3;
        let a = run_mfea_rl(&problem, &config, 11).unwrap();
        let b = run_mfea_rl(&problem, &config, 11).unwrap();
        assert_eq!(a.records.len(), 2);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.trace.len(), rb.trace.len());
            for (pa, pb) in ra.trace.iter().zip(&rb.trace) {
                assert_eq!(pa.evals, pb.evals);
                assert_eq!(pa.best.to_bits(), pb.best.to_bits());
            }
        }
        let last = a.events.last().unwrap();
        assert_eq!(last.evals, 120);
    }

    #[test]
    fn retraining_performs_no_function_evaluations() {
        let problem = two_task_problem(4);
        let mut config = MfeaRlConfig::desk_scale();
        config.base.population_size = 12;
        config.base.max_evals = 240;
        config.retrain_interval = 2;
        config.vdsr_opts.epochs = 1;
        config.resnet_opts.epochs = 2;
        let out = run_mfea_rl(&problem, &config, 13).unwrap();
        let retrains: Vec<_> = out.events.iter().filter_map(|e| e.retrain.as_ref()).collect();
        assert!(!retrains.is_empty());
        for summary in retrains {
            assert_eq!(summary.eval_delta, 0);
        }
        // Budget: evals advance by exactly N per generation.
        for pair in out.events.windows(2) {
            assert_eq!(pair[1].evals - pair[0].evals, 12);
        }
    }

    #[test]
    fn first_generation_flags_fallback_crossovers() {
        let problem = two_task_problem(4);
        let mut config = MfeaRlConfig::desk_scale();
        config.base.population_size = 16;
        config.base.max_evals = 64;
        config.base.rmp = 1.0; // force crossover on every pair
        config.vdsr_opts.epochs = 1;
        config.resnet_opts.epochs = 2;
        let out = run_mfea_rl(&problem, &config, 17).unwrap();
        let gen1 = &out.events[1];
        assert_eq!(gen1.generation, 1);
        assert_eq!(gen1.fallback_crossovers, 8);
        // After the end-of-generation-1 retraining, fallbacks stop.
        for event in &out.events[2..] {
            assert_eq!(event.fallback_crossovers, 0);
        }
    }

    #[test]
    fn full_mode_converges_on_sphere_pair() {
        let problem = two_task_problem(6);
        let mut reductions = Vec::new();
        for seed in 0..3u64 {
            let mut config = MfeaRlConfig::desk_scale();
            config.base.population_size = 50;
            config.base.max_evals = 5_000;
            config.vdsr_opts.epochs = 2;
            config.resnet_opts.epochs = 5;
            let out = run_mfea_rl(&problem, &config, 900 + seed).unwrap();
            for record in &out.records {
                let first = record.trace.first().unwrap().best;
                reductions.push(1.0 - record.final_best / first);
            }
        }
        let mean: f64 = reductions.iter().sum::<f64>() / reductions.len() as f64;
        assert!(mean >= 0.99, "mean reduction {mean}");
    }

    #[test]
    fn all_modes_complete_and_keep_valid_skills() {
        let problem = two_task_problem(4);
        for mode in [AlgorithmMode::Full, AlgorithmMode::VdsrOnly, AlgorithmMode::ResOnly] {
            let mut config = MfeaRlConfig::desk_scale();
            config.base.population_size = 12;
            config.base.max_evals = 120;
            config.retrain_interval = 3;
            config.vdsr_opts.epochs = 1;
            config.resnet_opts.epochs = 2;
            config.mode = mode;
            let out = run_mfea_rl(&problem, &config, 19).unwrap();
            assert_eq!(out.records.len(), 2);
            for record in &out.records {
                let mut prev = f64::INFINITY;
                for point in &record.trace {
                    assert!(point.best <= prev);
                    prev = point.best;
                }
            }
        }
    }
}
