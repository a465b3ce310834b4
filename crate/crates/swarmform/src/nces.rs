//! Natural co-evolutionary strategy.
//!
//! Every agent's parameter vector is perturbed simultaneously per sample; the
//! joint sample is evaluated once and each agent estimates its own natural
//! gradient from the sample fitnesses, weighting samples by the Gaussian
//! kernel density of its neighbors' perturbations. Population size adapts
//! from the evolution path (non-decreasing, bounded); a model-based rollout
//! constraint terminates episodes whose predicted error growth exceeds a
//! threshold.
//!
//! Population evaluation runs data-parallel under the `parallel` feature;
//! the sequential fallback produces bit-identical results because every
//! perturbation comes from a counter-addressed RNG stream and the gradient
//! reduction is an ordered fold.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Learning rate η_α.
    pub eta_alpha: f64,
    /// Perturbation standard deviation σ.
    pub sigma: f64,
    /// Population growth factor β ∈ (0, 1).
    pub beta: f64,
    /// Initial (and minimum) population size η_p(0).
    pub pop_init: usize,
    /// Maximum population size, 4·η_p(0) unless overridden.
    pub pop_max: usize,
    /// Standard deviation of the initial parameters (0 = start from zeros).
    pub init_std: f64,
    pub seed: u64,
}

/// Default initial population size: round(10 + 5·ln s) for s parameters.
pub fn default_population_init(param_count: usize) -> usize {
    (10.0 + 5.0 * (param_count as f64).ln()).round() as usize
}

impl EvolutionConfig {
    /// Standard hyperparameters with the population sized for `param_count`.
    pub fn for_param_count(param_count: usize, seed: u64) -> Self {
        let pop_init = default_population_init(param_count);
        EvolutionConfig {
            eta_alpha: 0.02,
            sigma: 0.2,
            beta: 0.84,
            pop_init,
            pop_max: 4 * pop_init,
            init_std: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.eta_alpha > 0.0) {
            return Err(Error::Config("sigma and eta_alpha must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config("beta must lie in (0, 1)".into()));
        }
        if self.pop_init < 2 || self.pop_max < self.pop_init {
            return Err(Error::Config(
                "population bounds must satisfy 2 <= pop_init <= pop_max".into(),
            ));
        }
        if self.init_std < 0.0 {
            return Err(Error::Config("init_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// How the ΔE entries aggregate into the termination indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintAggregation {
    /// Terminate only when every agent-component worsens beyond δ_s.
    #[default]
    Min,
    /// Terminate when any agent-component worsens beyond δ_s.
    Max,
}

/// Model-based rollout constraint settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub enabled: bool,
    /// Error-increment tolerance δ_s, km.
    pub delta_s: f64,
    pub aggregation: ConstraintAggregation,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            enabled: true,
            delta_s: 0.2,
            aggregation: ConstraintAggregation::Min,
        }
    }
}

impl ConstraintConfig {
    /// Upper bound on admissible δ_s: (2l+1)·τ·v_max where l is the largest
    /// neighbor count in the swarm.
    pub fn delta_s_bound(max_neighbors: usize, tau: f64, v_max: f64) -> f64 {
        (2.0 * max_neighbors as f64 + 1.0) * tau * v_max
    }

    pub fn validate(&self, max_neighbors: usize, tau: f64, v_max: f64) -> Result<()> {
        let bound = Self::delta_s_bound(max_neighbors, tau, v_max);
        if self.enabled && !(self.delta_s > 0.0 && self.delta_s < bound) {
            return Err(Error::Config(format!(
                "delta_s {} outside (0, {bound})",
                self.delta_s
            )));
        }
        Ok(())
    }
}

/// Termination indicator over the per-agent error-deviation columns
/// Δe_ri = |ê_ri| − |e_ri| (elementwise absolute values).
pub fn constraint_check(delta_e: &[[f64; 3]], cfg: &ConstraintConfig) -> bool {
    if !cfg.enabled || delta_e.is_empty() {
        return false;
    }
    let aggregate = delta_e
        .iter()
        .flat_map(|col| col.iter().copied())
        .reduce(match cfg.aggregation {
            ConstraintAggregation::Min => f64::min,
            ConstraintAggregation::Max => f64::max,
        })
        .unwrap();
    aggregate > cfg.delta_s
}

/// Per-agent fitness of one jointly-perturbed sample.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub fitness: Vec<f64>,
    pub early_terminated: bool,
}

/// A deterministic fitness evaluation of one joint parameter assignment.
pub trait FitnessFunction: Sync {
    fn evaluate(&self, params: &[Vec<f64>]) -> Result<SampleOutcome>;
}

/// Optimizer state carried between iterations.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    /// One parameter vector per agent.
    pub params: Vec<Vec<f64>>,
    /// Current population size η_p(t); fractional between iterations,
    /// rounded to the nearest integer for sampling.
    pub pop_size: f64,
    /// ρ_θ(t−1), absent before the first update.
    pub path_prev: Option<f64>,
    pub iteration: usize,
}

impl EvolutionState {
    /// Fresh state with parameters drawn from N(0, init_std²) per coordinate.
    pub fn init(n_agents: usize, param_count: usize, config: &EvolutionConfig) -> Self {
        let params = (0..n_agents)
            .map(|agent| {
                if config.init_std == 0.0 {
                    vec![0.0; param_count]
                } else {
                    let mut rng = rng::stream(config.seed, &[streams::PARAM_INIT, agent as u64]);
                    (0..param_count)
                        .map(|_| config.init_std * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                }
            })
            .collect();
        EvolutionState {
            params,
            pop_size: config.pop_init as f64,
            path_prev: None,
            iteration: 0,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.pop_size.round() as usize
    }
}

/// Draw the iteration's perturbations: `out[k][agent]` is ε_agent^k, i.i.d.
/// N(0, σ²I). Sample (iteration, k, agent) always maps to the same stream, so
/// the draw is independent of evaluation order.
pub fn sample_population(
    n_agents: usize,
    param_count: usize,
    m: usize,
    sigma: f64,
    seed: u64,
    iteration: usize,
) -> Vec<Vec<Vec<f64>>> {
    assert!(m >= 2, "population size must be at least 2");
    (0..m)
        .map(|k| {
            (0..n_agents)
                .map(|agent| {
                    let mut rng = rng::stream(
                        seed,
                        &[streams::PERTURBATION, iteration as u64, k as u64, agent as u64],
                    );
                    (0..param_count)
                        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// One agent's natural-gradient estimate.
///
/// Fitnesses are z-scored across the population, then each sample is weighted
/// by the product of Gaussian kernels exp(−‖ε_c‖²/(2σ²)) over the agent's
/// neighbors c; the kernel weights are renormalized to mean 1 across samples
/// (computed in log space) so the learning-rate scale stays independent of
/// the dimension. Zero fitness variance yields a zero gradient.
pub fn natural_gradient(
    fitnesses: &[f64],
    perturbations: &[Vec<f64>],
    neighbor_perturbations: &[Vec<&[f64]>],
    sigma: f64,
) -> Vec<f64> {
    let m = fitnesses.len();
    assert_eq!(perturbations.len(), m);
    assert_eq!(neighbor_perturbations.len(), m);
    assert!(m >= 2);
    let dim = perturbations[0].len();

    let mean = fitnesses.iter().sum::<f64>() / m as f64;
    let var = fitnesses.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / m as f64;
    if var == 0.0 {
        return vec![0.0; dim];
    }
    let std = var.sqrt();

    let log_weights: Vec<f64> = neighbor_perturbations
        .iter()
        .map(|per_neighbor| {
            let sum_norm2: f64 = per_neighbor
                .iter()
                .map(|eps| eps.iter().map(|e| e * e).sum::<f64>())
                .sum();
            -sum_norm2 / (2.0 * sigma * sigma)
        })
        .collect();
    let max_log = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_weights.iter().map(|lw| (lw - max_log).exp()).collect();
    let mean_weight = shifted.iter().sum::<f64>() / m as f64;

    let mut gradient = vec![0.0; dim];
    for k in 0..m {
        let coef = (fitnesses[k] - mean) / std * (shifted[k] / mean_weight);
        for (g, e) in gradient.iter_mut().zip(perturbations[k].iter()) {
            *g += coef * e;
        }
    }
    let scale = 1.0 / (m as f64 * sigma * sigma);
    for g in &mut gradient {
        *g *= scale;
    }
    gradient
}

/// Gradient-ascent update θ_i += η_α·g_i for every agent; the iteration
/// counter advances. Non-finite gradients abort the run.
pub fn update_params(
    state: &mut EvolutionState,
    gradients: &[Vec<f64>],
    eta_alpha: f64,
) -> Result<()> {
    assert_eq!(gradients.len(), state.params.len());
    for g in gradients {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: state.iteration + 1,
                message: "non-finite gradient".into(),
            });
        }
    }
    for (theta, g) in state.params.iter_mut().zip(gradients.iter()) {
        for (t, gv) in theta.iter_mut().zip(g.iter()) {
            *t += eta_alpha * gv;
        }
    }
    state.iteration += 1;
    Ok(())
}

/// Evolution path ρ_θ(t): accumulated squared Mahalanobis distance of the
/// parameter movement under the sampling covariance σ²I, summed over agents.
pub fn evolution_path(before: &[Vec<f64>], after: &[Vec<f64>], sigma: f64) -> f64 {
    before
        .iter()
        .zip(after.iter())
        .map(|(b, a)| {
            b.iter()
                .zip(a.iter())
                .map(|(x, y)| (y - x).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (sigma * sigma)
}

/// Population-size adaptation from consecutive evolution-path values.
///
/// The first iteration keeps η_p(0); a stalled path (ρ = 0) keeps the
/// previous size; otherwise η_p(t) = η_p(t−1)(β + (1−β)ρ(t−1)/ρ(t)), clipped
/// non-decreasing into [pop_init, pop_max].
pub fn adapt_population(
    pop_prev: f64,
    rho_prev: Option<f64>,
    rho_now: f64,
    config: &EvolutionConfig,
) -> f64 {
    let rho_prev = match rho_prev {
        None => return config.pop_init as f64,
        Some(r) => r,
    };
    if rho_now == 0.0 {
        return pop_prev;
    }
    let raw = pop_prev * (config.beta + (1.0 - config.beta) * rho_prev / rho_now);
    raw.max(pop_prev)
        .clamp(config.pop_init as f64, config.pop_max as f64)
}

/// One line of the convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Samples evaluated this iteration (rounded η_p(t)).
    pub pop_size: usize,
    /// Mean per-agent sample fitness across the population.
    pub mean_fitness: f64,
    pub evolution_path: f64,
    /// Fraction of rollouts cut short by the termination indicator.
    pub early_termination_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauRule {
    /// Compare the mean fitness of the two most recent windows of this size.
    pub window: usize,
    /// Stop when the improvement falls below this.
    pub min_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iterations: usize,
    pub plateau: Option<PlateauRule>,
}

impl StopRule {
    pub fn iterations(max_iterations: usize) -> Self {
        StopRule {
            max_iterations,
            plateau: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    IterationBudget,
    Plateau,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Vec<Vec<f64>>,
    pub log: Vec<IterationRecord>,
    pub stop: StopReason,
}

/// Evaluate the jointly-perturbed samples one after another.
pub fn evaluate_population_sequential<F: FitnessFunction>(
    fitness: &F,
    joint_samples: &[Vec<Vec<f64>>],
) -> Result<Vec<SampleOutcome>> {
    joint_samples.iter().map(|p| fitness.evaluate(p)).collect()
}

/// Evaluate the jointly-perturbed samples across the rayon pool. Results are
/// collected in sample order, so the downstream reduction sees the same
/// sequence as the sequential path.
#[cfg(feature = "parallel")]
pub fn evaluate_population_parallel<F: FitnessFunction>(
    fitness: &F,
    joint_samples: &[Vec<Vec<f64>>],
) -> Result<Vec<SampleOutcome>> {
    joint_samples
        .par_iter()
        .map(|p| fitness.evaluate(p))
        .collect()
}

fn evaluate_population<F: FitnessFunction>(
    fitness: &F,
    joint_samples: &[Vec<Vec<f64>>],
) -> Result<Vec<SampleOutcome>> {
    #[cfg(feature = "parallel")]
    {
        evaluate_population_parallel(fitness, joint_samples)
    }
    #[cfg(not(feature = "parallel"))]
    {
        evaluate_population_sequential(fitness, joint_samples)
    }
}

/// Run the full training loop: sample → evaluate co-perturbed population →
/// per-agent natural gradient → ascent update → evolution path → population
/// adaptation, until the stop rule fires. `neighbor_sets[i]` lists the agent
/// indices whose perturbations weight agent i's gradient (the receive-from
/// sets of the scenario's initial topology). `observer` sees each iteration
/// record together with the just-updated parameters.
pub fn train<F, O>(
    fitness: &F,
    n_agents: usize,
    param_count: usize,
    neighbor_sets: &[Vec<usize>],
    config: &EvolutionConfig,
    stop: &StopRule,
    mut observer: O,
) -> Result<TrainOutcome>
where
    F: FitnessFunction,
    O: FnMut(&IterationRecord, &[Vec<f64>]),
{
    config.validate()?;
    assert_eq!(neighbor_sets.len(), n_agents);
    let mut state = EvolutionState::init(n_agents, param_count, config);
    let mut log: Vec<IterationRecord> = Vec::new();

    let stop_reason = loop {
        if state.iteration >= stop.max_iterations {
            break StopReason::IterationBudget;
        }
        if let Some(plateau) = &stop.plateau {
            if plateaued(&log, plateau) {
                break StopReason::Plateau;
            }
        }
        let iteration = state.iteration + 1;
        let m = state.sample_count();
        let perturbations =
            sample_population(n_agents, param_count, m, config.sigma, config.seed, iteration);

        let joint: Vec<Vec<Vec<f64>>> = perturbations
            .iter()
            .map(|sample| {
                sample
                    .iter()
                    .zip(state.params.iter())
                    .map(|(eps, theta)| {
                        theta
                            .iter()
                            .zip(eps.iter())
                            .map(|(t, e)| t + e)
                            .collect::<Vec<f64>>()
                    })
                    .collect()
            })
            .collect();
        let outcomes = evaluate_population(fitness, &joint)?;

        let mut fitness_sum = 0.0;
        for outcome in &outcomes {
            for &f in &outcome.fitness {
                if !f.is_finite() {
                    return Err(Error::Divergence {
                        iteration,
                        message: "non-finite fitness".into(),
                    });
                }
                fitness_sum += f;
            }
        }
        let early_rate =
            outcomes.iter().filter(|o| o.early_terminated).count() as f64 / m as f64;

        let gradients: Vec<Vec<f64>> = (0..n_agents)
            .map(|agent| {
                let fitnesses: Vec<f64> =
                    outcomes.iter().map(|o| o.fitness[agent]).collect();
                let own: Vec<Vec<f64>> =
                    perturbations.iter().map(|s| s[agent].clone()).collect();
                let neighbors: Vec<Vec<&[f64]>> = perturbations
                    .iter()
                    .map(|s| {
                        neighbor_sets[agent]
                            .iter()
                            .map(|&c| s[c].as_slice())
                            .collect()
                    })
                    .collect();
                natural_gradient(&fitnesses, &own, &neighbors, config.sigma)
            })
            .collect();

        let before = state.params.clone();
        update_params(&mut state, &gradients, config.eta_alpha)?;
        let rho = evolution_path(&before, &state.params, config.sigma);
        let adapted = adapt_population(state.pop_size, state.path_prev, rho, config);
        debug_assert!(
            adapted >= state.pop_size
                && adapted >= config.pop_init as f64
                && adapted <= config.pop_max as f64,
            "population adaptation must be non-decreasing within bounds"
        );
        state.pop_size = adapted;
        state.path_prev = Some(rho);

        let record = IterationRecord {
            iteration,
            pop_size: m,
            mean_fitness: fitness_sum / (m * n_agents) as f64,
            evolution_path: rho,
            early_termination_rate: early_rate,
        };
        observer(&record, &state.params);
        log.push(record);
    };

    Ok(TrainOutcome {
        params: state.params,
        log,
        stop: stop_reason,
    })
}

fn plateaued(log: &[IterationRecord], rule: &PlateauRule) -> bool {
    let w = rule.window;
    if w == 0 || log.len() < 2 * w {
        return false;
    }
    let mean = |records: &[IterationRecord]| {
        records.iter().map(|r| r.mean_fitness).sum::<f64>() / records.len() as f64
    };
    let recent = mean(&log[log.len() - w..]);
    let previous = mean(&log[log.len() - 2 * w..log.len() - w]);
    recent - previous < rule.min_delta
}
