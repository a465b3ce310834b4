//! Run configuration: hyperparameters, constraint settings, and output
//! options, loadable from TOML with every field optional.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::SystemConstraints;
use crate::error::{Error, Result};
use crate::error_model::CostWeights;
use crate::nces::{
    default_population_init, ConstraintConfig, EvolutionConfig, PlateauRule, StopRule,
};

/// Speed and acceleration limits without the control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemBounds {
    pub v_min: f64,
    pub v_max: f64,
    pub a_vmax: f64,
    pub a_lmax: f64,
}

impl Default for SystemBounds {
    fn default() -> Self {
        let c = SystemConstraints::default();
        SystemBounds {
            v_min: c.v_min,
            v_max: c.v_max,
            a_vmax: c.a_vmax,
            a_lmax: c.a_lmax,
        }
    }
}

/// Fully-resolved run configuration. Defaults reproduce the standard
/// hyperparameter set (η_α = 0.02, τ = 0.1, σ = 0.2, β = 0.84,
/// K_C = diag[0.15, 0.15, 0.1]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Built-in scenario name or path to a scenario TOML file.
    pub scenario: String,
    /// Learning rate η_α.
    pub eta_alpha: f64,
    /// Control step τ, s.
    pub tau: f64,
    /// Perturbation standard deviation σ.
    pub sigma: f64,
    /// Population adaptation factor β.
    pub beta: f64,
    pub cost_weights: CostWeights,
    pub constraint: ConstraintConfig,
    /// Iteration budget.
    pub iterations: usize,
    /// Override of the initial population size (default round(10 + 5·ln s)).
    pub pop_init: Option<usize>,
    /// Standard deviation of the initial controller weights.
    pub init_std: f64,
    /// Optional plateau stop on the mean sample fitness.
    pub plateau: Option<PlateauRule>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub system: SystemBounds,
    /// Override of the scenario's episode length, s.
    pub episode_length: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: "basic-linear".into(),
            eta_alpha: 0.02,
            tau: 0.1,
            sigma: 0.2,
            beta: 0.84,
            cost_weights: CostWeights::default(),
            constraint: ConstraintConfig::default(),
            iterations: 1000,
            pop_init: None,
            init_std: 0.05,
            plateau: None,
            seed: 0,
            out_dir: None,
            system: SystemBounds::default(),
            episode_length: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.cost_weights.validate()?;
        self.system_constraints().validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iteration budget must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.eta_alpha > 0.0) {
            return Err(Error::Config("sigma and eta_alpha must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config("beta must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn system_constraints(&self) -> SystemConstraints {
        SystemConstraints {
            v_min: self.system.v_min,
            v_max: self.system.v_max,
            a_vmax: self.system.a_vmax,
            a_lmax: self.system.a_lmax,
            tau: self.tau,
        }
    }

    /// Evolution hyperparameters for a controller with `param_count` weights.
    pub fn evolution_config(&self, param_count: usize) -> EvolutionConfig {
        let pop_init = self.pop_init.unwrap_or_else(|| default_population_init(param_count));
        EvolutionConfig {
            eta_alpha: self.eta_alpha,
            sigma: self.sigma,
            beta: self.beta,
            pop_init,
            pop_max: 4 * pop_init,
            init_std: self.init_std,
            seed: self.seed,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            max_iterations: self.iterations,
            plateau: self.plateau,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_standard_hyperparameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.eta_alpha, 0.02);
        assert_eq!(cfg.tau, 0.1);
        assert_eq!(cfg.sigma, 0.2);
        assert_eq!(cfg.beta, 0.84);
        assert_eq!(
            (cfg.cost_weights.k1, cfg.cost_weights.k2, cfg.cost_weights.k3),
            (0.15, 0.15, 0.1)
        );
        assert!(cfg.constraint.enabled);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg = RunConfig::from_toml_str("scenario = \"basic-spiral\"\nseed = 9\n").unwrap();
        assert_eq!(cfg.scenario, "basic-spiral");
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.eta_alpha, 0.02);
        assert_eq!(cfg.system.v_max, 0.8);
    }

    #[test]
    fn pop_init_override_flows_into_evolution_config() {
        let auto = RunConfig::default().evolution_config(112);
        assert_eq!(auto.pop_init, 34);
        assert_eq!(auto.pop_max, 136);
        let forced = RunConfig {
            pop_init: Some(50),
            ..Default::default()
        }
        .evolution_config(112);
        assert_eq!(forced.pop_init, 50);
        assert_eq!(forced.pop_max, 200);
    }

    #[test]
    fn bad_config_rejected() {
        let bad_beta = RunConfig {
            beta: 1.5,
            ..Default::default()
        };
        assert!(bad_beta.validate().is_err());
        let no_budget = RunConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(no_budget.validate().is_err());
    }
}
