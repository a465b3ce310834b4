//! Bias-free two-layer perceptron controller.
//!
//! Inputs are the agent's own heading and speed plus its rotated error vector
//! (and a transform signal when the scenario switches formations); outputs
//! are the two acceleration commands, squashed by Tanh and scaled to the
//! actuation limits so the command is saturated by construction.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuationCommand, SystemConstraints};
use crate::error::{Error, Result};
use crate::error_model::ErrorVector;

/// Hidden-layer width of the controller.
pub const HIDDEN_WIDTH: usize = 16;
/// Output count: thrust and lateral acceleration.
pub const OUTPUTS: usize = 2;
/// Inputs without / with the transform signal.
pub const INPUTS_BASE: usize = 5;
pub const INPUTS_WITH_TS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyLayout {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl PolicyLayout {
    /// Standard layout; `with_ts` appends the transform-signal input.
    pub fn new(with_ts: bool) -> Self {
        PolicyLayout {
            inputs: if with_ts { INPUTS_WITH_TS } else { INPUTS_BASE },
            hidden: HIDDEN_WIDTH,
            outputs: OUTPUTS,
        }
    }

    /// Total weight count s = hidden·inputs + outputs·hidden.
    pub fn param_count(&self) -> usize {
        self.hidden * self.inputs + self.outputs * self.hidden
    }
}

/// One agent's observation at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub heading: f64,
    pub speed: f64,
    pub error: ErrorVector,
    /// Present iff the scenario declares formation switching.
    pub ts: Option<bool>,
}

impl Observation {
    fn write_inputs(&self, buf: &mut [f64]) -> usize {
        buf[0] = self.heading;
        buf[1] = self.speed;
        buf[2] = self.error.e_x;
        buf[3] = self.error.e_y;
        buf[4] = self.error.e_theta;
        match self.ts {
            Some(ts) => {
                buf[5] = if ts { 1.0 } else { 0.0 };
                6
            }
            None => 5,
        }
    }
}

/// Flattened MLP weights of one agent: w1 (hidden×inputs) then w2
/// (outputs×hidden), both row-major. No bias terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub layout: PolicyLayout,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PolicyParams {
    pub fn zeros(layout: PolicyLayout) -> Self {
        PolicyParams {
            layout,
            w1: vec![0.0; layout.hidden * layout.inputs],
            w2: vec![0.0; layout.outputs * layout.hidden],
        }
    }

    /// Canonical flattening: w1 row-major, then w2 row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout.param_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.w2);
        out
    }

    pub fn unflatten(layout: PolicyLayout, flat: &[f64]) -> Result<Self> {
        let expected = layout.param_count();
        if flat.len() != expected {
            return Err(Error::ParamLength {
                expected,
                actual: flat.len(),
            });
        }
        let split = layout.hidden * layout.inputs;
        Ok(PolicyParams {
            layout,
            w1: flat[..split].to_vec(),
            w2: flat[split..].to_vec(),
        })
    }

    /// Controller forward pass: Tanh(W₂·Sigmoid(W₁·z)) scaled to the limits.
    pub fn forward(&self, obs: &Observation, c: &SystemConstraints) -> Result<ActuationCommand> {
        let obs_dim = if obs.ts.is_some() {
            INPUTS_WITH_TS
        } else {
            INPUTS_BASE
        };
        if obs_dim != self.layout.inputs {
            return Err(Error::DimensionMismatch {
                expected: self.layout.inputs,
                actual: obs_dim,
            });
        }
        debug_assert!(self.layout.hidden <= 64 && self.layout.inputs <= 8);
        let mut input = [0.0f64; 8];
        let n_in = obs.write_inputs(&mut input);
        let mut hidden = [0.0f64; 64];
        for h in 0..self.layout.hidden {
            let row = &self.w1[h * n_in..(h + 1) * n_in];
            let mut acc = 0.0;
            for (w, z) in row.iter().zip(&input[..n_in]) {
                acc += w * z;
            }
            hidden[h] = sigmoid(acc);
        }
        let mut raw = [0.0f64; OUTPUTS];
        for (o, r) in raw.iter_mut().enumerate() {
            let row = &self.w2[o * self.layout.hidden..(o + 1) * self.layout.hidden];
            let mut acc = 0.0;
            for (w, h) in row.iter().zip(&hidden[..self.layout.hidden]) {
                acc += w * h;
            }
            *r = acc.tanh();
        }
        Ok(ActuationCommand {
            a_v: c.a_vmax * raw[0],
            a_l: c.a_lmax * raw[1],
        })
    }
}

/// On-disk format for trained controllers: a small header plus the flat
/// per-agent parameter arrays concatenated in agent order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub layout: PolicyLayout,
    pub scenario: String,
    pub seed: u64,
    pub n_agents: usize,
    pub params: Vec<f64>,
}

impl PolicyFile {
    pub fn from_agents(
        layout: PolicyLayout,
        scenario: &str,
        seed: u64,
        agents: &[Vec<f64>],
    ) -> Self {
        let mut params = Vec::with_capacity(agents.len() * layout.param_count());
        for a in agents {
            params.extend_from_slice(a);
        }
        PolicyFile {
            layout,
            scenario: scenario.to_string(),
            seed,
            n_agents: agents.len(),
            params,
        }
    }

    pub fn agents(&self) -> Result<Vec<PolicyParams>> {
        let s = self.layout.param_count();
        if self.params.len() != s * self.n_agents {
            return Err(Error::ParamLength {
                expected: s * self.n_agents,
                actual: self.params.len(),
            });
        }
        (0..self.n_agents)
            .map(|i| PolicyParams::unflatten(self.layout, &self.params[i * s..(i + 1) * s]))
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::trace::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn obs(heading: f64, speed: f64, e: [f64; 3]) -> Observation {
        Observation {
            heading,
            speed,
            error: ErrorVector {
                e_x: e[0],
                e_y: e[1],
                e_theta: e[2],
            },
            ts: None,
        }
    }

    #[test]
    fn zero_weights_zero_output() {
        let c = SystemConstraints::default();
        let p = PolicyParams::zeros(PolicyLayout::new(false));
        let u = p.forward(&obs(0.4, 0.5, [1.0, -2.0, 0.3]), &c).unwrap();
        assert_eq!((u.a_v, u.a_l), (0.0, 0.0));
    }

    #[test]
    fn param_counts() {
        assert_eq!(PolicyLayout::new(false).param_count(), 112);
        assert_eq!(PolicyLayout::new(true).param_count(), 128);
    }

    #[test]
    fn output_saturates_at_limits_for_huge_weights() {
        let c = SystemConstraints::default();
        let layout = PolicyLayout::new(false);
        let flat = vec![1e3; layout.param_count()];
        let p = PolicyParams::unflatten(layout, &flat).unwrap();
        let u = p.forward(&obs(0.0, 0.5, [1.0, 1.0, 1.0]), &c).unwrap();
        assert!((u.a_v - c.a_vmax).abs() < 1e-9);
        assert!((u.a_l - c.a_lmax).abs() < 1e-9);
    }

    #[test]
    fn flatten_round_trip_and_epsilon_shift() {
        let layout = PolicyLayout::new(true);
        let mut rng = crate::rng::stream(3, &[1]);
        let flat: Vec<f64> = (0..layout.param_count()).map(|_| rng.random::<f64>()).collect();
        let p = PolicyParams::unflatten(layout, &flat).unwrap();
        assert_eq!(p.flatten(), flat);

        let shifted: Vec<f64> = flat.iter().map(|v| v + 0.25).collect();
        let q = PolicyParams::unflatten(layout, &shifted).unwrap();
        for (a, b) in p.flatten().iter().zip(q.flatten().iter()) {
            assert!((b - a - 0.25).abs() < 1e-15);
        }

        assert!(PolicyParams::unflatten(layout, &flat[1..]).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let c = SystemConstraints::default();
        let p = PolicyParams::zeros(PolicyLayout::new(true));
        let mut o = obs(0.0, 0.5, [0.0; 3]);
        assert!(p.forward(&o, &c).is_err());
        o.ts = Some(true);
        assert!(p.forward(&o, &c).is_ok());
    }

    #[test]
    fn saturation_fuzz() {
        let c = SystemConstraints::default();
        let layout = PolicyLayout::new(false);
        let mut rng = crate::rng::stream(9, &[2]);
        for _ in 0..2000 {
            let flat: Vec<f64> = (0..layout.param_count())
                .map(|_| rng.random_range(-30.0..30.0))
                .collect();
            let p = PolicyParams::unflatten(layout, &flat).unwrap();
            let o = obs(
                rng.random_range(-3.2..3.2),
                rng.random_range(0.3..0.8),
                [
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-3.2..3.2),
                ],
            );
            let u = p.forward(&o, &c).unwrap();
            assert!(u.a_v.abs() <= c.a_vmax);
            assert!(u.a_l.abs() <= c.a_lmax);
        }
    }

    #[test]
    fn forward_is_lipschitz_in_single_weight() {
        let c = SystemConstraints::default();
        let layout = PolicyLayout::new(false);
        let mut rng = crate::rng::stream(17, &[4]);
        let flat: Vec<f64> = (0..layout.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let o = obs(0.5, 0.6, [0.4, -0.2, 0.1]);
        let base = PolicyParams::unflatten(layout, &flat)
            .unwrap()
            .forward(&o, &c)
            .unwrap();
        let delta = 1e-6;
        for idx in [0usize, 40, 111] {
            let mut bumped = flat.clone();
            bumped[idx] += delta;
            let u = PolicyParams::unflatten(layout, &bumped)
                .unwrap()
                .forward(&o, &c)
                .unwrap();
            // Inputs and weights bounded: the response to one weight is
            // finite-slope, no discontinuities.
            assert!((u.a_v - base.a_v).abs() < 100.0 * delta);
            assert!((u.a_l - base.a_l).abs() < 100.0 * delta);
        }
    }

    #[test]
    fn policy_file_round_trip() {
        let layout = PolicyLayout::new(false);
        let agents: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..layout.param_count()).map(|j| (i * 1000 + j) as f64).collect())
            .collect();
        let file = PolicyFile::from_agents(layout, "basic-linear", 7, &agents);
        let back = file.agents().unwrap();
        assert_eq!(back.len(), 3);
        for (params, flat) in back.iter().zip(agents.iter()) {
            assert_eq!(&params.flatten(), flat);
        }
    }
}
