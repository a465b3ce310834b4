//! Displacement-based formation/tracking error, its rotated form, the
//! discrete one-step error dynamics, and the exponential step fitness.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    wrap_angle, ActuationCommand, MissileState, SystemConstraints, TargetCommand, TargetState,
};
use crate::error::{Error, Result};
use crate::formation::{FormationPattern, NodeId};

/// Rotated error vector of one agent, expressed in its body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorVector {
    pub e_x: f64,
    pub e_y: f64,
    /// Wrapped to (−π, π].
    pub e_theta: f64,
}

impl ErrorVector {
    pub const ZERO: ErrorVector = ErrorVector {
        e_x: 0.0,
        e_y: 0.0,
        e_theta: 0.0,
    };

    pub fn to_array(self) -> [f64; 3] {
        [self.e_x, self.e_y, self.e_theta]
    }
}

/// Euclidean norm of the rotated error.
pub fn resultant_error(e: &ErrorVector) -> f64 {
    (e.e_x * e.e_x + e.e_y * e.e_y + e.e_theta * e.e_theta).sqrt()
}

/// Positive weights of the quadratic form inside the step fitness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            k1: 0.15,
            k2: 0.15,
            k3: 0.1,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("cost weights must be positive".into()))
        }
    }
}

/// What agent `i` can sense at one step: its receive-from set, a snapshot of
/// all states and last commands (indexed by node id − 1), and the target when
/// it is the cluster head.
#[derive(Debug, Clone, Copy)]
pub struct NeighborView<'a> {
    /// N_i, node ids this agent receives from.
    pub neighbors: &'a [NodeId],
    /// Snapshot of every missile state, indexed by id − 1.
    pub states: &'a [MissileState],
    /// Commands applied this step, indexed by id − 1.
    pub commands: &'a [ActuationCommand],
    /// ζ_i: true iff this agent is the cluster head.
    pub target_visible: bool,
    pub target: Option<&'a TargetState>,
    pub target_cmd: Option<&'a TargetCommand>,
}

/// Global-frame tracking error of agent `id`:
/// e_i = Σ_{j∈N_i} [(P_i − P_j) − (X_i − X_j)] + ζ_i (X_r + P_i − X_i),
/// with every heading difference wrapped before accumulation.
///
/// Returns the error and an `isolated` flag; an alive node with no neighbors
/// and no target view contributes zero error, which indicates a topology bug
/// upstream and is surfaced as a diagnostic event by the episode loop.
pub fn tracking_error(
    id: NodeId,
    pattern: &FormationPattern,
    view: &NeighborView<'_>,
) -> ([f64; 3], bool) {
    let own = &view.states[id - 1];
    let p_i = pattern.offset(id);
    let mut e = [0.0; 3];
    for &j in view.neighbors {
        let other = &view.states[j - 1];
        let p_j = pattern.offset(j);
        e[0] += (p_i[0] - p_j[0]) - (own.x - other.x);
        e[1] += (p_i[1] - p_j[1]) - (own.y - other.y);
        e[2] += wrap_angle(other.heading - own.heading);
    }
    if view.target_visible {
        let target = view.target.expect("head view must carry the target state");
        e[0] += target.x + p_i[0] - own.x;
        e[1] += target.y + p_i[1] - own.y;
        e[2] += wrap_angle(target.heading - own.heading);
    }
    let isolated = view.neighbors.is_empty() && !view.target_visible;
    (e, isolated)
}

/// Rotate a global-frame error into the agent's body frame: e_ri = R₃(−α_i)e.
pub fn rotate_error(e: [f64; 3], alpha_i: f64) -> ErrorVector {
    let (s, c) = alpha_i.sin_cos();
    ErrorVector {
        e_x: c * e[0] + s * e[1],
        e_y: -s * e[0] + c * e[1],
        e_theta: wrap_angle(e[2]),
    }
}

/// Discrete one-step error dynamics:
/// ė_ri = G_i·u_i + Σ_{j∈N_i} F_ij·u_j + D_i·u_r·ζ_i + H_i,
/// a hybrid construction whose thrust columns carry the control step τ so
/// that e_ri + ė_ri·τ predicts the next-step error to second order.
///
/// Fails when any involved speed is below v_min (plant invariant violated
/// upstream) or when the head's target command is missing.
pub fn error_rate(
    id: NodeId,
    e_ri: &ErrorVector,
    view: &NeighborView<'_>,
    u_i: &ActuationCommand,
    c: &SystemConstraints,
) -> Result<[f64; 3]> {
    let own = &view.states[id - 1];
    let v_i = own.speed;
    if v_i < c.v_min - 1e-12 {
        return Err(Error::PlantInvariant(format!(
            "agent {id} speed {v_i} below v_min"
        )));
    }
    let count = view.neighbors.len() as f64;
    let xi = if view.target_visible { 1.0 } else { 0.0 };
    let l_xi = count + xi;

    // G_i u_i
    let mut rate = [
        -c.tau * l_xi * u_i.a_v + e_ri.e_y / v_i * u_i.a_l,
        -e_ri.e_x / v_i * u_i.a_l,
        -l_xi / v_i * u_i.a_l,
    ];

    // Σ F_ij u_j + H_i neighbor terms
    rate[0] -= l_xi * v_i;
    for &j in view.neighbors {
        let other = &view.states[j - 1];
        let v_j = other.speed;
        if v_j < c.v_min - 1e-12 {
            return Err(Error::PlantInvariant(format!(
                "neighbor {j} speed {v_j} below v_min"
            )));
        }
        let theta_ji = other.heading - own.heading;
        let u_j = &view.commands[j - 1];
        rate[0] += c.tau * theta_ji.cos() * u_j.a_v + theta_ji.cos() * v_j;
        rate[1] += c.tau * theta_ji.sin() * u_j.a_v + theta_ji.sin() * v_j;
        rate[2] += u_j.a_l / v_j;
    }

    // D_i u_r
    if view.target_visible {
        let target = view.target.expect("head view must carry the target state");
        let u_r = view
            .target_cmd
            .ok_or_else(|| Error::PlantInvariant("head view lacks the target command".into()))?;
        let theta_hat = target.heading - own.heading;
        rate[0] += xi * theta_hat.cos() * u_r.v_r;
        rate[1] += xi * theta_hat.sin() * u_r.v_r;
        rate[2] += xi * u_r.w_r;
    }
    Ok(rate)
}

/// Step fitness J = exp(−eᵀ K_C e) ∈ (0, 1], equal to 1 iff e = 0.
pub fn fitness_step(e: &ErrorVector, weights: &CostWeights) -> f64 {
    (-(weights.k1 * e.e_x * e.e_x + weights.k2 * e.e_y * e.e_y + weights.k3 * e.e_theta * e.e_theta))
        .exp()
}
