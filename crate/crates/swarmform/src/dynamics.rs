//! Plant models: second-order nonholonomic missile and first-order reference
//! target, integrated with explicit Euler under saturation constraints.
//!
//! Units are km, s, rad throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity in km/s²; acceleration limits are multiples of g.
pub const STANDARD_GRAVITY: f64 = 9.8e-3;

/// Wrap an angle to the half-open interval (−π, π], boundary mapped to +π.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = a.rem_euclid(two_pi); // [0, 2π)
    if w > std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

/// Kinematic state of one follower missile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissileState {
    /// Position, km.
    pub x: f64,
    pub y: f64,
    /// Heading, rad, wrapped to (−π, π].
    pub heading: f64,
    /// Speed, km/s, within [v_min, v_max].
    pub speed: f64,
}

/// Kinematic state of the reference target (virtual leader).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    /// Heading, rad, wrapped to (−π, π].
    pub heading: f64,
}

/// Saturated acceleration command for one missile: longitudinal and lateral.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuationCommand {
    /// Longitudinal (thrust) acceleration, km/s².
    pub a_v: f64,
    /// Lateral acceleration, km/s².
    pub a_l: f64,
}

/// Control command driving the first-order target model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetCommand {
    /// Speed, km/s.
    pub v_r: f64,
    /// Turn rate, rad/s.
    pub w_r: f64,
}

/// Physical limits and the control step shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConstraints {
    /// Minimum speed, km/s.
    pub v_min: f64,
    /// Maximum speed, km/s.
    pub v_max: f64,
    /// Longitudinal acceleration limit, km/s² (30 g).
    pub a_vmax: f64,
    /// Lateral acceleration limit, km/s² (40 g).
    pub a_lmax: f64,
    /// Control step, s.
    pub tau: f64,
}

impl Default for SystemConstraints {
    fn default() -> Self {
        SystemConstraints {
            v_min: 0.3,
            v_max: 0.8,
            a_vmax: 30.0 * STANDARD_GRAVITY,
            a_lmax: 40.0 * STANDARD_GRAVITY,
            tau: 0.1,
        }
    }
}

impl SystemConstraints {
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.v_min > 0.0
            && self.v_max > 0.0
            && self.a_vmax > 0.0
            && self.a_lmax > 0.0
            && self.tau > 0.0;
        if !all_positive {
            return Err(Error::Config(
                "system constraints must be strictly positive".into(),
            ));
        }
        if self.v_min >= self.v_max {
            return Err(Error::Config("v_min must be below v_max".into()));
        }
        Ok(())
    }
}

impl TargetCommand {
    /// A command is admissible when its speed lies in the plant's speed band
    /// and its lateral acceleration v_r·w_r does not exceed the follower limit.
    pub fn validate(&self, c: &SystemConstraints) -> Result<()> {
        if !(c.v_min..=c.v_max).contains(&self.v_r) {
            return Err(Error::InvalidTargetCommand(format!(
                "speed {} outside [{}, {}]",
                self.v_r, c.v_min, c.v_max
            )));
        }
        if (self.w_r * self.v_r).abs() > c.a_lmax + 1e-12 {
            return Err(Error::InvalidTargetCommand(format!(
                "lateral acceleration |{} * {}| exceeds {}",
                self.w_r, self.v_r, c.a_lmax
            )));
        }
        Ok(())
    }
}

/// One explicit-Euler step of the missile plant.
///
/// The increments all use the state at the start of the step; afterwards the
/// speed is clamped into [v_min, v_max] and the heading wrapped, so the
/// returned state is always feasible.
pub fn step_missile(
    state: &MissileState,
    cmd: &ActuationCommand,
    c: &SystemConstraints,
) -> MissileState {
    // heading rate a_l / V is singular at V = 0; unreachable while the clamp
    // below keeps V >= v_min > 0.
    debug_assert!(state.speed >= c.v_min - 1e-12, "speed below v_min");
    let x = state.x + state.speed * state.heading.cos() * c.tau;
    let y = state.y + state.speed * state.heading.sin() * c.tau;
    let heading = wrap_angle(state.heading + cmd.a_l / state.speed * c.tau);
    let speed = (state.speed + cmd.a_v * c.tau).clamp(c.v_min, c.v_max);
    MissileState {
        x,
        y,
        heading,
        speed,
    }
}

/// One explicit-Euler step of the target plant. Rejects inadmissible commands
/// (these can only come from a malformed scenario program).
pub fn step_target(
    state: &TargetState,
    cmd: &TargetCommand,
    c: &SystemConstraints,
) -> Result<TargetState> {
    cmd.validate(c)?;
    Ok(TargetState {
        x: state.x + cmd.v_r * state.heading.cos() * c.tau,
        y: state.y + cmd.v_r * state.heading.sin() * c.tau,
        heading: wrap_angle(state.heading + cmd.w_r * c.tau),
    })
}

/// Componentwise clamp of a raw acceleration pair to the actuation limits.
///
/// The tanh-scaled controller already respects the limits; this is the safety
/// barrier for non-policy inputs.
pub fn saturate(raw: (f64, f64), c: &SystemConstraints) -> ActuationCommand {
    ActuationCommand {
        a_v: raw.0.clamp(-c.a_vmax, c.a_vmax),
        a_l: raw.1.clamp(-c.a_lmax, c.a_lmax),
    }
}
