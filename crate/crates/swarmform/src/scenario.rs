//! Experiment scenarios: target programs, initialization, event-based
//! formation switching, node-failure injection, and the synchronous episode
//! loop that ties plant, topology, error model and controller together.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dynamics::{
    step_missile, step_target, wrap_angle, ActuationCommand, MissileState, SystemConstraints,
    TargetCommand, TargetState,
};
use crate::error::{Error, Result};
use crate::error_model::{
    fitness_step, resultant_error, rotate_error, tracking_error, CostWeights, ErrorVector,
    NeighborView,
};
use crate::formation::{FormationPattern, NodeId, PatternSpec};
use crate::nces::{
    constraint_check, ConstraintConfig, FitnessFunction, IterationRecord, SampleOutcome,
    StopRule, TrainOutcome,
};
use crate::policy::{Observation, PolicyLayout, PolicyParams};
use crate::rng::{self, streams};
use crate::topology::{build_topology, elect_head, fail_nodes};
use crate::trace::{EpisodeTrace, Event, EventKind, StepRecord, TargetRecord};

/// Open-loop command program of the reference target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetProgram {
    Constant { v: f64, w: f64 },
    /// v(t) = v0 + v_rate·t, w(t) = w0 + w_rate·t.
    Spiral { v0: f64, v_rate: f64, w0: f64, w_rate: f64 },
    /// v constant, w(t) = w_amp·cos(w_freq·t).
    Sinusoid { v: f64, w_amp: f64, w_freq: f64 },
}

impl TargetProgram {
    /// Command at time `t`, clamped into the admissible band so the target
    /// always obeys its own constraints.
    pub fn command(&self, t: f64, c: &SystemConstraints) -> TargetCommand {
        let (v, w) = match *self {
            TargetProgram::Constant { v, w } => (v, w),
            TargetProgram::Spiral {
                v0,
                v_rate,
                w0,
                w_rate,
            } => (v0 + v_rate * t, w0 + w_rate * t),
            TargetProgram::Sinusoid { v, w_amp, w_freq } => (v, w_amp * (w_freq * t).cos()),
        };
        let v = v.clamp(c.v_min, c.v_max);
        let w_limit = c.a_lmax / v;
        TargetCommand {
            v_r: v,
            w_r: w.clamp(-w_limit, w_limit),
        }
    }
}

/// Initial missile placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// Exactly on the formation offsets around the target, headings and
    /// speeds matched to the target.
    Formation,
    /// Positions uniform in the box, headings uniform in (−π, π], speed 0.5.
    RandomBox {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
}

/// Two axis-aligned wall segments perpendicular to the y-axis with a gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    /// Wall line position on the y-axis, km.
    pub y: f64,
    pub gap_center: f64,
    pub gap_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    /// Base stage, active whenever no obstacle window is.
    Start,
    /// Active while the head is inside the obstacle's switch window.
    Obstacle { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStage {
    pub trigger: Trigger,
    pub pattern: PatternSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub time: f64,
    pub nodes: Vec<NodeId>,
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub n_missiles: usize,
    /// First stage must be the `start` trigger; later stages bind to
    /// obstacles. More than one stage implies the TS controller input.
    pub patterns: Vec<PatternStage>,
    pub target_start: TargetState,
    pub target_program: TargetProgram,
    pub init: InitSpec,
    #[serde(default)]
    pub failures: Vec<FailureEvent>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Obstacle detection range d_c; defaults to n·l_f of the base pattern.
    #[serde(default)]
    pub detection_range: Option<f64>,
    /// Distance past a wall at which the formation is restored, km.
    #[serde(default = "default_safe_distance")]
    pub safe_distance: f64,
    /// Episode length, s.
    pub episode_length: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_safe_distance() -> f64 {
    1.0
}

impl ScenarioSpec {
    /// TS input is present iff the scenario can switch formations.
    pub fn uses_ts(&self) -> bool {
        self.patterns.len() > 1
    }

    pub fn policy_layout(&self) -> PolicyLayout {
        PolicyLayout::new(self.uses_ts())
    }

    pub fn base_pattern_spec(&self) -> &PatternSpec {
        &self.patterns[0].pattern
    }

    /// Detection range d_c, defaulting to n·l_f of the base pattern.
    pub fn detection_range(&self) -> f64 {
        self.detection_range
            .unwrap_or(self.n_missiles as f64 * self.base_pattern_spec().l_f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_missiles < 2 {
            return Err(Error::Config("need at least 2 missiles".into()));
        }
        if !(self.episode_length > 0.0) {
            return Err(Error::Config("episode length must be positive".into()));
        }
        if self.patterns.is_empty() {
            return Err(Error::Config("at least one pattern stage required".into()));
        }
        if self.patterns[0].trigger != Trigger::Start {
            return Err(Error::Config("first pattern stage must use the start trigger".into()));
        }
        for (idx, stage) in self.patterns.iter().enumerate() {
            let built = stage.pattern.build()?;
            if built.len() != self.n_missiles {
                return Err(Error::Config(format!(
                    "pattern stage {idx} has {} nodes, scenario has {}",
                    built.len(),
                    self.n_missiles
                )));
            }
            match stage.trigger {
                Trigger::Start if idx > 0 => {
                    return Err(Error::Config("only the first stage may use start".into()));
                }
                Trigger::Obstacle { index } => {
                    let obstacle = self.obstacles.get(index).ok_or_else(|| {
                        Error::Config(format!("stage {idx} references missing obstacle {index}"))
                    })?;
                    if !(obstacle.gap_width > 0.0) {
                        return Err(Error::Config("obstacle gap width must be positive".into()));
                    }
                    // Geometric feasibility: the switched shape fits the gap.
                    if built.max_half_width() >= obstacle.gap_width / 2.0 {
                        return Err(Error::Config(format!(
                            "stage {idx} half-width {} does not fit gap {}",
                            built.max_half_width(),
                            obstacle.gap_width
                        )));
                    }
                }
                _ => {}
            }
        }
        for failure in &self.failures {
            if failure.time < 0.0 || failure.time > self.episode_length {
                return Err(Error::Config("failure time outside the episode".into()));
            }
            for &node in &failure.nodes {
                if node == 0 || node > self.n_missiles {
                    return Err(Error::Config(format!("failure names unknown node {node}")));
                }
            }
        }
        if let InitSpec::RandomBox {
            x_min,
            x_max,
            y_min,
            y_max,
        } = self.init
        {
            if !(x_max > x_min && y_max > y_min) {
                return Err(Error::Config("random init box must have positive area".into()));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::trace::write_atomic(path, self.to_toml_string()?.as_bytes())
    }
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "basic-linear",
    "basic-spiral",
    "move-into-formation",
    "switch-formation",
    "node-failure",
];

fn pentagon_stage() -> PatternStage {
    PatternStage {
        trigger: Trigger::Start,
        pattern: PatternSpec {
            kind: crate::formation::PatternKind::Polygon,
            n: 5,
            alpha_p: 0.0,
            l_f: 0.5,
        },
    }
}

/// The five built-in experiments.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    use crate::formation::PatternKind::Polygon;
    let quarter = std::f64::consts::FRAC_PI_4;
    let half = std::f64::consts::FRAC_PI_2;
    vec![
        // Five missiles hold a pentagon around a target flying diagonally.
        ScenarioSpec {
            name: "basic-linear".into(),
            n_missiles: 5,
            patterns: vec![pentagon_stage()],
            target_start: TargetState {
                x: 0.0,
                y: 0.0,
                heading: quarter,
            },
            target_program: TargetProgram::Constant { v: 0.5, w: 0.0 },
            init: InitSpec::Formation,
            failures: vec![],
            obstacles: vec![],
            detection_range: None,
            safe_distance: default_safe_distance(),
            episode_length: 40.0,
            seed: 0,
        },
        // Same swarm, decelerating/tightening spiral target.
        ScenarioSpec {
            name: "basic-spiral".into(),
            n_missiles: 5,
            patterns: vec![pentagon_stage()],
            target_start: TargetState {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
            target_program: TargetProgram::Spiral {
                v0: 0.65,
                v_rate: -0.01,
                w0: 0.1,
                w_rate: 0.01,
            },
            init: InitSpec::Formation,
            failures: vec![],
            obstacles: vec![],
            detection_range: None,
            safe_distance: default_safe_distance(),
            episode_length: 40.0,
            seed: 0,
        },
        // Random start in a 4 km × 3 km box south of a northbound target.
        ScenarioSpec {
            name: "move-into-formation".into(),
            n_missiles: 5,
            patterns: vec![pentagon_stage()],
            target_start: TargetState {
                x: 0.0,
                y: 0.0,
                heading: half,
            },
            target_program: TargetProgram::Constant { v: 0.5, w: 0.0 },
            init: InitSpec::RandomBox {
                x_min: -2.0,
                x_max: 2.0,
                y_min: -3.5,
                y_max: -0.5,
            },
            failures: vec![],
            obstacles: vec![],
            detection_range: None,
            safe_distance: default_safe_distance(),
            episode_length: 40.0,
            seed: 0,
        },
        // Two wall gaps on a northbound path: rotate through the first slit,
        // shrink through the second.
        ScenarioSpec {
            name: "switch-formation".into(),
            n_missiles: 5,
            patterns: vec![
                pentagon_stage(),
                PatternStage {
                    trigger: Trigger::Obstacle { index: 0 },
                    pattern: PatternSpec {
                        kind: Polygon,
                        n: 5,
                        alpha_p: -quarter,
                        l_f: 0.5,
                    },
                },
                PatternStage {
                    trigger: Trigger::Obstacle { index: 1 },
                    pattern: PatternSpec {
                        kind: Polygon,
                        n: 5,
                        alpha_p: 0.0,
                        l_f: 0.2,
                    },
                },
            ],
            target_start: TargetState {
                x: 0.0,
                y: 0.0,
                heading: half,
            },
            target_program: TargetProgram::Constant { v: 0.5, w: 0.0 },
            init: InitSpec::Formation,
            failures: vec![],
            obstacles: vec![
                Obstacle {
                    y: 6.0,
                    gap_center: 0.0,
                    gap_width: 1.0,
                },
                Obstacle {
                    y: 12.0,
                    gap_center: 0.0,
                    gap_width: 0.6,
                },
            ],
            detection_range: None,
            safe_distance: default_safe_distance(),
            episode_length: 40.0,
            seed: 0,
        },
        // Six-node polygon pursuing a sinusoidal target; head 1 and member 4
        // are lost at t = 20 s.
        ScenarioSpec {
            name: "node-failure".into(),
            n_missiles: 6,
            patterns: vec![PatternStage {
                trigger: Trigger::Start,
                pattern: PatternSpec {
                    kind: Polygon,
                    n: 6,
                    alpha_p: 0.0,
                    l_f: 0.5,
                },
            }],
            target_start: TargetState {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
            target_program: TargetProgram::Sinusoid {
                v: 0.5,
                w_amp: 0.3,
                w_freq: 0.15,
            },
            init: InitSpec::Formation,
            failures: vec![FailureEvent {
                time: 20.0,
                nodes: vec![1, 4],
            }],
            obstacles: vec![],
            detection_range: None,
            safe_distance: default_safe_distance(),
            episode_length: 40.0,
            seed: 0,
        },
    ]
}

pub fn builtin(name: &str) -> Option<ScenarioSpec> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

/// Resolve a scenario by built-in name or TOML path.
pub fn resolve_scenario(name_or_path: &str) -> Result<ScenarioSpec> {
    if let Some(spec) = builtin(name_or_path) {
        return Ok(spec);
    }
    let path = std::path::Path::new(name_or_path);
    if path.exists() {
        return ScenarioSpec::load(path);
    }
    Err(Error::Config(format!(
        "unknown scenario {name_or_path:?}; built-ins: {}",
        BUILTIN_NAMES.join(", ")
    )))
}

/// Switch window of one obstacle: the head has approached within the
/// detection range and has not yet passed the wall by the safe distance.
fn obstacle_window_active(
    head: &MissileState,
    obstacle: &Obstacle,
    detection_range: f64,
    safe_distance: f64,
) -> bool {
    let ahead = obstacle.y - head.y;
    ahead <= detection_range && ahead > -safe_distance
}

/// Broadcast transform signal: Some(stage) while an obstacle window is
/// active, None for the base formation. Resolution order follows the stage
/// list, so overlapping windows keep the earliest stage.
pub fn switch_signal(
    head: &MissileState,
    spec: &ScenarioSpec,
    detection_range: f64,
) -> Option<usize> {
    for (idx, stage) in spec.patterns.iter().enumerate() {
        if let Trigger::Obstacle { index } = stage.trigger {
            if obstacle_window_active(
                head,
                &spec.obstacles[index],
                detection_range,
                spec.safe_distance,
            ) {
                return Some(idx);
            }
        }
    }
    None
}

/// How run_episode executes.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeConfig<'a> {
    pub constraints: &'a SystemConstraints,
    pub weights: &'a CostWeights,
    /// `Some` enables the model-based rollout constraint (training mode).
    pub constraint: Option<&'a ConstraintConfig>,
    /// Record the full per-step trace (disabled inside training rollouts).
    pub record: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    /// Per-node episode return Σ_t J_i(t)·τ, indexed by node id − 1; dead
    /// nodes keep the return accumulated up to their failure.
    pub returns: Vec<f64>,
    pub trace: Option<EpisodeTrace>,
    pub early_terminated: bool,
    pub steps: usize,
}

fn initial_states(
    spec: &ScenarioSpec,
    pattern: &FormationPattern,
    c: &SystemConstraints,
) -> Vec<MissileState> {
    match spec.init {
        InitSpec::Formation => {
            let v0 = spec.target_program.command(0.0, c).v_r;
            (1..=spec.n_missiles)
                .map(|id| {
                    let o = pattern.offset(id);
                    MissileState {
                        x: spec.target_start.x + o[0],
                        y: spec.target_start.y + o[1],
                        heading: spec.target_start.heading,
                        speed: v0,
                    }
                })
                .collect()
        }
        InitSpec::RandomBox {
            x_min,
            x_max,
            y_min,
            y_max,
        } => (1..=spec.n_missiles)
            .map(|id| {
                use rand::Rng;
                let mut rng = rng::stream(spec.seed, &[streams::SCENARIO_INIT, id as u64]);
                MissileState {
                    x: rng.random_range(x_min..x_max),
                    y: rng.random_range(y_min..y_max),
                    heading: wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                    speed: 0.5,
                }
            })
            .collect(),
    }
}

/// Run one episode of the scenario with the given per-agent controllers.
///
/// Synchronous loop: failures and formation switches resolve first (the
/// topology is rebuilt only on those events), then every alive agent computes
/// its errors, fitness and command from the same state snapshot, then the
/// constraint indicator may truncate the rollout, then plant and target
/// integrate one step.
pub fn run_episode(
    spec: &ScenarioSpec,
    agents: &[PolicyParams],
    cfg: &EpisodeConfig<'_>,
) -> Result<EpisodeOutcome> {
    spec.validate()?;
    let c = cfg.constraints;
    let layout = spec.policy_layout();
    if agents.len() != spec.n_missiles {
        return Err(Error::Config(format!(
            "scenario has {} missiles, got {} parameter sets",
            spec.n_missiles,
            agents.len()
        )));
    }
    for a in agents {
        if a.layout != layout {
            return Err(Error::DimensionMismatch {
                expected: layout.inputs,
                actual: a.layout.inputs,
            });
        }
    }

    let patterns: Vec<FormationPattern> = spec
        .patterns
        .iter()
        .map(|stage| stage.pattern.build())
        .collect::<Result<_>>()?;
    let detection_range = spec.detection_range();
    let n = spec.n_missiles;
    let n_steps = (spec.episode_length / c.tau).round() as usize;

    let mut states = initial_states(spec, &patterns[0], c);
    let mut target = spec.target_start;
    let mut active_stage = 0usize;
    let mut topology = build_topology(&patterns[0], &(1..=n).collect::<Vec<_>>(), elect_head(&(1..=n).collect::<Vec<_>>())?)?;
    let mut commands = vec![ActuationCommand::default(); n];
    let mut errors = vec![ErrorVector::ZERO; n];
    let mut returns = vec![0.0; n];
    let mut failures_applied = vec![false; spec.failures.len()];
    let mut trace = cfg.record.then(EpisodeTrace::default);
    let mut events: Vec<Event> = Vec::new();
    let mut early_terminated = false;
    let mut steps = 0usize;

    for step in 0..n_steps {
        let time = step as f64 * c.tau;

        // Failure injection: topology rebuilds within the same step.
        for (fi, failure) in spec.failures.iter().enumerate() {
            if failures_applied[fi] || time + 1e-9 < failure.time {
                continue;
            }
            failures_applied[fi] = true;
            let dying: Vec<NodeId> = failure
                .nodes
                .iter()
                .copied()
                .filter(|&id| topology.is_alive(id))
                .collect();
            if dying.is_empty() {
                continue;
            }
            let previous_head = topology.head();
            topology = fail_nodes(&topology, &dying, &patterns[active_stage])?;
            events.push(Event {
                time,
                kind: EventKind::NodesFailed { nodes: dying },
            });
            if topology.head() != previous_head {
                events.push(Event {
                    time,
                    kind: EventKind::HeadChanged {
                        from: previous_head,
                        to: topology.head(),
                    },
                });
            }
            events.push(Event {
                time,
                kind: EventKind::TopologyRebuilt {
                    head: topology.head(),
                    alive: topology.alive().to_vec(),
                },
            });
        }

        // Event-based formation switching, decided by the head and broadcast
        // to every alive node within the same step.
        let head_state = states[topology.head() - 1];
        let desired_stage = switch_signal(&head_state, spec, detection_range).unwrap_or(0);
        if desired_stage != active_stage {
            active_stage = desired_stage;
            events.push(Event {
                time,
                kind: if active_stage == 0 {
                    EventKind::FormationRestored
                } else {
                    EventKind::FormationSwitched {
                        stage: active_stage,
                    }
                },
            });
            topology = build_topology(&patterns[active_stage], topology.alive(), topology.head())?;
            events.push(Event {
                time,
                kind: EventKind::TopologyRebuilt {
                    head: topology.head(),
                    alive: topology.alive().to_vec(),
                },
            });
        }
        let ts = spec.uses_ts().then_some(active_stage != 0);

        let pattern = &patterns[active_stage];
        let u_r = spec.target_program.command(time, c);

        // Synchronous pass: all observations and commands from one snapshot.
        for &id in topology.alive() {
            let is_head = id == topology.head();
            let view = NeighborView {
                neighbors: topology.neighbors_of(id),
                states: &states,
                commands: &commands,
                target_visible: is_head,
                target: is_head.then_some(&target),
                target_cmd: is_head.then_some(&u_r),
            };
            let (e, isolated) = tracking_error(id, pattern, &view);
            if isolated {
                events.push(Event {
                    time,
                    kind: EventKind::IsolatedNode { id },
                });
            }
            let e_ri = rotate_error(e, states[id - 1].heading);
            errors[id - 1] = e_ri;
            returns[id - 1] += fitness_step(&e_ri, cfg.weights) * c.tau;
            let obs = Observation {
                heading: states[id - 1].heading,
                speed: states[id - 1].speed,
                error: e_ri,
                ts,
            };
            commands[id - 1] = agents[id - 1].forward(&obs, c)?;
        }

        if let Some(t) = trace.as_mut() {
            t.target.push(TargetRecord {
                step,
                time,
                x: target.x,
                y: target.y,
                heading: target.heading,
                speed: u_r.v_r,
            });
            for &id in topology.alive() {
                t.records.push(StepRecord {
                    step,
                    time,
                    id,
                    state: states[id - 1],
                    error: errors[id - 1],
                    resultant: resultant_error(&errors[id - 1]),
                    command: commands[id - 1],
                    fitness: fitness_step(&errors[id - 1], cfg.weights),
                });
            }
        }
        steps = step + 1;

        // Model-based constraint: predict each agent's next error from the
        // commands just computed and terminate the rollout on ST = 1.
        if let Some(constraint) = cfg.constraint {
            if constraint.enabled {
                let mut delta_e = Vec::with_capacity(topology.len());
                for &id in topology.alive() {
                    let is_head = id == topology.head();
                    let view = NeighborView {
                        neighbors: topology.neighbors_of(id),
                        states: &states,
                        commands: &commands,
                        target_visible: is_head,
                        target: is_head.then_some(&target),
                        target_cmd: is_head.then_some(&u_r),
                    };
                    let rate =
                        crate::error_model::error_rate(id, &errors[id - 1], &view, &commands[id - 1], c)?;
                    let e = &errors[id - 1];
                    let predicted = [
                        e.e_x + rate[0] * c.tau,
                        e.e_y + rate[1] * c.tau,
                        e.e_theta + rate[2] * c.tau,
                    ];
                    delta_e.push([
                        predicted[0].abs() - e.e_x.abs(),
                        predicted[1].abs() - e.e_y.abs(),
                        predicted[2].abs() - e.e_theta.abs(),
                    ]);
                }
                if constraint_check(&delta_e, constraint) {
                    events.push(Event {
                        time,
                        kind: EventKind::EarlyTermination { step },
                    });
                    early_terminated = true;
                    break;
                }
            }
        }

        // Integrate plant and target.
        target = step_target(&target, &u_r, c)?;
        for &id in topology.alive() {
            let next = step_missile(&states[id - 1], &commands[id - 1], c);
            if !(next.x.is_finite() && next.y.is_finite() && next.heading.is_finite()) {
                return Err(Error::NonFiniteState { step, node: id });
            }
            states[id - 1] = next;
        }
    }

    if let Some(t) = trace.as_mut() {
        t.events = events;
        t.steps = steps;
    }
    Ok(EpisodeOutcome {
        returns,
        trace,
        early_terminated,
        steps,
    })
}

/// Fitness adapter: one jointly-perturbed sample = one full episode.
pub struct SwarmFitness {
    spec: ScenarioSpec,
    layout: PolicyLayout,
    constraints: SystemConstraints,
    weights: CostWeights,
    constraint: ConstraintConfig,
}

impl SwarmFitness {
    pub fn new(spec: ScenarioSpec, run: &RunConfig) -> Result<Self> {
        spec.validate()?;
        let layout = spec.policy_layout();
        Ok(SwarmFitness {
            layout,
            constraints: run.system_constraints(),
            weights: run.cost_weights,
            constraint: run.constraint,
            spec,
        })
    }

    pub fn layout(&self) -> PolicyLayout {
        self.layout
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }
}

impl FitnessFunction for SwarmFitness {
    fn evaluate(&self, params: &[Vec<f64>]) -> Result<SampleOutcome> {
        let agents: Vec<PolicyParams> = params
            .iter()
            .map(|p| PolicyParams::unflatten(self.layout, p))
            .collect::<Result<_>>()?;
        let outcome = run_episode(
            &self.spec,
            &agents,
            &EpisodeConfig {
                constraints: &self.constraints,
                weights: &self.weights,
                constraint: self.constraint.enabled.then_some(&self.constraint),
                record: false,
            },
        )?;
        Ok(SampleOutcome {
            fitness: outcome.returns,
            early_terminated: outcome.early_terminated,
        })
    }
}

/// Receive-from sets of the scenario's initial topology as 0-based agent
/// indices; these weight each agent's gradient throughout training.
pub fn initial_neighbor_sets(spec: &ScenarioSpec) -> Result<Vec<Vec<usize>>> {
    let pattern = spec.base_pattern_spec().build()?;
    let alive: Vec<NodeId> = (1..=spec.n_missiles).collect();
    let topology = build_topology(&pattern, &alive, elect_head(&alive)?)?;
    Ok((1..=spec.n_missiles)
        .map(|id| topology.neighbors_of(id).iter().map(|&j| j - 1).collect())
        .collect())
}

#[derive(Debug, Clone)]
pub struct ScenarioTrainOutcome {
    pub outcome: TrainOutcome,
    pub layout: PolicyLayout,
}

/// Train the per-agent controllers on a scenario. The run seed drives
/// perturbation sampling and parameter init; the scenario seed drives state
/// initialization inside episodes.
pub fn train_scenario<O: FnMut(&IterationRecord, &[Vec<f64>])>(
    spec: &ScenarioSpec,
    run: &RunConfig,
    observer: O,
) -> Result<ScenarioTrainOutcome> {
    let mut spec = spec.clone();
    if let Some(episode_length) = run.episode_length {
        spec.episode_length = episode_length;
    }
    spec.validate()?;
    let neighbor_sets = initial_neighbor_sets(&spec)?;
    let max_neighbors = neighbor_sets.iter().map(Vec::len).max().unwrap_or(0);
    let system = run.system_constraints();
    run.constraint
        .validate(max_neighbors, system.tau, system.v_max)?;
    let n_agents = spec.n_missiles;
    let fitness = SwarmFitness::new(spec, run)?;
    let layout = fitness.layout();
    let config = run.evolution_config(layout.param_count());
    let stop: StopRule = run.stop_rule();
    let outcome = crate::nces::train(
        &fitness,
        n_agents,
        layout.param_count(),
        &neighbor_sets,
        &config,
        &stop,
        observer,
    )?;
    Ok(ScenarioTrainOutcome { outcome, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyParams;
    use crate::trace::tail_stats;

    fn zero_agents(spec: &ScenarioSpec) -> Vec<PolicyParams> {
        (0..spec.n_missiles)
            .map(|_| PolicyParams::zeros(spec.policy_layout()))
            .collect()
    }

    fn episode_cfg<'a>(
        c: &'a SystemConstraints,
        w: &'a CostWeights,
        record: bool,
    ) -> EpisodeConfig<'a> {
        EpisodeConfig {
            constraints: c,
            weights: w,
            constraint: None,
            record,
        }
    }

    #[test]
    fn five_builtins_validate() {
        let all = builtin_scenarios();
        assert_eq!(all.len(), 5);
        for spec in &all {
            spec.validate().unwrap();
        }
        assert!(builtin("basic-linear").is_some());
        assert!(builtin("nope").is_none());
    }

    #[test]
    fn spiral_command_examples() {
        let c = SystemConstraints::default();
        let spec = builtin("basic-spiral").unwrap();
        let at0 = spec.target_program.command(0.0, &c);
        assert!((at0.v_r - 0.65).abs() < 1e-12);
        assert!((at0.w_r - 0.1).abs() < 1e-12);
        let at10 = spec.target_program.command(10.0, &c);
        assert!((at10.v_r - 0.55).abs() < 1e-12);
        assert!((at10.w_r - 0.2).abs() < 1e-12);
        // Late in the program the speed clamps at v_min and stays admissible.
        let at40 = spec.target_program.command(40.0, &c);
        assert_eq!(at40.v_r, c.v_min);
        assert!(at40.validate(&c).is_ok());
    }

    #[test]
    fn switch_trigger_distance_matches_detection_range() {
        let spec = builtin("switch-formation").unwrap();
        assert_eq!(spec.detection_range(), 2.5); // n·l_f = 5·0.5
        let mut head = MissileState {
            x: 0.0,
            y: spec.obstacles[0].y - 2.6,
            heading: 0.0,
            speed: 0.5,
        };
        assert_eq!(switch_signal(&head, &spec, spec.detection_range()), None);
        head.y = spec.obstacles[0].y - 2.5;
        assert_eq!(switch_signal(&head, &spec, spec.detection_range()), Some(1));
        // Past the wall by more than the safe distance: restored.
        head.y = spec.obstacles[0].y + spec.safe_distance + 0.01;
        assert_eq!(switch_signal(&head, &spec, spec.detection_range()), None);
        // No obstacles -> never switches.
        let plain = builtin("basic-linear").unwrap();
        assert_eq!(switch_signal(&head, &plain, plain.detection_range()), None);
    }

    #[test]
    fn random_box_init_is_inside_box_for_all_seeds() {
        let mut spec = builtin("move-into-formation").unwrap();
        let c = SystemConstraints::default();
        for seed in 0..32 {
            spec.seed = seed;
            let pattern = spec.patterns[0].pattern.build().unwrap();
            for s in initial_states(&spec, &pattern, &c) {
                assert!(s.x >= -2.0 && s.x < 2.0);
                assert!(s.y >= -3.5 && s.y < -0.5);
                assert!(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI);
                assert_eq!(s.speed, 0.5);
            }
        }
    }

    #[test]
    fn trace_has_one_record_per_alive_missile_per_step() {
        let spec = builtin("basic-linear").unwrap();
        let c = SystemConstraints::default();
        let w = CostWeights::default();
        let out = run_episode(&spec, &zero_agents(&spec), &episode_cfg(&c, &w, true)).unwrap();
        assert_eq!(out.steps, 400);
        let trace = out.trace.unwrap();
        assert_eq!(trace.records.len(), 400 * 5);
        assert_eq!(trace.target.len(), 400);
        assert!(!out.early_terminated);
        // Monotone time.
        assert!(trace.records.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn zero_policy_on_linear_target_keeps_formation() {
        // Perfect init, matched speeds, zero commands: open-loop formation
        // holds exactly under the shared explicit-Euler step.
        let spec = builtin("basic-linear").unwrap();
        let c = SystemConstraints::default();
        let w = CostWeights::default();
        let out = run_episode(&spec, &zero_agents(&spec), &episode_cfg(&c, &w, true)).unwrap();
        let trace = out.trace.unwrap();
        for r in &trace.records {
            assert!(r.resultant < 1e-9, "drift at step {}: {}", r.step, r.resultant);
        }
        // Per-agent return approaches the J = 1 bound.
        for ret in &out.returns {
            assert!((ret - 40.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_policy_open_loop_matches_hand_integration() {
        // With zero weights every missile flies a straight line at constant
        // speed while the spiral target turns away; the recorded states must
        // equal the hand-integrated open-loop motion and the error grows.
        let spec = builtin("basic-spiral").unwrap();
        let c = SystemConstraints::default();
        let w = CostWeights::default();
        let out = run_episode(&spec, &zero_agents(&spec), &episode_cfg(&c, &w, true)).unwrap();
        let trace = out.trace.unwrap();
        let pattern = spec.patterns[0].pattern.build().unwrap();
        let v0 = spec.target_program.command(0.0, &c).v_r;
        for r in &trace.records {
            let o = pattern.offset(r.id);
            let expect_x = spec.target_start.x + o[0]
                + v0 * spec.target_start.heading.cos() * r.time;
            let expect_y = spec.target_start.y + o[1]
                + v0 * spec.target_start.heading.sin() * r.time;
            assert!((r.state.x - expect_x).abs() < 1e-9, "step {}", r.step);
            assert!((r.state.y - expect_y).abs() < 1e-9);
            assert_eq!(r.state.speed, v0);
        }
        // The turning target leaves the straight-flying swarm behind.
        let last = tail_stats(&trace, 1.0).unwrap();
        assert!(last.mean_resultant > 1.0, "drift {}", last.mean_resultant);
    }

    #[test]
    fn node_failure_records_head_change_at_step_200() {
        let spec = builtin("node-failure").unwrap();
        let c = SystemConstraints::default();
        let w = CostWeights::default();
        let out = run_episode(&spec, &zero_agents(&spec), &episode_cfg(&c, &w, true)).unwrap();
        let trace = out.trace.unwrap();
        let failed_at: Vec<&Event> = trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::NodesFailed { .. }))
            .collect();
        assert_eq!(failed_at.len(), 1);
        assert_eq!(failed_at[0].time, 20.0);
        assert!(trace.events.iter().any(|e| matches!(
            e.kind,
            EventKind::HeadChanged { from: 1, to: 2 }
        )));
        // After the failure step no dead node appears in the trace.
        for r in &trace.records {
            if r.time >= 20.0 {
                assert!(r.id != 1 && r.id != 4);
            }
        }
        // Survivors keep full-length records.
        let survivor_records = trace.records.iter().filter(|r| r.id == 2).count();
        assert_eq!(survivor_records, 400);
    }

    #[test]
    fn switch_scenario_fires_and_restores() {
        let spec = builtin("switch-formation").unwrap();
        let c = SystemConstraints::default();
        let w = CostWeights::default();
        let out = run_episode(&spec, &zero_agents(&spec), &episode_cfg(&c, &w, true)).unwrap();
        let trace = out.trace.unwrap();
        let switches: Vec<usize> = trace
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::FormationSwitched { stage } => Some(stage),
                _ => None,
            })
            .collect();
        assert_eq!(switches, vec![1, 2]);
        let restores = trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::FormationRestored))
            .count();
        assert_eq!(restores, 2);
    }

    #[test]
    fn target_obeys_constraints_in_all_builtins() {
        let c = SystemConstraints::default();
        for spec in builtin_scenarios() {
            let steps = (spec.episode_length / c.tau).round() as usize;
            for step in 0..steps {
                let cmd = spec.target_program.command(step as f64 * c.tau, &c);
                cmd.validate(&c).unwrap_or_else(|e| {
                    panic!("{} violates target constraints at step {step}: {e}", spec.name)
                });
            }
        }
    }

    #[test]
    fn switched_patterns_fit_their_gaps() {
        let spec = builtin("switch-formation").unwrap();
        for stage in &spec.patterns[1..] {
            if let Trigger::Obstacle { index } = stage.trigger {
                let pattern = stage.pattern.build().unwrap();
                assert!(pattern.max_half_width() < spec.obstacles[index].gap_width / 2.0);
            }
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        let mut spec = builtin("move-into-formation").unwrap();
        spec.seed = 77;
        let c = SystemConstraints::default();
        let w = CostWeights::default();
        let a = run_episode(&spec, &zero_agents(&spec), &episode_cfg(&c, &w, true)).unwrap();
        let b = run_episode(&spec, &zero_agents(&spec), &episode_cfg(&c, &w, true)).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.trace.unwrap().records, b.trace.unwrap().records);
    }

    #[test]
    fn scenario_toml_round_trip() {
        for spec in builtin_scenarios() {
            let text = spec.to_toml_string().unwrap();
            let back = ScenarioSpec::from_toml_str(&text).unwrap();
            assert_eq!(spec, back);
        }
    }

    #[test]
    fn neighbor_sets_follow_initial_topology() {
        let spec = builtin("basic-linear").unwrap();
        let sets = initial_neighbor_sets(&spec).unwrap();
        assert_eq!(sets[0], Vec::<usize>::new()); // head
        assert_eq!(sets[1], vec![0, 2]); // node 2: head + node 3
        assert_eq!(sets[3], vec![0, 2]); // node 4: head + node 3 (tie break)
    }
}
