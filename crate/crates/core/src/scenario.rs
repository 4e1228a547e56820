//! Scenario configuration: TOML schema, validation, and bundled fixtures.
//!
//! Vehicle ids are 1-based in configuration files and converted to 0-based
//! indices exactly once, here. Validation enforces every structural
//! invariant up front so the simulation pipeline can assume a coherent
//! scenario: connected formation graph, positive weights, radii ordering,
//! and initial separations at least `r_i + r_j + epsilon`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::collision::{AvoidanceStrategy, SafetyConfig};
use crate::error::{Error, Result};
use crate::flat::FlatTeamState;
use crate::flatness::QuadrotorParams;
use crate::graph::{FormationEdge, FormationSpec};
use crate::tracker::LawVariant;

/// Fully validated scenario, ready to simulate.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub formation: FormationSpec,
    pub safety: SafetyConfig,
    pub quadrotor: QuadrotorParams,
    pub initial_state: FlatTeamState,
    /// Planning horizon in s.
    pub t_f: f64,
    /// Simulation step in s.
    pub dt: f64,
    /// Riccati integration step in s.
    pub riccati_step: f64,
    /// Initial-separation margin above `r_i + r_j` in m.
    pub epsilon: f64,
    /// Every how many simulation steps a CSV row is emitted.
    pub output_stride: usize,
    pub law_variant: LawVariant,
    /// Per-vehicle running tracking weights.
    pub zeta: Vec<f64>,
    /// Per-vehicle terminal tracking weights.
    pub delta: Vec<f64>,
    /// Per-vehicle tracking control weights.
    pub eta: Vec<f64>,
}

impl ScenarioConfig {
    pub fn n_uavs(&self) -> usize {
        self.formation.vertex_count()
    }

    /// Parse and validate a TOML scenario.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("scenario parse failed: {e}")))?;
        raw.validate()
    }

    /// Serialize back to TOML. Parsing the output reproduces this config.
    pub fn to_toml_string(&self) -> String {
        let raw = RawConfig::from_config(self);
        toml::to_string_pretty(&raw).expect("scenario serialization cannot fail")
    }
}

/// Raw serde mirror of the TOML schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    quadrotor: QuadrotorParams,
    safety: RawSafety,
    formation: RawFormation,
    tracking: RawTracking,
    #[serde(rename = "uavs")]
    uavs: Vec<RawUavState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    t_f: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    /// Defaults to `t_f / 10000`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    riccati_step: Option<f64>,
    #[serde(default = "default_strategy")]
    strategy: String,
    #[serde(default = "default_stride")]
    output_stride: usize,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_variant")]
    law_variant: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSafety {
    avoidance_radius: Vec<f64>,
    reaction_radius: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFormation {
    vertex_count: usize,
    gamma: Vec<f64>,
    #[serde(default)]
    edges: Vec<RawEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    /// 1-based vehicle id.
    tail: usize,
    /// 1-based vehicle id.
    head: usize,
    mu: f64,
    omega: f64,
    offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTracking {
    zeta: Vec<f64>,
    delta: Vec<f64>,
    eta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUavState {
    position: [f64; 3],
    #[serde(default)]
    velocity: [f64; 3],
    #[serde(default)]
    acceleration: [f64; 3],
    #[serde(default)]
    yaw: f64,
    #[serde(default)]
    yaw_rate: f64,
    #[serde(default)]
    yaw_accel: f64,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_strategy() -> String {
    "basic".into()
}
fn default_stride() -> usize {
    10
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_variant() -> String {
    "consistent".into()
}

pub fn law_variant_from_str(s: &str) -> Result<LawVariant> {
    match s {
        "consistent" => Ok(LawVariant::Consistent),
        "literal-eq19" => Ok(LawVariant::LiteralAbsolute),
        other => Err(Error::Config(format!(
            "unknown law_variant '{other}' (expected consistent|literal-eq19)"
        ))),
    }
}

pub fn law_variant_to_str(v: LawVariant) -> &'static str {
    match v {
        LawVariant::Consistent => "consistent",
        LawVariant::LiteralAbsolute => "literal-eq19",
    }
}

impl RawConfig {
    fn validate(self) -> Result<ScenarioConfig> {
        let n = self.formation.vertex_count;
        if n == 0 {
            return Err(Error::Config("formation.vertex_count must be positive".into()));
        }
        if self.formation.edges.is_empty() && n > 1 {
            return Err(Error::Config(
                "formation.edges is empty: the formation graph must be connected with a globally reaching vertex"
                    .into(),
            ));
        }
        let mut edges = Vec::with_capacity(self.formation.edges.len());
        for e in &self.formation.edges {
            if e.tail == 0 || e.head == 0 || e.tail > n || e.head > n {
                return Err(Error::Config(format!(
                    "formation.edges: ids ({}, {}) must lie in 1..={n}",
                    e.tail, e.head
                )));
            }
            edges.push(FormationEdge {
                tail: e.tail - 1,
                head: e.head - 1,
                mu: e.mu,
                omega: e.omega,
                offset: Vector3::new(e.offset[0], e.offset[1], e.offset[2]),
            });
        }
        let formation = FormationSpec::new(n, edges, self.formation.gamma.clone())?;

        let strategy: AvoidanceStrategy = self.scenario.strategy.parse()?;
        if self.safety.avoidance_radius.len() != n || self.safety.reaction_radius.len() != n {
            return Err(Error::Config(format!(
                "safety radii must list {n} entries (got {} avoidance, {} reaction)",
                self.safety.avoidance_radius.len(),
                self.safety.reaction_radius.len()
            )));
        }
        let safety = SafetyConfig::new(
            self.safety.avoidance_radius.clone(),
            self.safety.reaction_radius.clone(),
            strategy,
        )?;

        self.quadrotor.validate()?;

        if self.uavs.len() != n {
            return Err(Error::Config(format!(
                "uavs lists {} entries for vertex_count {n}",
                self.uavs.len()
            )));
        }
        let to_vec3 = |a: &[f64; 3]| Vector3::new(a[0], a[1], a[2]);
        let positions: Vec<_> = self.uavs.iter().map(|u| to_vec3(&u.position)).collect();
        let velocities: Vec<_> = self.uavs.iter().map(|u| to_vec3(&u.velocity)).collect();
        let accelerations: Vec<_> = self.uavs.iter().map(|u| to_vec3(&u.acceleration)).collect();
        let yaws: Vec<_> = self.uavs.iter().map(|u| u.yaw).collect();
        let yaw_rates: Vec<_> = self.uavs.iter().map(|u| u.yaw_rate).collect();
        let yaw_accels: Vec<_> = self.uavs.iter().map(|u| u.yaw_accel).collect();
        let initial_state = FlatTeamState::from_parts(
            &positions,
            &yaws,
            &velocities,
            &yaw_rates,
            &accelerations,
            &yaw_accels,
        );

        let epsilon = self.scenario.epsilon;
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!(
                "scenario.epsilon = {epsilon} must be positive"
            )));
        }
        // Initial separation margin: no pair may start inside or on the
        // collision boundary.
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = (positions[i] - positions[j]).norm();
                let (inner, _) = safety.pair_bounds(i, j);
                if dist < inner + epsilon {
                    return Err(Error::Config(format!(
                        "uavs {} and {} start {dist:.6} m apart; need at least {:.6} m (r_i + r_j + epsilon)",
                        i + 1,
                        j + 1,
                        inner + epsilon
                    )));
                }
            }
        }

        let t_f = self.scenario.t_f;
        if !(t_f > 0.0) {
            return Err(Error::Config(format!("scenario.t_f = {t_f} must be positive")));
        }
        let dt = self.scenario.dt;
        if !(dt > 0.0) || dt > t_f {
            return Err(Error::Config(format!(
                "scenario.dt = {dt} must be positive and at most t_f"
            )));
        }
        let riccati_step = self.scenario.riccati_step.unwrap_or(t_f / 1e4);
        if !(riccati_step > 0.0) {
            return Err(Error::Config(format!(
                "scenario.riccati_step = {riccati_step} must be positive"
            )));
        }
        if self.scenario.output_stride == 0 {
            return Err(Error::Config("scenario.output_stride must be at least 1".into()));
        }
        let law_variant = law_variant_from_str(&self.scenario.law_variant)?;

        let tracking = &self.tracking;
        for (name, list) in [
            ("tracking.zeta", &tracking.zeta),
            ("tracking.delta", &tracking.delta),
            ("tracking.eta", &tracking.eta),
        ] {
            if list.len() != n {
                return Err(Error::Config(format!(
                    "{name} must list {n} entries (got {})",
                    list.len()
                )));
            }
        }

        Ok(ScenarioConfig {
            formation,
            safety,
            quadrotor: self.quadrotor,
            initial_state,
            t_f,
            dt,
            riccati_step,
            epsilon,
            output_stride: self.scenario.output_stride,
            law_variant,
            zeta: tracking.zeta.clone(),
            delta: tracking.delta.clone(),
            eta: tracking.eta.clone(),
        })
    }

    fn from_config(cfg: &ScenarioConfig) -> Self {
        let n = cfg.n_uavs();
        let edges = cfg
            .formation
            .formation_graph()
            .edges()
            .iter()
            .enumerate()
            .map(|(k, &(tail, head))| RawEdge {
                tail: tail + 1,
                head: head + 1,
                mu: cfg.formation.mu()[k],
                omega: cfg.formation.omega()[k],
                offset: cfg.formation.offsets()[k].into(),
            })
            .collect();
        let uavs = (0..n)
            .map(|i| RawUavState {
                position: cfg.initial_state.position(i).into(),
                velocity: cfg.initial_state.velocity(i).into(),
                acceleration: cfg.initial_state.acceleration(i).into(),
                yaw: cfg.initial_state.yaw(i),
                yaw_rate: cfg.initial_state.yaw_rate(i),
                yaw_accel: cfg.initial_state.yaw_accel(i),
            })
            .collect();
        RawConfig {
            scenario: RawScenario {
                t_f: cfg.t_f,
                dt: cfg.dt,
                riccati_step: Some(cfg.riccati_step),
                strategy: cfg.safety.strategy.as_str().into(),
                output_stride: cfg.output_stride,
                epsilon: cfg.epsilon,
                law_variant: law_variant_to_str(cfg.law_variant).into(),
            },
            quadrotor: cfg.quadrotor,
            safety: RawSafety {
                avoidance_radius: (0..n).map(|i| cfg.safety.avoidance_radius(i)).collect(),
                reaction_radius: (0..n).map(|i| cfg.safety.reaction_radius(i)).collect(),
            },
            formation: RawFormation {
                vertex_count: n,
                gamma: cfg.formation.gamma().to_vec(),
                edges,
            },
            tracking: RawTracking {
                zeta: cfg.zeta.clone(),
                delta: cfg.delta.clone(),
                eta: cfg.eta.clone(),
            },
            uavs,
        }
    }
}

/// Names of the bundled scenarios.
pub fn fixture_names() -> &'static [&'static str] {
    &["four_uav", "seven_uav", "seven_uav_feasible"]
}

/// TOML text of a bundled scenario.
pub fn fixture_toml(name: &str) -> Option<&'static str> {
    match name {
        "four_uav" => Some(include_str!("../fixtures/four_uav.toml")),
        "seven_uav" => Some(include_str!("../fixtures/seven_uav.toml")),
        "seven_uav_feasible" => Some(include_str!("../fixtures/seven_uav_feasible.toml")),
        _ => None,
    }
}

/// Parse a bundled scenario by name.
pub fn load_fixture(name: &str) -> Result<ScenarioConfig> {
    let text = fixture_toml(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown fixture '{name}' (available: {})",
            fixture_names().join(", ")
        ))
    })?;
    ScenarioConfig::from_toml_str(text)
}
