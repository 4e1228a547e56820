//! Closed-loop simulation of the tracked team state, metric extraction,
//! and the runtime penalty monitor.
//!
//! One run plans the reference trajectory, sweeps the tracking gain, then
//! integrates `z' = A z + B u` with classical RK4 at a fixed step. The
//! control (gain term plus penalty gradient, directional weights included)
//! is re-evaluated at every RK4 stage; the penalty stiffens quickly near
//! the inner reaction boundary and stage-accurate forcing keeps the
//! integrator honest there. A run is strictly sequential and fully
//! deterministic; distinct runs share nothing.

use nalgebra::DVector;

use crate::collision::{assemble_gradient, PairDiagnostic, PairRegion};
use crate::error::{Error, Result};
use crate::flat::{layout, CostMatrices, FlatTeamState};
use crate::flatness::{body_moments, body_rates, thrust_and_attitude, QuadrotorState};
use crate::planner::{PlannerSolution, ReferenceTrajectory};
use crate::scenario::ScenarioConfig;
use crate::tracker::{solve_riccati, LawVariant, RiccatiSolution};

/// One time sample of the closed loop.
#[derive(Debug, Clone)]
pub struct SimRecord {
    pub t: f64,
    /// Tracked flat team state.
    pub state: DVector<f64>,
    /// Control commanded at this instant.
    pub control: DVector<f64>,
    /// Planned reference state.
    pub reference: DVector<f64>,
    /// Ordered-pair diagnostics (0-based vehicle indices).
    pub pairs: Vec<PairDiagnostic>,
    /// Total unweighted penalty over ordered pairs.
    pub vhat: f64,
    /// Tracking value function `(z - r)^T P(t) (z - r)`.
    pub value_function: f64,
    /// Physical quantities recovered through the flatness map.
    pub physical: Vec<QuadrotorState>,
    /// Running tracking cost up to this instant (trapezoid rule).
    pub tracking_cost: f64,
}

/// Complete time history of one run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub n_uavs: usize,
    pub dt: f64,
    pub records: Vec<SimRecord>,
}

impl SimTrace {
    pub fn final_record(&self) -> &SimRecord {
        self.records.last().expect("trace is never empty")
    }

    /// Smallest pairwise distance over the whole trace.
    pub fn min_pair_distance(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.pairs.iter().map(|p| p.dist))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Print-friendly summary of a run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Metrics {
    /// Sum of squared terminal offset errors over formation edges.
    pub terminal_formation_error: f64,
    /// Same quantity at t = 0, for relative reporting.
    pub initial_formation_error: f64,
    /// Per-edge terminal offset error norms, edge order.
    pub terminal_edge_errors: Vec<f64>,
    /// Sum of squared terminal velocity differences over formation edges.
    pub velocity_consensus_error: f64,
    /// Smallest pairwise distance over the run.
    pub min_pair_distance: f64,
    /// Smallest distance per unordered pair (1-based ids).
    pub min_distance_per_pair: Vec<PairDistance>,
    /// L2-in-time deviation of tracked from planned positions.
    pub position_deviation_l2: f64,
    /// Integral of the control quadratic form over the run.
    pub control_effort: f64,
    /// Largest control change between consecutive samples.
    pub max_control_step: f64,
    /// Largest per-vehicle acceleration norm over the run.
    pub peak_acceleration: f64,
    /// Largest per-vehicle jerk norm over the run.
    pub peak_jerk: f64,
    /// Realized tracking cost at the end of the run.
    pub tracking_cost: f64,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PairDistance {
    pub i: usize,
    pub j: usize,
    pub dist: f64,
}

/// Penalty monitor over a finished trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VhatReport {
    pub initial: f64,
    pub max: f64,
    pub max_at: f64,
    /// Tolerance used by the boundedness flag.
    pub delta: f64,
    /// Whether the total penalty stayed at or below its initial value plus
    /// `delta` for the whole run.
    pub bounded_by_initial: bool,
    /// Whether the realized tracking cost is finite.
    pub cost_finite: bool,
    #[serde(skip)]
    pub series: Vec<f64>,
}

/// Run the full pipeline: plan, sweep the gain, track in closed loop.
///
/// Fails fast when any pair enters the collision region or lands exactly
/// on the inner boundary, naming the pair (1-based) and the time.
pub fn run(cfg: &ScenarioConfig) -> Result<SimTrace> {
    let pipeline = Pipeline::prepare(cfg)?;
    pipeline.track(cfg)
}

/// Planner, gain sweep, and reference grid for one scenario, reusable
/// across strategy variations of the same scenario.
pub struct Pipeline {
    pub cost: CostMatrices,
    pub planner: PlannerSolution,
    pub riccati: RiccatiSolution,
    pub reference: ReferenceTrajectory,
    steps: usize,
}

impl Pipeline {
    pub fn prepare(cfg: &ScenarioConfig) -> Result<Self> {
        let cost = CostMatrices::new(&cfg.formation, &cfg.zeta, &cfg.delta, &cfg.eta)?;
        let planner = PlannerSolution::solve(&cost, &cfg.initial_state, cfg.t_f)?;
        let steps = (cfg.t_f / cfg.dt + 1e-9).floor() as usize;
        let reference = planner.sample_grid(cfg.dt / 2.0, 2 * steps)?;
        let riccati = solve_riccati(&cost, cfg.t_f, cfg.riccati_step)?;
        Ok(Self {
            cost,
            planner,
            riccati,
            reference,
            steps,
        })
    }

    /// Closed-loop tracking under the scenario's strategy and law variant.
    pub fn track(&self, cfg: &ScenarioConfig) -> Result<SimTrace> {
        let n = cfg.n_uavs();
        let block = 4 * n;
        let dt = cfg.dt;
        let hom = layout::hom(n);

        // Control at one stage: gain times feedback target plus the
        // penalty gradient, pushed through -Rz^-1 B^T.
        let stage_control = |t: f64, z_vec: &DVector<f64>, ref_idx: usize| -> Result<(DVector<f64>, crate::collision::PenaltyGradient)> {
            let z_state = FlatTeamState::new(n, z_vec.clone())?;
            let grad = assemble_gradient(&z_state, &cfg.safety)?;
            let target = match cfg.law_variant {
                LawVariant::Consistent => z_vec - self.reference.state(ref_idx),
                LawVariant::LiteralAbsolute => z_vec.clone(),
            };
            let mut g_total = self.riccati.apply(t, &target);
            g_total += &grad.stacked;
            let mut u = DVector::zeros(block);
            for k in 0..block {
                u[k] = -g_total[2 * block + k] / self.cost.r_z[(k, k)];
            }
            Ok((u, grad))
        };

        // z' = A z + B u through the integrator-chain structure.
        let deriv = |z: &DVector<f64>, u: &DVector<f64>| -> DVector<f64> {
            let mut out = DVector::zeros(layout::state_dim(n));
            out.rows_mut(0, 2 * block).copy_from(&z.rows(block, 2 * block));
            out.rows_mut(2 * block, block).copy_from(u);
            out
        };

        let mut z = cfg.initial_state.as_vector().clone();
        let mut records: Vec<SimRecord> = Vec::with_capacity(self.steps + 1);
        let mut cumulative_cost = 0.0;
        let mut prev_integrand = 0.0;

        for k in 0..=self.steps {
            let t = dt * k as f64;
            let (u, grad) = stage_control(t, &z, 2 * k)?;

            // Region checks at every recorded step; abort on violations.
            for p in &grad.pairs {
                match p.region {
                    PairRegion::Collision => {
                        let (inner, _) = cfg.safety.pair_bounds(p.i, p.j);
                        return Err(Error::CollisionViolation {
                            t,
                            i: p.i + 1,
                            j: p.j + 1,
                            dist: p.dist,
                            bound: inner,
                        });
                    }
                    PairRegion::Singular => {
                        return Err(Error::Singularity {
                            i: p.i + 1,
                            j: p.j + 1,
                            dist: p.dist,
                        });
                    }
                    _ => {}
                }
            }

            let reference = self.reference.state(2 * k).clone();
            let err = &z - &reference;
            let value_function = self.riccati.apply(t, &err).dot(&err);
            let integrand = quadratic_diag(&self.cost.k, &err) + quadratic_diag(&self.cost.r_z, &u);
            if k > 0 {
                cumulative_cost += dt * 0.5 * (prev_integrand + integrand);
            }
            prev_integrand = integrand;

            let z_state = FlatTeamState::new(n, z.clone())?;
            let mut physical = Vec::with_capacity(n);
            for i in 0..n {
                let accel = z_state.acceleration(i);
                let (thrust, roll, pitch, rotation) =
                    thrust_and_attitude(&accel, z_state.yaw(i), &cfg.quadrotor)?;
                let jerk = nalgebra::Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
                let rates = body_rates(
                    &jerk,
                    z_state.yaw(i),
                    z_state.yaw_rate(i),
                    thrust,
                    &rotation,
                    &cfg.quadrotor,
                )?;
                physical.push(QuadrotorState {
                    thrust,
                    roll,
                    pitch,
                    yaw: z_state.yaw(i),
                    body_rates: rates,
                    moments: None,
                });
            }

            records.push(SimRecord {
                t,
                state: z.clone(),
                control: u.clone(),
                reference,
                vhat: grad.vhat(),
                value_function,
                pairs: grad.pairs,
                physical,
                tracking_cost: cumulative_cost,
            });

            if k == self.steps {
                break;
            }

            // Classical RK4 with stage-accurate control.
            let k1 = deriv(&z, &u);
            let z2 = &z + &k1 * (dt / 2.0);
            let (u2, _) = stage_control(t + dt / 2.0, &z2, 2 * k + 1)?;
            let k2 = deriv(&z2, &u2);
            let z3 = &z + &k2 * (dt / 2.0);
            let (u3, _) = stage_control(t + dt / 2.0, &z3, 2 * k + 1)?;
            let k3 = deriv(&z3, &u3);
            let z4 = &z + &k3 * dt;
            let (u4, _) = stage_control(t + dt, &z4, 2 * k + 2)?;
            let k4 = deriv(&z4, &u4);
            z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            debug_assert_eq!(z[hom], 1.0);
        }

        // Body moments need the whole rate series per vehicle.
        let record_dt = dt;
        for i in 0..n {
            let series: Vec<_> = records.iter().map(|r| r.physical[i].body_rates).collect();
            if series.len() >= 3 {
                let moments = body_moments(&series, &cfg.quadrotor, record_dt)?;
                for (rec, m) in records.iter_mut().zip(moments) {
                    rec.physical[i].moments = Some(m);
                }
            }
        }

        Ok(SimTrace {
            n_uavs: n,
            dt,
            records,
        })
    }
}

/// `x^T M x` for diagonal `M`.
fn quadratic_diag(m: &nalgebra::DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (0..x.len()).map(|i| m[(i, i)] * x[i] * x[i]).sum()
}

/// Summary statistics over a finished trace.
pub fn metrics(trace: &SimTrace, cfg: &ScenarioConfig) -> Metrics {
    let n = trace.n_uavs;
    let last = trace.final_record();
    let last_state = FlatTeamState::new(n, last.state.clone()).expect("trace state is valid");
    let first_state = cfg.initial_state.clone();

    let formation_error = |state: &FlatTeamState| -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let mut per_edge = Vec::new();
        for (k, &(i, j)) in cfg.formation.formation_graph().edges().iter().enumerate() {
            let err =
                (state.position(i) - state.position(j) - cfg.formation.offsets()[k]).norm();
            per_edge.push(err);
            total += err * err;
        }
        (total, per_edge)
    };
    let (terminal_formation_error, terminal_edge_errors) = formation_error(&last_state);
    let (initial_formation_error, _) = formation_error(&first_state);

    let mut velocity_consensus_error = 0.0;
    for &(i, j) in cfg.formation.formation_graph().edges() {
        velocity_consensus_error +=
            (last_state.velocity(i) - last_state.velocity(j)).norm_squared();
    }

    // Min distance per unordered pair.
    let mut per_pair: std::collections::BTreeMap<(usize, usize), f64> =
        std::collections::BTreeMap::new();
    for rec in &trace.records {
        for p in &rec.pairs {
            let key = (p.i.min(p.j), p.i.max(p.j));
            let entry = per_pair.entry(key).or_insert(f64::INFINITY);
            if p.dist < *entry {
                *entry = p.dist;
            }
        }
    }
    let min_distance_per_pair: Vec<PairDistance> = per_pair
        .iter()
        .map(|(&(i, j), &dist)| PairDistance {
            i: i + 1,
            j: j + 1,
            dist,
        })
        .collect();
    let min_pair_distance = min_distance_per_pair
        .iter()
        .map(|p| p.dist)
        .fold(f64::INFINITY, f64::min);

    // Trapezoid integrals over the record grid.
    let dt = trace.dt;
    let mut deviation_sq = 0.0;
    let mut effort = 0.0;
    let mut max_control_step = 0.0_f64;
    let mut peak_acceleration = 0.0_f64;
    let mut peak_jerk = 0.0_f64;
    let count = trace.records.len();
    for (k, rec) in trace.records.iter().enumerate() {
        let w = if k == 0 || k + 1 == count { 0.5 } else { 1.0 };
        let mut pos_err_sq = 0.0;
        for i in 0..n {
            let base = layout::pos(n, i);
            for axis in 0..3 {
                let d = rec.state[base + axis] - rec.reference[base + axis];
                pos_err_sq += d * d;
            }
            let acc = nalgebra::Vector3::new(
                rec.state[layout::acc(n, i)],
                rec.state[layout::acc(n, i) + 1],
                rec.state[layout::acc(n, i) + 2],
            );
            peak_acceleration = peak_acceleration.max(acc.norm());
            let jerk = nalgebra::Vector3::new(
                rec.control[3 * i],
                rec.control[3 * i + 1],
                rec.control[3 * i + 2],
            );
            peak_jerk = peak_jerk.max(jerk.norm());
        }
        deviation_sq += w * pos_err_sq * dt;
        let mut u_quad = 0.0;
        for k2 in 0..rec.control.len() {
            u_quad += cfg.eta[control_owner(k2, n)] * rec.control[k2] * rec.control[k2];
        }
        effort += w * u_quad * dt;
        if k > 0 {
            let du = (&rec.control - &trace.records[k - 1].control).norm();
            max_control_step = max_control_step.max(du);
        }
    }

    Metrics {
        terminal_formation_error,
        initial_formation_error,
        terminal_edge_errors,
        velocity_consensus_error,
        min_pair_distance,
        min_distance_per_pair,
        position_deviation_l2: deviation_sq.sqrt(),
        control_effort: effort,
        max_control_step,
        peak_acceleration,
        peak_jerk,
        tracking_cost: trace.final_record().tracking_cost,
    }
}

/// Vehicle owning control slot `k` in the stacked jerk layout.
fn control_owner(k: usize, n: usize) -> usize {
    if k < 3 * n {
        k / 3
    } else {
        k - 3 * n
    }
}

/// Penalty monitor: maximum of the total penalty, boundedness against the
/// initial value, and finiteness of the realized cost.
pub fn monitor_vhat(trace: &SimTrace) -> VhatReport {
    let series: Vec<f64> = trace.records.iter().map(|r| r.vhat).collect();
    let initial = series.first().copied().unwrap_or(0.0);
    let delta = 1e-6 * (1.0 + initial);
    let (mut max, mut max_at) = (f64::NEG_INFINITY, 0.0);
    for (k, &v) in series.iter().enumerate() {
        if v > max {
            max = v;
            max_at = trace.records[k].t;
        }
    }
    let bounded_by_initial = series.iter().all(|&v| v <= initial + delta);
    let cost_finite = trace.final_record().tracking_cost.is_finite();
    VhatReport {
        initial,
        max,
        max_at,
        delta,
        bounded_by_initial,
        cost_finite,
        series,
    }
}

/// Plan-only metrics over a sampled reference trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PlanMetrics {
    pub terminal_formation_error: f64,
    pub initial_formation_error: f64,
    pub terminal_edge_errors: Vec<f64>,
    pub velocity_consensus_error: f64,
    pub min_pair_distance: f64,
    pub min_distance_per_pair: Vec<PairDistance>,
    pub peak_acceleration: f64,
    pub peak_jerk: f64,
}

pub fn plan_metrics(reference: &ReferenceTrajectory, cfg: &ScenarioConfig) -> PlanMetrics {
    let n = reference.n_uavs();
    let state_at = |j: usize| FlatTeamState::new(n, reference.state(j).clone()).unwrap();
    let formation_error = |state: &FlatTeamState| -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let mut per_edge = Vec::new();
        for (k, &(i, j)) in cfg.formation.formation_graph().edges().iter().enumerate() {
            let err =
                (state.position(i) - state.position(j) - cfg.formation.offsets()[k]).norm();
            per_edge.push(err);
            total += err * err;
        }
        (total, per_edge)
    };
    let first = state_at(0);
    let last = state_at(reference.len() - 1);
    let (terminal_formation_error, terminal_edge_errors) = formation_error(&last);
    let (initial_formation_error, _) = formation_error(&first);
    let mut velocity_consensus_error = 0.0;
    for &(i, j) in cfg.formation.formation_graph().edges() {
        velocity_consensus_error += (last.velocity(i) - last.velocity(j)).norm_squared();
    }

    let mut per_pair: std::collections::BTreeMap<(usize, usize), f64> =
        std::collections::BTreeMap::new();
    let mut peak_acceleration = 0.0_f64;
    let mut peak_jerk = 0.0_f64;
    for jdx in 0..reference.len() {
        let state = reference.state(jdx);
        for i in 0..n {
            let pi = nalgebra::Vector3::new(
                state[layout::pos(n, i)],
                state[layout::pos(n, i) + 1],
                state[layout::pos(n, i) + 2],
            );
            let acc = nalgebra::Vector3::new(
                state[layout::acc(n, i)],
                state[layout::acc(n, i) + 1],
                state[layout::acc(n, i) + 2],
            );
            peak_acceleration = peak_acceleration.max(acc.norm());
            let u = reference.control(jdx);
            let jerk = nalgebra::Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
            peak_jerk = peak_jerk.max(jerk.norm());
            for j2 in (i + 1)..n {
                let pj = nalgebra::Vector3::new(
                    state[layout::pos(n, j2)],
                    state[layout::pos(n, j2) + 1],
                    state[layout::pos(n, j2) + 2],
                );
                let d = (pi - pj).norm();
                let entry = per_pair.entry((i, j2)).or_insert(f64::INFINITY);
                if d < *entry {
                    *entry = d;
                }
            }
        }
    }
    let min_distance_per_pair: Vec<PairDistance> = per_pair
        .iter()
        .map(|(&(i, j), &dist)| PairDistance {
            i: i + 1,
            j: j + 1,
            dist,
        })
        .collect();
    let min_pair_distance = min_distance_per_pair
        .iter()
        .map(|p| p.dist)
        .fold(f64::INFINITY, f64::min);

    PlanMetrics {
        terminal_formation_error,
        initial_formation_error,
        terminal_edge_errors,
        velocity_consensus_error,
        min_pair_distance,
        min_distance_per_pair,
        peak_acceleration,
        peak_jerk,
    }
}
