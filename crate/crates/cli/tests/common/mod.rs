//! Shared fixtures for the acceptance suite: scenario pipelines, tracked
//! traces, and oracle rollouts are computed once and reused across
//! criteria.

pub mod oracle;

use std::time::{Duration, Instant};

use once_cell::sync::Lazy;

use flatform_core::collision::AvoidanceStrategy;
use flatform_core::scenario::{load_fixture, ScenarioConfig};
use flatform_core::sim::{Pipeline, SimTrace};
use flatform_core::{CostMatrices, Error};
use nalgebra::DVector;

pub struct Prepared {
    pub cfg: ScenarioConfig,
    pub pipeline: Pipeline,
    pub prep_time: Duration,
}

fn prepare(fixture: &str) -> Prepared {
    let cfg = load_fixture(fixture).expect("bundled fixture parses");
    let t0 = Instant::now();
    let pipeline = Pipeline::prepare(&cfg).expect("pipeline prepares");
    Prepared {
        cfg,
        pipeline,
        prep_time: t0.elapsed(),
    }
}

pub static FOUR: Lazy<Prepared> = Lazy::new(|| prepare("four_uav"));
pub static SEVEN: Lazy<Prepared> = Lazy::new(|| prepare("seven_uav"));

pub struct TimedTrace {
    pub trace: SimTrace,
    pub track_time: Duration,
}

fn tracked(prep: &Prepared, strategy: AvoidanceStrategy) -> TimedTrace {
    let mut cfg = prep.cfg.clone();
    cfg.safety.strategy = strategy;
    let t0 = Instant::now();
    let trace = prep.pipeline.track(&cfg).expect("tracked run completes");
    TimedTrace {
        trace,
        track_time: t0.elapsed(),
    }
}

pub static FOUR_BASIC: Lazy<TimedTrace> =
    Lazy::new(|| tracked(&FOUR, AvoidanceStrategy::Basic));
pub static FOUR_UNIFIED: Lazy<TimedTrace> =
    Lazy::new(|| tracked(&FOUR, AvoidanceStrategy::Unified));
pub static SEVEN_UNIFIED: Lazy<TimedTrace> =
    Lazy::new(|| tracked(&SEVEN, AvoidanceStrategy::Unified));

/// The seven-vehicle plan tracked without avoidance; expected to abort
/// with a collision violation.
pub static SEVEN_NONE_RESULT: Lazy<Result<SimTrace, Error>> = Lazy::new(|| {
    let mut cfg = SEVEN.cfg.clone();
    cfg.safety.strategy = AvoidanceStrategy::None;
    SEVEN.pipeline.track(&cfg)
});

pub struct OracleRun {
    /// States on the oracle grid, step `dt`.
    pub states: Vec<DVector<f64>>,
    pub dt: f64,
    pub build_time: Duration,
}

fn oracle_rollout(prep: &Prepared) -> OracleRun {
    let dt = 1e-3;
    let cfg = &prep.cfg;
    let cost = CostMatrices::new(&cfg.formation, &cfg.zeta, &cfg.delta, &cfg.eta).unwrap();
    let steps = (cfg.t_f / dt).round() as usize;
    let t0 = Instant::now();
    let lq = oracle::discretize(&cost.a, &cost.b, &cost.q, &cost.r, dt);
    let states = oracle::optimal_rollout(&lq, &cost.q_f, cfg.initial_state.as_vector(), steps);
    OracleRun {
        states,
        dt,
        build_time: t0.elapsed(),
    }
}

pub static ORACLE_FOUR: Lazy<OracleRun> = Lazy::new(|| oracle_rollout(&FOUR));
pub static ORACLE_SEVEN: Lazy<OracleRun> = Lazy::new(|| oracle_rollout(&SEVEN));

/// One pass/fail line per criterion, printed before the assertion fires.
pub fn criterion(number: usize, ok: bool, detail: &str) {
    println!(
        "[criterion {number}] {} - {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {number} failed: {detail}");
}
