//! Implementations of the CLI subcommands.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;
use sha2::{Digest, Sha256};

use flatform_core::collision::{approach_weight, forward_weight, unified_weight};
use flatform_core::scenario::{self, law_variant_from_str, law_variant_to_str, ScenarioConfig};
use flatform_core::sim;
use flatform_core::{CostMatrices, PlannerSolution};

use crate::output;
use crate::{DemoArgs, RunArgs, SweepArgs};

#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    Core(flatform_core::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<flatform_core::Error> for CliError {
    fn from(e: flatform_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// What was run, from where, and with which overrides.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config_source: String,
    out_dir: String,
    overrides: Overrides,
    tool_version: String,
    config_sha256: String,
}

#[derive(Debug, Serialize)]
struct Overrides {
    strategy: Option<String>,
    dt: Option<f64>,
    t_f: Option<f64>,
    stride: Option<usize>,
    variant: Option<String>,
}

fn load_scenario(args: &RunArgs) -> CliResult<(ScenarioConfig, String, String)> {
    let (text, source) = if let Some(path) = &args.config {
        (
            fs::read_to_string(path)?,
            path.display().to_string(),
        )
    } else if let Some(name) = &args.fixture {
        let text = scenario::fixture_toml(name).ok_or_else(|| {
            flatform_core::Error::Config(format!(
                "unknown fixture '{name}' (available: {})",
                scenario::fixture_names().join(", ")
            ))
        })?;
        (text.to_string(), format!("fixture:{name}"))
    } else {
        return Err(flatform_core::Error::Config(
            "one of --config or --fixture is required".into(),
        )
        .into());
    };
    let mut cfg = ScenarioConfig::from_toml_str(&text)?;
    if let Some(s) = &args.strategy {
        cfg.safety.strategy = s.parse()?;
    }
    if let Some(dt) = args.dt {
        if !(dt > 0.0) {
            return Err(flatform_core::Error::Config(format!(
                "--dt {dt} must be positive"
            ))
            .into());
        }
        cfg.dt = dt;
    }
    if let Some(t_f) = args.t_f {
        if !(t_f > 0.0) {
            return Err(flatform_core::Error::Config(format!(
                "--t-f {t_f} must be positive"
            ))
            .into());
        }
        cfg.t_f = t_f;
    }
    if let Some(stride) = args.stride {
        if stride == 0 {
            return Err(
                flatform_core::Error::Config("--stride must be at least 1".into()).into(),
            );
        }
        cfg.output_stride = stride;
    }
    if let Some(v) = &args.variant {
        cfg.law_variant = law_variant_from_str(v)?;
    }
    Ok((cfg, source, text))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    source: &str,
    text: &str,
    args: &RunArgs,
) -> CliResult<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config_source: source.to_string(),
        out_dir: dir.display().to_string(),
        overrides: Overrides {
            strategy: args.strategy.clone(),
            dt: args.dt,
            t_f: args.t_f,
            stride: args.stride,
            variant: args.variant.clone(),
        },
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: hex_digest(text),
    };
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn hex_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn plan(args: &RunArgs) -> CliResult<()> {
    let (cfg, source, text) = load_scenario(args)?;
    fs::create_dir_all(&args.out)?;
    let cost = CostMatrices::new(&cfg.formation, &cfg.zeta, &cfg.delta, &cfg.eta)?;
    let planner = PlannerSolution::solve(&cost, &cfg.initial_state, cfg.t_f)?;
    let steps = (cfg.t_f / cfg.dt + 1e-9).floor() as usize;
    let reference = planner.sample_grid(cfg.dt, steps)?;
    output::write_plan_csv(&args.out.join("plan.csv"), &reference, cfg.output_stride)?;
    let metrics = sim::plan_metrics(&reference, &cfg);
    output::write_json(&args.out.join("plan_metrics.json"), &metrics)?;
    write_manifest(&args.out, "plan", &source, &text, args)?;
    println!(
        "plan: {} samples, terminal formation error {:.6e} ({:.3e} of initial), min pair distance {:.4} m",
        reference.len(),
        metrics.terminal_formation_error,
        metrics.terminal_formation_error / metrics.initial_formation_error.max(f64::MIN_POSITIVE),
        metrics.min_pair_distance
    );
    Ok(())
}

pub fn track(args: &RunArgs, physical: bool) -> CliResult<()> {
    let (cfg, source, text) = load_scenario(args)?;
    fs::create_dir_all(&args.out)?;
    let trace = sim::run(&cfg)?;
    let stride = cfg.output_stride;
    output::write_track_csv(&args.out.join("track.csv"), &trace, stride)?;
    output::write_distances_csv(&args.out.join("distances.csv"), &trace, stride)?;
    output::write_penalties_csv(&args.out.join("penalties.csv"), &trace, stride)?;
    output::write_vhat_csv(&args.out.join("vhat.csv"), &trace, stride)?;
    if physical {
        output::write_physical_csv(&args.out.join("physical.csv"), &trace, stride)?;
    }
    let metrics = sim::metrics(&trace, &cfg);
    output::write_json(&args.out.join("metrics.json"), &metrics)?;
    let monitor = sim::monitor_vhat(&trace);
    output::write_json(&args.out.join("vhat_summary.json"), &monitor)?;
    write_manifest(
        &args.out,
        if physical { "simulate" } else { "track" },
        &source,
        &text,
        args,
    )?;
    println!(
        "{}: strategy {}, variant {}, min pair distance {:.4} m, deviation {:.4}, terminal formation error {:.6e}",
        if physical { "simulate" } else { "track" },
        cfg.safety.strategy.as_str(),
        law_variant_to_str(cfg.law_variant),
        metrics.min_pair_distance,
        metrics.position_deviation_l2,
        metrics.terminal_formation_error
    );
    Ok(())
}

/// The two straight-line two-vehicle encounters used to illustrate the
/// directional weights, replayed over 20 uniform time steps.
pub fn weights_demo(args: &DemoArgs) -> CliResult<()> {
    fs::create_dir_all(&args.out)?;
    let v1 = Vector3::new(2.0, 1.0, 0.5);
    let v2 = Vector3::new(-2.0, 1.0, -0.5);
    let scenarios = [
        ("weights_scenario1.csv", Vector3::new(7.0, 0.0, 3.0)),
        ("weights_scenario2.csv", Vector3::new(7.0, 3.0, 1.0)),
    ];
    let p1_0 = Vector3::new(1.0, 1.0, 1.0);
    for (file, p2_0) in scenarios {
        let path = args.out.join(file);
        let mut rows = String::from("step,t,dist,alpha,beta,xi\n");
        for step in 0..20 {
            let t = args.dt * step as f64;
            let p1 = p1_0 + v1 * t;
            let p2 = p2_0 + v2 * t;
            let alpha = forward_weight(&p1, &p2, &v1);
            let beta = approach_weight(&p1, &p2, &v1, &v2);
            let xi = unified_weight(&p1, &p2, &v1, &v2);
            rows.push_str(&format!(
                "{},{},{},{},{},{}\n",
                step,
                output::fmt_f64(t),
                output::fmt_f64((p2 - p1).norm()),
                output::fmt_f64(alpha),
                output::fmt_f64(beta),
                output::fmt_f64(xi)
            ));
        }
        fs::write(path, rows)?;
    }
    println!("weights-demo: wrote 2 scenarios x 20 steps (dt {} s)", args.dt);
    Ok(())
}

/// Simulate every fixture under basic and unified avoidance.
pub fn sweep(args: &SweepArgs) -> CliResult<()> {
    let threads: usize = std::env::var("FLATFORM_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        });
    let mut jobs: Vec<(String, String)> = Vec::new();
    for fixture in scenario::fixture_names() {
        for strategy in ["basic", "unified"] {
            jobs.push((fixture.to_string(), strategy.to_string()));
        }
    }
    println!("sweep: {} runs, up to {threads} in parallel", jobs.len());
    let failures = std::sync::Mutex::new(Vec::<String>::new());
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(jobs.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= jobs.len() {
                    break;
                }
                let (fixture, strategy) = &jobs[idx];
                let out = args.out.join(fixture).join(strategy);
                let run_args = RunArgs {
                    config: None,
                    fixture: Some(fixture.clone()),
                    out,
                    strategy: Some(strategy.clone()),
                    dt: None,
                    t_f: None,
                    stride: None,
                    variant: None,
                };
                if let Err(e) = track(&run_args, true) {
                    failures
                        .lock()
                        .unwrap()
                        .push(format!("{fixture}/{strategy}: {e}"));
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(flatform_core::Error::Numerical(format!(
            "{} sweep run(s) failed: {}",
            failures.len(),
            failures.join("; ")
        ))
        .into())
    }
}
