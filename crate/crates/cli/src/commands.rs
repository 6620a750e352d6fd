use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use pomdp_aa::accel::{solve as solve_exact, SolveError};
use pomdp_aa::eval::{rollout, AlphaPolicy, InitialBelief, RewardStats, RolloutConfig};
use pomdp_aa::sim::{model_simulator, solve_empirical, EmpiricalConfig};
use pomdp_aa::{Mode, PomdpModel, SolveReport, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::args::{BenchArgs, EvalArgs, ReplayArgs, RolloutFlags, SolveArgs, SolverFlags, Switch};
use crate::files::{
    ensure_dir, load_model, read_alpha_csv, sha256_hex, write_alpha_csv, write_json, LoadedModel,
};
use crate::{CliError, EXIT_MAX_ITER, EXIT_OK};

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub model_path: String,
    pub model_sha256: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_sha256: Option<String>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub j_count: usize,
    pub frozen_batch: bool,
}

impl From<SimulationSettings> for EmpiricalConfig {
    fn from(s: SimulationSettings) -> Self {
        EmpiricalConfig {
            j_count: s.j_count,
            frozen_batch: s.frozen_batch,
        }
    }
}

/// Extra diagnostics of a sampled-operator solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub best_residual: f64,
    pub measured_eps: Option<f64>,
    pub exact_residual: Option<f64>,
    pub tail_exact_residual: Option<f64>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub manifest: RunManifest,
    pub report: SolveReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical: Option<EmpiricalSummary>,
}

/// Contents of `eval.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutput {
    pub manifest: RunManifest,
    pub reward_fixed: RewardStats,
    pub reward_rand: RewardStats,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn manifest(command: &str, model: &LoadedModel, seed: u64) -> RunManifest {
    RunManifest {
        command: command.into(),
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        model_path: model.path.display().to_string(),
        model_sha256: model.sha256.clone(),
        seed,
        solver: None,
        simulation: None,
        rollout: None,
        alpha_path: None,
        alpha_sha256: None,
        started_unix_s: unix_now(),
        finished_unix_s: 0.0,
    }
}

pub fn solver_config(
    flags: &SolverFlags,
    spec: pomdp_aa::OperatorSpec,
    mode: Mode,
    seed: u64,
) -> Result<SolverConfig, CliError> {
    let config = SolverConfig {
        tolerance: flags.tol,
        max_iter: flags.max_iter,
        m_max: flags.mem,
        eta: flags.eta,
        big_d: flags.big_d,
        phi: flags.phi,
        n_s: flags.ns,
        m_coef: flags.m,
        m_bar: flags.mbar,
        kappa: flags.kappa,
        theta_targ: true,
        seed,
        mode,
        operator: spec,
    };
    config
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

fn rollout_config(
    flags: &RolloutFlags,
    initial_belief: InitialBelief,
    seed: u64,
) -> Result<RolloutConfig, CliError> {
    if flags.trajectories == 0 || flags.horizon == 0 {
        return Err(CliError::Config(
            "--trajectories and --horizon must be at least 1".into(),
        ));
    }
    Ok(RolloutConfig {
        horizon: flags.horizon,
        n_trajectories: flags.trajectories,
        initial_belief,
        seed,
        discounted: flags.discounted,
    })
}

/// Runs the exact or sampled solver. Hitting the iteration limit is not an
/// error here; callers read `report.converged`.
pub fn run_solver(
    model: &PomdpModel,
    config: &SolverConfig,
    simulation: Option<SimulationSettings>,
) -> Result<(SolveReport, Option<EmpiricalSummary>), CliError> {
    let lift = |e: SolveError| match e {
        SolveError::Config(c) => CliError::Config(c.to_string()),
        other => CliError::Config(format!("solver failed: {other}")),
    };
    match simulation {
        None => match solve_exact(model, config) {
            Ok(r) => Ok((r, None)),
            Err(SolveError::MaxIterationsExceeded(r)) => Ok((*r, None)),
            Err(e) => Err(lift(e)),
        },
        Some(sim) => {
            let out = solve_empirical(&model_simulator(model), config, sim.into(), Some(model))
                .map_err(lift)?;
            let summary = EmpiricalSummary {
                best_residual: out.best_residual,
                measured_eps: out.measured_eps,
                exact_residual: out.exact_residual,
                tail_exact_residual: out.tail_exact_residual,
            };
            Ok((out.report, Some(summary)))
        }
    }
}

pub fn summary_line(report: &SolveReport) -> String {
    format!(
        "iter={} aa={} residual={:e} time_s={:.6}",
        report.iterations, report.aa_accepted, report.final_residual, report.wall_time_s
    )
}

fn write_residuals(path: &Path, report: &SolveReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    w.write_record(["iteration", "residual"])
        .map_err(|e| CliError::csv(path, e))?;
    let history =
        std::iter::once(report.initial_residual).chain(report.residual_history.iter().copied());
    for (k, r) in history.enumerate() {
        w.write_record([k.to_string(), format!("{r:e}")])
            .map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn solve(args: &SolveArgs) -> Result<u8, CliError> {
    let spec = args.operator.spec(args.solver.tau);
    let config = solver_config(&args.solver, spec, args.mode.into(), args.seed)?;
    let simulation = match args.simulate {
        Some(0) => return Err(CliError::Config("--simulate needs J >= 1".into())),
        Some(j) => Some(SimulationSettings {
            j_count: j,
            frozen_batch: args.frozen_batch,
        }),
        None if args.frozen_batch => {
            return Err(CliError::Config(
                "--frozen-batch requires --simulate".into(),
            ))
        }
        None => None,
    };
    let loaded = load_model(&args.model)?;
    let mut manifest = manifest("solve", &loaded, args.seed);
    manifest.solver = Some(config.clone());
    manifest.simulation = simulation;

    let (report, empirical) = run_solver(&loaded.model, &config, simulation)?;
    manifest.finished_unix_s = unix_now();

    ensure_dir(&args.out)?;
    if args.emit_alpha {
        write_alpha_csv(&args.out.join("alpha.csv"), &report.alpha_final)?;
    }
    if args.emit_plot_data {
        write_residuals(&args.out.join("residuals.csv"), &report)?;
    }
    println!("{}", summary_line(&report));
    let converged = report.converged;
    write_json(
        &args.out.join("report.json"),
        &SolveOutput {
            manifest,
            report,
            empirical,
        },
    )?;
    Ok(if converged { EXIT_OK } else { EXIT_MAX_ITER })
}

pub fn eval(args: &EvalArgs) -> Result<u8, CliError> {
    let fixed_cfg = rollout_config(&args.rollout, args.belief.into(), args.seed)?;
    let rand_cfg = RolloutConfig {
        initial_belief: InitialBelief::Random,
        ..fixed_cfg
    };
    let loaded = load_model(&args.model)?;
    let alpha = read_alpha_csv(&args.alpha)?;
    let model = &loaded.model;
    if (alpha.n_actions(), alpha.n_states()) != (model.n_actions(), model.n_states()) {
        return Err(CliError::File {
            path: args.alpha.clone(),
            message: format!(
                "alpha is {}x{} but the model needs |A| x |S| = {}x{}",
                alpha.n_actions(),
                alpha.n_states(),
                model.n_actions(),
                model.n_states()
            ),
        });
    }
    let alpha_bytes = std::fs::read(&args.alpha).map_err(|e| CliError::io(&args.alpha, e))?;
    let mut manifest = manifest("eval", &loaded, args.seed);
    manifest.rollout = Some(fixed_cfg);
    manifest.alpha_path = Some(args.alpha.display().to_string());
    manifest.alpha_sha256 = Some(sha256_hex(&alpha_bytes));

    let policy = AlphaPolicy::new(alpha);
    let failed = |e: pomdp_aa::ModelError| CliError::Config(format!("rollout failed: {e}"));
    let reward_fixed = rollout(model, &policy, &fixed_cfg).map_err(failed)?;
    let reward_rand = rollout(model, &policy, &rand_cfg).map_err(failed)?;
    manifest.finished_unix_s = unix_now();

    println!(
        "reward_fixed={:.4} ± {:.4} reward_rand={:.4} ± {:.4}",
        reward_fixed.mean, reward_fixed.std, reward_rand.mean, reward_rand.std
    );
    ensure_dir(&args.out)?;
    write_json(
        &args.out.join("eval.json"),
        &EvalOutput {
            manifest,
            reward_fixed,
            reward_rand,
        },
    )?;
    Ok(EXIT_OK)
}

/// One benchmark configuration.
#[derive(Debug, Clone)]
struct Cell {
    spec: pomdp_aa::OperatorSpec,
    mode: Mode,
    theta_targ: bool,
}

impl Cell {
    fn label(&self) -> String {
        match (self.mode, self.theta_targ) {
            (Mode::Fpi, _) => self.spec.label().to_string(),
            (Mode::Aa, true) => format!("AA-{}", self.spec.label()),
            (Mode::Aa, false) => format!("AA-{} (no θ_targ)", self.spec.label()),
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let s = RewardStats::from_samples(xs);
    (s.mean, s.std)
}

/// Pools per-seed trajectory statistics into one mean and population std.
fn pool(stats: &[RewardStats]) -> RewardStats {
    let n: usize = stats.iter().map(|s| s.n).sum();
    let mean = stats.iter().map(|s| s.mean * s.n as f64).sum::<f64>() / n as f64;
    let var = stats
        .iter()
        .map(|s| s.n as f64 * (s.std * s.std + (s.mean - mean).powi(2)))
        .sum::<f64>()
        / n as f64;
    RewardStats {
        mean,
        std: var.sqrt(),
        n,
    }
}

fn pm(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

/// Column headers of the benchmark table.
pub const BENCH_HEADER: [&str; 7] = [
    "problem",
    "algorithm",
    "#iter",
    "#AA",
    "t_total",
    "reward_fixed",
    "reward_rand",
];

/// Index of the wall-clock column, the only nondeterministic one.
pub const BENCH_TIME_COLUMN: usize = 4;

pub fn bench(args: &BenchArgs) -> Result<u8, CliError> {
    if args.repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    let mut cells = Vec::new();
    for &op in &args.operators {
        let spec = op.spec(args.solver.tau);
        for &mode in &args.modes {
            let mode: Mode = mode.into();
            let switches: &[Switch] = if mode == Mode::Fpi {
                &[Switch::On]
            } else {
                &args.safeguard
            };
            for &sw in switches {
                let cell = Cell {
                    spec,
                    mode,
                    theta_targ: sw == Switch::On,
                };
                solver_config(&args.solver, spec, mode, args.seed)?;
                cells.push(cell);
            }
        }
    }
    rollout_config(&args.rollout, InitialBelief::Default, args.seed)?;
    let models = args
        .models
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds: Vec<u64> = (0..args.repeats as u64).map(|i| args.seed + i).collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut failures = 0;
    for loaded in &models {
        let problem = loaded.path.file_stem().map_or_else(
            || loaded.path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        for cell in &cells {
            let row = bench_cell(&loaded.model, cell, &seeds, args)?;
            let label = cell.label();
            match row {
                Some(values) => {
                    let mut r = vec![problem.clone(), label];
                    r.extend(values);
                    rows.push(r);
                }
                None => {
                    failures += 1;
                    let mut r = vec![problem.clone(), label];
                    r.extend(std::iter::repeat_n("fail".to_string(), 5));
                    rows.push(r);
                }
            }
        }
    }

    let path = &args.out;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    w.write_record(BENCH_HEADER)
        .map_err(|e| CliError::csv(path, e))?;
    for r in &rows {
        w.write_record(r).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(if failures == rows.len() {
        EXIT_MAX_ITER
    } else {
        EXIT_OK
    })
}

/// Runs one cell over all seeds; `None` when any seed fails to converge.
fn bench_cell(
    model: &PomdpModel,
    cell: &Cell,
    seeds: &[u64],
    args: &BenchArgs,
) -> Result<Option<Vec<String>>, CliError> {
    let (mut iters, mut aa, mut times) = (Vec::new(), Vec::new(), Vec::new());
    let (mut fixed, mut random) = (Vec::new(), Vec::new());
    for &seed in seeds {
        let mut config = solver_config(&args.solver, cell.spec, cell.mode, seed)?;
        config.theta_targ = cell.theta_targ;
        let report = match run_solver(model, &config, None) {
            Ok((r, _)) if r.converged => r,
            Ok(_) | Err(CliError::Config(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        iters.push(report.iterations as f64);
        aa.push(report.aa_accepted as f64);
        times.push(report.wall_time_s);
        let policy = AlphaPolicy::new(report.alpha_final);
        let cfg = rollout_config(&args.rollout, InitialBelief::Default, seed)?;
        let run = |cfg: &RolloutConfig| {
            rollout(model, &policy, cfg)
                .map_err(|e| CliError::Config(format!("rollout failed: {e}")))
        };
        fixed.push(run(&cfg)?);
        random.push(run(&RolloutConfig {
            initial_belief: InitialBelief::Random,
            ..cfg
        })?);
    }
    let (it_m, it_s) = mean_std(&iters);
    let (aa_m, aa_s) = mean_std(&aa);
    let (t_m, _) = mean_std(&times);
    let (f, r) = (pool(&fixed), pool(&random));
    Ok(Some(vec![
        pm(it_m, it_s),
        pm(aa_m, aa_s),
        format!("{t_m:.4}"),
        pm(f.mean, f.std),
        pm(r.mean, r.std),
    ]))
}

pub fn replay(args: &ReplayArgs) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&args.report).map_err(|e| CliError::io(&args.report, e))?;
    let recorded: SolveOutput = serde_json::from_str(&text).map_err(|e| CliError::File {
        path: args.report.clone(),
        message: e.to_string(),
    })?;
    let m = &recorded.manifest;
    let config = m.solver.clone().ok_or_else(|| CliError::File {
        path: args.report.clone(),
        message: "manifest has no solver configuration".into(),
    })?;
    let model_path = args
        .model
        .clone()
        .unwrap_or_else(|| std::path::PathBuf::from(&m.model_path));
    let loaded = load_model(&model_path)?;
    if loaded.sha256 != m.model_sha256 {
        return Err(CliError::File {
            path: model_path,
            message: format!(
                "content hash {} does not match the manifest ({})",
                loaded.sha256, m.model_sha256
            ),
        });
    }
    let (report, _) = run_solver(&loaded.model, &config, m.simulation)?;
    let old = &recorded.report;
    let same = report.iterations == old.iterations
        && report.aa_accepted == old.aa_accepted
        && report.initial_residual.to_bits() == old.initial_residual.to_bits()
        && report.residual_history.len() == old.residual_history.len()
        && report
            .residual_history
            .iter()
            .zip(&old.residual_history)
            .all(|(a, b)| a.to_bits() == b.to_bits())
        && report.alpha_final == old.alpha_final;
    if same {
        println!("replay: identical ({} iterations)", report.iterations);
        Ok(EXIT_OK)
    } else {
        Err(CliError::File {
            path: args.report.clone(),
            message: format!(
                "replay differs: {} iterations / {} AA now, {} / {} recorded",
                report.iterations, report.aa_accepted, old.iterations, old.aa_accepted
            ),
        })
    }
}
