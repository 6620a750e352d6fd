//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use pomdp_aa::accel::{
    aa_weights, acceleration_factor, acceleration_matrix, fixed_point, iterate, solve, AaMemory,
    Mode, SolveError, SolverConfig,
};
use pomdp_aa::eval::policy_action;
use pomdp_aa::generators::{navigation, random_model, random_sparse_model, NavigationSpec};
use pomdp_aa::model::Belief;
use pomdp_aa::operators::{AlphaMatrix, Operator, OperatorSpec};
use pomdp_aa::parser::{parse_pomdp, write_pomdp, PomdpSource};
use pomdp_aa::sim::{model_simulator, solve_empirical, EmpiricalConfig};
use pomdp_aa::PomdpModel;
use pomdp_aa_cli::Cli;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_alpha(rng: &mut ChaCha8Rng, n_a: usize, n_s: usize, scale: f64) -> AlphaMatrix {
    let v = (0..n_a * n_s)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    AlphaMatrix::from_vec(n_a, n_s, v).unwrap()
}

fn desk_model(rng: &mut ChaCha8Rng, gamma: f64) -> PomdpModel {
    let n_s = rng.random_range(4..=12);
    let n_a = rng.random_range(2..=4);
    let n_z = rng.random_range(2..=4);
    if rng.random_bool(0.5) {
        random_model(rng, n_s, n_a, n_z, gamma)
    } else {
        random_sparse_model(rng, n_s, n_a, n_z, gamma, 3)
    }
}

fn all_specs(tau: f64) -> [OperatorSpec; 6] {
    [
        OperatorSpec::qmdp(),
        OperatorSpec::soft_qmdp(tau),
        OperatorSpec::kl_qmdp(tau),
        OperatorSpec::fib(),
        OperatorSpec::soft_fib(tau),
        OperatorSpec::kl_fib(tau),
    ]
}

fn contraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..6 {
        for _ in 0..200 {
            let (n_s, n_a, n_z) = (
                rng.random_range(1..=8),
                rng.random_range(1..=4),
                rng.random_range(1..=4),
            );
            let gamma = rng.random_range(0.0..0.999);
            let tau = 10f64.powf(rng.random_range(-2.0..1.5));
            let spec = all_specs(tau)[k];
            let m = random_model(&mut rng, n_s, n_a, n_z, gamma);
            let op = Operator::new(&m, spec).unwrap();
            let x = random_alpha(&mut rng, n_a, n_s, 50.0);
            let y = random_alpha(&mut rng, n_a, n_s, 50.0);
            let lhs = op.apply(&x).dist_inf(&op.apply(&y));
            let rhs = gamma * x.dist_inf(&y);
            ensure(lhs <= rhs + 1e-12, || {
                format!("{spec:?}: {lhs} > {rhs} + 1e-12")
            })?;
            worst = worst.max(lhs - rhs);
        }
    }
    Ok(format!("1200 triples, max excess {worst:.3e}"))
}

/// Value iteration with plain nested loops.
fn brute_force_qmdp(model: &PomdpModel, tol: f64) -> AlphaMatrix {
    let (n_s, n_a, gamma) = (model.n_states(), model.n_actions(), model.gamma());
    let mut q = vec![vec![0.0; n_s]; n_a];
    loop {
        let mut next = vec![vec![0.0; n_s]; n_a];
        let mut diff: f64 = 0.0;
        for a in 0..n_a {
            for s in 0..n_s {
                let mut ev = 0.0;
                for j in 0..n_s {
                    let best = (0..n_a).map(|b| q[b][j]).fold(f64::NEG_INFINITY, f64::max);
                    ev += model.transition_prob(s, a, j) * best;
                }
                next[a][s] = model.reward(s, a) + gamma * ev;
                diff = diff.max((next[a][s] - q[a][s]).abs());
            }
        }
        q = next;
        if diff < tol {
            return AlphaMatrix::from_rows(&q).unwrap();
        }
    }
}

fn oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = desk_model(&mut rng, 0.95);
        let reference = brute_force_qmdp(&m, 1e-13);
        let alpha =
            fixed_point(&m, OperatorSpec::qmdp(), 1e-12, 1_000_000).map_err(|e| e.to_string())?;
        let d = alpha.dist_inf(&reference);
        ensure(d <= 1e-9, || format!("distance {d:e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("20 models, max distance {worst:.3e}"))
}

fn entropy_band() -> Outcome {
    let example = 0.95 * 10.0 * 4f64.ln() / 0.05;
    ensure((example - 263.40).abs() < 0.005, || {
        format!("bound evaluates to {example}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut tightest = f64::INFINITY;
    for _ in 0..10 {
        let m = desk_model(&mut rng, 0.95);
        let hard =
            fixed_point(&m, OperatorSpec::qmdp(), 1e-12, 1_000_000).map_err(|e| e.to_string())?;
        for tau in [0.1, 1.0, 10.0] {
            let soft = fixed_point(&m, OperatorSpec::soft_qmdp(tau), 1e-12, 1_000_000)
                .map_err(|e| e.to_string())?;
            let band = m.gamma() * tau * (m.n_actions() as f64).ln() / (1.0 - m.gamma());
            // both fixed points carry a stopping error of at most tol/(1−γ)
            let slack = 2.0 * 1e-12 / (1.0 - m.gamma());
            let diff = soft.sub(&hard);
            let lo = diff
                .as_slice()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let hi = diff.inf_norm();
            ensure(lo >= -slack, || {
                format!("τ={tau}: α_τ − α has entry {lo:e}")
            })?;
            ensure(hi <= band + 1e-8, || format!("τ={tau}: {hi} > {band}"))?;
            tightest = tightest.min(band - hi);
        }
    }
    Ok(format!(
        "30 (model, τ) pairs; example bound {example:.2}; min headroom {tightest:.3e}"
    ))
}

fn aa_config(tau: f64, mode: Mode) -> SolverConfig {
    SolverConfig {
        mode,
        operator: OperatorSpec::soft_qmdp(tau),
        ..SolverConfig::default()
    }
}

fn aa_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut iters = Vec::new();
    for i in 0..10 {
        let m = desk_model(&mut rng, 0.95);
        let r = solve(
            &m,
            &SolverConfig {
                seed: i,
                ..aa_config(1.0, Mode::Aa)
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(r.converged && r.final_residual < 1e-6, || {
            format!("model {i}: residual {:e}", r.final_residual)
        })?;
        let reference = fixed_point(&m, OperatorSpec::soft_qmdp(1.0), 1e-12, 1_000_000)
            .map_err(|e| e.to_string())?;
        let d = r.alpha_final.dist_inf(&reference);
        let bound = 2e-6 / (1.0 - m.gamma());
        ensure(d <= bound, || {
            format!("model {i}: distance {d:e} > {bound:e}")
        })?;
        iters.push(r.iterations);
    }
    Ok(format!("10 models, iterations {iters:?}"))
}

fn navigation_models() -> Vec<(String, PomdpModel)> {
    let layouts = [
        (20, 1),
        (24, 1),
        (30, 1),
        (40, 1),
        (5, 4),
        (5, 5),
        (6, 4),
        (6, 5),
        (7, 4),
        (8, 4),
    ];
    layouts
        .iter()
        .enumerate()
        .map(|(i, &(width, height))| {
            let spec = NavigationSpec {
                width,
                height,
                slip: 0.1 + 0.02 * i as f64,
                sensor_noise: 0.1,
                gamma: 0.95,
            };
            (format!("{width}x{height}"), navigation(spec))
        })
        .collect()
}

fn acceleration() -> Outcome {
    let mut wins = 0;
    let mut reductions = Vec::new();
    let mut detail = Vec::new();
    for (name, m) in navigation_models() {
        let fpi = solve(&m, &aa_config(1.0, Mode::Fpi)).map_err(|e| e.to_string())?;
        let aa = solve(&m, &aa_config(1.0, Mode::Aa)).map_err(|e| e.to_string())?;
        if aa.iterations < fpi.iterations {
            wins += 1;
        }
        reductions.push(1.0 - aa.iterations as f64 / fpi.iterations as f64);
        detail.push(format!("{name}:{}→{}", fpi.iterations, aa.iterations));
    }
    reductions.sort_by(f64::total_cmp);
    let median = (reductions[4] + reductions[5]) / 2.0;
    let summary = format!(
        "{wins}/10 faster, median reduction {:.1}% [{}]",
        100.0 * median,
        detail.join(" ")
    );
    ensure(wins >= 8 && median >= 0.4, || summary.clone())?;
    Ok(summary)
}

fn aa_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut max_theta = f64::NEG_INFINITY;
    for trial in 0..100 {
        let n = rng.random_range(2..=12);
        let m_max = rng.random_range(1..=8);
        let eta = 10f64.powi(rng.random_range(-16..=-2));
        let mut mem = AaMemory::new(m_max);
        for _ in 0..rng.random_range(2..=10) {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            mem.push(&x, &f);
        }
        let aa = aa_weights(&mem, eta).map_err(|e| e.to_string())?;
        let sum: f64 = aa.weights.iter().sum();
        ensure(sum == 1.0, || format!("trial {trial}: Σw = {sum:?}"))?;
        let g = mem.latest_residual().unwrap();
        let theta = acceleration_factor(g, &aa.g_w).map_err(|e| e.to_string())?;
        ensure(theta <= 1.0 + 1e-12, || {
            format!("trial {trial}: θ = {theta}")
        })?;
        max_theta = max_theta.max(theta);
        let scale = 1.0 + aa.weights.iter().map(|w| w.abs()).sum::<f64>();
        for (k, gw) in aa.g_w.iter().enumerate() {
            let chained: f64 = aa
                .weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * mem.residual(i)[k])
                .sum();
            ensure((chained - gw).abs() <= 1e-10 * scale, || {
                format!("trial {trial}: g_w mismatch")
            })?;
        }
        let a_k = acceleration_matrix(&mem, eta).map_err(|e| e.to_string())?;
        let norm = a_k.svd(false, false).singular_values.max();
        ensure(norm <= 1.0 + 2.0 / eta, || {
            format!("trial {trial}: ‖A_k‖ = {norm:e}")
        })?;
    }
    Ok(format!("100 memories, max θ {max_theta:.6}"))
}

fn affine_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut used = Vec::new();
    for trial in 0..20 {
        let n = rng.random_range(2..=8);
        // x ↦ Mx + b with ‖M‖_∞ = 0.9
        let mut mat: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let norm = mat
            .iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        mat.iter_mut().flatten().for_each(|v| *v *= 0.9 / norm);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let apply = |x: &AlphaMatrix| {
            let v = x.as_slice();
            let out = (0..n)
                .map(|i| b[i] + (0..n).map(|j| mat[i][j] * v[j]).sum::<f64>())
                .collect();
            AlphaMatrix::from_vec(1, n, out).unwrap()
        };
        let config = SolverConfig {
            tolerance: 1e-8,
            max_iter: n + 2,
            m_max: n,
            eta: 1e-14,
            ..aa_config(1.0, Mode::Aa)
        };
        let x0 = random_alpha(&mut rng, 1, n, 5.0);
        match iterate(x0, apply, &config, |_, _| {}) {
            Ok(r) => used.push(r.iterations),
            Err(SolveError::MaxIterationsExceeded(r)) => {
                return Err(format!(
                    "trial {trial} (n={n}): residual {:e} after {}",
                    r.final_residual,
                    n + 2
                ))
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(format!("20 maps, iterations {used:?}"))
}

fn kl_shift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let m = desk_model(&mut rng, 0.95);
        let tau = rng.random_range(0.1..5.0);
        let soft = fixed_point(&m, OperatorSpec::soft_qmdp(tau), 1e-12, 1_000_000)
            .map_err(|e| e.to_string())?;
        let kl = fixed_point(&m, OperatorSpec::kl_qmdp(tau), 1e-12, 1_000_000)
            .map_err(|e| e.to_string())?;
        let shift = m.gamma() * tau * (m.n_actions() as f64).ln() / (1.0 - m.gamma());
        let d = soft.dist_inf(&kl.shifted(shift));
        ensure(d <= 1e-8, || format!("shift error {d:e}"))?;
        worst = worst.max(d);
        for s in 0..m.n_states() {
            let b = Belief::point(m.n_states(), s);
            ensure(policy_action(&soft, &b) == policy_action(&kl, &b), || {
                format!("greedy action differs at state {s}")
            })?;
        }
    }
    Ok(format!(
        "10 models, max shift error {worst:.3e}, greedy policies identical"
    ))
}

fn simulation_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let models: Vec<PomdpModel> = (0..5)
        .map(|_| {
            let (n_s, n_a) = (rng.random_range(3..=6), rng.random_range(2..=3));
            random_model(&mut rng, n_s, n_a, 2, 0.9)
        })
        .collect();
    let tau = 0.5;
    let mut runs = 0;
    let mut worst_ratio: f64 = 0.0;
    for (i, m) in models.iter().enumerate() {
        let hard =
            fixed_point(m, OperatorSpec::qmdp(), 1e-12, 1_000_000).map_err(|e| e.to_string())?;
        let gamma = m.gamma();
        for j_count in [10, 1000] {
            for seed in 0..10 {
                let config = SolverConfig {
                    seed,
                    max_iter: 200,
                    ..aa_config(tau, Mode::Aa)
                };
                let options = EmpiricalConfig {
                    j_count,
                    frozen_batch: false,
                };
                let r = solve_empirical(&model_simulator(m), &config, options, Some(m))
                    .map_err(|e| e.to_string())?;
                let eps = r.measured_eps.unwrap();
                let residual = r.exact_residual.unwrap();
                let bound = (1.0 + gamma) / (1.0 - gamma) * eps;
                ensure(residual <= bound, || {
                    format!("model {i} J={j_count} seed {seed}: residual {residual:e} > {bound:e}")
                })?;
                let dist = r.report.alpha_final.dist_inf(&hard);
                let dist_bound = (gamma * tau * (m.n_actions() as f64).ln() + (1.0 + gamma) * eps)
                    / (1.0 - gamma).powi(2);
                ensure(dist <= dist_bound, || {
                    format!("model {i} J={j_count} seed {seed}: distance {dist:e} > {dist_bound:e}")
                })?;
                worst_ratio = worst_ratio.max(residual / bound);
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs, max residual/bound {worst_ratio:.3}"))
}

fn parser_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    for trial in 0..100 {
        let (n_s, n_a, n_z) = (
            rng.random_range(1..=10),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        );
        let gamma = rng.random_range(0.0..0.999);
        let m = if trial % 2 == 0 {
            random_model(&mut rng, n_s, n_a, n_z, gamma)
        } else {
            random_sparse_model(&mut rng, n_s, n_a, n_z, gamma, 2)
        };
        let back = parse_pomdp(&write_pomdp(&m)).map_err(|e| e.to_string())?;
        ensure(back.gamma() == m.gamma(), || {
            format!("trial {trial}: discount changed")
        })?;
        ensure(
            (back.n_states(), back.n_actions(), back.n_observations()) == (n_s, n_a, n_z),
            || format!("trial {trial}: dimensions changed"),
        )?;
        for a in 0..n_a {
            for s in 0..n_s {
                let mut d = (back.reward(s, a) - m.reward(s, a)).abs();
                for j in 0..n_s {
                    d = d.max((back.transition_prob(s, a, j) - m.transition_prob(s, a, j)).abs());
                }
                for z in 0..n_z {
                    d = d.max((back.observation_prob(s, a, z) - m.observation_prob(s, a, z)).abs());
                }
                ensure(d <= 1e-12, || {
                    format!("trial {trial}: entry differs by {d:e}")
                })?;
            }
        }
        let b0 = m.initial_belief().probs();
        let b1 = back.initial_belief().probs();
        ensure(
            b0.iter().zip(b1).all(|(x, y)| (x - y).abs() <= 1e-12),
            || format!("trial {trial}: start differs"),
        )?;
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(models_dir().join("corpus"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    files.push(models_dir().join("tiger.pomdp"));
    files.push(models_dir().join("geo1.pomdp"));
    files.sort();
    for path in &files {
        let src = PomdpSource::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
        parse_pomdp(&src).map_err(|e| e.to_string())?;
    }
    Ok(format!("100 random models, {} corpus files", files.len()))
}

fn bench_run(out: &Path) -> Result<String, String> {
    let tiger = models_dir().join("tiger.pomdp");
    let chain = out.with_file_name("chain.pomdp");
    let m = navigation(NavigationSpec {
        width: 10,
        height: 1,
        slip: 0.2,
        sensor_noise: 0.1,
        gamma: 0.95,
    });
    std::fs::write(&chain, write_pomdp(&m).text).map_err(|e| e.to_string())?;
    let cli = Cli::parse_from([
        "pomdp-aa",
        "bench",
        "--model",
        tiger.to_str().unwrap(),
        chain.to_str().unwrap(),
        "--operator",
        "qmdp,sqmdp,fib,sfib",
        "--mode",
        "fpi,aa",
        "--safeguard",
        "on,off",
        "--repeats",
        "3",
        "--trajectories",
        "30",
        "--horizon",
        "40",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let code = pomdp_aa_cli::run(cli);
    ensure(code == 0, || format!("bench exited with {code}"))?;
    let text = std::fs::read_to_string(out).map_err(|e| e.to_string())?;
    // drop the timing column
    Ok(text
        .lines()
        .map(|l| {
            let mut r = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(l.as_bytes());
            let rec = r.records().next().unwrap().unwrap();
            rec.iter()
                .enumerate()
                .filter(|(i, _)| *i != 4)
                .map(|(_, c)| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

fn bench_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("pomdp-aa-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let a = bench_run(&dir.join("a.csv"));
    let b = bench_run(&dir.join("b.csv"));
    let _ = std::fs::remove_dir_all(&dir);
    let (a, b) = (a?, b?);
    ensure(a == b, || "tables differ outside the timing column".into())?;
    Ok(format!("{} rows identical", a.lines().count() - 1))
}

/// Runs only when `POMDP_BENCHMARKS` names a directory holding `sunysb.pomdp`.
fn benchmark_scale() -> Option<Outcome> {
    let dir = std::env::var_os("POMDP_BENCHMARKS")?;
    let path = Path::new(&dir).join("sunysb.pomdp");
    if !path.exists() {
        return None;
    }
    Some((|| {
        let src = PomdpSource::from_path(&path).map_err(|e| e.to_string())?;
        let m = parse_pomdp(&src).map_err(|e| e.to_string())?;
        let fpi = solve(&m, &aa_config(1.0, Mode::Fpi)).map_err(|e| e.to_string())?;
        let aa = solve(&m, &aa_config(1.0, Mode::Aa)).map_err(|e| e.to_string())?;
        let reduction = 1.0 - aa.iterations as f64 / fpi.iterations as f64;
        let summary = format!(
            "sunysb: FPI {} iterations, AA {} ({:.1}% fewer)",
            fpi.iterations,
            aa.iterations,
            100.0 * reduction
        );
        ensure(reduction >= 0.8, || summary.clone())?;
        Ok(summary)
    })())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("contraction", contraction),
        ("fixed-point oracle", oracle),
        ("entropy band", entropy_band),
        ("AA convergence", aa_convergence),
        ("acceleration", acceleration),
        ("AA identities", aa_identities),
        ("affine exactness", affine_exactness),
        ("kQMDP shift", kl_shift),
        ("simulation bounds", simulation_bounds),
        ("parser round trip", parser_round_trip),
        ("bench determinism", bench_determinism),
    ];
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome, secs: f64| match outcome {
        Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
        Err(why) => {
            failed += 1;
            println!("FAIL {name} ({secs:.1} s): {why}");
        }
    };
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = check();
        report(name, outcome, t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    match benchmark_scale() {
        Some(outcome) => report("benchmark scale", outcome, t.elapsed().as_secs_f64()),
        None => println!("SKIP benchmark scale: set POMDP_BENCHMARKS to a directory with sunysb.pomdp"),
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
