//! Stabilized Anderson acceleration with double safeguarding.
//!
//! The solver keeps the last `M + 1` iterates `x^i` together with their
//! operator images `F(x^i)` and residuals `g^i = x^i − F(x^i)`. Each step
//! solves the Tikhonov-regularized least-squares problem
//!
//! ```text
//! ξ = argmin ‖g^k − Y_k ξ‖² + η_k ‖ξ‖²,   η_k = η (‖S_k‖_F² + ‖Y_k‖_F²)
//! ```
//!
//! maps `ξ` to affine weights `w` (`Σ w_i = 1`) and proposes
//! `Σ w_i F(x^{k−M^k+i})`. The candidate is accepted only if its
//! acceleration factor `θ = ‖g_w‖₂ / ‖g^k‖₂` beats the target
//! `m̄ − m ‖g_w‖₂^κ` and, at the start of each run of accepted steps, the
//! residual is below the decaying bound `D ‖g^0‖_∞ (n_AA/N_s + 1)^{−(1+φ)}`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PomdpModel;
use crate::operators::{inf_norm, l2_norm, AlphaMatrix, Operator, OperatorError, OperatorSpec};

#[derive(Debug, Error)]
pub enum AccelError {
    #[error("regularized normal equations are singular")]
    SingularSystem,
    #[error("residual is exactly zero")]
    ZeroResidual,
    #[error("memory holds no residual differences yet")]
    EmptyMemory,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field} = {value} is out of range ({rule})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Simulation(#[from] crate::sim::SimError),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("stopping criterion not met after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    MaxIterationsExceeded(Box<SolveReport>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Accel(#[from] AccelError),
    #[error("iterate became non-finite at iteration {0}")]
    NonFinite(usize),
}

impl SolveError {
    /// The partial report carried by `MaxIterationsExceeded`.
    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            SolveError::MaxIterationsExceeded(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fpi,
    Aa,
}

/// Solver hyperparameters. Defaults follow the benchmark protocol
/// (`D = 1e6`, `N_s = 400`, `η = 1e-16`, `M = 16`, tolerance `1e-6`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    pub m_max: usize,
    pub eta: f64,
    pub big_d: f64,
    pub phi: f64,
    pub n_s: usize,
    pub m_coef: f64,
    pub m_bar: f64,
    pub kappa: f64,
    /// Whether the target-acceleration-factor test is applied. With it off
    /// only the residual safeguard remains.
    pub theta_targ: bool,
    pub seed: u64,
    pub mode: Mode,
    pub operator: OperatorSpec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-6,
            max_iter: 100_000,
            m_max: 16,
            eta: 1e-16,
            big_d: 1e6,
            phi: 1.0,
            n_s: 400,
            m_coef: 1.0,
            m_bar: 1.0,
            kappa: 2.0,
            theta_targ: true,
            seed: 0,
            mode: Mode::Aa,
            operator: OperatorSpec::soft_qmdp(1.0),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    field,
                    value,
                    rule: "must be > 0",
                })
            }
        };
        positive("tolerance", self.tolerance)?;
        positive("eta", self.eta)?;
        positive("big_d", self.big_d)?;
        positive("phi", self.phi)?;
        positive("m_coef", self.m_coef)?;
        positive("kappa", self.kappa)?;
        positive("m_max", self.m_max as f64)?;
        positive("n_s", self.n_s as f64)?;
        positive("max_iter", self.max_iter as f64)?;
        if !(self.m_bar > 0.0 && self.m_bar <= 1.0) {
            return Err(ConfigError::OutOfRange {
                field: "m_bar",
                value: self.m_bar,
                rule: "must lie in (0, 1]",
            });
        }
        self.operator.validate()?;
        Ok(())
    }
}

/// One stored iterate with its operator image and residual.
#[derive(Debug, Clone)]
struct MemoryEntry {
    iterate: Vec<f64>,
    image: Vec<f64>,
    residual: Vec<f64>,
}

/// Ring of the last `M + 1` iterates. `Y_k` and `S_k` have `M^k` columns
/// `y^ℓ = g^{ℓ+1} − g^ℓ` and `s^ℓ = x^{ℓ+1} − x^ℓ`, oldest first.
#[derive(Debug, Clone)]
pub struct AaMemory {
    m_max: usize,
    entries: VecDeque<MemoryEntry>,
}

impl AaMemory {
    pub fn new(m_max: usize) -> Self {
        assert!(m_max >= 1);
        AaMemory {
            m_max,
            entries: VecDeque::with_capacity(m_max + 1),
        }
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Stores `x` and `F(x)`; the residual is computed here.
    pub fn push(&mut self, iterate: &[f64], image: &[f64]) {
        debug_assert_eq!(iterate.len(), image.len());
        let residual = iterate.iter().zip(image).map(|(x, f)| x - f).collect();
        if self.entries.len() == self.m_max + 1 {
            self.entries.pop_front();
        }
        self.entries.push_back(MemoryEntry {
            iterate: iterate.to_vec(),
            image: image.to_vec(),
            residual,
        });
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Number of stored iterates, `M^k + 1`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `M^k`, the number of difference columns.
    pub fn columns(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// Newest residual `g^k`.
    pub fn latest_residual(&self) -> Option<&[f64]> {
        self.entries.back().map(|e| e.residual.as_slice())
    }

    pub fn residual(&self, i: usize) -> &[f64] {
        &self.entries[i].residual
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.entries[i].image
    }

    pub fn iterate(&self, i: usize) -> &[f64] {
        &self.entries[i].iterate
    }

    fn diff_matrix(&self, pick: impl Fn(&MemoryEntry) -> &[f64]) -> DMatrix<f64> {
        let n = self.entries.front().map_or(0, |e| e.iterate.len());
        let cols = self.columns();
        DMatrix::from_fn(n, cols, |r, c| {
            pick(&self.entries[c + 1])[r] - pick(&self.entries[c])[r]
        })
    }

    /// `Y_k` as an `N × M^k` matrix.
    pub fn y_matrix(&self) -> DMatrix<f64> {
        self.diff_matrix(|e| &e.residual)
    }

    /// `S_k` as an `N × M^k` matrix.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        self.diff_matrix(|e| &e.iterate)
    }
}

/// Solution of the regularized least-squares step.
#[derive(Debug, Clone)]
pub struct AaWeights {
    pub xi: Vec<f64>,
    /// Affine weights over the stored iterates, oldest first.
    pub weights: Vec<f64>,
    /// Combined residual `g^k − Y_k ξ`.
    pub g_w: Vec<f64>,
    /// The adaptive regularization `η_k` that was used.
    pub eta_k: f64,
}

trait UlpStep {
    fn next_up_by(self, k: usize) -> Self;
    fn next_down_by(self, k: usize) -> Self;
}

impl UlpStep for f64 {
    fn next_up_by(self, k: usize) -> f64 {
        (0..k).fold(self, |x, _| x.next_up())
    }

    fn next_down_by(self, k: usize) -> f64 {
        (0..k).fold(self, |x, _| x.next_down())
    }
}

/// Maps least-squares coefficients `ξ` to affine weights:
/// `w_0 = ξ_0`, `w_i = ξ_i − ξ_{i−1}`, `w_M = 1 − ξ_{M−1}`.
///
/// Individual weights may then move by a few ulps so that the left-to-right
/// floating-point sum of the weights is exactly one.
pub fn weights_from_xi(xi: &[f64]) -> Vec<f64> {
    let m = xi.len();
    let mut w = Vec::with_capacity(m + 1);
    if m == 0 {
        w.push(1.0);
        return w;
    }
    w.push(xi[0]);
    for i in 1..m {
        w.push(xi[i] - xi[i - 1]);
    }
    // The weights telescope to one, but the rounded left-to-right sum need
    // not. Pick `last`, then move w_{M−1} by a few ulps so that the partial
    // sum equals `1 − last` exactly. The step changes at round-off level.
    let head: f64 = w.iter().sum();
    let last = 1.0 - head;
    let target = 1.0 - last;
    if target + last == 1.0 {
        let prefix: f64 = w[..m - 1].iter().sum();
        let ideal = target - prefix;
        let v = (0..9usize)
            .map(|k| {
                if k % 2 == 1 {
                    ideal.next_up_by(k.div_ceil(2))
                } else {
                    ideal.next_down_by(k / 2)
                }
            })
            .find(|&v| prefix + v == target)
            .unwrap_or(ideal);
        let keep = w[m - 1];
        w[m - 1] = v;
        if w.iter().sum::<f64>() + last == 1.0 {
            w.push(last);
            return w;
        }
        w[m - 1] = keep;
    }
    // Otherwise search small perturbations of each weight in turn.
    for j in (0..m).rev() {
        let anchor = w[j];
        for k in 1..16usize {
            w[j] = if k % 2 == 1 {
                anchor.next_up_by(k.div_ceil(2))
            } else {
                anchor.next_down_by(k / 2)
            };
            let head: f64 = w.iter().sum();
            let base = (1.0 - head).next_down_by(2);
            for step in 0..5 {
                let last = base.next_up_by(step);
                if head + last == 1.0 {
                    w.push(last);
                    return w;
                }
            }
        }
        w[j] = anchor;
    }
    w.push(last);
    w
}

/// Solves `(Y_kᵀY_k + η_k I) ξ = Y_kᵀ g^k` and derives the affine weights and
/// the combined residual.
pub fn aa_weights(memory: &AaMemory, eta: f64) -> Result<AaWeights, AccelError> {
    let g = memory.latest_residual().ok_or(AccelError::EmptyMemory)?;
    let cols = memory.columns();
    if cols == 0 {
        return Err(AccelError::EmptyMemory);
    }
    let y = memory.y_matrix();
    let s = memory.s_matrix();
    let g_vec = DVector::from_column_slice(g);
    let eta_k = eta * (s.norm_squared() + y.norm_squared());
    let mut lhs = y.tr_mul(&y);
    for i in 0..cols {
        lhs[(i, i)] += eta_k;
    }
    let rhs = y.tr_mul(&g_vec);
    let xi = match lhs.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            // Round-off can break positive definiteness when η_k is tiny.
            if eta_k == 0.0 && lhs.iter().all(|&v| v == 0.0) {
                return Err(AccelError::SingularSystem);
            }
            let svd = lhs.svd(true, true);
            let tol = f64::EPSILON * svd.singular_values.max() * cols as f64;
            svd.solve(&rhs, tol)
                .map_err(|_| AccelError::SingularSystem)?
        }
    };
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(AccelError::SingularSystem);
    }
    let g_w = &g_vec - &y * &xi;
    let xi: Vec<f64> = xi.iter().copied().collect();
    Ok(AaWeights {
        weights: weights_from_xi(&xi),
        xi,
        g_w: g_w.iter().copied().collect(),
        eta_k,
    })
}

/// `Σ_i w_i F(x^{k−M^k+i})`.
pub fn aa_candidate(memory: &AaMemory, weights: &[f64]) -> Vec<f64> {
    assert_eq!(weights.len(), memory.len());
    let n = memory.image(0).len();
    let mut out = vec![0.0; n];
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &f) in out.iter_mut().zip(memory.image(i)) {
            *o += w * f;
        }
    }
    out
}

/// The implicit Jacobian-inverse approximation
/// `A_k = I + (S_k − Y_k)(Y_kᵀY_k + η_k I)⁻¹ Y_kᵀ`, so that the AA step
/// equals `x^k − A_k g^k`. Only meant for small problems.
pub fn acceleration_matrix(memory: &AaMemory, eta: f64) -> Result<DMatrix<f64>, AccelError> {
    let cols = memory.columns();
    if cols == 0 {
        return Err(AccelError::EmptyMemory);
    }
    let y = memory.y_matrix();
    let s = memory.s_matrix();
    let eta_k = eta * (s.norm_squared() + y.norm_squared());
    let mut lhs = y.tr_mul(&y);
    for i in 0..cols {
        lhs[(i, i)] += eta_k;
    }
    let inv = lhs.cholesky().ok_or(AccelError::SingularSystem)?.inverse();
    let n = y.nrows();
    Ok(DMatrix::identity(n, n) + (&s - &y) * inv * y.transpose())
}

/// `θ = ‖g_w‖₂ / ‖g^k‖₂`.
pub fn acceleration_factor(g_k: &[f64], g_w: &[f64]) -> Result<f64, AccelError> {
    let denom = l2_norm(g_k);
    if denom == 0.0 {
        return Err(AccelError::ZeroResidual);
    }
    Ok(l2_norm(g_w) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// `θ_targ = m̄ − m ‖g_w‖₂^κ`.
pub fn target_acceleration_factor(g_w_norm: f64, m_coef: f64, m_bar: f64, kappa: f64) -> f64 {
    m_bar - m_coef * g_w_norm.powf(kappa)
}

/// Rejects when `θ > m̄ − m ‖g_w‖₂^κ`.
pub fn safeguard_factor(theta: f64, g_w_norm: f64, m_coef: f64, m_bar: f64, kappa: f64) -> Verdict {
    if theta > target_acceleration_factor(g_w_norm, m_coef, m_bar, kappa) {
        Verdict::Reject
    } else {
        Verdict::Accept
    }
}

/// `D ‖g^0‖_∞ (n_AA/N_s + 1)^{−(1+φ)}`.
pub fn target_residual(g_0_inf: f64, n_aa: usize, big_d: f64, phi: f64, n_s: usize) -> f64 {
    big_d * g_0_inf * (n_aa as f64 / n_s as f64 + 1.0).powf(-(1.0 + phi))
}

/// Accepts when `‖g^k‖_∞` is within the target residual.
pub fn safeguard_residual(
    g_k_inf: f64,
    g_0_inf: f64,
    n_aa: usize,
    big_d: f64,
    phi: f64,
    n_s: usize,
) -> Verdict {
    if g_k_inf <= target_residual(g_0_inf, n_aa, big_d, phi, n_s) {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Candidate {
    Fpi,
    Aa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rejection {
    Factor,
    Residual,
}

/// How one iterate was produced and what its residual turned out to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub candidate: Candidate,
    pub theta: Option<f64>,
    pub theta_targ: Option<f64>,
    pub rejected_by: Option<Rejection>,
    /// Sum of the AA weights, when AA weights were computed.
    pub weight_sum: Option<f64>,
    /// `‖g‖_∞` of the iterate this step produced.
    pub residual: f64,
}

impl StepRecord {
    fn fpi() -> Self {
        StepRecord {
            candidate: Candidate::Fpi,
            theta: None,
            theta_targ: None,
            rejected_by: None,
            weight_sum: None,
            residual: f64::NAN,
        }
    }
}

/// Per-run metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub alpha_final: AlphaMatrix,
    /// Number of updates `α^k → α^{k+1}` performed (`#iter`).
    pub iterations: usize,
    /// Number of updates that used the AA candidate (`#AA`).
    pub aa_accepted: usize,
    pub wall_time_s: f64,
    /// `‖g^0‖_∞` of the initial iterate.
    pub initial_residual: f64,
    /// `‖g^k‖_∞` for `k = 1..=iterations`.
    pub residual_history: Vec<f64>,
    pub step_log: Vec<StepRecord>,
    pub final_residual: f64,
    pub converged: bool,
}

/// Uniform random α with entries in `[r_min/(1−γ), r_max/(1−γ)]`.
pub fn initial_alpha(model: &PomdpModel, seed: u64) -> AlphaMatrix {
    random_alpha(
        model.n_actions(),
        model.n_states(),
        model.reward_min(),
        model.reward_max(),
        model.gamma(),
        seed,
    )
}

/// [`initial_alpha`] from the reward range alone.
pub fn random_alpha(
    n_actions: usize,
    n_states: usize,
    reward_min: f64,
    reward_max: f64,
    gamma: f64,
    seed: u64,
) -> AlphaMatrix {
    let scale = 1.0 / (1.0 - gamma);
    let (lo, hi) = (reward_min * scale, reward_max * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = AlphaMatrix::zeros(n_actions, n_states);
    for v in alpha.as_mut_slice() {
        *v = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
    }
    alpha
}

/// Wall clock for `wall_time_s`. `std::time::Instant` panics on
/// `wasm32-unknown-unknown`, so there the reported time is zero.
struct Stopwatch {
    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    started: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            started: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.started.elapsed().as_secs_f64();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        return 0.0;
    }
}

/// Runs fixed-point iteration or safeguarded AA on an arbitrary map.
///
/// `observe(α^k, F(α^k))` is called once per operator evaluation, including
/// the initial iterate.
pub fn iterate<F, O>(
    alpha0: AlphaMatrix,
    mut apply: F,
    config: &SolverConfig,
    mut observe: O,
) -> Result<SolveReport, SolveError>
where
    F: FnMut(&AlphaMatrix) -> AlphaMatrix,
    O: FnMut(&AlphaMatrix, &AlphaMatrix),
{
    config.validate()?;
    let started = Stopwatch::start();
    let (n_a, n_s) = (alpha0.n_actions(), alpha0.n_states());
    let mut memory = AaMemory::new(config.m_max);

    let mut x = alpha0;
    let mut fx = apply(&x);
    observe(&x, &fx);
    memory.push(x.as_slice(), fx.as_slice());
    let g0_inf = inf_norm(memory.latest_residual().unwrap());

    let mut report = SolveReport {
        alpha_final: x.clone(),
        iterations: 0,
        aa_accepted: 0,
        wall_time_s: 0.0,
        initial_residual: g0_inf,
        residual_history: Vec::new(),
        step_log: Vec::new(),
        final_residual: g0_inf,
        converged: false,
    };
    // The stopping test follows an update, so at least one step is taken
    // even from an exact fixed point.

    let mut first_run = true; // flag I
    let mut n_aa_total = 0usize; // n_AA
    let mut run_length = 0usize; // N_AA
    let mut next = fx.clone();
    let mut pending = StepRecord::fpi();

    loop {
        if report.iterations == config.max_iter {
            report.alpha_final = x;
            report.wall_time_s = started.seconds();
            return Err(SolveError::MaxIterationsExceeded(Box::new(report)));
        }
        x = next;
        report.iterations += 1;
        if !x.is_finite() {
            return Err(SolveError::NonFinite(report.iterations));
        }
        fx = apply(&x);
        observe(&x, &fx);
        memory.push(x.as_slice(), fx.as_slice());
        let g = memory.latest_residual().unwrap();
        let g_inf = inf_norm(g);
        pending.residual = g_inf;
        if pending.candidate == Candidate::Aa {
            report.aa_accepted += 1;
        }
        report
            .step_log
            .push(std::mem::replace(&mut pending, StepRecord::fpi()));
        report.residual_history.push(g_inf);
        report.final_residual = g_inf;

        if g_inf < config.tolerance {
            report.converged = true;
            report.alpha_final = x;
            report.wall_time_s = started.seconds();
            return Ok(report);
        }

        if config.mode == Mode::Fpi {
            next = fx.clone();
            continue;
        }

        let aa = aa_weights(&memory, config.eta)?;
        let theta = acceleration_factor(g, &aa.g_w)?;
        let g_w_norm = l2_norm(&aa.g_w);
        let theta_targ =
            target_acceleration_factor(g_w_norm, config.m_coef, config.m_bar, config.kappa);
        pending.theta = Some(theta);
        pending.theta_targ = Some(theta_targ);
        pending.weight_sum = Some(aa.weights.iter().sum());

        let take_aa = if config.theta_targ && theta > theta_targ {
            pending.rejected_by = Some(Rejection::Factor);
            run_length = 0;
            false
        } else if first_run || run_length >= config.n_s {
            match safeguard_residual(
                g_inf,
                g0_inf,
                n_aa_total,
                config.big_d,
                config.phi,
                config.n_s,
            ) {
                Verdict::Accept => {
                    n_aa_total += 1;
                    run_length = 1;
                    first_run = false;
                    true
                }
                Verdict::Reject => {
                    pending.rejected_by = Some(Rejection::Residual);
                    run_length = 0;
                    false
                }
            }
        } else {
            n_aa_total += 1;
            run_length += 1;
            true
        };

        next = if take_aa {
            pending.candidate = Candidate::Aa;
            let values = aa_candidate(&memory, &aa.weights);
            AlphaMatrix::from_vec(n_a, n_s, values).expect("candidate has iterate shape")
        } else {
            fx.clone()
        };
    }
}

/// Solves for the fixed point of `config.operator` on `model`, starting
/// from a seeded random α.
pub fn solve(model: &PomdpModel, config: &SolverConfig) -> Result<SolveReport, SolveError> {
    config.validate()?;
    let op = Operator::new(model, config.operator).map_err(ConfigError::from)?;
    let alpha0 = initial_alpha(model, config.seed);
    iterate(alpha0, |a| op.apply(a), config, |_, _| {})
}

/// Plain FPI from a given start until `‖g‖_∞ < tolerance`; returns the last
/// iterate. Used as a reference path.
pub fn fixed_point(
    model: &PomdpModel,
    spec: OperatorSpec,
    tolerance: f64,
    max_iter: usize,
) -> Result<AlphaMatrix, SolveError> {
    let config = SolverConfig {
        tolerance,
        max_iter,
        mode: Mode::Fpi,
        operator: spec,
        ..SolverConfig::default()
    };
    solve(model, &config).map(|r| r.alpha_final)
}
