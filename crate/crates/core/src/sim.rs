//! Generative models and the sample-based QMDP operators.
//!
//! A [`GenerativeModel`] replaces the explicit kernels with a sampler
//! `(s, a) → (s', z, r)`. The empirical operator averages `J` fresh samples
//! per `(s, a)` cell:
//!
//! ```text
//! (F̂α)(s, a) = (1/J) Σ_j [ r_j + γ backup(α(s'_j, ·)) ]
//! ```
//!
//! Only the QMDP family is supported. The entropy-regularized form is the
//! primary one; the plain and KL variants swap the inner backup.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::accel::{iterate, random_alpha, SolveError, SolveReport, SolverConfig};
use crate::model::PomdpModel;
use crate::operators::{AlphaMatrix, Operator, OperatorFamily, OperatorSpec};

/// One draw from a generative model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub next: usize,
    pub observation: usize,
    pub reward: f64,
}

/// Black-box simulator. Implementations must draw from a fixed law per
/// `(s, a)` and take all randomness from `rng`.
pub trait GenerativeModel {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn n_observations(&self) -> usize;
    fn gamma(&self) -> f64;
    fn reward_min(&self) -> f64;
    fn reward_max(&self) -> f64;
    fn sample(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> Sample;
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("the empirical operator needs at least one sample per cell")]
    NoSamples,
    #[error("empirical operators are only defined for the QMDP family, got {0}")]
    UnsupportedOperator(&'static str),
    #[error("alpha has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Draws an index from a sparse categorical row.
pub(crate) fn sample_row(idx: &[usize], val: &[f64], rng: &mut dyn RngCore) -> usize {
    if idx.len() == 1 {
        return idx[0];
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&i, &p) in idx.iter().zip(val) {
        acc += p;
        if u < acc {
            return i;
        }
    }
    *idx.last().expect("rows of a valid model are nonempty")
}

/// Sampler backed by an explicit model: `s' ~ T(s, a, ·)`,
/// `z ~ O(s', a, ·)`, `r = R(s, a)`.
#[derive(Debug, Clone, Copy)]
pub struct ModelSimulator<'m> {
    model: &'m PomdpModel,
}

pub fn model_simulator(model: &PomdpModel) -> ModelSimulator<'_> {
    ModelSimulator { model }
}

impl<'m> ModelSimulator<'m> {
    pub fn model(&self) -> &'m PomdpModel {
        self.model
    }
}

impl GenerativeModel for ModelSimulator<'_> {
    fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn n_observations(&self) -> usize {
        self.model.n_observations()
    }

    fn gamma(&self) -> f64 {
        self.model.gamma()
    }

    fn reward_min(&self) -> f64 {
        self.model.reward_min()
    }

    fn reward_max(&self) -> f64 {
        self.model.reward_max()
    }

    fn sample(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> Sample {
        let (idx, val) = self.model.transition_row(s, a);
        let next = sample_row(idx, val, rng);
        let (idx, val) = self.model.observation_row(next, a);
        let observation = sample_row(idx, val, rng);
        Sample {
            next,
            observation,
            reward: self.model.reward(s, a),
        }
    }
}

/// `J` samples for every `(s, a)` cell, stored action-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    n_states: usize,
    j_count: usize,
    samples: Vec<Sample>,
}

impl SampleBatch {
    pub fn draw<G: GenerativeModel + ?Sized>(
        generator: &G,
        j_count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self, SimError> {
        if j_count == 0 {
            return Err(SimError::NoSamples);
        }
        let (n_s, n_a) = (generator.n_states(), generator.n_actions());
        let mut samples = Vec::with_capacity(n_s * n_a * j_count);
        for a in 0..n_a {
            for s in 0..n_s {
                for _ in 0..j_count {
                    samples.push(generator.sample(s, a, rng));
                }
            }
        }
        Ok(SampleBatch {
            n_states: n_s,
            j_count,
            samples,
        })
    }

    pub fn j_count(&self) -> usize {
        self.j_count
    }

    pub fn cell(&self, s: usize, a: usize) -> &[Sample] {
        let start = (a * self.n_states + s) * self.j_count;
        &self.samples[start..start + self.j_count]
    }

    /// Applies the empirical operator using these samples.
    pub fn apply(
        &self,
        spec: &OperatorSpec,
        alpha: &AlphaMatrix,
        gamma: f64,
    ) -> Result<AlphaMatrix, SimError> {
        check_spec(spec)?;
        let n_a = self.samples.len() / (self.n_states * self.j_count);
        check_shape(alpha, n_a, self.n_states)?;
        let backups = state_backups(spec, alpha);
        let mut out = AlphaMatrix::zeros(n_a, self.n_states);
        let dst = out.as_mut_slice();
        let j = self.j_count as f64;
        for (row, cell) in self.samples.chunks(self.j_count).enumerate() {
            let (r, v) = cell
                .iter()
                .fold((0.0, 0.0), |(r, v), x| (r + x.reward, v + backups[x.next]));
            dst[row] = (r + gamma * v) / j;
        }
        Ok(out)
    }
}

fn check_spec(spec: &OperatorSpec) -> Result<(), SimError> {
    if spec.family != OperatorFamily::Qmdp {
        return Err(SimError::UnsupportedOperator(spec.name()));
    }
    Ok(())
}

fn check_shape(alpha: &AlphaMatrix, n_a: usize, n_s: usize) -> Result<(), SimError> {
    if (alpha.n_actions(), alpha.n_states()) != (n_a, n_s) {
        return Err(SimError::ShapeMismatch {
            expected: (n_a, n_s),
            found: (alpha.n_actions(), alpha.n_states()),
        });
    }
    Ok(())
}

fn state_backups(spec: &OperatorSpec, alpha: &AlphaMatrix) -> Vec<f64> {
    (0..alpha.n_states())
        .map(|s| spec.backup(&alpha.state_values(s)))
        .collect()
}

/// One application of the empirical operator with `j_count` fresh samples
/// per cell.
pub fn apply_empirical<G: GenerativeModel + ?Sized>(
    generator: &G,
    spec: &OperatorSpec,
    alpha: &AlphaMatrix,
    j_count: usize,
    rng: &mut dyn RngCore,
) -> Result<AlphaMatrix, SimError> {
    check_spec(spec)?;
    check_shape(alpha, generator.n_actions(), generator.n_states())?;
    if j_count == 0 {
        return Err(SimError::NoSamples);
    }
    let (n_s, n_a, gamma) = (
        generator.n_states(),
        generator.n_actions(),
        generator.gamma(),
    );
    let backups = state_backups(spec, alpha);
    let mut out = AlphaMatrix::zeros(n_a, n_s);
    let dst = out.as_mut_slice();
    for a in 0..n_a {
        for s in 0..n_s {
            let mut total = 0.0;
            for _ in 0..j_count {
                let x = generator.sample(s, a, rng);
                total += x.reward + gamma * backups[x.next];
            }
            dst[a * n_s + s] = total / j_count as f64;
        }
    }
    Ok(out)
}

/// Options for [`solve_empirical`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalConfig {
    pub j_count: usize,
    /// Draw one batch up front and reuse it at every iteration.
    pub frozen_batch: bool,
}

/// Result of an empirical solve. Unlike [`crate::accel::solve`], running out
/// of iterations is not an error here: sampling noise can keep the residual
/// above the tolerance, so `report.converged` tells the two cases apart.
#[derive(Debug, Clone)]
pub struct EmpiricalReport {
    pub report: SolveReport,
    /// Smallest empirical residual seen.
    pub best_residual: f64,
    /// `max_k ‖F̂α^k − Fα^k‖_∞`, when the exact operator is available.
    pub measured_eps: Option<f64>,
    /// `‖α_final − Fα_final‖_∞` under the exact operator.
    pub exact_residual: Option<f64>,
    /// Minimum exact residual over the trailing window, standing in for
    /// the liminf.
    pub tail_exact_residual: Option<f64>,
}

/// Length of the trailing window used for liminf estimates.
pub fn tail_window(iterations: usize) -> usize {
    10.max(iterations.div_ceil(10))
}

/// Runs FPI or safeguarded AA with the empirical operator.
///
/// When `exact` is the model behind `generator`, every iterate is also
/// pushed through the exact operator to measure the sampling error.
pub fn solve_empirical<G: GenerativeModel + ?Sized>(
    generator: &G,
    config: &SolverConfig,
    options: EmpiricalConfig,
    exact: Option<&PomdpModel>,
) -> Result<EmpiricalReport, SolveError> {
    config.validate()?;
    let spec = config.operator;
    let sim_error = |e: SimError| SolveError::Config(e.into());
    check_spec(&spec).map_err(sim_error)?;
    if options.j_count == 0 {
        return Err(sim_error(SimError::NoSamples));
    }
    let exact_op = exact
        .map(|m| Operator::new(m, spec))
        .transpose()
        .map_err(crate::accel::ConfigError::from)?;

    let alpha0 = random_alpha(
        generator.n_actions(),
        generator.n_states(),
        generator.reward_min(),
        generator.reward_max(),
        generator.gamma(),
        config.seed,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let frozen = if options.frozen_batch {
        Some(SampleBatch::draw(generator, options.j_count, &mut rng).map_err(sim_error)?)
    } else {
        None
    };
    let gamma = generator.gamma();
    let apply = |alpha: &AlphaMatrix| match &frozen {
        Some(batch) => batch.apply(&spec, alpha, gamma).expect("shape checked"),
        None => apply_empirical(generator, &spec, alpha, options.j_count, &mut rng)
            .expect("shape checked"),
    };

    let mut eps: f64 = 0.0;
    let mut exact_history = Vec::new();
    let observe = |x: &AlphaMatrix, fx: &AlphaMatrix| {
        if let Some(op) = &exact_op {
            let exact_fx = op.apply(x);
            eps = eps.max(fx.dist_inf(&exact_fx));
            exact_history.push(x.dist_inf(&exact_fx));
        }
    };
    let report = match iterate(alpha0, apply, config, observe) {
        Ok(r) => r,
        Err(SolveError::MaxIterationsExceeded(r)) => *r,
        Err(e) => return Err(e),
    };

    let best_residual = report
        .residual_history
        .iter()
        .copied()
        .fold(report.initial_residual, f64::min);
    let (measured_eps, exact_residual, tail_exact_residual) = match &exact_op {
        Some(op) => {
            let final_res = op.residual(&report.alpha_final).inf_norm();
            // exact_history[k] belongs to α^k, k = 0..=iterations
            let window = tail_window(report.iterations).min(exact_history.len());
            let tail = exact_history[exact_history.len() - window..]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            (Some(eps), Some(final_res), Some(tail))
        }
        None => (None, None, None),
    };
    Ok(EmpiricalReport {
        report,
        best_residual,
        measured_eps,
        exact_residual,
        tail_exact_residual,
    })
}
