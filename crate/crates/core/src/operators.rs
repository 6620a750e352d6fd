//! State-space fixed-point operators on α-vectors.
//!
//! Every operator has the form
//!
//! ```text
//! (Fα)(s, a) = R(s, a) + γ · E[ backup(·) ]
//! ```
//!
//! where the QMDP family takes the expectation over `T(s, a, ·)` of a backup
//! of `α(s', ·)`, and the FIB family sums over observations the backup of
//! `α̃_{s,a,z}(a') = Σ_{s'} T(s,a,s') O(s',a,z) α(s',a')`. The backup is
//! `max` (unregularized), the entropy conjugate `τ ln Σ exp(·/τ)`, or the
//! KL-to-uniform conjugate `τ ln (1/|A|) Σ exp(·/τ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PomdpModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("alpha has shape {found_actions}x{found_states}, model needs {actions}x{states}")]
    Shape {
        actions: usize,
        states: usize,
        found_actions: usize,
        found_states: usize,
    },
    #[error("unknown operator '{0}' (expected qmdp, sqmdp, fib, sfib, kqmdp or kfib)")]
    UnknownOperator(String),
}

/// One α-vector per action, stored row-major as `|A| × |S|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMatrix {
    n_actions: usize,
    n_states: usize,
    values: Vec<f64>,
}

impl AlphaMatrix {
    pub fn zeros(n_actions: usize, n_states: usize) -> Self {
        Self::filled(n_actions, n_states, 0.0)
    }

    pub fn filled(n_actions: usize, n_states: usize, v: f64) -> Self {
        AlphaMatrix {
            n_actions,
            n_states,
            values: vec![v; n_actions * n_states],
        }
    }

    /// Wraps a flat vector laid out `a * |S| + s`.
    pub fn from_vec(n_actions: usize, n_states: usize, values: Vec<f64>) -> Option<Self> {
        (values.len() == n_actions * n_states).then_some(AlphaMatrix {
            n_actions,
            n_states,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n_states = rows.first()?.len();
        if rows.iter().any(|r| r.len() != n_states) {
            return None;
        }
        Self::from_vec(rows.len(), n_states, rows.concat())
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// `N = |S| · |A|`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[a * self.n_states + s]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[a * self.n_states + s] = v;
    }

    /// The α-vector of action `a`.
    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.n_states..(a + 1) * self.n_states]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_states.max(1))
    }

    /// `α(s, ·)`.
    pub fn state_values(&self, s: usize) -> Vec<f64> {
        (0..self.n_actions).map(|a| self.get(s, a)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &AlphaMatrix) -> bool {
        self.n_actions == other.n_actions && self.n_states == other.n_states
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// `‖self − other‖_∞`.
    pub fn dist_inf(&self, other: &AlphaMatrix) -> f64 {
        debug_assert!(self.same_shape(other));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Elementwise `self − other`.
    pub fn sub(&self, other: &AlphaMatrix) -> AlphaMatrix {
        debug_assert!(self.same_shape(other));
        AlphaMatrix {
            n_actions: self.n_actions,
            n_states: self.n_states,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Adds `c` to every entry.
    pub fn shifted(&self, c: f64) -> AlphaMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out
    }

    /// State-major copy: `out[s * |A| + a] = α(s, a)`.
    fn transposed(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for a in 0..self.n_actions {
            for s in 0..self.n_states {
                out[s * self.n_actions + a] = self.values[a * self.n_states + s];
            }
        }
        out
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorFamily {
    Qmdp,
    Fib,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    None,
    Entropy,
    Kl,
}

/// Operator selection: family, regularizer and temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub family: OperatorFamily,
    pub regularizer: Regularizer,
    /// Ignored when `regularizer` is `None`.
    pub tau: f64,
}

impl OperatorSpec {
    pub fn qmdp() -> Self {
        Self::new(OperatorFamily::Qmdp, Regularizer::None, 1.0)
    }

    pub fn soft_qmdp(tau: f64) -> Self {
        Self::new(OperatorFamily::Qmdp, Regularizer::Entropy, tau)
    }

    pub fn kl_qmdp(tau: f64) -> Self {
        Self::new(OperatorFamily::Qmdp, Regularizer::Kl, tau)
    }

    pub fn fib() -> Self {
        Self::new(OperatorFamily::Fib, Regularizer::None, 1.0)
    }

    pub fn soft_fib(tau: f64) -> Self {
        Self::new(OperatorFamily::Fib, Regularizer::Entropy, tau)
    }

    pub fn kl_fib(tau: f64) -> Self {
        Self::new(OperatorFamily::Fib, Regularizer::Kl, tau)
    }

    pub fn new(family: OperatorFamily, regularizer: Regularizer, tau: f64) -> Self {
        OperatorSpec {
            family,
            regularizer,
            tau,
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        if self.regularizer != Regularizer::None && !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(OperatorError::InvalidTemperature(self.tau));
        }
        Ok(())
    }

    /// Short name used on the command line: `qmdp`, `sqmdp`, `kfib`, ...
    pub fn name(&self) -> &'static str {
        match (self.family, self.regularizer) {
            (OperatorFamily::Qmdp, Regularizer::None) => "qmdp",
            (OperatorFamily::Qmdp, Regularizer::Entropy) => "sqmdp",
            (OperatorFamily::Qmdp, Regularizer::Kl) => "kqmdp",
            (OperatorFamily::Fib, Regularizer::None) => "fib",
            (OperatorFamily::Fib, Regularizer::Entropy) => "sfib",
            (OperatorFamily::Fib, Regularizer::Kl) => "kfib",
        }
    }

    /// Display label in benchmark tables: `QMDP`, `sQMDP`, `kFIB`, ...
    pub fn label(&self) -> &'static str {
        match (self.family, self.regularizer) {
            (OperatorFamily::Qmdp, Regularizer::None) => "QMDP",
            (OperatorFamily::Qmdp, Regularizer::Entropy) => "sQMDP",
            (OperatorFamily::Qmdp, Regularizer::Kl) => "kQMDP",
            (OperatorFamily::Fib, Regularizer::None) => "FIB",
            (OperatorFamily::Fib, Regularizer::Entropy) => "sFIB",
            (OperatorFamily::Fib, Regularizer::Kl) => "kFIB",
        }
    }

    /// Additive offset of this regularizer's backup relative to `max` in
    /// the worst case: `τ ln|A|` for entropy, zero otherwise.
    pub fn entropy_offset(&self, n_actions: usize) -> f64 {
        match self.regularizer {
            Regularizer::Entropy => self.tau * (n_actions as f64).ln(),
            _ => 0.0,
        }
    }

    /// The inner maximization: `max`, `τ ln Σ exp(·/τ)` or its KL form.
    #[inline]
    pub fn backup(&self, values: &[f64]) -> f64 {
        match self.regularizer {
            Regularizer::None => max_of(values),
            Regularizer::Entropy => logsumexp_tau(values, self.tau),
            Regularizer::Kl => kl_backup(values, self.tau),
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorSpec {
    type Err = OperatorError;

    /// Parses the operator name with a placeholder temperature of 1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tau = 1.0;
        Ok(match s.to_ascii_lowercase().as_str() {
            "qmdp" => Self::qmdp(),
            "sqmdp" => Self::soft_qmdp(tau),
            "kqmdp" => Self::kl_qmdp(tau),
            "fib" => Self::fib(),
            "sfib" => Self::soft_fib(tau),
            "kfib" => Self::kl_fib(tau),
            _ => return Err(OperatorError::UnknownOperator(s.to_string())),
        })
    }
}

#[inline]
fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `τ ln Σ_i exp(v_i / τ)`, evaluated with the max-shift so it never
/// overflows. Lies in `[max v, max v + τ ln n]`.
pub fn logsumexp_tau(values: &[f64], tau: f64) -> f64 {
    let m = max_of(values);
    if values.len() == 1 || m == f64::NEG_INFINITY {
        return m;
    }
    let sum: f64 = values.iter().map(|&v| ((v - m) / tau).exp()).sum();
    m + tau * sum.ln()
}

/// `τ ln ((1/n) Σ_i exp(v_i / τ))`, the KL-to-uniform conjugate. Computed
/// through `expm1`/`ln_1p` so the large-τ limit (the mean) stays accurate.
pub fn kl_backup(values: &[f64], tau: f64) -> f64 {
    let m = max_of(values);
    if values.len() == 1 || m == f64::NEG_INFINITY {
        return m;
    }
    let n = values.len() as f64;
    let mean_m1 = values
        .iter()
        .map(|&v| ((v - m) / tau).exp_m1())
        .sum::<f64>()
        / n;
    m + tau * mean_m1.ln_1p()
}

/// Probability distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution(Vec<f64>);

impl ActionDistribution {
    pub fn uniform(n: usize) -> Self {
        ActionDistribution(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Shannon entropy `-Σ φ ln φ`.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// `Σ_a φ(a) v(a) + τ H(φ)`.
    pub fn regularized_value(&self, values: &[f64], tau: f64) -> f64 {
        self.0.iter().zip(values).map(|(p, v)| p * v).sum::<f64>() + tau * self.entropy()
    }
}

/// Maximum-entropy action distribution at state `s`: `softmax(α(s, ·)/τ)`.
pub fn soft_policy(alpha: &AlphaMatrix, s: usize, tau: f64) -> ActionDistribution {
    let v = alpha.state_values(s);
    let m = max_of(&v);
    let mut p: Vec<f64> = v.iter().map(|&x| ((x - m) / tau).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    ActionDistribution(p)
}

/// Joint kernel `T^O(s, a, s', z) = T(s, a, s') O(s', a, z)` grouped by
/// `(a, s)` row and then by observation.
#[derive(Debug, Clone)]
struct JointKernel {
    row_groups: Vec<usize>,
    group_starts: Vec<usize>,
    next_state: Vec<usize>,
    prob: Vec<f64>,
}

impl JointKernel {
    fn new(model: &PomdpModel) -> Self {
        let (n_s, n_a) = (model.n_states(), model.n_actions());
        let mut row_groups = vec![0];
        let mut group_starts = vec![0];
        let mut next_state = Vec::new();
        let mut prob = Vec::new();
        let mut scratch: Vec<(usize, usize, f64)> = Vec::new();
        for a in 0..n_a {
            for s in 0..n_s {
                scratch.clear();
                let (t_idx, t_val) = model.transition_row(s, a);
                for (&next, &t) in t_idx.iter().zip(t_val) {
                    let (o_idx, o_val) = model.observation_row(next, a);
                    for (&z, &o) in o_idx.iter().zip(o_val) {
                        scratch.push((z, next, t * o));
                    }
                }
                scratch.sort_by_key(|&(z, next, _)| (z, next));
                let mut current = None;
                for &(z, next, p) in &scratch {
                    if current != Some(z) {
                        if current.is_some() {
                            group_starts.push(prob.len());
                        }
                        current = Some(z);
                    }
                    next_state.push(next);
                    prob.push(p);
                }
                if current.is_some() {
                    group_starts.push(prob.len());
                }
                row_groups.push(group_starts.len() - 1);
            }
        }
        JointKernel {
            row_groups,
            group_starts,
            next_state,
            prob,
        }
    }
}

/// A fixed-point operator bound to a model, with any precomputation the
/// family needs.
#[derive(Debug, Clone)]
pub struct Operator<'m> {
    model: &'m PomdpModel,
    spec: OperatorSpec,
    joint: Option<JointKernel>,
}

impl<'m> Operator<'m> {
    pub fn new(model: &'m PomdpModel, spec: OperatorSpec) -> Result<Self, OperatorError> {
        spec.validate()?;
        let joint = (spec.family == OperatorFamily::Fib).then(|| JointKernel::new(model));
        Ok(Operator { model, spec, joint })
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn model(&self) -> &'m PomdpModel {
        self.model
    }

    pub fn check_shape(&self, alpha: &AlphaMatrix) -> Result<(), OperatorError> {
        let (n_a, n_s) = (self.model.n_actions(), self.model.n_states());
        if alpha.n_actions() != n_a || alpha.n_states() != n_s {
            return Err(OperatorError::Shape {
                actions: n_a,
                states: n_s,
                found_actions: alpha.n_actions(),
                found_states: alpha.n_states(),
            });
        }
        Ok(())
    }

    /// `Fα`.
    pub fn apply(&self, alpha: &AlphaMatrix) -> AlphaMatrix {
        let mut out = AlphaMatrix::zeros(alpha.n_actions(), alpha.n_states());
        self.apply_into(alpha, &mut out);
        out
    }

    /// `G(α) = α − Fα`.
    pub fn residual(&self, alpha: &AlphaMatrix) -> AlphaMatrix {
        alpha.sub(&self.apply(alpha))
    }

    pub fn apply_into(&self, alpha: &AlphaMatrix, out: &mut AlphaMatrix) {
        debug_assert!(self.check_shape(alpha).is_ok() && alpha.same_shape(out));
        match &self.joint {
            None => self.apply_qmdp_family(alpha, out),
            Some(joint) => self.apply_fib_family(joint, alpha, out),
        }
    }

    /// Backed-up value of each state, `backup(α(s', ·))`.
    pub fn state_backups(&self, alpha: &AlphaMatrix) -> Vec<f64> {
        let n_a = alpha.n_actions();
        alpha
            .transposed()
            .chunks(n_a)
            .map(|v| self.spec.backup(v))
            .collect()
    }

    fn apply_qmdp_family(&self, alpha: &AlphaMatrix, out: &mut AlphaMatrix) {
        let model = self.model;
        let (n_s, n_a, gamma) = (model.n_states(), model.n_actions(), model.gamma());
        let v = self.state_backups(alpha);
        let dst = out.as_mut_slice();
        for a in 0..n_a {
            for s in 0..n_s {
                let (idx, val) = model.transition_row(s, a);
                let ev: f64 = idx.iter().zip(val).map(|(&j, &p)| p * v[j]).sum();
                dst[a * n_s + s] = model.reward(s, a) + gamma * ev;
            }
        }
    }

    fn apply_fib_family(&self, joint: &JointKernel, alpha: &AlphaMatrix, out: &mut AlphaMatrix) {
        let model = self.model;
        let (n_s, n_a, n_z) = (model.n_states(), model.n_actions(), model.n_observations());
        let gamma = model.gamma();
        let by_state = alpha.transposed();
        // Observations with zero probability have α̃ = 0, whose backup is
        // τ ln|A| under entropy regularization and 0 otherwise.
        let empty_backup = self.spec.backup(&vec![0.0; n_a]);
        let mut tilde = vec![0.0; n_a];
        let dst = out.as_mut_slice();
        for a in 0..n_a {
            for s in 0..n_s {
                let row = a * n_s + s;
                let (g_lo, g_hi) = (joint.row_groups[row], joint.row_groups[row + 1]);
                let mut total = (n_z - (g_hi - g_lo)) as f64 * empty_backup;
                for g in g_lo..g_hi {
                    tilde.iter_mut().for_each(|x| *x = 0.0);
                    for e in joint.group_starts[g]..joint.group_starts[g + 1] {
                        let p = joint.prob[e];
                        let base = joint.next_state[e] * n_a;
                        for (t, &v) in tilde.iter_mut().zip(&by_state[base..base + n_a]) {
                            *t += p * v;
                        }
                    }
                    total += self.spec.backup(&tilde);
                }
                dst[row] = model.reward(s, a) + gamma * total;
            }
        }
    }
}

fn apply_with(model: &PomdpModel, spec: OperatorSpec, alpha: &AlphaMatrix) -> AlphaMatrix {
    Operator::new(model, spec)
        .expect("operator spec validated by caller")
        .apply(alpha)
}

fn checked_tau(tau: f64) -> f64 {
    assert!(tau > 0.0 && tau.is_finite(), "temperature must be positive");
    tau
}

/// QMDP backup `R + γ Σ_{s'} T max_{a'} α(s', a')`.
pub fn apply_qmdp(model: &PomdpModel, alpha: &AlphaMatrix) -> AlphaMatrix {
    apply_with(model, OperatorSpec::qmdp(), alpha)
}

/// Soft QMDP backup; panics if `tau <= 0`.
pub fn apply_soft_qmdp(model: &PomdpModel, alpha: &AlphaMatrix, tau: f64) -> AlphaMatrix {
    apply_with(model, OperatorSpec::soft_qmdp(checked_tau(tau)), alpha)
}

/// Fast informed bound backup.
pub fn apply_fib(model: &PomdpModel, alpha: &AlphaMatrix) -> AlphaMatrix {
    apply_with(model, OperatorSpec::fib(), alpha)
}

/// Soft FIB backup; panics if `tau <= 0`.
pub fn apply_soft_fib(model: &PomdpModel, alpha: &AlphaMatrix, tau: f64) -> AlphaMatrix {
    apply_with(model, OperatorSpec::soft_fib(checked_tau(tau)), alpha)
}

/// KL-regularized (MellowMax) backup of the given family; panics if
/// `tau <= 0`.
pub fn apply_kl(
    model: &PomdpModel,
    family: OperatorFamily,
    alpha: &AlphaMatrix,
    tau: f64,
) -> AlphaMatrix {
    let spec = OperatorSpec::new(family, Regularizer::Kl, checked_tau(tau));
    apply_with(model, spec, alpha)
}

/// `G(α) = α − Fα` for the operator selected by `spec`.
pub fn residual(
    model: &PomdpModel,
    spec: OperatorSpec,
    alpha: &AlphaMatrix,
) -> Result<AlphaMatrix, OperatorError> {
    let op = Operator::new(model, spec)?;
    op.check_shape(alpha)?;
    Ok(op.residual(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::geometric;
    use crate::model::{ModelParts, PomdpModel};

    #[test]
    fn logsumexp_equal_entries() {
        let c = 3.25;
        let v = logsumexp_tau(&[c; 4], 1.0);
        assert!((v - (c + 4f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_dominance_does_not_overflow() {
        assert_eq!(logsumexp_tau(&[0.0, -1e6], 1.0), 0.0);
        let big = logsumexp_tau(&[1e8, -1e8, 1e8], 1e-6);
        assert!(big.is_finite());
        assert!((big - 1e8).abs() < 1e-5);
    }

    #[test]
    fn logsumexp_reference_value() {
        // 0.5 ln(e^2 + e^4), evaluated at 30 digits with mpmath
        let expected = 2.063_464_005_521_486_2;
        assert!((logsumexp_tau(&[1.0, 2.0], 0.5) - expected).abs() < 1e-14);
    }

    #[test]
    fn kl_backup_limits() {
        let v = [1.0, -2.0, 4.0, 0.5];
        let mean = v.iter().sum::<f64>() / 4.0;
        assert!((kl_backup(&v, 1e6) - mean).abs() < 1e-3);
        assert!((kl_backup(&v, 1e-3) - 4.0).abs() < 1e-2);
        assert_eq!(kl_backup(&[2.5], 3.0), 2.5);
    }

    #[test]
    fn geometric_qmdp_step() {
        let m = geometric(1.0, 0.5);
        let out = apply_qmdp(&m, &AlphaMatrix::zeros(1, 1));
        assert_eq!(out.as_slice(), &[1.0]);
        let fixed = apply_qmdp(&m, &AlphaMatrix::filled(1, 1, 2.0));
        assert_eq!(fixed.as_slice(), &[2.0]);
        // single action: no entropy bonus
        let soft = apply_soft_qmdp(&m, &AlphaMatrix::zeros(1, 1), 1.0);
        assert_eq!(soft.as_slice(), &[1.0]);
    }

    #[test]
    fn residual_at_zero_is_minus_reward() {
        let m = geometric(1.0, 0.5);
        let g = residual(&m, OperatorSpec::qmdp(), &AlphaMatrix::zeros(1, 1)).unwrap();
        assert_eq!(g.as_slice(), &[-1.0]);
        let g = residual(&m, OperatorSpec::qmdp(), &AlphaMatrix::filled(1, 1, 2.0)).unwrap();
        assert_eq!(g.as_slice(), &[0.0]);
    }

    #[test]
    fn soft_qmdp_two_actions() {
        let m = PomdpModel::new(ModelParts::from_dense(
            0.5,
            &[vec![vec![1.0]], vec![vec![1.0]]],
            &[vec![vec![1.0]], vec![vec![1.0]]],
            &[vec![1.0], vec![1.0]],
        ))
        .unwrap();
        let out = apply_soft_qmdp(&m, &AlphaMatrix::zeros(2, 1), 1.0);
        let expected = 1.0 + 0.5 * 2f64.ln();
        assert!((expected - 1.346_573_590_3).abs() < 1e-9);
        for &v in out.as_slice() {
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn soft_policy_closed_form() {
        let tau = 0.7;
        let alpha = AlphaMatrix::from_rows(&[vec![0.0], vec![tau * 3f64.ln()]]).unwrap();
        let p = soft_policy(&alpha, 0, tau);
        assert!((p.probs()[0] - 0.25).abs() < 1e-14);
        assert!((p.probs()[1] - 0.75).abs() < 1e-14);
        let flat = AlphaMatrix::filled(3, 2, 1.5);
        assert_eq!(soft_policy(&flat, 1, 2.0), ActionDistribution::uniform(3));
    }

    #[test]
    fn soft_policy_attains_conjugate() {
        let alpha =
            AlphaMatrix::from_rows(&[vec![0.3, 1.0], vec![-2.0, 0.0], vec![4.0, 0.1]]).unwrap();
        for tau in [0.01, 0.5, 3.0, 100.0] {
            for s in 0..2 {
                let v = alpha.state_values(s);
                let p = soft_policy(&alpha, s, tau);
                let obj = p.regularized_value(&v, tau);
                assert!((obj - logsumexp_tau(&v, tau)).abs() < 1e-10, "tau={tau}");
            }
        }
    }

    #[test]
    fn operator_names_round_trip() {
        for name in ["qmdp", "sqmdp", "kqmdp", "fib", "sfib", "kfib"] {
            let spec: OperatorSpec = name.parse().unwrap();
            assert_eq!(spec.name(), name);
        }
        assert!("vi".parse::<OperatorSpec>().is_err());
        assert!(OperatorSpec::soft_qmdp(0.0).validate().is_err());
        assert!(OperatorSpec::qmdp().validate().is_ok());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = geometric(1.0, 0.5);
        let err = residual(&m, OperatorSpec::qmdp(), &AlphaMatrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, OperatorError::Shape { .. }));
    }
}
