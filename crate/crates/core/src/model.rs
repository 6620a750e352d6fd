//! Finite POMDP model, validation and the Bayesian belief filter.
//!
//! States, actions and observations are addressed by index. Transition and
//! observation kernels are stored as sparse rows: row `a * |S| + s` of the
//! transition kernel is `T(s, a, ·)`, row `a * |S| + s'` of the observation
//! kernel is `O(s', a, ·)`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for every probability-row and simplex check.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("observation {observation} has zero probability after action {action}")]
    ImpossibleObservation { action: usize, observation: usize },
    #[error("index {index} out of range for {what} (size {size})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Transition,
    Observation,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Transition => f.write_str("T"),
            Kernel::Observation => f.write_str("O"),
        }
    }
}

/// A single broken model invariant, with enough location data to find it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySet(&'static str),
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    RowSum {
        kernel: Kernel,
        action: usize,
        state: usize,
        sum: f64,
    },
    NegativeEntry {
        kernel: Kernel,
        action: usize,
        state: usize,
        column: usize,
        value: f64,
    },
    NonFinite {
        what: &'static str,
        index: usize,
    },
    GammaOutOfRange(f64),
    StartBelief(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySet(what) => write!(f, "{what} must be non-empty"),
            Violation::Shape {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected} entries, found {found}"),
            Violation::RowSum {
                kernel,
                action,
                state,
                sum,
            } => write!(f, "{kernel}(a{action}, s{state}): row sum {sum}"),
            Violation::NegativeEntry {
                kernel,
                action,
                state,
                column,
                value,
            } => write!(
                f,
                "{kernel}(a{action}, s{state}, {column}): negative entry {value}"
            ),
            Violation::NonFinite { what, index } => write!(f, "{what}[{index}] is not finite"),
            Violation::GammaOutOfRange(g) => write!(f, "gamma out of range: {g}"),
            Violation::StartBelief(msg) => write!(f, "start belief: {msg}"),
        }
    }
}

/// Row-compressed nonnegative kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRows {
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    /// Builds from dense rows, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>], n_cols: usize) -> Self {
        Self::from_sparse(
            rows.iter().map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect::<Vec<_>>()
            }),
            n_cols,
        )
    }

    /// Builds from per-row `(column, value)` lists. Columns need not be sorted.
    pub fn from_sparse<I>(rows: I, n_cols: usize) -> Self
    where
        I: IntoIterator<Item = Vec<(usize, f64)>>,
    {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        SparseRows {
            n_cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        match idx.binary_search(&c) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn dense_row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        let (idx, val) = self.row(r);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] = v;
        }
        out
    }

    fn row_sum(&self, r: usize) -> f64 {
        self.row(r).1.iter().sum()
    }

    fn scale_row(&mut self, r: usize, k: f64) {
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        for v in &mut self.values[lo..hi] {
            *v *= k;
        }
    }
}

/// Raw model data before validation.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// Rows indexed `a * |S| + s`, columns over next states.
    pub transition: SparseRows,
    /// Rows indexed `a * |S| + s'`, columns over observations.
    pub observation: SparseRows,
    /// `reward[a * |S| + s] = R(s, a)`.
    pub reward: Vec<f64>,
    pub gamma: f64,
    /// Default initial belief; uniform when `None`.
    pub start: Option<Vec<f64>>,
}

impl ModelParts {
    /// Dense constructor: `t[a][s][s']`, `o[a][s'][z]`, `r[a][s]`, with
    /// generated identifiers `s0, s1, ...`.
    pub fn from_dense(
        gamma: f64,
        t: &[Vec<Vec<f64>>],
        o: &[Vec<Vec<f64>>],
        r: &[Vec<f64>],
    ) -> Self {
        let n_a = t.len();
        let n_s = t.first().map_or(0, |m| m.len());
        let n_z = o.first().and_then(|m| m.first()).map_or(0, |row| row.len());
        let t_rows: Vec<Vec<f64>> = t.iter().flat_map(|m| m.iter().cloned()).collect();
        let o_rows: Vec<Vec<f64>> = o.iter().flat_map(|m| m.iter().cloned()).collect();
        ModelParts {
            states: (0..n_s).map(|i| format!("s{i}")).collect(),
            actions: (0..n_a).map(|i| format!("a{i}")).collect(),
            observations: (0..n_z).map(|i| format!("z{i}")).collect(),
            transition: SparseRows::from_dense(&t_rows, n_s),
            observation: SparseRows::from_dense(&o_rows, n_z),
            reward: r.iter().flat_map(|row| row.iter().copied()).collect(),
            gamma,
            start: None,
        }
    }
}

/// Finite POMDP `(S, A, T, R, Z, O, γ)`. Immutable once built.
#[derive(Debug, Clone)]
pub struct PomdpModel {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    transition: SparseRows,
    observation: SparseRows,
    reward: Vec<f64>,
    gamma: f64,
    reward_min: f64,
    reward_max: f64,
    start: Belief,
    state_index: HashMap<String, usize>,
    action_index: HashMap<String, usize>,
    observation_index: HashMap<String, usize>,
}

impl PomdpModel {
    /// Validates `parts`, renormalizing rows that are within [`PROB_TOL`] of
    /// summing to one.
    pub fn new(mut parts: ModelParts) -> Result<Self, ModelError> {
        let violations = check_parts(&parts);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        for kernel in [&mut parts.transition, &mut parts.observation] {
            for r in 0..kernel.n_rows() {
                let sum = kernel.row_sum(r);
                if sum != 1.0 {
                    kernel.scale_row(r, 1.0 / sum);
                }
            }
        }
        if let Some(start) = parts.start.as_mut() {
            let sum: f64 = start.iter().sum();
            start.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self::assemble(parts))
    }

    /// Builds without checking invariants. Use [`validate_model`] to
    /// diagnose the result.
    pub fn new_unchecked(parts: ModelParts) -> Self {
        Self::assemble(parts)
    }

    fn assemble(parts: ModelParts) -> Self {
        let n_s = parts.states.len();
        let (reward_min, reward_max) = parts
            .reward
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            });
        let index = |names: &[String]| -> HashMap<String, usize> {
            names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect()
        };
        let start = match parts.start {
            Some(p) => Belief(p),
            None => Belief::uniform(n_s.max(1)),
        };
        PomdpModel {
            state_index: index(&parts.states),
            action_index: index(&parts.actions),
            observation_index: index(&parts.observations),
            states: parts.states,
            actions: parts.actions,
            observations: parts.observations,
            transition: parts.transition,
            observation: parts.observation,
            reward: parts.reward,
            gamma: parts.gamma,
            reward_min,
            reward_max,
            start,
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_min(&self) -> f64 {
        self.reward_min
    }

    pub fn reward_max(&self) -> f64 {
        self.reward_max
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn observations(&self) -> &[String] {
        &self.observations
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_index.get(name).copied()
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_index.get(name).copied()
    }

    pub fn observation_index(&self, name: &str) -> Option<usize> {
        self.observation_index.get(name).copied()
    }

    /// `R(s, a)`.
    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[a * self.states.len() + s]
    }

    /// Reward table laid out `a * |S| + s`.
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Nonzero entries of `T(s, a, ·)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> (&[usize], &[f64]) {
        self.transition.row(a * self.states.len() + s)
    }

    /// Nonzero entries of `O(s', a, ·)`.
    #[inline]
    pub fn observation_row(&self, next: usize, a: usize) -> (&[usize], &[f64]) {
        self.observation.row(a * self.states.len() + next)
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition.get(a * self.states.len() + s, next)
    }

    pub fn observation_prob(&self, next: usize, a: usize, z: usize) -> f64 {
        self.observation.get(a * self.states.len() + next, z)
    }

    pub fn transition_kernel(&self) -> &SparseRows {
        &self.transition
    }

    pub fn observation_kernel(&self) -> &SparseRows {
        &self.observation
    }

    /// Default initial belief (the `start:` distribution, uniform if absent).
    pub fn initial_belief(&self) -> &Belief {
        &self.start
    }

    fn check_action(&self, a: usize) -> Result<(), ModelError> {
        if a >= self.n_actions() {
            return Err(ModelError::OutOfRange {
                what: "action",
                index: a,
                size: self.n_actions(),
            });
        }
        Ok(())
    }

    fn check_observation(&self, z: usize) -> Result<(), ModelError> {
        if z >= self.n_observations() {
            return Err(ModelError::OutOfRange {
                what: "observation",
                index: z,
                size: self.n_observations(),
            });
        }
        Ok(())
    }

    /// `Σ_s T(s, a, s') b(s)` for every `s'`.
    fn predict(&self, b: &Belief, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states()];
        for (s, &p) in b.0.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (idx, val) = self.transition_row(s, a);
            for (&next, &t) in idx.iter().zip(val) {
                out[next] += t * p;
            }
        }
        out
    }
}

fn check_parts(parts: &ModelParts) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_s = parts.states.len();
    let n_a = parts.actions.len();
    let n_z = parts.observations.len();
    for (len, what) in [(n_s, "states"), (n_a, "actions"), (n_z, "observations")] {
        if len == 0 {
            out.push(Violation::EmptySet(what));
        }
    }
    if !(parts.gamma > 0.0 && parts.gamma < 1.0) {
        out.push(Violation::GammaOutOfRange(parts.gamma));
    }
    let shapes = [
        ("T rows", n_s * n_a, parts.transition.n_rows()),
        ("T columns", n_s, parts.transition.n_cols()),
        ("O rows", n_s * n_a, parts.observation.n_rows()),
        ("O columns", n_z, parts.observation.n_cols()),
        ("R", n_s * n_a, parts.reward.len()),
    ];
    let mut shape_ok = true;
    for (what, expected, found) in shapes {
        if expected != found {
            shape_ok = false;
            out.push(Violation::Shape {
                what,
                expected,
                found,
            });
        }
    }
    if shape_ok && n_s > 0 {
        for (kernel, rows) in [
            (Kernel::Transition, &parts.transition),
            (Kernel::Observation, &parts.observation),
        ] {
            for r in 0..rows.n_rows() {
                let (action, state) = (r / n_s, r % n_s);
                let (idx, val) = rows.row(r);
                for (&column, &value) in idx.iter().zip(val) {
                    if !value.is_finite() || value < 0.0 {
                        out.push(Violation::NegativeEntry {
                            kernel,
                            action,
                            state,
                            column,
                            value,
                        });
                    }
                }
                let sum = rows.row_sum(r);
                if !((sum - 1.0).abs() <= PROB_TOL) {
                    out.push(Violation::RowSum {
                        kernel,
                        action,
                        state,
                        sum,
                    });
                }
            }
        }
    }
    for (index, r) in parts.reward.iter().enumerate() {
        if !r.is_finite() {
            out.push(Violation::NonFinite { what: "R", index });
        }
    }
    if let Some(start) = &parts.start {
        if start.len() != n_s {
            out.push(Violation::StartBelief(format!(
                "length {} != |S| = {n_s}",
                start.len()
            )));
        } else if let Err(e) = check_simplex(start) {
            out.push(Violation::StartBelief(e));
        }
    }
    out
}

/// Every invariant violation of `model`; empty iff the model is valid.
pub fn validate_model(model: &PomdpModel) -> Vec<Violation> {
    let parts = ModelParts {
        states: model.states.clone(),
        actions: model.actions.clone(),
        observations: model.observations.clone(),
        transition: model.transition.clone(),
        observation: model.observation.clone(),
        reward: model.reward.clone(),
        gamma: model.gamma,
        start: Some(model.start.0.clone()),
    };
    check_parts(&parts)
}

fn check_simplex(p: &[f64]) -> Result<(), String> {
    if let Some(i) = p.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(format!("entry {i} is negative or not finite"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Probability distribution over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidBelief("empty belief".into()));
        }
        check_simplex(&probs).map_err(ModelError::InvalidBelief)?;
        Ok(Belief(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    /// Point mass on state `s`.
    pub fn point(n: usize, s: usize) -> Self {
        let mut p = vec![0.0; n];
        p[s] = 1.0;
        Belief(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `Pr(z | b, a) = Σ_{s'} O(s', a, z) Σ_s T(s, a, s') b(s)`.
pub fn observation_likelihood(
    model: &PomdpModel,
    b: &Belief,
    a: usize,
    z: usize,
) -> Result<f64, ModelError> {
    model.check_action(a)?;
    model.check_observation(z)?;
    let predicted = model.predict(b, a);
    Ok(predicted
        .iter()
        .enumerate()
        .map(|(next, &p)| p * model.observation_prob(next, a, z))
        .sum())
}

/// Bayes filter: the posterior over next states after taking `a` and
/// observing `z`.
pub fn belief_update(
    model: &PomdpModel,
    b: &Belief,
    a: usize,
    z: usize,
) -> Result<Belief, ModelError> {
    model.check_action(a)?;
    model.check_observation(z)?;
    if b.len() != model.n_states() {
        return Err(ModelError::InvalidBelief(format!(
            "length {} != |S| = {}",
            b.len(),
            model.n_states()
        )));
    }
    let mut post = model.predict(b, a);
    for (next, p) in post.iter_mut().enumerate() {
        *p *= model.observation_prob(next, a, z);
    }
    let norm: f64 = post.iter().sum();
    if !(norm > 0.0) {
        return Err(ModelError::ImpossibleObservation {
            action: a,
            observation: z,
        });
    }
    post.iter_mut().for_each(|p| *p /= norm);
    Ok(Belief(post))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_state(gamma: f64) -> ModelParts {
        ModelParts::from_dense(gamma, &[vec![vec![1.0]]], &[vec![vec![1.0]]], &[vec![1.0]])
    }

    /// Identity transitions, z_i certain in s_i.
    fn two_state_informative() -> PomdpModel {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        PomdpModel::new(ModelParts::from_dense(
            0.9,
            &[eye.clone()],
            &[eye],
            &[vec![0.0, 1.0]],
        ))
        .unwrap()
    }

    #[test]
    fn degenerate_model_is_valid() {
        let m = PomdpModel::new(one_state(0.5)).unwrap();
        assert!(validate_model(&m).is_empty());
        assert_eq!(m.reward_min(), 1.0);
        assert_eq!(m.reward_max(), 1.0);
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let parts = ModelParts::from_dense(
            0.5,
            &[vec![vec![0.5, 0.6], vec![0.0, 1.0]]],
            &[vec![vec![1.0], vec![1.0]]],
            &[vec![0.0, 0.0]],
        );
        let m = PomdpModel::new_unchecked(parts.clone());
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::RowSum {
                kernel: Kernel::Transition,
                action: 0,
                state: 0,
                sum,
            } => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(v[0].to_string().contains("row sum 1.1"));
        assert!(PomdpModel::new(parts).is_err());
    }

    #[test]
    fn gamma_one_is_rejected() {
        let m = PomdpModel::new_unchecked(one_state(1.0));
        let v = validate_model(&m);
        assert_eq!(v, vec![Violation::GammaOutOfRange(1.0)]);
        assert!(v[0].to_string().contains("gamma out of range"));
    }

    #[test]
    fn rows_within_tolerance_are_renormalized() {
        let parts = ModelParts::from_dense(
            0.5,
            &[vec![vec![0.3, 0.7 + 5e-10], vec![0.0, 1.0]]],
            &[vec![vec![1.0], vec![1.0]]],
            &[vec![0.0, 0.0]],
        );
        let m = PomdpModel::new(parts).unwrap();
        let (_, vals) = m.transition_row(0, 0);
        assert_eq!(vals.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn single_state_update_is_identity() {
        let m = PomdpModel::new(one_state(0.5)).unwrap();
        let b = Belief::uniform(1);
        assert_eq!(belief_update(&m, &b, 0, 0).unwrap().probs(), &[1.0]);
        assert_eq!(observation_likelihood(&m, &b, 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn informative_observation_collapses_belief() {
        let m = two_state_informative();
        let b = Belief::uniform(2);
        assert_eq!(belief_update(&m, &b, 0, 0).unwrap().probs(), &[1.0, 0.0]);
        assert_eq!(observation_likelihood(&m, &b, 0, 0).unwrap(), 0.5);
    }

    #[test]
    fn zero_normalizer_is_an_error() {
        // z1 is never emitted.
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let o = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let m =
            PomdpModel::new(ModelParts::from_dense(0.9, &[eye], &[o], &[vec![0.0, 0.0]])).unwrap();
        let err = belief_update(&m, &Belief::uniform(2), 0, 1).unwrap_err();
        assert_eq!(
            err,
            ModelError::ImpossibleObservation {
                action: 0,
                observation: 1
            }
        );
    }

    #[test]
    fn belief_rejects_non_simplex() {
        assert!(Belief::new(vec![0.5, 0.6]).is_err());
        assert!(Belief::new(vec![-0.1, 1.1]).is_err());
        assert!(Belief::new(vec![]).is_err());
        assert!(Belief::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn identifiers_are_indexed() {
        let m = two_state_informative();
        assert_eq!(m.state_index("s1"), Some(1));
        assert_eq!(m.action_index("a0"), Some(0));
        assert_eq!(m.observation_index("z9"), None);
    }
}
