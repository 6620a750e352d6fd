//! Greedy α-vector policies and their evaluation by simulated rollouts.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{belief_update, Belief, ModelError, PomdpModel};
use crate::operators::AlphaMatrix;
use crate::sim::{model_simulator, sample_row, GenerativeModel};

/// `b ↦ argmax_a bᵀα_a`, ties going to the lowest action index.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPolicy {
    alpha: AlphaMatrix,
}

impl AlphaPolicy {
    pub fn new(alpha: AlphaMatrix) -> Self {
        AlphaPolicy { alpha }
    }

    pub fn alpha(&self) -> &AlphaMatrix {
        &self.alpha
    }

    pub fn action(&self, b: &Belief) -> usize {
        policy_action(&self.alpha, b)
    }
}

fn action_values<'a>(alpha: &'a AlphaMatrix, b: &'a Belief) -> impl Iterator<Item = f64> + 'a {
    let p = b.probs();
    alpha
        .rows()
        .map(move |row| row.iter().zip(p).map(|(x, y)| x * y).sum())
}

pub fn policy_action(alpha: &AlphaMatrix, b: &Belief) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (a, v) in action_values(alpha, b).enumerate() {
        if v > best.1 {
            best = (a, v);
        }
    }
    best.0
}

/// `max_a bᵀα_a`.
pub fn value_estimate(alpha: &AlphaMatrix, b: &Belief) -> f64 {
    action_values(alpha, b).fold(f64::NEG_INFINITY, f64::max)
}

/// Uniform draw from the probability simplex (normalized exponentials).
pub fn random_belief<R: Rng + ?Sized>(rng: &mut R, n_states: usize) -> Belief {
    let mut p: Vec<f64> = (0..n_states)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    Belief::new(p).expect("normalized exponentials form a belief")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialBelief {
    /// The model's `start:` distribution.
    Default,
    Uniform,
    /// A fresh uniform draw from the simplex for every trajectory.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub n_trajectories: usize,
    pub initial_belief: InitialBelief,
    pub seed: u64,
    /// Accumulate `γ^t r_t` instead of `r_t`.
    pub discounted: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: 100,
            n_trajectories: 100,
            initial_belief: InitialBelief::Default,
            seed: 0,
            discounted: false,
        }
    }
}

/// Mean and population standard deviation of per-trajectory reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl RewardStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        RewardStats {
            mean,
            std: var.sqrt(),
            n,
        }
    }
}

/// Simulates `cfg.n_trajectories` episodes of `policy` on `model`.
pub fn rollout(
    model: &PomdpModel,
    policy: &AlphaPolicy,
    cfg: &RolloutConfig,
) -> Result<RewardStats, ModelError> {
    if cfg.horizon == 0 || cfg.n_trajectories == 0 {
        return Err(ModelError::InvalidBelief(
            "rollouts need horizon >= 1 and at least one trajectory".into(),
        ));
    }
    let n_s = model.n_states();
    if (policy.alpha.n_actions(), policy.alpha.n_states()) != (model.n_actions(), n_s) {
        return Err(ModelError::InvalidBelief(format!(
            "policy has shape {}x{}, model has {}x{}",
            policy.alpha.n_actions(),
            policy.alpha.n_states(),
            model.n_actions(),
            n_s
        )));
    }
    let sim = model_simulator(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let all_states: Vec<usize> = (0..n_s).collect();
    let mut totals = Vec::with_capacity(cfg.n_trajectories);
    for _ in 0..cfg.n_trajectories {
        let mut b = match cfg.initial_belief {
            InitialBelief::Default => model.initial_belief().clone(),
            InitialBelief::Uniform => Belief::uniform(n_s),
            InitialBelief::Random => random_belief(&mut rng, n_s),
        };
        let mut s = sample_row(&all_states, b.probs(), &mut rng as &mut dyn RngCore);
        let (mut total, mut discount) = (0.0, 1.0);
        for _ in 0..cfg.horizon {
            let a = policy.action(&b);
            let x = sim.sample(s, a, &mut rng);
            total += discount * x.reward;
            if cfg.discounted {
                discount *= model.gamma();
            }
            b = belief_update(model, &b, a, x.observation)?;
            s = x.next;
        }
        totals.push(total);
    }
    Ok(RewardStats::from_samples(&totals))
}

/// The two reward metrics: starting from the model's initial belief and
/// from random beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub reward_fixed: RewardStats,
    pub reward_rand: RewardStats,
}

pub fn evaluate_policy(
    model: &PomdpModel,
    alpha: &AlphaMatrix,
    cfg: &RolloutConfig,
) -> Result<PolicyMetrics, ModelError> {
    let policy = AlphaPolicy::new(alpha.clone());
    let fixed = RolloutConfig {
        initial_belief: InitialBelief::Default,
        ..*cfg
    };
    let rand = RolloutConfig {
        initial_belief: InitialBelief::Random,
        ..*cfg
    };
    Ok(PolicyMetrics {
        reward_fixed: rollout(model, &policy, &fixed)?,
        reward_rand: rollout(model, &policy, &rand)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::geometric;
    use crate::model::ModelParts;

    #[test]
    fn argmax_with_low_index_ties() {
        let alpha = AlphaMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Belief::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(policy_action(&alpha, &b), 0);
        assert_eq!(policy_action(&alpha, &Belief::uniform(2)), 0);
        assert_eq!(policy_action(&alpha, &Belief::point(2, 1)), 1);
        assert_eq!(value_estimate(&alpha, &b), 0.9);
    }

    #[test]
    fn one_state_rollout() {
        let m = geometric(1.0, 0.9);
        let policy = AlphaPolicy::new(AlphaMatrix::zeros(1, 1));
        let cfg = RolloutConfig {
            horizon: 3,
            n_trajectories: 5,
            ..RolloutConfig::default()
        };
        let stats = rollout(&m, &policy, &cfg).unwrap();
        assert_eq!((stats.mean, stats.std), (3.0, 0.0));
        let disc = rollout(
            &m,
            &policy,
            &RolloutConfig {
                discounted: true,
                ..cfg
            },
        )
        .unwrap();
        assert!((disc.mean - (1.0 + 0.9 + 0.81)).abs() < 1e-12);
    }

    #[test]
    fn chain_reaches_goal_after_one_step() {
        // a0 moves s0 → s1 and stays in s1; reward 1 for being in s1.
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = PomdpModel::new(ModelParts {
            start: Some(vec![1.0, 0.0]),
            ..ModelParts::from_dense(
                0.9,
                &[vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
                &[eye],
                &[vec![0.0, 1.0]],
            )
        })
        .unwrap();
        let policy = AlphaPolicy::new(AlphaMatrix::zeros(1, 2));
        let cfg = RolloutConfig {
            horizon: 4,
            n_trajectories: 3,
            ..RolloutConfig::default()
        };
        // rewards 0, 1, 1, 1
        assert_eq!(rollout(&m, &policy, &cfg).unwrap().mean, 3.0);
    }

    #[test]
    fn random_belief_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let b = random_belief(&mut rng, 3);
            for (m, p) in mean.iter_mut().zip(b.probs()) {
                *m += p / n as f64;
            }
        }
        assert!(
            mean.iter().all(|m| (m - 1.0 / 3.0).abs() < 0.01),
            "{mean:?}"
        );
        assert_eq!(random_belief(&mut rng, 1).probs(), &[1.0]);
    }
}
