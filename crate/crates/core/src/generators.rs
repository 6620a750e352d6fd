//! Small synthetic POMDPs: dense random models and sparse navigation
//! problems (chains and grids) in the style of robot-localization
//! benchmarks.

use rand::Rng;

use crate::model::{ModelParts, PomdpModel, SparseRows};

/// Single state, single action, single observation with reward `r`.
/// The QMDP fixed point is `r / (1 - gamma)`.
pub fn geometric(r: f64, gamma: f64) -> PomdpModel {
    PomdpModel::new(ModelParts::from_dense(
        gamma,
        &[vec![vec![1.0]]],
        &[vec![vec![1.0]]],
        &[vec![r]],
    ))
    .expect("geometric model is valid")
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize, support: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    let support = support.clamp(1, n);
    let mut picked: Vec<usize> = (0..n).collect();
    for i in 0..support {
        let j = rng.random_range(i..n);
        picked.swap(i, j);
    }
    for &i in &picked[..support] {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        p[i] = -u.ln();
    }
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    p
}

/// Dense random model: every kernel row is Dirichlet(1), rewards are
/// uniform on `[-1, 1]`.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    n_observations: usize,
    gamma: f64,
) -> PomdpModel {
    random_sparse_model(rng, n_states, n_actions, n_observations, gamma, usize::MAX)
}

/// Random model whose rows have at most `support` nonzero entries.
pub fn random_sparse_model<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    n_observations: usize,
    gamma: f64,
    support: usize,
) -> PomdpModel {
    let rows = n_states * n_actions;
    let t: Vec<Vec<f64>> = (0..rows)
        .map(|_| random_simplex(rng, n_states, support))
        .collect();
    let o: Vec<Vec<f64>> = (0..rows)
        .map(|_| random_simplex(rng, n_observations, support))
        .collect();
    let reward: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..=1.0)).collect();
    PomdpModel::new(ModelParts {
        states: (0..n_states).map(|i| format!("s{i}")).collect(),
        actions: (0..n_actions).map(|i| format!("a{i}")).collect(),
        observations: (0..n_observations).map(|i| format!("z{i}")).collect(),
        transition: SparseRows::from_dense(&t, n_states),
        observation: SparseRows::from_dense(&o, n_observations),
        reward,
        gamma,
        start: None,
    })
    .expect("random model is valid")
}

/// Layout of a navigation problem.
#[derive(Debug, Clone, Copy)]
pub struct NavigationSpec {
    pub width: usize,
    pub height: usize,
    /// Probability that a move fails and the robot stays put.
    pub slip: f64,
    /// Probability that the position sensor reports a wrong reading.
    pub sensor_noise: f64,
    pub gamma: f64,
}

/// Grid navigation with a hidden position: moves `n, s, e, w` plus
/// `declare`. Declaring at the goal (the last cell) pays `+1` and restarts
/// the robot uniformly; every other step pays nothing. The robot observes a
/// noisy reading of which walls surround its cell. A grid of height 1 is a
/// chain.
pub fn navigation(spec: NavigationSpec) -> PomdpModel {
    let NavigationSpec {
        width,
        height,
        slip,
        sensor_noise,
        gamma,
    } = spec;
    assert!(width >= 1 && height >= 1 && width * height >= 2);
    let n_s = width * height;
    let goal = n_s - 1;
    let moves: &[(&str, isize, isize)] = if height == 1 {
        &[("left", -1, 0), ("right", 1, 0)]
    } else {
        &[("n", 0, -1), ("s", 0, 1), ("e", 1, 0), ("w", -1, 0)]
    };
    let n_a = moves.len() + 1;
    let declare = moves.len();

    let wall_mask = |cell: usize| -> usize {
        let (x, y) = (cell % width, cell / width);
        let mut m = 0;
        if y == 0 {
            m |= 1;
        }
        if y + 1 == height {
            m |= 2;
        }
        if x + 1 == width {
            m |= 4;
        }
        if x == 0 {
            m |= 8;
        }
        // Goal cell carries its own marker so the sensor can localize it.
        if cell == goal {
            m |= 16;
        }
        m
    };
    let mut masks: Vec<usize> = (0..n_s).map(wall_mask).collect::<Vec<_>>();
    let mut distinct = masks.clone();
    distinct.sort_unstable();
    distinct.dedup();
    masks
        .iter_mut()
        .for_each(|m| *m = distinct.binary_search(m).unwrap());
    let n_z = distinct.len();

    let mut t_rows = Vec::with_capacity(n_s * n_a);
    let mut reward = vec![0.0; n_s * n_a];
    for a in 0..n_a {
        for s in 0..n_s {
            if a == declare {
                if s == goal {
                    reward[a * n_s + s] = 1.0;
                    t_rows.push((0..n_s).map(|j| (j, 1.0 / n_s as f64)).collect());
                } else {
                    t_rows.push(vec![(s, 1.0)]);
                }
                continue;
            }
            let (_, dx, dy) = moves[a];
            let (x, y) = ((s % width) as isize, (s / width) as isize);
            let (nx, ny) = (x + dx, y + dy);
            let target = if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                s
            } else {
                ny as usize * width + nx as usize
            };
            if target == s {
                t_rows.push(vec![(s, 1.0)]);
            } else {
                t_rows.push(vec![(target, 1.0 - slip), (s, slip)]);
            }
        }
    }
    let mut o_rows = Vec::with_capacity(n_s * n_a);
    for _ in 0..n_a {
        for &m in &masks {
            if n_z == 1 {
                o_rows.push(vec![(0, 1.0)]);
                continue;
            }
            let wrong = sensor_noise / (n_z - 1) as f64;
            o_rows.push(
                (0..n_z)
                    .map(|z| (z, if z == m { 1.0 - sensor_noise } else { wrong }))
                    .collect(),
            );
        }
    }
    let mut actions: Vec<String> = moves.iter().map(|(n, _, _)| n.to_string()).collect();
    actions.push("declare".into());
    PomdpModel::new(ModelParts {
        states: (0..n_s).map(|i| format!("c{i}")).collect(),
        actions,
        observations: (0..n_z).map(|i| format!("o{i}")).collect(),
        transition: SparseRows::from_sparse(t_rows, n_s),
        observation: SparseRows::from_sparse(o_rows, n_z),
        reward,
        gamma,
        start: None,
    })
    .expect("navigation model is valid")
}
