//! Per-RSU deterministic-policy actor-critic agent: noisy action selection,
//! N-step targets through the target networks, critic regression, policy
//! gradient through the critic, and soft target updates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mlp::{Activation, Adam, Gradients, MlpNetwork};
use super::replay::{ReplayBuffer, Transition, Window};
use crate::par;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Discount gamma.
    pub gamma: f64,
    /// N-step return length.
    pub n_step: usize,
    /// Minibatch size M.
    pub minibatch: usize,
    /// Actor learning rate alpha.
    pub actor_lr: f64,
    /// Critic learning rate beta.
    pub critic_lr: f64,
    /// Soft-update rate n (much less than 1).
    pub soft_update_rate: f64,
    /// Target update period t_tgt in environment steps.
    pub target_period: usize,
    /// Exploration noise scale at the start / end of training.
    pub noise_initial: f64,
    pub noise_final: f64,
    pub buffer_capacity: usize,
    pub hidden_policy: Vec<usize>,
    pub hidden_critic: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            n_step: 5,
            minibatch: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            soft_update_rate: 0.01,
            target_period: 1,
            noise_initial: 0.3,
            noise_final: 0.05,
            buffer_capacity: 100_000,
            hidden_policy: vec![256, 256, 256],
            hidden_critic: vec![512, 512, 256],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// Mean Q(o, mu(o)) over the minibatch (the actor's ascent objective).
    pub actor_value: f64,
}

pub struct Agent {
    pub policy: MlpNetwork,
    pub critic: MlpNetwork,
    pub target_policy: MlpNetwork,
    pub target_critic: MlpNetwork,
    actor_opt: Adam,
    critic_opt: Adam,
    pub buffer: ReplayBuffer,
    pub config: AgentConfig,
    obs_dim: usize,
    act_dim: usize,
}

impl Agent {
    pub fn new(obs_dim: usize, act_dim: usize, config: AgentConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut policy_sizes = vec![obs_dim];
        policy_sizes.extend(&config.hidden_policy);
        policy_sizes.push(act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&config.hidden_critic);
        critic_sizes.push(1);

        let policy = MlpNetwork::new(&policy_sizes, Activation::Sigmoid, rng);
        let critic = MlpNetwork::new(&critic_sizes, Activation::Linear, rng);
        Agent {
            target_policy: policy.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::new(&policy, config.actor_lr),
            critic_opt: Adam::new(&critic, config.critic_lr),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            obs_dim,
            act_dim,
            policy,
            critic,
            config,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// a = mu(o) + noise_scale * N(0, 1) when exploring, clamped per
    /// dimension into [0, 1]; the plain deterministic policy otherwise.
    pub fn select_action(
        &self,
        obs: &[f64],
        explore: bool,
        noise_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let mut action = self.policy.forward(obs).expect("observation shape");
        if explore && noise_scale > 0.0 {
            for a in &mut action {
                let n: f64 = StandardNormal.sample(rng);
                *a = (*a + noise_scale * n).clamp(0.0, 1.0);
            }
        }
        action
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Y = sum gamma^n r + gamma^len Q'(o'', mu'(o'')); the bootstrap term
    /// is dropped for windows that hit the episode's terminal step.
    pub fn n_step_target(&self, window: &Window) -> f64 {
        let gamma = self.config.gamma;
        let mut y = 0.0;
        let mut discount = 1.0;
        for &r in &window.rewards {
            y += discount * r;
            discount *= gamma;
        }
        if let Some(obs) = &window.bootstrap_obs {
            let action = self.target_policy.forward(obs).expect("obs shape");
            let q = self
                .target_critic
                .forward(&concat(obs, &action))
                .expect("critic shape")[0];
            y += discount * q;
        }
        y
    }

    /// One critic regression step and one policy-gradient ascent step on a
    /// sampled minibatch. No-op (returns `None`) until the buffer holds a
    /// full minibatch.
    pub fn update(&mut self, rng: &mut ChaCha8Rng) -> Option<UpdateStats> {
        let m = self.config.minibatch;
        if self.buffer.len() < m {
            return None;
        }
        let windows: Vec<Window> = (0..m)
            .map(|_| self.buffer.sample_window(self.config.n_step, rng).expect("non-empty"))
            .collect();
        let targets: Vec<f64> = par::map(&windows, |w| self.n_step_target(w));

        // critic: minimize (1/M) sum (Y - Q(o, a))^2
        let critic = &self.critic;
        let per_sample: Vec<(Gradients, f64)> = par::map(
            &windows.iter().zip(&targets).collect::<Vec<_>>(),
            |(w, &y)| {
                let input = concat(&w.obs, &w.action);
                let cache = critic.forward_cached(&input).expect("critic shape");
                let q = cache.output()[0];
                let upstream = [2.0 * (q - y) / m as f64];
                let (grads, _) = critic.backward(&cache, &upstream);
                (grads, (q - y) * (q - y))
            },
        );
        let mut critic_grads: Option<Gradients> = None;
        let mut critic_loss = 0.0;
        for (g, l) in per_sample {
            critic_loss += l / m as f64;
            match critic_grads.as_mut() {
                Some(acc) => acc.add(&g),
                None => critic_grads = Some(g),
            }
        }
        self.critic_opt.apply(&mut self.critic, &critic_grads.expect("m >= 1"));

        // actor: ascend (1/M) sum Q(o, mu(o))
        let (policy, critic) = (&self.policy, &self.critic);
        let obs_dim = self.obs_dim;
        let per_sample: Vec<(Gradients, f64)> = par::map(&windows, |w| {
            let pi_cache = policy.forward_cached(&w.obs).expect("obs shape");
            let action = pi_cache.output().to_vec();
            let q_cache = critic
                .forward_cached(&concat(&w.obs, &action))
                .expect("critic shape");
            let q = q_cache.output()[0];
            let (_, d_input) = critic.backward(&q_cache, &[1.0]);
            // gradient ascent: descend along -dQ/da, scaled by 1/M
            let upstream: Vec<f64> =
                d_input[obs_dim..].iter().map(|g| -g / m as f64).collect();
            let (grads, _) = policy.backward(&pi_cache, &upstream);
            (grads, q)
        });
        let mut actor_grads: Option<Gradients> = None;
        let mut actor_value = 0.0;
        for (g, q) in per_sample {
            actor_value += q / m as f64;
            match actor_grads.as_mut() {
                Some(acc) => acc.add(&g),
                None => actor_grads = Some(g),
            }
        }
        self.actor_opt.apply(&mut self.policy, &actor_grads.expect("m >= 1"));

        Some(UpdateStats {
            critic_loss,
            actor_value,
        })
    }

    /// theta' <- n theta + (1 - n) theta' for both target networks.
    pub fn soft_update(&mut self) {
        let rate = self.config.soft_update_rate;
        self.target_policy.soft_update_from(&self.policy, rate);
        self.target_critic.soft_update_from(&self.critic, rate);
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: 1,
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            config: self.config.clone(),
            policy: self.policy.clone(),
            critic: self.critic.clone(),
            target_policy: self.target_policy.clone(),
            target_critic: self.target_critic.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
        }
    }

    pub fn restore(ck: Checkpoint) -> Result<Self, AgentError> {
        if ck.version != 1 {
            return Err(AgentError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        if ck.policy.input_len() != ck.obs_dim || ck.policy.output_len() != ck.act_dim {
            return Err(AgentError::Checkpoint("policy shape mismatch".into()));
        }
        Ok(Agent {
            buffer: ReplayBuffer::new(ck.config.buffer_capacity),
            actor_opt: ck.actor_opt,
            critic_opt: ck.critic_opt,
            obs_dim: ck.obs_dim,
            act_dim: ck.act_dim,
            policy: ck.policy,
            critic: ck.critic,
            target_policy: ck.target_policy,
            target_critic: ck.target_critic,
            config: ck.config,
        })
    }
}

/// Versioned on-disk agent state (JSON): layer sizes plus row-major weight
/// arrays for all four networks and the optimizer moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub config: AgentConfig,
    pub policy: MlpNetwork,
    pub critic: MlpNetwork,
    pub target_policy: MlpNetwork,
    pub target_critic: MlpNetwork,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

/// The random-allocation baseline: every raw action dimension uniform in
/// [0, 1].
pub fn ra_policy(action_len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..action_len).map(|_| rng.random_range(0.0..=1.0)).collect()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::mlp::finite_difference_grads;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn small_config() -> AgentConfig {
        AgentConfig {
            minibatch: 4,
            n_step: 3,
            hidden_policy: vec![8, 8],
            hidden_critic: vec![8, 8],
            buffer_capacity: 100,
            ..AgentConfig::default()
        }
    }

    fn agent(seed: u64) -> Agent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Agent::new(3, 2, small_config(), &mut rng)
    }

    #[test]
    fn evaluation_actions_are_deterministic() {
        let a = agent(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = [0.1, 0.2, 0.3];
        let x = a.select_action(&obs, false, 0.3, &mut rng);
        let y = a.select_action(&obs, false, 0.3, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn zero_noise_explore_equals_evaluate() {
        let a = agent(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = [0.1, 0.2, 0.3];
        let explore = a.select_action(&obs, true, 0.0, &mut rng);
        let eval = a.select_action(&obs, false, 0.0, &mut rng);
        assert_eq!(explore, eval);
    }

    #[test]
    fn noisy_actions_stay_clamped() {
        let a = agent(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = [0.9, -0.4, 0.3];
        for _ in 0..100 {
            let act = a.select_action(&obs, true, 5.0, &mut rng);
            assert!(act.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn n_step_target_one_step_case() {
        let a = agent(4);
        let obs = vec![0.1, 0.2, 0.3];
        let window = Window {
            obs: obs.clone(),
            action: vec![0.5, 0.5],
            rewards: vec![1.0],
            bootstrap_obs: Some(obs.clone()),
        };
        let mu = a.target_policy.forward(&obs).unwrap();
        let q = a.target_critic.forward(&concat(&obs, &mu)).unwrap()[0];
        let y = a.n_step_target(&window);
        assert_relative_eq!(y, 1.0 + 0.99 * q, max_relative = 1e-12);
    }

    #[test]
    fn terminal_window_has_no_bootstrap_term() {
        let mut a = agent(5);
        a.config.gamma = 0.5;
        let window = Window {
            obs: vec![0.0; 3],
            action: vec![0.5, 0.5],
            rewards: vec![1.0, 1.0, 1.0],
            bootstrap_obs: None,
        };
        assert_relative_eq!(a.n_step_target(&window), 1.75, max_relative = 1e-12);
    }

    #[test]
    fn update_is_noop_until_buffer_fills() {
        let mut a = agent(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(a.update(&mut rng).is_none());
        for i in 0..4 {
            a.remember(Transition {
                obs: vec![0.1 * i as f64; 3],
                action: vec![0.5, 0.4],
                reward: 1.0,
                next_obs: vec![0.1 * (i + 1) as f64; 3],
                done: i == 3,
                episode: 0,
            });
        }
        let stats = a.update(&mut rng).expect("buffer full enough");
        assert!(stats.critic_loss.is_finite());
    }

    #[test]
    fn zero_td_error_gives_zero_critic_gradient() {
        // with Y computed from the critic itself and gamma = 0, rewards = Q
        // would be needed; instead check directly: upstream 0 -> zero grads
        let a = agent(7);
        let input = vec![0.2; 5];
        let cache = a.critic.forward_cached(&input).unwrap();
        let (grads, _) = a.critic.backward(&cache, &[0.0]);
        assert!(grads.weights.iter().flatten().all(|&g| g == 0.0));
        assert!(grads.biases.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        // d/d theta_mu of (1/M) sum Q(o, mu_theta(o)) via the chain rule
        // against central differences through the composed critic.
        let a = agent(8);
        let observations: Vec<Vec<f64>> = (0..4)
            .map(|i| vec![0.1 * i as f64, 0.3, -0.2])
            .collect();
        let m = observations.len() as f64;

        let mut analytic: Option<Gradients> = None;
        for obs in &observations {
            let pi_cache = a.policy.forward_cached(obs).unwrap();
            let action = pi_cache.output().to_vec();
            let q_cache = a.critic.forward_cached(&concat(obs, &action)).unwrap();
            let (_, d_input) = a.critic.backward(&q_cache, &[1.0]);
            let upstream: Vec<f64> = d_input[3..].iter().map(|g| g / m).collect();
            let (grads, _) = a.policy.backward(&pi_cache, &upstream);
            match analytic.as_mut() {
                Some(acc) => acc.add(&grads),
                None => analytic = Some(grads),
            }
        }
        let analytic = analytic.unwrap();

        let numeric = finite_difference_grads(&a.policy, 1e-5, |probe| {
            observations
                .iter()
                .map(|obs| {
                    let action = probe.forward(obs).unwrap();
                    a.critic.forward(&concat(obs, &action)).unwrap()[0]
                })
                .sum::<f64>()
                / m
        });
        for (la, ln) in analytic
            .weights
            .iter()
            .chain(&analytic.biases)
            .zip(numeric.weights.iter().chain(&numeric.biases))
        {
            for (&ga, &gn) in la.iter().zip(ln) {
                let denom = ga.abs().max(gn.abs()).max(1e-6);
                assert!((ga - gn).abs() / denom < 1e-3, "{ga} vs {gn}");
            }
        }
    }

    #[test]
    fn ra_policy_is_seeded_uniform() {
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(ra_policy(10, &mut r1), ra_policy(10, &mut r2));

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let mut sums = vec![0.0; 4];
        for _ in 0..n {
            for (s, v) in sums.iter_mut().zip(ra_policy(4, &mut rng)) {
                assert!((0.0..=1.0).contains(&v));
                *s += v;
            }
        }
        for s in sums {
            let mean = s / n as f64;
            assert!((mean - 0.5).abs() < 0.01, "dim mean {mean}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_policy() {
        let a = agent(11);
        let json = serde_json::to_string(&a.checkpoint()).unwrap();
        let restored = Agent::restore(serde_json::from_str(&json).unwrap()).unwrap();
        let obs = [0.3, -0.1, 0.7];
        assert_eq!(
            a.policy.forward(&obs).unwrap(),
            restored.policy.forward(&obs).unwrap()
        );
    }
}
