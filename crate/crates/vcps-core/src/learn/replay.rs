//! Bounded FIFO experience store sampled in N-step windows that never cross
//! an episode boundary.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One (o, a, r, o') step of a single agent, tagged with its episode.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub episode: u64,
}

/// An N-step window starting at some buffered transition.
#[derive(Debug, Clone)]
pub struct Window {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    /// Up to N rewards, in step order.
    pub rewards: Vec<f64>,
    /// Observation to bootstrap from (discounted by gamma^len); `None` when
    /// the window reached the episode's terminal step.
    pub bootstrap_obs: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct ReplayBuffer {
    data: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            data: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back(t);
    }

    /// Samples one window of at most `n` steps starting at a uniform index.
    /// The window stops early at a terminal step or an episode change.
    pub fn sample_window(&self, n: usize, rng: &mut ChaCha8Rng) -> Option<Window> {
        if self.data.is_empty() || n == 0 {
            return None;
        }
        let start = rng.random_range(0..self.data.len());
        let episode = self.data[start].episode;
        let mut rewards = Vec::with_capacity(n);
        let mut bootstrap_obs = None;
        for i in start..(start + n).min(self.data.len()) {
            let t = &self.data[i];
            if t.episode != episode {
                break;
            }
            rewards.push(t.reward);
            if t.done {
                bootstrap_obs = None;
                break;
            }
            bootstrap_obs = Some(t.next_obs.clone());
        }
        let first = &self.data[start];
        Some(Window {
            obs: first.obs.clone(),
            action: first.action.clone(),
            rewards,
            bootstrap_obs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn transition(episode: u64, reward: f64, done: bool) -> Transition {
        Transition {
            obs: vec![reward],
            action: vec![0.5],
            reward,
            next_obs: vec![reward + 0.5],
            done,
            episode,
        }
    }

    #[test]
    fn capacity_is_bounded_fifo() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(transition(0, i as f64, false));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.data[0].reward, 2.0);
    }

    #[test]
    fn windows_never_cross_episodes() {
        let mut b = ReplayBuffer::new(100);
        for ep in 0..5u64 {
            for step in 0..4 {
                b.push(transition(ep, (ep * 10 + step) as f64, step == 3));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let w = b.sample_window(3, &mut rng).unwrap();
            let ep = (w.rewards[0] as u64) / 10;
            for &r in &w.rewards {
                assert_eq!((r as u64) / 10, ep, "window mixed episodes");
            }
        }
    }

    #[test]
    fn terminal_window_has_no_bootstrap() {
        let mut b = ReplayBuffer::new(10);
        b.push(transition(0, 1.0, true));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = b.sample_window(5, &mut rng).unwrap();
        assert!(w.bootstrap_obs.is_none());
        assert_eq!(w.rewards, vec![1.0]);
    }

    #[test]
    fn open_window_bootstraps_from_last_next_obs() {
        let mut b = ReplayBuffer::new(10);
        b.push(transition(0, 1.0, false));
        b.push(transition(0, 2.0, false));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let w = b.sample_window(2, &mut rng).unwrap();
            let last = *w.rewards.last().unwrap();
            assert_eq!(w.bootstrap_obs, Some(vec![last + 0.5]));
        }
    }
}
