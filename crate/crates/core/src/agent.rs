//! Deep Q-learning: replay memory, decaying epsilon-greedy exploration,
//! Bellman targets and the epoch training loop shared by both agents.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, KeyValueConfig};
use crate::neural::{argmax, NetError, QNetwork};
use crate::Error;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("EmptyMemory: cannot sample from an empty replay memory")]
    EmptyMemory,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Bounded FIFO of transitions; the oldest entry is evicted when full.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        ReplayMemory { capacity, buffer: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(transition);
    }

    /// Distinct indices when the memory holds at least `batch_size`
    /// transitions, otherwise uniform draws with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>, AgentError> {
        let len = self.buffer.len();
        if len == 0 {
            return Err(AgentError::EmptyMemory);
        }
        if len < batch_size {
            Ok((0..batch_size).map(|_| rng.random_range(0..len)).collect())
        } else {
            Ok(rand::seq::index::sample(rng, len, batch_size).into_vec())
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Transition>, AgentError> {
        Ok(self.sample_indices(batch_size, rng)?.into_iter().map(|i| &self.buffer[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay: f64,
    pub current: f64,
}

impl EpsilonSchedule {
    pub fn new(eps_start: f64, eps_end: f64, decay: f64) -> Self {
        EpsilonSchedule { eps_start, eps_end, decay, current: eps_start }
    }

    /// Fixed exploration rate, e.g. 0 for greedy evaluation.
    pub fn constant(eps: f64) -> Self {
        EpsilonSchedule { eps_start: eps, eps_end: eps, decay: 1.0, current: eps }
    }

    pub fn decay(&mut self) {
        self.current = (self.current * self.decay).max(self.eps_end);
    }

    pub fn value(&self) -> f64 {
        self.current
    }
}

/// Epsilon-greedy action: uniform with probability epsilon, else the greedy
/// action with ties going to the lowest index.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &[f64],
    schedule: &EpsilonSchedule,
    rng: &mut R,
) -> Result<usize, NetError> {
    if schedule.current > 0.0 && rng.random::<f64>() < schedule.current {
        return Ok(rng.random_range(0..net.output_dim()));
    }
    Ok(argmax(&net.forward(state)?))
}

/// `r` for terminal transitions, `r + gamma * max_a Q(s', a)` otherwise.
pub fn bellman_targets(batch: &[&Transition], net: &QNetwork, gamma: f64) -> Result<Vec<f64>, NetError> {
    batch
        .iter()
        .map(|t| {
            if t.done {
                Ok(t.reward)
            } else {
                let q_next = net.forward(&t.next_state)?;
                Ok(t.reward + gamma * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay: f64,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.97,
            batch_size: 32,
            epochs: 500,
            capacity: 10_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay: 0.995,
            lr: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if self.batch_size == 0 || self.capacity == 0 {
            return bad("batch_size and capacity must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.eps_end) || !(self.eps_end..=1.0).contains(&self.eps_start) {
            return bad("need 0 <= eps_end <= eps_start <= 1");
        }
        if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
            return bad("eps_decay must be in (0, 1]");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule::new(self.eps_start, self.eps_end, self.eps_decay)
    }

    /// Overrides fields from `<prefix>gamma`, `<prefix>batch_size`, ... keys.
    pub fn apply_config(&mut self, cfg: &KeyValueConfig, prefix: &str) -> Result<(), ConfigError> {
        let key = |k: &str| format!("{prefix}{k}");
        cfg.set_if_present(&key("gamma"), &mut self.gamma)?;
        cfg.set_if_present(&key("batch_size"), &mut self.batch_size)?;
        cfg.set_if_present(&key("epochs"), &mut self.epochs)?;
        cfg.set_if_present(&key("capacity"), &mut self.capacity)?;
        cfg.set_if_present(&key("eps_start"), &mut self.eps_start)?;
        cfg.set_if_present(&key("eps_end"), &mut self.eps_end)?;
        cfg.set_if_present(&key("eps_decay"), &mut self.eps_decay)?;
        cfg.set_if_present(&key("lr"), &mut self.lr)?;
        Ok(())
    }

    pub fn write_config(&self, cfg: &mut KeyValueConfig, prefix: &str) {
        cfg.set(format!("{prefix}gamma"), self.gamma);
        cfg.set(format!("{prefix}batch_size"), self.batch_size);
        cfg.set(format!("{prefix}epochs"), self.epochs);
        cfg.set(format!("{prefix}capacity"), self.capacity);
        cfg.set(format!("{prefix}eps_start"), self.eps_start);
        cfg.set(format!("{prefix}eps_end"), self.eps_end);
        cfg.set(format!("{prefix}eps_decay"), self.eps_decay);
        cfg.set(format!("{prefix}lr"), self.lr);
    }
}

pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment driven by the trainer.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<Vec<f64>, Error>;
    fn step(&mut self, action: usize) -> Result<StepOutcome, Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub cum_reward: f64,
    pub mean_loss: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
}

impl TrainLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.epochs {
            writeln!(out, "{}", serde_json::to_string(e).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }
}

/// Runs `cfg.epochs` episodes. Each environment step pushes one transition,
/// samples a mini-batch, takes one gradient step on the Bellman targets and
/// decays epsilon.
pub fn train<E, R>(env: &mut E, net: &mut QNetwork, cfg: &TrainConfig, rng: &mut R) -> Result<TrainLog, Error>
where
    E: Environment + ?Sized,
    R: RngCore,
{
    cfg.validate()?;
    if env.state_dim() != net.input_dim() || env.action_count() != net.output_dim() {
        return Err(NetError::ShapeMismatch(format!(
            "environment ({} -> {}) vs network ({} -> {})",
            env.state_dim(),
            env.action_count(),
            net.input_dim(),
            net.output_dim()
        ))
        .into());
    }
    let mut memory = ReplayMemory::new(cfg.capacity);
    let mut schedule = cfg.schedule();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let mut state = env.reset(rng)?;
        let mut cum_reward = 0.0;
        let mut loss_sum = 0.0;
        let mut n_steps = 0usize;
        loop {
            let action = select_action(net, &state, &schedule, rng)?;
            let outcome = env.step(action)?;
            cum_reward += outcome.reward;
            memory.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: outcome.reward,
                next_state: outcome.state.clone(),
                done: outcome.done,
            });
            let batch = memory.sample(cfg.batch_size, rng)?;
            let targets = bellman_targets(&batch, net, cfg.gamma)?;
            let states: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
            let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
            loss_sum += net.train_step(&states, &actions, &targets, cfg.lr)?;
            schedule.decay();
            n_steps += 1;
            state = outcome.state;
            if outcome.done {
                break;
            }
        }
        log.steps += n_steps;
        log.epochs.push(EpochLog {
            epoch,
            cum_reward,
            mean_loss: loss_sum / n_steps as f64,
            epsilon: schedule.value(),
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::neural::NetSpec;

    fn tr(id: usize) -> Transition {
        Transition { state: vec![id as f64], action: 0, reward: id as f64, next_state: vec![0.0], done: false }
    }

    #[test]
    fn fifo_eviction() {
        let mut m = ReplayMemory::new(2);
        for i in 0..3 {
            m.push(tr(i));
        }
        let ids: Vec<f64> = m.iter().map(|t| t.reward).collect();
        assert_eq!(ids, vec![1.0, 2.0]);
        let mut m = ReplayMemory::new(10);
        m.push(tr(0));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn size_is_min_of_pushes_and_capacity() {
        for (n, c) in [(0, 3), (2, 3), (3, 3), (17, 3), (5, 100)] {
            let mut m = ReplayMemory::new(c);
            for i in 0..n {
                m.push(tr(i));
            }
            assert_eq!(m.len(), n.min(c));
        }
    }

    #[test]
    fn sampling_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty = ReplayMemory::new(4);
        assert_eq!(empty.sample(4, &mut rng).unwrap_err(), AgentError::EmptyMemory);

        let mut one = ReplayMemory::new(4);
        one.push(tr(7));
        let batch = one.sample(4, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|t| t.reward == 7.0));

        let mut big = ReplayMemory::new(100);
        for i in 0..100 {
            big.push(tr(i));
        }
        let mut idx = big.sample_indices(32, &mut rng).unwrap();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 32);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut m = ReplayMemory::new(50);
        for i in 0..50 {
            m.push(tr(i));
        }
        let a = m.sample_indices(8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = m.sample_indices(8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn epsilon_decay() {
        let mut s = EpsilonSchedule::new(1.0, 0.01, 0.5);
        s.decay();
        assert_eq!(s.value(), 0.5);
        let mut floor = EpsilonSchedule { current: 0.01, ..s };
        floor.decay();
        assert_eq!(floor.value(), 0.01);
    }

    #[test]
    fn greedy_selection() {
        let spec = NetSpec { input_dim: 1, hidden_dims: [2, 2], output_dim: 3, dueling: false, seed: 0 };
        let mut net = QNetwork::new(spec).unwrap();
        // zero everything, then set output biases directly
        net.params_mut().fill(0.0);
        let n = net.param_count();
        net.params_mut()[n - 3..].copy_from_slice(&[0.1, 0.9, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_action(&net, &[0.0], &EpsilonSchedule::constant(0.0), &mut rng).unwrap(), 1);
        net.params_mut()[n - 3..].copy_from_slice(&[0.5, 0.5, 0.1]);
        assert_eq!(select_action(&net, &[0.0], &EpsilonSchedule::constant(0.0), &mut rng).unwrap(), 0);
    }

    #[test]
    fn bellman_branches() {
        let spec = NetSpec { input_dim: 1, hidden_dims: [2, 2], output_dim: 2, dueling: false, seed: 0 };
        let mut net = QNetwork::new(spec).unwrap();
        net.params_mut().fill(0.0);
        let n = net.param_count();
        net.params_mut()[n - 2..].copy_from_slice(&[2.0, -1.0]);
        let terminal = Transition { done: true, reward: 1.0, ..tr(0) };
        let open = Transition { done: false, reward: 0.0, ..tr(0) };
        let targets = bellman_targets(&[&terminal, &open], &net, 0.9).unwrap();
        assert_eq!(targets[0], 1.0);
        assert!((targets[1] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { eps_end: 0.5, eps_start: 0.2, ..Default::default() }.validate().is_err());
    }
}
