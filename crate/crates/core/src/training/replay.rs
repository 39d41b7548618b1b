use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{Error, Result};
use crate::network::{shared_forward, shared_net_gradients, td_error, SharedNetWeights, SharedRates, WeightLayout};
use crate::pendulum::{normalize_state, step, Action, InitialStateRanges, PendulumState, StatePool};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: PendulumState,
    pub action: Action,
    pub reward: i32,
    pub next_state: PendulumState,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub pretrain_steps: usize,
    pub gamma: f64,
    pub rates: SharedRates,
    /// Probability with which the behaviour policy pushes CCW.
    pub behavior_prob: f64,
    /// Box the recorded states are drawn from.
    pub state_ranges: InitialStateRanges,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 150_000,
            pretrain_steps: 200_000,
            gamma: 0.9,
            rates: SharedRates::default(),
            behavior_prob: 0.5,
            state_ranges: InitialStateRanges {
                theta: 1.0,
                theta_dot: 2.0,
                alpha: 0.17,
                alpha_dot: 2.0,
            },
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("replay gamma outside [0, 1)"));
        }
        if !(self.behavior_prob > 0.0 && self.behavior_prob < 1.0) {
            return Err(Error::config("behaviour probability must lie in (0, 1)"));
        }
        self.state_ranges.validate()
    }
}

/// Transitions recorded under a uniformly random behaviour policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    samples: Vec<Experience>,
}

impl ReplayBuffer {
    pub fn new(samples: Vec<Experience>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("replay buffer is empty"));
        }
        Ok(Self { samples })
    }

    /// Records `config.capacity` one-step transitions from states drawn
    /// uniformly in `config.state_ranges`.
    pub fn generate<R: Rng + ?Sized>(env: &Environment, config: &ReplayConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let states = StatePool::generate(rng, config.capacity, &config.state_ranges)?;
        let samples = states
            .states()
            .iter()
            .map(|&s| {
                let action = Action::from_bit(rng.random::<f64>() < config.behavior_prob);
                let out = step(s, action, &env.pendulum)?;
                Ok(Experience {
                    state: s,
                    action,
                    reward: out.reward,
                    next_state: out.state,
                    terminal: out.failed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Experience] {
        &self.samples
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Experience {
        &self.samples[rng.random_range(0..self.samples.len())]
    }
}

/// Off-policy actor-critic pre-training from random minibatches of one.
/// Each update is weighted by `π(a|s) / b(a)`.
pub fn pretrain_offpolicy<R: Rng + ?Sized>(
    initial: SharedNetWeights,
    buffer: &ReplayBuffer,
    env: &Environment,
    config: &ReplayConfig,
    rng: &mut R,
) -> Result<SharedNetWeights> {
    config.validate()?;
    let mut w = initial;
    for _ in 0..config.pretrain_steps {
        let e = buffer.sample(rng);
        let x = normalize_state(&e.state, &env.bounds);
        let trace = shared_forward(&w, &x);
        let v_next = if e.terminal {
            0.0
        } else {
            shared_forward(&w, &normalize_state(&e.next_state, &env.bounds)).value
        };
        let delta = td_error(e.reward, v_next, trace.value, config.gamma, e.terminal);
        let q = e.action.q();
        let (pi, b) = match e.action {
            Action::Ccw => (trace.prob, config.behavior_prob),
            Action::Cw => (1.0 - trace.prob, 1.0 - config.behavior_prob),
        };
        let (dv, dp) = shared_net_gradients(&w, &trace, delta, q, pi / b);
        w = w.add(&config.rates.apply(&dv, &dp));
    }
    if !w.to_flat().iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged {
            step: config.pretrain_steps,
        });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_has_requested_size_and_consistent_rewards() {
        let cfg = ReplayConfig {
            capacity: 500,
            ..Default::default()
        };
        let mut rng = crate::seed::rng(1, "replay", 0);
        let buf = ReplayBuffer::generate(&Environment::default(), &cfg, &mut rng).unwrap();
        assert_eq!(buf.len(), 500);
        for e in buf.samples() {
            assert_eq!(e.terminal, e.reward == -1);
        }
        let ccw = buf.samples().iter().filter(|e| e.action == Action::Ccw).count();
        assert!((150..350).contains(&ccw));
    }

    #[test]
    fn pretraining_is_deterministic() {
        let cfg = ReplayConfig {
            capacity: 300,
            pretrain_steps: 1000,
            ..Default::default()
        };
        let env = Environment::default();
        let run = || {
            let mut rng = crate::seed::rng(2, "replay", 0);
            let buf = ReplayBuffer::generate(&env, &cfg, &mut rng).unwrap();
            let w0 = SharedNetWeights::random(&mut rng);
            pretrain_offpolicy(w0, &buf, &env, &cfg, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_buffer_rejected() {
        assert!(ReplayBuffer::new(Vec::new()).is_err());
    }
}
