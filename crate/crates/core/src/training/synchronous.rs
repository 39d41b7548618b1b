use serde::{Deserialize, Serialize};

use super::{mean_steps, ActionSampler, Environment, HardwareConfig, Readout, TrialRecord, WeightStore, WritePath};
use crate::error::{Error, Result};
use crate::network::{shared_forward, shared_net_gradients, td_error, SharedNetWeights, SharedRates, WeightLayout};
use crate::pendulum::{normalize_state, step, PendulumState, StatePool, MAX_TRIAL_STEPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub learners: usize,
    /// Environment samples consumed across all learners.
    pub total_samples: usize,
    pub checkpoint_every: usize,
    pub gamma: f64,
    pub rates: SharedRates,
    pub write_path: WritePath,
    /// Test states used at each checkpoint; `0` means the whole test pool.
    pub eval_states: usize,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            learners: 1,
            total_samples: 500_000,
            checkpoint_every: 25_000,
            gamma: 0.9,
            rates: SharedRates::default(),
            write_path: WritePath::Exact,
            eval_states: 0,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learners == 0 {
            return Err(Error::config("need at least one learner"));
        }
        if self.checkpoint_every == 0 || self.total_samples == 0 {
            return Err(Error::config("sample budget and checkpoint interval must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma outside [0, 1)"));
        }
        if self.write_path == WritePath::Manhattan {
            return Err(Error::config(
                "synchronous re-training supports exact and variable-amplitude writes",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub samples: usize,
    /// Global updates applied to each weight so far.
    pub updates: usize,
    pub mean_t2f: f64,
}

#[derive(Debug, Clone)]
pub struct SyncRun {
    pub weights: SharedNetWeights,
    pub checkpoints: Vec<Checkpoint>,
    pub stores: Vec<WeightStore<SharedNetWeights>>,
}

/// Sums the per-learner `(dθ_v, dθ_p)` gradients in order and scales them
/// into one weight change.
pub fn global_update(grads: &[(SharedNetWeights, SharedNetWeights)], rates: &SharedRates) -> SharedNetWeights {
    let mut dv = SharedNetWeights::zeros();
    let mut dp = SharedNetWeights::zeros();
    for (v, p) in grads {
        dv = dv.add(v);
        dp = dp.add(p);
    }
    rates.apply(&dv, &dp)
}

struct Learner {
    store: WeightStore<SharedNetWeights>,
    sampler: ActionSampler,
    state: PendulumState,
    steps: usize,
}

/// Frozen test trials of a shared network, one per state of `pool`.
pub fn evaluate_shared(
    weights: &SharedNetWeights,
    sampler: &mut ActionSampler,
    readout: &Readout,
    env: &Environment,
    pool: &StatePool,
) -> Vec<TrialRecord> {
    pool.states()
        .iter()
        .map(|&s0| {
            let mut s = s0;
            let mut steps = 0;
            let mut diverged = false;
            while steps < MAX_TRIAL_STEPS {
                let x = normalize_state(&s, &env.bounds);
                let p = readout.prob(shared_forward(weights, &x).prob);
                steps += 1;
                match step(s, sampler.sample(p), &env.pendulum) {
                    Ok(out) if !out.failed => s = out.state,
                    Ok(_) => break,
                    Err(_) => {
                        diverged = true;
                        break;
                    }
                }
            }
            TrialRecord {
                steps_survived: steps,
                updates_applied: 0,
                success: steps >= MAX_TRIAL_STEPS && !diverged,
                diverged,
            }
        })
        .collect()
}

/// Synchronous re-training: each of `K` learners takes one step on its own
/// copy of the plant, their gradients are summed, and the same global change
/// is written to every learner's weights. Test performance of learner 0 is
/// recorded at the start and after every `checkpoint_every` samples.
pub fn retrain_synchronous(
    initial: SharedNetWeights,
    env: &Environment,
    config: &SyncConfig,
    hw: &HardwareConfig,
    retrain_pool: &StatePool,
    test_pool: &StatePool,
    seed: u64,
) -> Result<SyncRun> {
    config.validate()?;
    let k = config.learners;
    let readout = Readout::for_path(config.write_path, hw);
    let test_pool = if config.eval_states > 0 {
        test_pool.truncated(config.eval_states)
    } else {
        test_pool.clone()
    };
    let mut pool_rng = crate::seed::rng(seed, "sync.pool", 0);
    let mut learners = (0..k)
        .map(|i| {
            let mut device_rng = crate::seed::rng(seed, "sync.devices", i as u64);
            Learner {
                store: WeightStore::new(initial.clone(), config.write_path, hw, &mut device_rng),
                sampler: ActionSampler::for_path(
                    config.write_path,
                    crate::seed::derive(seed, "sync.actions", i as u64),
                ),
                state: retrain_pool.sample(&mut pool_rng),
                steps: 0,
            }
        })
        .collect::<Vec<_>>();

    let evaluate = |w: &SharedNetWeights, index: usize| {
        let mut sampler =
            ActionSampler::for_path(config.write_path, crate::seed::derive(seed, "sync.eval", index as u64));
        mean_steps(&evaluate_shared(w, &mut sampler, &readout, env, &test_pool))
    };
    let mut checkpoints = vec![Checkpoint {
        samples: 0,
        updates: 0,
        mean_t2f: evaluate(learners[0].store.weights(), 0),
    }];

    let rounds = config.total_samples.div_ceil(k);
    let mut grads = Vec::with_capacity(k);
    for round in 1..=rounds {
        grads.clear();
        let mut ended = vec![false; k];
        for (i, l) in learners.iter_mut().enumerate() {
            let w = l.store.weights();
            let x = normalize_state(&l.state, &env.bounds);
            let mut trace = shared_forward(w, &x);
            trace.value = readout.value(trace.value);
            trace.prob = readout.prob(trace.prob);
            let action = l.sampler.sample(trace.prob);
            l.steps += 1;
            let (reward, next, terminal) = match step(l.state, action, &env.pendulum) {
                Ok(o) => (o.reward, o.state, o.failed),
                Err(_) => (-1, l.state, true),
            };
            let v_next = if terminal {
                0.0
            } else {
                readout.value(shared_forward(w, &normalize_state(&next, &env.bounds)).value)
            };
            let delta = td_error(reward, v_next, trace.value, config.gamma, terminal);
            grads.push(shared_net_gradients(w, &trace, delta, action.q(), 1.0));
            l.state = next;
            ended[i] = terminal || l.steps >= MAX_TRIAL_STEPS;
        }
        let change = global_update(&grads, &config.rates);
        for (l, done) in learners.iter_mut().zip(ended) {
            l.store.apply(&change, None)?;
            if done {
                l.state = retrain_pool.sample(&mut pool_rng);
                l.steps = 0;
            }
        }
        let samples = round * k;
        if samples / config.checkpoint_every > (samples - k) / config.checkpoint_every || round == rounds {
            let w = learners[0].store.weights();
            if !w.to_flat().iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged { step: samples });
            }
            checkpoints.push(Checkpoint {
                samples,
                updates: round,
                mean_t2f: evaluate(w, checkpoints.len()),
            });
        }
    }
    Ok(SyncRun {
        weights: learners[0].store.weights().clone(),
        checkpoints,
        stores: learners.into_iter().map(|l| l.store).collect(),
    })
}
