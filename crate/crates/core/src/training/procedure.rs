//! Two-phase flow: ex-situ pre-training on the nominal plant, then in-situ
//! re-training on a varied plant.

use super::{
    evaluate_separate, pretrain_offpolicy, train_separate, ActionSampler, Approach, Environment, HardwareConfig,
    Readout, ReplayBuffer, ReplayConfig, SeparateAgent, TrainingConfig, TrainingRun, TrialRecord, WeightStore,
    WritePath,
};
use crate::error::Result;
use crate::network::{SeparateNetWeights, SharedNetWeights};
use crate::pendulum::PoolSet;

pub fn initial_separate_weights(seed: u64) -> SeparateNetWeights {
    SeparateNetWeights::random(&mut crate::seed::rng(seed, "init.separate", 0))
}

pub fn initial_shared_weights(seed: u64) -> SharedNetWeights {
    SharedNetWeights::random(&mut crate::seed::rng(seed, "init.shared", 0))
}

/// Builds an agent for `path`; hardware paths get crossbars whose device
/// thresholds are drawn from `device_seed`.
pub fn make_agent(
    weights: SeparateNetWeights,
    path: WritePath,
    hw: &HardwareConfig,
    device_seed: u64,
) -> SeparateAgent {
    let mut rng = crate::seed::rng(device_seed, "devices", 0);
    SeparateAgent {
        store: WeightStore::new(weights, path, hw, &mut rng),
        sampler: ActionSampler::for_path(path, crate::seed::derive(device_seed, "sampler", 0)),
        readout: Readout::for_path(path, hw),
    }
}

/// Software training from random weights on the nominal plant. A
/// `weight_limit` keeps the result inside the crossbar's weight range.
pub fn pretrain_separate(
    env: &Environment,
    pools: &PoolSet,
    stop_c: usize,
    weight_limit: Option<f64>,
    weight_seed: u64,
) -> Result<(SeparateNetWeights, TrainingRun)> {
    let mut config = TrainingConfig::for_approach(Approach::Baseline, stop_c);
    config.weight_limit = weight_limit;
    let mut agent = make_agent(
        initial_separate_weights(weight_seed),
        WritePath::Exact,
        &HardwareConfig::default(),
        weight_seed,
    );
    let mut rng = crate::seed::rng(weight_seed, "pretrain.trials", 0);
    let run = train_separate(&mut agent, env, &config, &pools.pretrain, &mut rng)?;
    Ok((agent.store.weights().clone(), run))
}

/// Frozen software evaluation of `weights` on the test pool.
pub fn inference(
    weights: &SeparateNetWeights,
    env: &Environment,
    pools: &PoolSet,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    let mut agent = make_agent(weights.clone(), WritePath::Exact, &HardwareConfig::default(), seed);
    evaluate_separate(&mut agent, env, &pools.test)
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub run: TrainingRun,
    pub test: Vec<TrialRecord>,
    pub agent: SeparateAgent,
}

/// Trains one approach on `env` and evaluates the result on the test pool.
/// Approaches without pre-training ignore `pretrained` and start from the
/// random weights of `weight_seed`.
pub fn train_approach(
    config: &TrainingConfig,
    pretrained: &SeparateNetWeights,
    env: &Environment,
    pools: &PoolSet,
    hw: &HardwareConfig,
    weight_seed: u64,
    device_seed: u64,
) -> Result<RetrainOutcome> {
    let approach = config.approach;
    let (initial, pool) = if approach.uses_pretraining() {
        (pretrained.clone(), &pools.retrain)
    } else {
        (initial_separate_weights(weight_seed), &pools.pretrain)
    };
    let mut agent = make_agent(initial, approach.write_path(), hw, device_seed);
    let mut rng = crate::seed::rng(device_seed, "retrain.trials", 0);
    let run = train_separate(&mut agent, env, config, pool, &mut rng)?;
    let test = evaluate_separate(&mut agent, env, &pools.test)?;
    Ok(RetrainOutcome { run, test, agent })
}

/// Records a replay buffer on `env` and pre-trains a shared network from it.
pub fn pretrain_limited(env: &Environment, replay: &ReplayConfig, seed: u64) -> Result<SharedNetWeights> {
    let mut rng = crate::seed::rng(seed, "replay", 0);
    let buffer = ReplayBuffer::generate(env, replay, &mut rng)?;
    pretrain_offpolicy(initial_shared_weights(seed), &buffer, env, replay, &mut rng)
}
