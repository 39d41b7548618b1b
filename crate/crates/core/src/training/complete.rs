use serde::{Deserialize, Serialize};

use super::{ActionSampler, Mode, Readout, TrainingConfig, TrialRecord, WeightStore};
use crate::error::Result;
use crate::network::{action_forward, eval_forward, separate_net_gradients, td_error, SeparateNetWeights};
use crate::pendulum::{
    normalize_state, step, NormalizationBounds, PendulumConfig, PendulumState, StatePool, MAX_TRIAL_STEPS,
};

/// Plant plus the input scaling the networks see.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    pub pendulum: PendulumConfig,
    pub bounds: NormalizationBounds,
}

impl Environment {
    pub fn with_pendulum(&self, pendulum: PendulumConfig) -> Self {
        Self {
            pendulum,
            bounds: self.bounds,
        }
    }
}

/// A separate-network agent: weights, action source and output read-out.
#[derive(Debug, Clone)]
pub struct SeparateAgent {
    pub store: WeightStore<SeparateNetWeights>,
    pub sampler: ActionSampler,
    pub readout: Readout,
}

/// Learning settings consumed by a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialParams<'a> {
    pub gamma: f64,
    pub config: &'a TrainingConfig,
}

/// Runs one trial from `initial` until failure or the step cap. In training
/// mode the weights are updated after every step the gate lets through.
pub fn run_trial(
    agent: &mut SeparateAgent,
    env: &Environment,
    params: TrialParams<'_>,
    mode: Mode,
    initial: PendulumState,
) -> Result<TrialRecord> {
    let mut s = initial;
    let mut steps = 0;
    let mut updates = 0;
    let mut diverged = false;
    while steps < MAX_TRIAL_STEPS {
        let w = agent.store.weights();
        let x = normalize_state(&s, &env.bounds);
        let mut eval = eval_forward(w, &x);
        let mut act = action_forward(w, &x);
        eval.value = agent.readout.value(eval.value);
        act.prob = agent.readout.prob(act.prob);
        let action = agent.sampler.sample(act.prob);
        let out = match step(s, action, &env.pendulum) {
            Ok(o) => o,
            Err(_) => {
                diverged = true;
                steps += 1;
                break;
            }
        };
        steps += 1;
        if mode == Mode::Train {
            let v_next = if out.failed {
                0.0
            } else {
                let xn = normalize_state(&out.state, &env.bounds);
                agent.readout.value(eval_forward(w, &xn).value)
            };
            let delta = td_error(out.reward, v_next, eval.value, params.gamma, out.failed);
            let q = action.q();
            let gated = params
                .config
                .pq_threshold
                .is_none_or(|t| super::pq_gate(act.prob, q, t));
            if gated {
                let dw = separate_net_gradients(w, &eval, &act, delta, q, &params.config.rates);
                agent.store.apply(&dw, params.config.weight_limit)?;
                updates += 1;
            }
        }
        s = out.state;
        if out.failed {
            break;
        }
    }
    Ok(TrialRecord {
        steps_survived: steps,
        updates_applied: updates,
        success: steps >= MAX_TRIAL_STEPS && !diverged,
        diverged,
    })
}

/// Hill-climbing state of the variable discount rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountState {
    /// `+1` or `−1`; `0` before the first adjustment.
    pub direction: f64,
    pub last_mean_t2f: Option<f64>,
}

impl Default for DiscountState {
    fn default() -> Self {
        Self {
            direction: 0.0,
            last_mean_t2f: None,
        }
    }
}

pub const DR_WINDOW: usize = 50;
pub const DR_STEP: f64 = 0.02;
pub const DR_SUCCESS_THRESHOLD: f64 = 0.35;
pub const DR_MIN: f64 = 0.5;
pub const DR_MAX: f64 = 0.99;

/// Adjusts γ after a window of trials. Nothing changes while the success
/// rate is at least 35 %. Otherwise γ moves by 0.02, keeping the previous
/// direction if the window's mean time-to-failure improved on the window of
/// the previous adjustment and reversing it if not. The first move is up.
pub fn adjust_discount_rate(history: &[TrialRecord], gamma: f64, state: DiscountState) -> (f64, DiscountState) {
    if history.is_empty() {
        return (gamma, state);
    }
    let n = history.len() as f64;
    let rate = history.iter().filter(|t| t.success).count() as f64 / n;
    if rate >= DR_SUCCESS_THRESHOLD {
        return (gamma, state);
    }
    let mean = history.iter().map(|t| t.steps_survived as f64).sum::<f64>() / n;
    let direction = match state.last_mean_t2f {
        None => 1.0,
        Some(prev) if mean > prev => state.direction,
        Some(_) => -state.direction,
    };
    let next = (gamma + direction * DR_STEP).clamp(DR_MIN, DR_MAX);
    (
        next,
        DiscountState {
            direction,
            last_mean_t2f: Some(mean),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub trials: Vec<TrialRecord>,
    pub successes: usize,
    /// Updates applied to each weight over the whole run.
    pub updates: usize,
    /// γ in force at the start of every trial.
    pub gamma_trace: Vec<f64>,
    /// The stop criterion was met before the trial cap.
    pub converged: bool,
}

impl TrainingRun {
    pub fn total_steps(&self) -> usize {
        self.trials.iter().map(|t| t.steps_survived).sum()
    }
}

/// Trains until `config.stop_c` successful trials or `config.max_trials`,
/// drawing initial states from `pool`.
pub fn train_separate<R: rand::Rng + ?Sized>(
    agent: &mut SeparateAgent,
    env: &Environment,
    config: &TrainingConfig,
    pool: &StatePool,
    rng: &mut R,
) -> Result<TrainingRun> {
    config.validate()?;
    let mut gamma = config.gamma;
    let mut dr = DiscountState::default();
    let mut run = TrainingRun {
        trials: Vec::new(),
        successes: 0,
        updates: 0,
        gamma_trace: Vec::new(),
        converged: false,
    };
    while run.trials.len() < config.max_trials {
        let initial = pool.sample(rng);
        run.gamma_trace.push(gamma);
        let record = run_trial(agent, env, TrialParams { gamma, config }, Mode::Train, initial)?;
        run.updates += record.updates_applied;
        run.successes += usize::from(record.success);
        run.trials.push(record);
        if run.successes >= config.stop_c {
            run.converged = true;
            break;
        }
        if config.variable_dr && run.trials.len().is_multiple_of(DR_WINDOW) {
            let window = &run.trials[run.trials.len() - DR_WINDOW..];
            (gamma, dr) = adjust_discount_rate(window, gamma, dr);
        }
    }
    Ok(run)
}

/// Runs one frozen test trial per state in `pool`.
pub fn evaluate_separate(agent: &mut SeparateAgent, env: &Environment, pool: &StatePool) -> Result<Vec<TrialRecord>> {
    let config = TrainingConfig::for_approach(super::Approach::Exact, 1);
    pool.states()
        .iter()
        .map(|s| {
            run_trial(
                agent,
                env,
                TrialParams {
                    gamma: config.gamma,
                    config: &config,
                },
                Mode::Test,
                *s,
            )
        })
        .collect()
}

pub fn mean_steps(records: &[TrialRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.steps_survived as f64).sum::<f64>() / records.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{Approach, HardwareConfig, WritePath};

    fn record(steps: usize) -> TrialRecord {
        TrialRecord {
            steps_survived: steps,
            updates_applied: 0,
            success: steps >= MAX_TRIAL_STEPS,
            diverged: false,
        }
    }

    fn agent(path: WritePath, seed: u64) -> SeparateAgent {
        let mut rng = crate::seed::rng(seed, "w", 0);
        let w = SeparateNetWeights::random(&mut rng);
        let hw = HardwareConfig::default();
        SeparateAgent {
            store: WeightStore::new(w, path, &hw, &mut rng),
            sampler: ActionSampler::for_path(path, seed),
            readout: Readout::for_path(path, &hw),
        }
    }

    #[test]
    fn first_adjustment_raises_gamma() {
        let h = vec![record(100); 50];
        let (g, s) = adjust_discount_rate(&h, 0.75, DiscountState::default());
        assert!((g - 0.77).abs() < 1e-12);
        assert_eq!(s.direction, 1.0);
    }

    #[test]
    fn worse_window_reverses_direction() {
        let first = vec![record(200); 50];
        let (g, s) = adjust_discount_rate(&first, 0.75, DiscountState::default());
        let (g2, s2) = adjust_discount_rate(&vec![record(100); 50], g, s);
        assert!((g2 - 0.75).abs() < 1e-12);
        assert_eq!(s2.direction, -1.0);
        let (g3, _) = adjust_discount_rate(&vec![record(150); 50], g2, s2);
        assert!((g3 - 0.73).abs() < 1e-12);
    }

    #[test]
    fn successful_window_leaves_gamma() {
        let mut h = vec![record(100); 30];
        h.extend(vec![record(MAX_TRIAL_STEPS); 20]);
        let (g, s) = adjust_discount_rate(&h, 0.75, DiscountState::default());
        assert_eq!(g, 0.75);
        assert_eq!(s, DiscountState::default());
    }

    #[test]
    fn gamma_clamped_at_bounds() {
        let h = vec![record(10); 50];
        let (g, _) = adjust_discount_rate(&h, 0.99, DiscountState::default());
        assert_eq!(g, 0.99);
        let s = DiscountState {
            direction: 1.0,
            last_mean_t2f: Some(1000.0),
        };
        let (g, _) = adjust_discount_rate(&h, 0.5, s);
        assert_eq!(g, 0.5);
    }

    #[test]
    fn exact_training_updates_every_step() {
        let env = Environment::default();
        let config = TrainingConfig::for_approach(Approach::Exact, 1);
        let mut a = agent(WritePath::Exact, 3);
        let s0 = PendulumState {
            alpha: 0.05,
            ..Default::default()
        };
        let r = run_trial(
            &mut a,
            &env,
            TrialParams {
                gamma: 0.9,
                config: &config,
            },
            Mode::Train,
            s0,
        )
        .unwrap();
        assert_eq!(r.updates_applied, r.steps_survived);
    }

    #[test]
    fn test_mode_leaves_weights_untouched() {
        let env = Environment::default();
        let config = TrainingConfig::for_approach(Approach::Exact, 1);
        for path in [WritePath::Exact, WritePath::Manhattan] {
            let mut a = agent(path, 4);
            let before = a.store.weights().clone();
            let r = run_trial(
                &mut a,
                &env,
                TrialParams {
                    gamma: 0.9,
                    config: &config,
                },
                Mode::Test,
                PendulumState::default(),
            )
            .unwrap();
            assert_eq!(r.updates_applied, 0);
            assert_eq!(a.store.weights(), &before);
        }
    }

    #[test]
    fn pq_gate_limits_updates() {
        let env = Environment::default();
        let config = TrainingConfig::for_approach(Approach::ManhattanPq, 1);
        let mut a = agent(WritePath::Manhattan, 5);
        let r = run_trial(
            &mut a,
            &env,
            TrialParams {
                gamma: 0.75,
                config: &config,
            },
            Mode::Train,
            PendulumState::default(),
        )
        .unwrap();
        assert!(r.updates_applied < r.steps_survived);
    }
}
