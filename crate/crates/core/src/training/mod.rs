//! Training approaches and their shared plumbing.
//!
//! Complete-information runs train separate evaluation/action networks one
//! trial at a time ([`complete`]). Limited-information runs pre-train a
//! shared network off-policy from a replay buffer ([`replay`]) and re-train
//! it with synchronous actor-learners ([`synchronous`]). [`procedure`] wires
//! both into the two-phase pre-train / re-train flow.

pub mod complete;
pub mod procedure;
pub mod replay;
pub mod synchronous;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::{
    adc_quantize, sample_action, CrossbarNet, DeviceParams, ProgramReport, RngState, VariationMode, ADC_BITS,
};
use crate::error::{Error, Result};
use crate::network::{LearningRates, WeightLayout};
use crate::pendulum::Action;

pub use complete::{
    adjust_discount_rate, evaluate_separate, mean_steps, run_trial, train_separate, DiscountState, Environment,
    SeparateAgent, TrainingRun, TrialParams,
};
pub use replay::{pretrain_offpolicy, Experience, ReplayBuffer, ReplayConfig};
pub use synchronous::{evaluate_shared, global_update, retrain_synchronous, Checkpoint, SyncConfig, SyncRun};

/// How weights are written during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WritePath {
    /// Software arithmetic on 64-bit floats.
    Exact,
    /// Fixed pulses following the sign of each update.
    Manhattan,
    /// Pulses whose conductance change is proportional to the update.
    VariableAmplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Baseline,
    BaselinePq,
    Exact,
    ExactPq,
    Manhattan,
    ManhattanPq,
    VariableAmplitude,
}

impl Approach {
    pub const ALL: [Approach; 7] = [
        Approach::Baseline,
        Approach::BaselinePq,
        Approach::Exact,
        Approach::ExactPq,
        Approach::Manhattan,
        Approach::ManhattanPq,
        Approach::VariableAmplitude,
    ];

    /// Whether training starts from pre-trained weights.
    pub fn uses_pretraining(self) -> bool {
        !matches!(self, Approach::Baseline | Approach::BaselinePq)
    }

    pub fn is_pq(self) -> bool {
        matches!(self, Approach::BaselinePq | Approach::ExactPq | Approach::ManhattanPq)
    }

    pub fn write_path(self) -> WritePath {
        match self {
            Approach::Baseline | Approach::BaselinePq | Approach::Exact | Approach::ExactPq => WritePath::Exact,
            Approach::Manhattan | Approach::ManhattanPq => WritePath::Manhattan,
            Approach::VariableAmplitude => WritePath::VariableAmplitude,
        }
    }

    pub fn default_gamma(self) -> f64 {
        match self {
            Approach::Baseline | Approach::BaselinePq => 0.85,
            Approach::Exact | Approach::ExactPq | Approach::VariableAmplitude => 0.9,
            Approach::Manhattan | Approach::ManhattanPq => 0.75,
        }
    }

    /// `|p − q|` must exceed this for a PQ approach to update.
    pub fn default_pq_threshold(self) -> Option<f64> {
        match self {
            Approach::BaselinePq | Approach::ExactPq => Some(0.9),
            Approach::ManhattanPq => Some(0.95),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Approach::Baseline => "baseline",
            Approach::BaselinePq => "baseline_pq",
            Approach::Exact => "exact",
            Approach::ExactPq => "exact_pq",
            Approach::Manhattan => "manhattan",
            Approach::ManhattanPq => "manhattan_pq",
            Approach::VariableAmplitude => "variable_amplitude",
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| Error::config(format!("unknown approach `{s}`")))
    }
}

/// Settings of one complete-information training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub approach: Approach,
    pub gamma: f64,
    pub rates: LearningRates,
    pub pq_threshold: Option<f64>,
    /// Training stops after this many successful trials.
    pub stop_c: usize,
    pub variable_dr: bool,
    pub max_trials: usize,
    /// Software updates clamp weights to `±limit`.
    pub weight_limit: Option<f64>,
}

/// Trial cap when training starts from scratch.
pub const MAX_PRETRAIN_TRIALS: usize = 7000;
/// Trial cap when training starts from pre-trained weights.
pub const MAX_RETRAIN_TRIALS: usize = 2000;

impl TrainingConfig {
    pub fn for_approach(approach: Approach, stop_c: usize) -> Self {
        Self {
            approach,
            gamma: approach.default_gamma(),
            rates: LearningRates::default(),
            pq_threshold: approach.default_pq_threshold(),
            stop_c,
            variable_dr: false,
            max_trials: if approach.uses_pretraining() {
                MAX_RETRAIN_TRIALS
            } else {
                MAX_PRETRAIN_TRIALS
            },
            weight_limit: None,
        }
    }

    pub fn with_variable_dr(mut self, on: bool) -> Self {
        self.variable_dr = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        self.rates.validate()?;
        if self.stop_c == 0 || self.max_trials == 0 {
            return Err(Error::config("stop criterion and trial cap must be positive"));
        }
        if self.weight_limit.is_some_and(|l| l.is_nan() || l <= 0.0) {
            return Err(Error::config("weight limit must be positive"));
        }
        if let Some(t) = self.pq_threshold {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::config("pq threshold must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// PQ gating: update only when the sampled action was unlikely under the
/// current policy.
pub fn pq_gate(p: f64, q: f64, threshold: f64) -> bool {
    (p - q).abs() > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Test,
}

/// Outcome of one balancing trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub steps_survived: usize,
    pub updates_applied: usize,
    pub success: bool,
    /// The physics integration produced a non-finite state.
    pub diverged: bool,
}

/// Hardware read/write settings shared by the crossbar-backed approaches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub device: DeviceParams,
    pub variation: VariationMode,
    /// Full scale of the value-output converter.
    pub value_full_scale: f64,
    pub adc_bits: u32,
    /// Learning-rate multiplier of the variable-amplitude scheme.
    pub eta: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            device: DeviceParams::default(),
            variation: VariationMode::Ideal,
            value_full_scale: 2.0,
            adc_bits: ADC_BITS,
            eta: 1.0,
        }
    }
}

/// Network weights either as plain numbers or programmed into crossbars.
#[derive(Debug, Clone)]
pub enum WeightStore<W: WeightLayout> {
    Software(W),
    Crossbar {
        net: Box<CrossbarNet<W>>,
        cache: W,
        path: WritePath,
        eta: f64,
        report: ProgramReport,
    },
}

impl<W: WeightLayout> WeightStore<W> {
    /// Builds a store for `path`, programming `initial` into fresh crossbars
    /// when the path is a hardware one.
    pub fn new<R: Rng + ?Sized>(initial: W, path: WritePath, hw: &HardwareConfig, rng: &mut R) -> Self {
        match path {
            WritePath::Exact => WeightStore::Software(initial),
            WritePath::Manhattan | WritePath::VariableAmplitude => {
                let mut net = CrossbarNet::<W>::new(hw.device, hw.variation, rng);
                net.write_exact(&initial);
                let cache = net.read();
                WeightStore::Crossbar {
                    net: Box::new(net),
                    cache,
                    path,
                    eta: hw.eta,
                    report: ProgramReport::default(),
                }
            }
        }
    }

    pub fn weights(&self) -> &W {
        match self {
            WeightStore::Software(w) => w,
            WeightStore::Crossbar { cache, .. } => cache,
        }
    }

    pub fn is_hardware(&self) -> bool {
        matches!(self, WeightStore::Crossbar { .. })
    }

    pub fn crossbar(&self) -> Option<&CrossbarNet<W>> {
        match self {
            WeightStore::Software(_) => None,
            WeightStore::Crossbar { net, .. } => Some(net),
        }
    }

    /// Accumulated programming statistics (hardware stores only).
    pub fn report(&self) -> ProgramReport {
        match self {
            WeightStore::Software(_) => ProgramReport::default(),
            WeightStore::Crossbar { report, .. } => *report,
        }
    }

    /// Adds `delta`; software weights are then clamped to `±limit`.
    pub fn apply(&mut self, delta: &W, limit: Option<f64>) -> Result<()> {
        match self {
            WeightStore::Software(w) => {
                *w = match limit {
                    Some(l) => w.zip_with(delta, |a, b| (a + b).clamp(-l, l)),
                    None => w.add(delta),
                };
            }
            WeightStore::Crossbar {
                net,
                cache,
                path,
                eta,
                report,
            } => {
                match path {
                    WritePath::Manhattan => net.manhattan_update(delta),
                    WritePath::VariableAmplitude => *report += net.variable_amplitude_update(delta, *eta)?,
                    WritePath::Exact => {
                        let target = cache.add(delta);
                        net.write_exact(&target);
                    }
                }
                *cache = net.read();
            }
        }
        Ok(())
    }
}

/// Source of action decisions: a software float comparison or the 8-bit
/// hardware comparator fed by the LFSR/CASR generator.
#[derive(Debug, Clone)]
pub enum ActionSampler {
    Software(ChaCha8Rng),
    Hardware(RngState),
}

impl ActionSampler {
    pub fn for_path(path: WritePath, seed: u64) -> Self {
        match path {
            WritePath::Exact => ActionSampler::Software(crate::seed::rng(seed, "actions", 0)),
            _ => ActionSampler::Hardware(RngState::from_seed(seed)),
        }
    }

    pub fn sample(&mut self, p: f64) -> Action {
        match self {
            ActionSampler::Software(rng) => Action::from_bit(rng.random::<f64>() < p),
            ActionSampler::Hardware(state) => {
                let (a, next) = sample_action(p, *state);
                *state = next;
                a
            }
        }
    }
}

/// Output read-out: identity in software, 8-bit conversion on hardware.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    quantize: Option<(f64, u32)>,
}

impl Readout {
    pub fn software() -> Self {
        Self { quantize: None }
    }

    pub fn for_path(path: WritePath, hw: &HardwareConfig) -> Self {
        match path {
            WritePath::Exact => Self::software(),
            _ => Self {
                quantize: Some((hw.value_full_scale, hw.adc_bits)),
            },
        }
    }

    pub fn value(&self, v: f64) -> f64 {
        match self.quantize {
            None => v,
            Some((fs, bits)) => adc_quantize(v, fs, bits),
        }
    }

    /// Probabilities are read on a `[0, 1]` converter of the same resolution.
    pub fn prob(&self, p: f64) -> f64 {
        match self.quantize {
            None => p,
            Some((_, bits)) => {
                let levels = ((1u64 << bits) - 1) as f64;
                (p * levels).round() / levels
            }
        }
    }
}
