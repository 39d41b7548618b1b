//! Agent populations, experiment grids, metrics and result files.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, Scale};
use crate::device::VariationMode;
use crate::error::{Error, Result};
use crate::network::{SeparateNetWeights, SharedNetWeights};
use crate::pendulum::PoolSet;
use crate::training::procedure::{
    inference, initial_shared_weights, pretrain_limited, pretrain_separate, train_approach, RetrainOutcome,
};
use crate::training::{
    mean_steps, retrain_synchronous, Approach, Checkpoint, Environment, SyncConfig, TrainingConfig, TrainingRun,
    TrialRecord, WritePath,
};

/// Mass and length offsets, in percent, of the varied pendulums.
pub const VARIATION_LEVELS: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];

/// A Latin square over the levels: each mass and each length offset occurs
/// once.
pub const DESK_VARIATIONS: [(f64, f64); 5] = [(-10.0, -10.0), (-5.0, 0.0), (0.0, 10.0), (5.0, -5.0), (10.0, 5.0)];

pub const FULL_SEEDS_PER_VARIATION: usize = 100;
pub const DESK_SEEDS_PER_VARIATION: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentSpec {
    pub index: usize,
    /// Agents sharing a seed index share pre-trained weights.
    pub seed_index: usize,
    pub mass_pct: f64,
    pub length_pct: f64,
    pub weight_seed: u64,
    pub device_seed: u64,
}

pub fn build_population(scale: Scale, seed: u64) -> Vec<AgentSpec> {
    let (variations, seeds): (Vec<(f64, f64)>, usize) = match scale {
        Scale::Full => (
            VARIATION_LEVELS
                .iter()
                .flat_map(|&m| VARIATION_LEVELS.iter().map(move |&l| (m, l)))
                .collect(),
            FULL_SEEDS_PER_VARIATION,
        ),
        Scale::Desk => (DESK_VARIATIONS.to_vec(), DESK_SEEDS_PER_VARIATION),
    };
    (0..seeds)
        .flat_map(|s| variations.iter().map(move |&v| (s, v)))
        .enumerate()
        .map(|(index, (seed_index, (mass_pct, length_pct)))| AgentSpec {
            index,
            seed_index,
            mass_pct,
            length_pct,
            weight_seed: crate::seed::derive(seed, "agent.weights", seed_index as u64),
            device_seed: crate::seed::derive(seed, "agent.devices", index as u64),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub mean_t2f: f64,
    pub updates_per_weight: f64,
    /// `None` when no updates were made but t2f still changed.
    pub efficiency: Option<f64>,
}

/// Efficiency is the t2f gain over the pre-trained network per update.
pub fn compute_metrics(trials: &[TrialRecord], pretrained_t2f: f64, updates_per_weight: f64) -> Result<MetricsRecord> {
    if trials.is_empty() {
        return Err(Error::config("metrics need at least one test trial"));
    }
    let mean_t2f = mean_steps(trials);
    let gain = mean_t2f - pretrained_t2f;
    let efficiency = if updates_per_weight > 0.0 {
        Some(gain / updates_per_weight)
    } else if gain == 0.0 {
        Some(0.0)
    } else {
        None
    };
    Ok(MetricsRecord {
        mean_t2f,
        updates_per_weight,
        efficiency,
    })
}

pub fn format_efficiency(e: Option<f64>) -> String {
    e.map_or_else(|| "NA".to_string(), |v| format!("{v}"))
}

/// One re-training setting of the complete-information scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Setting {
    pub approach: Approach,
    pub c: usize,
    pub variable_dr: bool,
    pub variation: VariationMode,
}

impl Setting {
    pub fn new(approach: Approach, c: usize) -> Self {
        Self {
            approach,
            c,
            variable_dr: false,
            variation: VariationMode::Ideal,
        }
    }

    pub fn with_variable_dr(mut self, on: bool) -> Self {
        self.variable_dr = on;
        self
    }

    pub fn with_variation(mut self, v: VariationMode) -> Self {
        self.variation = v;
        self
    }
}

#[derive(Debug, Clone)]
pub struct AgentOutcome {
    pub spec: AgentSpec,
    pub run: TrainingRun,
    pub test: Vec<TrialRecord>,
    pub inference_t2f: f64,
    pub outcome: RetrainOutcome,
}

/// Shared state of a complete-information experiment: environment, pools,
/// population and the pre-trained weights of every seed index.
pub struct Experiment {
    pub config: Config,
    pub seed: u64,
    pub env: Environment,
    pub pools: PoolSet,
    pub population: Vec<AgentSpec>,
    pretrained: Vec<(SeparateNetWeights, TrainingRun)>,
    inference: Vec<Vec<TrialRecord>>,
}

impl Experiment {
    pub fn new(config: Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let pools = PoolSet::generate(seed, &config.initial_states)?;
        let pools = PoolSet {
            test: pools.test.truncated(config.harness.effective_test_states()),
            ..pools
        };
        let population = build_population(config.harness.scale, seed);
        Ok(Self {
            env: config.environment(),
            config,
            seed,
            pools,
            population,
            pretrained: Vec::new(),
            inference: Vec::new(),
        })
    }

    /// Restricts the population to its first `n` agents.
    pub fn limit_agents(&mut self, n: usize) {
        self.population.truncate(n);
    }

    pub fn agent_env(&self, spec: &AgentSpec) -> Environment {
        self.env
            .with_pendulum(self.env.pendulum.with_variation(spec.mass_pct, spec.length_pct))
    }

    fn seed_count(&self) -> usize {
        self.population.iter().map(|s| s.seed_index + 1).max().unwrap_or(0)
    }

    /// Software pre-training on the nominal plant, once per seed index,
    /// followed by frozen inference of every agent on its varied plant.
    pub fn pretrain(&mut self) -> Result<()> {
        if self.pretrained.len() < self.seed_count() {
            let weight_seeds: Vec<u64> = (0..self.seed_count())
                .map(|s| crate::seed::derive(self.seed, "agent.weights", s as u64))
                .collect();
            self.pretrained = weight_seeds
                .par_iter()
                .map(|&ws| {
                    pretrain_separate(
                        &self.env,
                        &self.pools,
                        self.config.training.pretrain_c,
                        Some(self.config.device.w_max()),
                        ws,
                    )
                })
                .collect::<Result<_>>()?;
        }
        self.refresh_inference()
    }

    /// Replaces the pre-trained weights, e.g. with loaded checkpoints.
    pub fn set_pretrained(&mut self, weights: Vec<SeparateNetWeights>) -> Result<()> {
        if weights.len() < self.seed_count() {
            return Err(Error::config(format!(
                "{} pre-trained weight sets for {} seeds",
                weights.len(),
                self.seed_count()
            )));
        }
        self.pretrained = weights
            .into_iter()
            .map(|w| {
                let empty = TrainingRun {
                    trials: Vec::new(),
                    successes: 0,
                    updates: 0,
                    gamma_trace: Vec::new(),
                    converged: true,
                };
                (w, empty)
            })
            .collect();
        self.refresh_inference()
    }

    fn refresh_inference(&mut self) -> Result<()> {
        self.inference = self
            .population
            .par_iter()
            .map(|spec| {
                inference(
                    &self.pretrained[spec.seed_index].0,
                    &self.agent_env(spec),
                    &self.pools,
                    crate::seed::derive(spec.device_seed, "inference", 0),
                )
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn pretrained(&self) -> &[(SeparateNetWeights, TrainingRun)] {
        &self.pretrained
    }

    /// Frozen test trials of each agent's pre-trained weights on its plant.
    pub fn inference_trials(&self) -> &[Vec<TrialRecord>] {
        &self.inference
    }

    pub fn inference_t2f(&self) -> f64 {
        let all: Vec<TrialRecord> = self.inference.iter().flatten().copied().collect();
        mean_steps(&all)
    }

    pub fn training_config(&self, setting: &Setting) -> TrainingConfig {
        let mut c = TrainingConfig::for_approach(setting.approach, setting.c).with_variable_dr(setting.variable_dr);
        c.rates = self.config.training.rates;
        c.max_trials = if setting.approach.uses_pretraining() {
            self.config.training.max_retrain_trials
        } else {
            self.config.training.max_pretrain_trials
        };
        c
    }

    /// Trains every agent of the population under `setting`.
    pub fn run_setting(&self, setting: &Setting) -> Result<Vec<AgentOutcome>> {
        if self.inference.len() != self.population.len() {
            return Err(Error::config("pre-training must run before re-training"));
        }
        let config = self.training_config(setting);
        let hw = self.config.hardware(setting.variation);
        self.population
            .par_iter()
            .map(|spec| {
                let outcome = train_approach(
                    &config,
                    &self.pretrained[spec.seed_index].0,
                    &self.agent_env(spec),
                    &self.pools,
                    &hw,
                    spec.weight_seed,
                    spec.device_seed,
                )?;
                Ok(AgentOutcome {
                    spec: *spec,
                    run: outcome.run.clone(),
                    test: outcome.test.clone(),
                    inference_t2f: mean_steps(&self.inference[spec.index]),
                    outcome,
                })
            })
            .collect()
    }

    /// Population metrics of a setting relative to frozen inference.
    pub fn summarize(&self, outcomes: &[AgentOutcome]) -> Result<MetricsRecord> {
        let trials: Vec<TrialRecord> = outcomes.iter().flat_map(|o| o.test.iter().copied()).collect();
        let updates = outcomes.iter().map(|o| o.run.updates as f64).sum::<f64>() / outcomes.len().max(1) as f64;
        let inference: Vec<TrialRecord> = outcomes
            .iter()
            .flat_map(|o| self.inference[o.spec.index].iter().copied())
            .collect();
        compute_metrics(&trials, mean_steps(&inference), updates)
    }
}

/// One aggregated row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub approach: String,
    pub c: String,
    pub variable_dr: bool,
    pub variation: String,
    pub agents: usize,
    pub updates_per_weight: String,
    pub mean_t2f: f64,
    pub pretrained_t2f: f64,
    pub efficiency: String,
}

impl ResultRow {
    pub fn new(setting: &Setting, agents: usize, m: &MetricsRecord, pretrained_t2f: f64) -> Self {
        Self {
            approach: setting.approach.name().to_string(),
            c: setting.c.to_string(),
            variable_dr: setting.variable_dr,
            variation: setting.variation.name().to_string(),
            agents,
            updates_per_weight: format!("{}", m.updates_per_weight),
            mean_t2f: m.mean_t2f,
            pretrained_t2f,
            efficiency: format_efficiency(m.efficiency),
        }
    }
}

/// Per-agent row written next to each aggregated table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRow {
    pub approach: String,
    pub c: usize,
    pub variable_dr: bool,
    pub variation: String,
    pub agent: usize,
    pub mass_pct: f64,
    pub length_pct: f64,
    pub trials: usize,
    pub successes: usize,
    pub converged: bool,
    pub updates: usize,
    pub mean_t2f: f64,
    pub inference_t2f: f64,
}

pub fn agent_rows(setting: &Setting, outcomes: &[AgentOutcome]) -> Vec<AgentRow> {
    outcomes
        .iter()
        .map(|o| AgentRow {
            approach: setting.approach.name().to_string(),
            c: setting.c,
            variable_dr: setting.variable_dr,
            variation: setting.variation.name().to_string(),
            agent: o.spec.index,
            mass_pct: o.spec.mass_pct,
            length_pct: o.spec.length_pct,
            trials: o.run.trials.len(),
            successes: o.run.successes,
            converged: o.run.converged,
            updates: o.run.updates,
            mean_t2f: mean_steps(&o.test),
            inference_t2f: o.inference_t2f,
        })
        .collect()
}

/// Per-trial row of a training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub agent: usize,
    pub trial: usize,
    pub steps_survived: usize,
    pub updates: usize,
    pub gamma: f64,
    pub success: bool,
}

pub fn trial_rows(agent: usize, run: &TrainingRun) -> Vec<TrialRow> {
    run.trials
        .iter()
        .zip(&run.gamma_trace)
        .enumerate()
        .map(|(trial, (t, g))| TrialRow {
            agent,
            trial,
            steps_survived: t.steps_survived,
            updates: t.updates_applied,
            gamma: *g,
            success: t.success,
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct TableOutput {
    pub rows: Vec<ResultRow>,
    pub agents: Vec<AgentRow>,
}

/// Settings of the updates/t2f comparison table. The Manhattan rows use the
/// variable discount rate.
pub fn table1_settings() -> Vec<Setting> {
    vec![
        Setting::new(Approach::Baseline, 50),
        Setting::new(Approach::BaselinePq, 50),
        Setting::new(Approach::Exact, 50),
        Setting::new(Approach::Exact, 100),
        Setting::new(Approach::ExactPq, 100),
        Setting::new(Approach::ExactPq, 400),
        Setting::new(Approach::ManhattanPq, 50).with_variable_dr(true),
        Setting::new(Approach::ManhattanPq, 100).with_variable_dr(true),
    ]
}

/// Settings of the Manhattan efficiency table.
pub fn table2_settings() -> Vec<Setting> {
    let mut out = Vec::new();
    for vdr in [true, false] {
        for v in [VariationMode::Ideal, VariationMode::Pct30, VariationMode::FullRange] {
            for c in [50, 100, 150] {
                out.push(
                    Setting::new(Approach::ManhattanPq, c)
                        .with_variable_dr(vdr)
                        .with_variation(v),
                );
            }
        }
    }
    out
}

/// Runs `settings` over the population; the first row is frozen inference.
pub fn run_settings(exp: &Experiment, settings: &[Setting]) -> Result<TableOutput> {
    let pretrained_t2f = exp.inference_t2f();
    let mut out = TableOutput::default();
    out.rows.push(ResultRow {
        approach: "inference".into(),
        c: "none".into(),
        variable_dr: false,
        variation: VariationMode::Ideal.name().into(),
        agents: exp.population.len(),
        updates_per_weight: "none".into(),
        mean_t2f: pretrained_t2f,
        pretrained_t2f,
        efficiency: "NA".into(),
    });
    for s in settings {
        let outcomes = exp.run_setting(s)?;
        let m = exp.summarize(&outcomes)?;
        out.rows.push(ResultRow::new(s, outcomes.len(), &m, pretrained_t2f));
        out.agents.extend(agent_rows(s, &outcomes));
    }
    Ok(out)
}

pub fn run_table1(exp: &Experiment) -> Result<TableOutput> {
    run_settings(exp, &table1_settings())
}

pub fn run_table2(exp: &Experiment) -> Result<TableOutput> {
    run_settings(exp, &table2_settings())
}

/// One checkpoint of one limited-information agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub init: String,
    pub learners: usize,
    pub agent: usize,
    pub samples: usize,
    pub updates: usize,
    pub mean_t2f: f64,
}

/// Mean over agents of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub init: String,
    pub learners: usize,
    pub samples: usize,
    pub updates: usize,
    pub mean_t2f: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Fig9Output {
    pub agents: Vec<CurveRow>,
    pub curves: Vec<CurvePoint>,
}

pub const FIG9_LEARNERS: [usize; 4] = [1, 2, 4, 8];

/// Limited-information runs from zero-knowledge (`pretrained = false`) or
/// off-policy pre-trained weights.
pub fn run_limited(
    config: &Config,
    seed: u64,
    agents: usize,
    learners: usize,
    pretrained: bool,
    write_path: WritePath,
    variation: VariationMode,
) -> Result<Vec<Vec<Checkpoint>>> {
    let env = config.environment();
    let pools = PoolSet::generate(seed, &config.initial_states)?;
    let sync = SyncConfig {
        learners,
        total_samples: config.sync.total_samples,
        checkpoint_every: config.sync.checkpoint_every,
        gamma: config.sync.gamma,
        rates: config.sync.rates,
        write_path,
        eval_states: config.harness.effective_test_states(),
    };
    let hw = config.hardware(variation);
    (0..agents)
        .into_par_iter()
        .map(|a| {
            let initial = limited_weights(config, seed, a, pretrained)?;
            let run = retrain_synchronous(
                initial,
                &env,
                &sync,
                &hw,
                &pools.retrain,
                &pools.test,
                limited_sync_seed(seed, a, learners),
            )?;
            Ok(run.checkpoints)
        })
        .collect()
}

/// Initial weights of limited-information agent `agent`: random, or
/// pre-trained off-policy from its own replay buffer.
pub fn limited_weights(config: &Config, seed: u64, agent: usize, pretrained: bool) -> Result<SharedNetWeights> {
    let agent_seed = crate::seed::derive(seed, "limited.agent", agent as u64);
    if pretrained {
        pretrain_limited(&config.environment(), &config.replay, agent_seed)
    } else {
        Ok(initial_shared_weights(agent_seed))
    }
}

pub fn limited_sync_seed(seed: u64, agent: usize, learners: usize) -> u64 {
    let agent_seed = crate::seed::derive(seed, "limited.agent", agent as u64);
    crate::seed::derive(agent_seed, "limited.sync", learners as u64)
}

pub fn curve_points(init: &str, learners: usize, runs: &[Vec<Checkpoint>]) -> Vec<CurvePoint> {
    average_curve(runs)
        .into_iter()
        .map(|c| CurvePoint {
            init: init.into(),
            learners,
            samples: c.samples,
            updates: c.updates,
            mean_t2f: c.mean_t2f,
        })
        .collect()
}

pub fn run_fig9(config: &Config, seed: u64, agents: usize, learners: &[usize]) -> Result<Fig9Output> {
    let mut out = Fig9Output::default();
    for pretrained in [false, true] {
        let init = if pretrained { "pre" } else { "zero" };
        for &k in learners {
            let runs = run_limited(
                config,
                seed,
                agents,
                k,
                pretrained,
                WritePath::Exact,
                VariationMode::Ideal,
            )?;
            for (a, cps) in runs.iter().enumerate() {
                out.agents.extend(cps.iter().map(|c| CurveRow {
                    init: init.into(),
                    learners: k,
                    agent: a,
                    samples: c.samples,
                    updates: c.updates,
                    mean_t2f: c.mean_t2f,
                }));
            }
            out.curves.extend(curve_points(init, k, &runs));
        }
    }
    Ok(out)
}

/// Averages checkpoint curves that share a sampling schedule.
pub fn average_curve(runs: &[Vec<Checkpoint>]) -> Vec<Checkpoint> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(i, c)| Checkpoint {
            samples: c.samples,
            updates: c.updates,
            mean_t2f: runs.iter().map(|r| r[i].mean_t2f).sum::<f64>() / runs.len() as f64,
        })
        .collect()
}

/// Updates needed before the curve first reaches `target`, if it does.
pub fn updates_to_reach(curve: &[Checkpoint], target: f64) -> Option<usize> {
    curve.iter().find(|c| c.mean_t2f >= target).map(|c| c.updates)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `manifest.txt`: one `key = value` line per entry.
pub fn write_manifest(dir: &Path, config: &Config, entries: &[(&str, String)]) -> Result<()> {
    let mut f = std::fs::File::create(dir.join("manifest.txt"))?;
    writeln!(f, "tool = memristor-rl")?;
    writeln!(f, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "config_version = {}", config.version)?;
    writeln!(f, "config_sha256 = {}", config.hash()?)?;
    writeln!(f, "scale = {}", config.harness.scale)?;
    writeln!(
        f,
        "population = variations x seeds; agents sharing a seed share pre-trained weights"
    )?;
    writeln!(f, "updates_counted = re-training only")?;
    for (k, v) in entries {
        writeln!(f, "{k} = {v}")?;
    }
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;
    Ok(())
}
