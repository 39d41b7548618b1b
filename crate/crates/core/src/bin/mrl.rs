use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use memristor_rl::checkpoint;
use memristor_rl::config::{Config, Scale};
use memristor_rl::device::VariationMode;
use memristor_rl::error::{Error, Result};
use memristor_rl::harness::{
    self, limited_weights, run_fig9, run_settings, table1_settings, table2_settings, trial_rows, write_csv,
    write_manifest, CurveRow, Experiment, Setting, FIG9_LEARNERS,
};
use memristor_rl::network::{SeparateNetWeights, SharedNetWeights};
use memristor_rl::pendulum::PoolSet;
use memristor_rl::training::procedure::make_agent;
use memristor_rl::training::{
    evaluate_separate, evaluate_shared, mean_steps, retrain_synchronous, ActionSampler, Approach, Readout, SyncConfig,
    TrialRecord,
};

#[derive(Parser)]
#[command(
    name = "mrl",
    version,
    about = "Actor-critic training on simulated memristive crossbars"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Software pre-training of the population (or of limited-information agents).
    Pretrain(Common),
    /// Re-training of pre-trained agents with one approach.
    Retrain(RetrainArgs),
    /// Frozen evaluation of a weight checkpoint on the test pool.
    Test(TestArgs),
    /// Runs a whole results table or learning-curve family.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scenario {
    Complete,
    Limited,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Table {
    Table1,
    Table2,
    Fig9,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "complete")]
    scenario: Scenario,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// TOML config; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Restrict the population to its first N agents.
    #[arg(long)]
    agents: Option<usize>,
    /// Overrides `harness.scale`.
    #[arg(long)]
    scale: Option<Scale>,
}

#[derive(Args)]
struct RetrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "manhattan_pq")]
    approach: Approach,
    #[arg(long, default_value = "ideal")]
    variation: VariationMode,
    /// Successful trials that end re-training.
    #[arg(long, default_value_t = 50)]
    c: usize,
    #[arg(long)]
    variable_dr: bool,
    /// Directory written by `pretrain`; pre-training runs inline when absent.
    #[arg(long)]
    pretrained: Option<PathBuf>,
    /// Actor-learners (limited scenario).
    #[arg(long, default_value_t = 1)]
    learners: usize,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: Common,
    /// Weight checkpoint to evaluate.
    #[arg(long)]
    weights: PathBuf,
    /// Write path whose read-out and action source are simulated.
    #[arg(long, default_value = "exact")]
    approach: Approach,
    #[arg(long, default_value = "ideal")]
    variation: VariationMode,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "table1")]
    table: Table,
    /// Replaces the table's variation column.
    #[arg(long)]
    variation: Option<VariationMode>,
    /// Pre-trained weights as written by `pretrain`.
    #[arg(long)]
    pretrained: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain(a) => pretrain(&a),
        Command::Retrain(a) => retrain(&a),
        Command::Test(a) => test(&a),
        Command::Sweep(a) => sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mrl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(c: &Common) -> Result<Config> {
    let mut config = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = c.scale {
        config.harness.scale = s;
    }
    if let Some(n) = c.agents {
        config.harness.limited_agents = n;
    }
    config.validate()?;
    Ok(config)
}

fn prepare_out(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out)?;
    Ok(&c.out)
}

fn experiment(c: &Common, config: &Config) -> Result<Experiment> {
    let mut exp = Experiment::new(config.clone(), c.seed)?;
    if let Some(n) = c.agents {
        exp.limit_agents(n);
    }
    Ok(exp)
}

fn seed_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("seed_{index:03}.weights"))
}

fn agent_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("agent_{index:03}.weights"))
}

fn load_pretrained(exp: &mut Experiment, dir: &Path) -> Result<()> {
    let seeds = exp.population.iter().map(|s| s.seed_index + 1).max().unwrap_or(0);
    let weights = (0..seeds)
        .map(|i| checkpoint::load::<SeparateNetWeights>(&seed_file(dir, i)))
        .collect::<Result<Vec<_>>>()?;
    exp.set_pretrained(weights)
}

#[derive(Serialize)]
struct PretrainRow {
    seed_index: usize,
    trials: usize,
    successes: usize,
    converged: bool,
    updates: usize,
}

#[derive(Serialize)]
struct InferenceRow {
    agent: usize,
    seed_index: usize,
    mass_pct: f64,
    length_pct: f64,
    mean_t2f: f64,
}

fn pretrain(a: &Common) -> Result<()> {
    let config = load_config(a)?;
    let out = prepare_out(a)?;
    let dir = out.join("pretrained");
    fs::create_dir_all(&dir)?;
    match a.scenario {
        Scenario::Complete => {
            let mut exp = experiment(a, &config)?;
            exp.pretrain()?;
            let mut rows = Vec::new();
            let mut trials = Vec::new();
            for (i, (w, run)) in exp.pretrained().iter().enumerate() {
                checkpoint::save(w, &seed_file(&dir, i))?;
                rows.push(PretrainRow {
                    seed_index: i,
                    trials: run.trials.len(),
                    successes: run.successes,
                    converged: run.converged,
                    updates: run.updates,
                });
                trials.extend(trial_rows(i, run));
            }
            write_csv(&out.join("pretrain.csv"), &rows)?;
            write_csv(&out.join("pretrain_trials.csv"), &trials)?;
            let inference: Vec<InferenceRow> = exp
                .population
                .iter()
                .zip(exp.inference_trials())
                .map(|(s, t)| InferenceRow {
                    agent: s.index,
                    seed_index: s.seed_index,
                    mass_pct: s.mass_pct,
                    length_pct: s.length_pct,
                    mean_t2f: mean_steps(t),
                })
                .collect();
            write_csv(&out.join("inference.csv"), &inference)?;
            write_manifest(
                out,
                &config,
                &[
                    ("verb", "pretrain".into()),
                    ("scenario", "complete".into()),
                    ("seed", a.seed.to_string()),
                    ("agents", exp.population.len().to_string()),
                    ("inference_t2f", exp.inference_t2f().to_string()),
                ],
            )?;
            println!(
                "inference t2f {:.1} over {} agents",
                exp.inference_t2f(),
                exp.population.len()
            );
        }
        Scenario::Limited => {
            let n = config.harness.limited_agents;
            let weights = (0..n)
                .map(|i| limited_weights(&config, a.seed, i, true))
                .collect::<Result<Vec<_>>>()?;
            for (i, w) in weights.iter().enumerate() {
                checkpoint::save(w, &agent_file(&dir, i))?;
            }
            write_manifest(
                out,
                &config,
                &[
                    ("verb", "pretrain".into()),
                    ("scenario", "limited".into()),
                    ("seed", a.seed.to_string()),
                    ("agents", n.to_string()),
                ],
            )?;
            println!("pre-trained {n} limited-information agents");
        }
    }
    Ok(())
}

fn retrain(a: &RetrainArgs) -> Result<()> {
    let config = load_config(&a.common)?;
    let out = prepare_out(&a.common)?;
    match a.common.scenario {
        Scenario::Complete => retrain_complete(a, &config, out),
        Scenario::Limited => retrain_limited(a, &config, out),
    }
}

fn retrain_complete(a: &RetrainArgs, config: &Config, out: &Path) -> Result<()> {
    let mut exp = experiment(&a.common, config)?;
    match &a.pretrained {
        Some(dir) => load_pretrained(&mut exp, dir)?,
        None => exp.pretrain()?,
    }
    let setting = Setting::new(a.approach, a.c)
        .with_variable_dr(a.variable_dr)
        .with_variation(a.variation);
    let outcomes = exp.run_setting(&setting)?;
    let weights_dir = out.join("weights");
    fs::create_dir_all(&weights_dir)?;
    let xbar_dir = out.join("crossbars");
    let mut trials = Vec::new();
    for o in &outcomes {
        checkpoint::save(o.outcome.agent.store.weights(), &agent_file(&weights_dir, o.spec.index))?;
        if let Some(net) = o.outcome.agent.store.crossbar() {
            fs::create_dir_all(&xbar_dir)?;
            let mut f = fs::File::create(xbar_dir.join(format!("agent_{:03}.txt", o.spec.index)))?;
            net.dump(&mut f)?;
        }
        trials.extend(trial_rows(o.spec.index, &o.run));
    }
    let table = harness::TableOutput {
        rows: run_settings_rows(&exp, &setting, &outcomes)?,
        agents: harness::agent_rows(&setting, &outcomes),
    };
    write_csv(&out.join("results.csv"), &table.rows)?;
    write_csv(&out.join("agents.csv"), &table.agents)?;
    write_csv(&out.join("trials.csv"), &trials)?;
    write_manifest(
        out,
        config,
        &[
            ("verb", "retrain".into()),
            ("scenario", "complete".into()),
            ("seed", a.common.seed.to_string()),
            ("approach", a.approach.name().into()),
            ("variation", a.variation.name().into()),
            ("c", a.c.to_string()),
            ("variable_dr", a.variable_dr.to_string()),
            ("agents", outcomes.len().to_string()),
        ],
    )?;
    for r in &table.rows {
        println!(
            "{} t2f {:.1} updates/weight {} efficiency {}",
            r.approach, r.mean_t2f, r.updates_per_weight, r.efficiency
        );
    }
    Ok(())
}

fn run_settings_rows(
    exp: &Experiment,
    setting: &Setting,
    outcomes: &[harness::AgentOutcome],
) -> Result<Vec<harness::ResultRow>> {
    let m = exp.summarize(outcomes)?;
    Ok(vec![harness::ResultRow::new(
        setting,
        outcomes.len(),
        &m,
        exp.inference_t2f(),
    )])
}

fn write_curves(out: &Path, rows: &[CurveRow], curves: &[harness::CurvePoint]) -> Result<()> {
    write_csv(&out.join("checkpoints.csv"), rows)?;
    write_csv(&out.join("curves.csv"), curves)
}

fn retrain_limited(a: &RetrainArgs, config: &Config, out: &Path) -> Result<()> {
    let path = a.approach.write_path();
    let n = config.harness.limited_agents;
    let env = config.environment();
    let pools = PoolSet::generate(a.common.seed, &config.initial_states)?;
    let sync = SyncConfig {
        learners: a.learners,
        total_samples: config.sync.total_samples,
        checkpoint_every: config.sync.checkpoint_every,
        gamma: config.sync.gamma,
        rates: config.sync.rates,
        write_path: path,
        eval_states: config.harness.effective_test_states(),
    };
    let hw = config.hardware(a.variation);
    let weights_dir = out.join("weights");
    fs::create_dir_all(&weights_dir)?;
    let init = if a.pretrained.is_some() { "pre" } else { "zero" };
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for i in 0..n {
        let initial = match &a.pretrained {
            Some(dir) => checkpoint::load::<SharedNetWeights>(&agent_file(dir, i))?,
            None => limited_weights(config, a.common.seed, i, false)?,
        };
        let run = retrain_synchronous(
            initial,
            &env,
            &sync,
            &hw,
            &pools.retrain,
            &pools.test,
            harness::limited_sync_seed(a.common.seed, i, a.learners),
        )?;
        checkpoint::save(&run.weights, &agent_file(&weights_dir, i))?;
        if let Some(net) = run.stores[0].crossbar() {
            let dir = out.join("crossbars");
            fs::create_dir_all(&dir)?;
            net.dump(&mut fs::File::create(dir.join(format!("agent_{i:03}.txt")))?)?;
        }
        rows.extend(run.checkpoints.iter().map(|c| CurveRow {
            init: init.into(),
            learners: a.learners,
            agent: i,
            samples: c.samples,
            updates: c.updates,
            mean_t2f: c.mean_t2f,
        }));
        runs.push(run.checkpoints);
    }
    let curves = harness::curve_points(init, a.learners, &runs);
    write_curves(out, &rows, &curves)?;
    write_manifest(
        out,
        config,
        &[
            ("verb", "retrain".into()),
            ("scenario", "limited".into()),
            ("seed", a.common.seed.to_string()),
            ("learners", a.learners.to_string()),
            ("write_path", format!("{path:?}").to_lowercase()),
            ("agents", n.to_string()),
        ],
    )?;
    if let Some(last) = curves.last() {
        println!(
            "final mean t2f {:.1} after {} updates per weight",
            last.mean_t2f, last.updates
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TestRow {
    trial: usize,
    steps_survived: usize,
    success: bool,
    diverged: bool,
}

fn test(a: &TestArgs) -> Result<()> {
    let config = load_config(&a.common)?;
    let out = prepare_out(&a.common)?;
    let env = config.environment();
    let pools = PoolSet::generate(a.common.seed, &config.initial_states)?;
    let test_pool = pools.test.truncated(config.harness.effective_test_states());
    let hw = config.hardware(a.variation);
    let path = a.approach.write_path();
    let seed = memristor_rl::seed::derive(a.common.seed, "test", 0);
    let records: Vec<TrialRecord> = match a.common.scenario {
        Scenario::Complete => {
            let w = checkpoint::load::<SeparateNetWeights>(&a.weights)?;
            let mut agent = make_agent(w, path, &hw, seed);
            evaluate_separate(&mut agent, &env, &test_pool)?
        }
        Scenario::Limited => {
            let w = checkpoint::load::<SharedNetWeights>(&a.weights)?;
            let mut sampler = ActionSampler::for_path(path, seed);
            evaluate_shared(&w, &mut sampler, &Readout::for_path(path, &hw), &env, &test_pool)
        }
    };
    let rows: Vec<TestRow> = records
        .iter()
        .enumerate()
        .map(|(trial, r)| TestRow {
            trial,
            steps_survived: r.steps_survived,
            success: r.success,
            diverged: r.diverged,
        })
        .collect();
    write_csv(&out.join("test.csv"), &rows)?;
    write_manifest(
        out,
        &config,
        &[
            ("verb", "test".into()),
            ("seed", a.common.seed.to_string()),
            ("weights", a.weights.display().to_string()),
            ("approach", a.approach.name().into()),
            ("variation", a.variation.name().into()),
            ("mean_t2f", mean_steps(&records).to_string()),
        ],
    )?;
    println!(
        "mean t2f {:.1} over {} test states",
        mean_steps(&records),
        records.len()
    );
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let config = load_config(&a.common)?;
    let out = prepare_out(&a.common)?;
    if a.table == Table::Fig9 {
        if a.common.scenario != Scenario::Limited {
            return Err(Error::config("the fig9 sweep belongs to the limited scenario"));
        }
        let fig = run_fig9(&config, a.common.seed, config.harness.limited_agents, &FIG9_LEARNERS)?;
        write_curves(out, &fig.agents, &fig.curves)?;
        write_manifest(
            out,
            &config,
            &[
                ("verb", "sweep".into()),
                ("table", "fig9".into()),
                ("seed", a.common.seed.to_string()),
                ("agents", config.harness.limited_agents.to_string()),
            ],
        )?;
        return Ok(());
    }
    if a.common.scenario != Scenario::Complete {
        return Err(Error::config("tables belong to the complete scenario"));
    }
    let mut exp = experiment(&a.common, &config)?;
    match &a.pretrained {
        Some(dir) => load_pretrained(&mut exp, dir)?,
        None => exp.pretrain()?,
    }
    let mut settings = match a.table {
        Table::Table1 => table1_settings(),
        _ => table2_settings(),
    };
    if let Some(v) = a.variation {
        settings.iter_mut().for_each(|s| s.variation = v);
        settings.dedup();
    }
    let table = run_settings(&exp, &settings)?;
    write_csv(&out.join("results.csv"), &table.rows)?;
    write_csv(&out.join("agents.csv"), &table.agents)?;
    let name = if a.table == Table::Table1 { "table1" } else { "table2" };
    write_manifest(
        out,
        &config,
        &[
            ("verb", "sweep".into()),
            ("table", name.into()),
            ("seed", a.common.seed.to_string()),
            ("agents", exp.population.len().to_string()),
        ],
    )?;
    for r in &table.rows {
        println!(
            "{:<14} c {:>4} vdr {:<5} {:<10} t2f {:>7.1} updates/weight {:>10} efficiency {}",
            r.approach, r.c, r.variable_dr, r.variation, r.mean_t2f, r.updates_per_weight, r.efficiency
        );
    }
    Ok(())
}
