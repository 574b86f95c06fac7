//! Subcommands of `dtr-bench`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dtr_core::agents::{AgentConfig, Algorithm, Baseline, BaselinePolicy, Policy, QAgent};
use dtr_core::envs::ENV_NAMES;
use dtr_core::harness::{
    build_env, evaluate_baselines, flag_ranks, evaluate_per_seed, run_benchmark, run_episode, train_seeds, tune_agent,
    BenchmarkRow, Entry, EvalReport, MatrixSpec, TuneSettings, BEST_BASELINE,
};
use dtr_core::io::{
    cohort_mean, format_report, load_trajectory, persist_trajectory, plot_columns, rows_from_reports, write_episodes,
    write_summary, write_table, write_trials, Manifest, PolicyName, RunConfig,
};
use dtr_core::nn::Mlp;
use dtr_core::pomdp::EnvError;
use dtr_core::realism::{RealismEnv, Setting};

#[derive(Debug, Parser)]
#[command(name = "dtr-bench", version, about = "Train, tune and evaluate treatment policies on simulated patients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set agent.learning_rate=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use a single seed: the tuning seed for `tune`, the only evaluation
    /// seed otherwise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scale episode counts and training steps down by ten.
    #[arg(long, global = true)]
    pub desk_scale: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Registered environments, algorithms, baselines and settings.
    List,
    /// Hyperparameter search with the tuning seed.
    Tune,
    /// Train one learner per evaluation seed and save checkpoints.
    Train,
    /// Evaluate a baseline, or trained checkpoints, against the baselines.
    Evaluate {
        /// Directory written by `train`; overrides `checkpoints` in the config.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Retrain and evaluate every entry of the benchmark matrix.
    Benchmark,
    /// Plot tables from saved trajectories.
    Visualize {
        /// Directory of trajectory CSV files.
        #[arg(long)]
        input: PathBuf,
    },
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut config = base.with_overrides(&cli.overrides).map_err(anyhow::Error::msg)?;
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        match cli.command {
            Command::Tune => config.tuning_seed = seed,
            _ => config.seeds = vec![seed],
        }
    }
    if cli.desk_scale {
        config.desk_scale = true;
    }
    if let Command::Evaluate { checkpoints: Some(dir) } = &cli.command {
        config.checkpoints = Some(dir.clone());
    }
    config.validate().map_err(anyhow::Error::msg).context("invalid configuration")?;
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::List = cli.command {
        print!("{}", list());
        return Ok(());
    }
    let config = load_config(cli)?;
    std::fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    match &cli.command {
        Command::List => unreachable!(),
        Command::Tune => tune(&config).map(|_| ()),
        Command::Train => train(&config),
        Command::Evaluate { .. } => evaluate_command(&config),
        Command::Benchmark => benchmark(&config),
        Command::Visualize { input } => visualize(input, &config.out),
    }
}

pub fn list() -> String {
    let mut s = String::from("environments:\n");
    for n in ENV_NAMES {
        s += &format!("  {n}\n");
    }
    s += "algorithms:\n";
    for a in Algorithm::ALL {
        s += &format!("  {a}\n");
    }
    s += "baselines:\n";
    for b in Baseline::ALL {
        s += &format!("  {b}\n");
    }
    s += "settings:\n";
    for st in Setting::ALL {
        s += &format!("  {st} ({})\n", st.label());
    }
    s
}

fn algorithm(config: &RunConfig) -> Result<Algorithm> {
    match config.policy {
        PolicyName::Agent(a) => Ok(a),
        PolicyName::Baseline(b) => bail!("{b} is a fixed baseline; choose a learning algorithm"),
    }
}

fn tune_settings(config: &RunConfig, algorithm: Algorithm, env: &str) -> TuneSettings {
    let (episodes, interim) = config.effective_tune_episodes();
    TuneSettings {
        algorithm,
        env: env.to_string(),
        realism: config.realism.clone(),
        base: config.agent.clone(),
        tuning_seed: config.tuning_seed,
        training_steps: config.effective_training_steps(),
        episodes,
        interim_episodes: interim,
        tpe: config.tpe.clone(),
    }
}

/// Runs the search and writes `trials.csv` and `best_agent.toml`.
pub fn tune(config: &RunConfig) -> Result<AgentConfig> {
    let alg = algorithm(config)?;
    let (outcome, best) = tune_agent(&tune_settings(config, alg, &config.env))?;
    let out = &config.out;
    write_trials(&out.join("trials.csv"), &outcome.trials)?;
    std::fs::write(out.join("best_agent.toml"), toml_string(&best)?)?;
    let mut m = Manifest::new("tune", config, &best);
    m.artifacts = vec!["trials.csv".into(), "best_agent.toml".into()];
    m.save(out)?;
    let t = outcome.best_trial();
    println!("best trial {} of {}: {:.4} ± {:.4}", t.number, outcome.trials.len(), t.stats.mean, t.stats.std);
    Ok(best)
}

fn toml_string<T: serde::Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).context("serializing to TOML")
}

pub fn checkpoint_name(seed: u64) -> String {
    format!("seed_{seed}.dtrmlp")
}

pub fn train(config: &RunConfig) -> Result<()> {
    let alg = algorithm(config)?;
    let agent_config = if config.tune { tune(config)? } else { config.agent.clone() };
    let mut env = build_env(&config.env, &config.realism)?;
    let trained = train_seeds(alg, &agent_config, &mut env, &config.seeds, config.effective_training_steps())?;
    let ckpt = config.out.join("checkpoints");
    std::fs::create_dir_all(&ckpt)?;
    let mut artifacts = Vec::new();
    let mut curves: Vec<Vec<String>> = Vec::new();
    for (&seed, (agent, report)) in config.seeds.iter().zip(&trained) {
        let name = checkpoint_name(seed);
        agent.network().save(&ckpt.join(&name))?;
        artifacts.push(format!("checkpoints/{name}"));
        for (i, r) in report.episode_returns.iter().enumerate() {
            curves.push(vec![seed.to_string(), i.to_string(), format!("{r}")]);
        }
        println!(
            "seed {seed}: {} env steps, {} gradient steps, last loss {}",
            report.env_steps,
            report.gradient_steps,
            report.final_loss.map(|l| format!("{l:.6}")).unwrap_or_else(|| "-".into())
        );
    }
    let curve_path = config.out.join("training.csv");
    let mut w = csv_writer(&curve_path)?;
    w.write_record(["seed", "episode", "return"])?;
    for row in curves {
        w.write_record(row)?;
    }
    w.flush()?;
    artifacts.push("training.csv".into());
    let mut m = Manifest::new("train", config, &agent_config);
    m.artifacts = artifacts;
    m.save(&config.out)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Loads the learners written by `train` into `dir`, one per seed.
pub fn load_agents(dir: &Path, seeds: &[u64]) -> Result<(Manifest, Vec<QAgent>)> {
    let manifest = Manifest::load(dir).context("reading the training manifest")?;
    let alg = match manifest.run.policy {
        PolicyName::Agent(a) => a,
        PolicyName::Baseline(b) => bail!("{} holds no checkpoints ({b} is a baseline)", dir.display()),
    };
    let env = build_env(&manifest.env, &manifest.run.realism)?;
    let actions = dtr_core::pomdp::Environment::spec(&env).action_count;
    let mut agents = Vec::new();
    for &seed in seeds {
        let path = dir.join("checkpoints").join(checkpoint_name(seed));
        let net = Mlp::load(&path).with_context(|| format!("missing checkpoint {}", path.display()))?;
        agents.push(QAgent::from_network(alg, actions, manifest.agent.clone(), net)?);
    }
    Ok((manifest, agents))
}

fn record(policy: &dyn Policy, env: &mut RealismEnv, seed: u64, count: usize, dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    if count == 0 {
        return Ok(written);
    }
    let sub = dir.join(format!("seed_{seed}"));
    std::fs::create_dir_all(&sub)?;
    for ep in 0..count as u64 {
        let (_, traj) = run_episode(policy, env, seed, ep, true)?;
        let name = format!("episode_{ep:05}.csv");
        persist_trajectory(&traj.expect("recording was requested"), &sub.join(&name))?;
        written.push(format!("trajectories/{}/seed_{seed}/{name}", policy.name()));
    }
    Ok(written)
}

pub fn evaluate_command(config: &RunConfig) -> Result<()> {
    let mut env = build_env(&config.env, &config.realism)?;
    let episodes = config.effective_episodes();
    let seeds = &config.seeds;
    let traj_root = config.out.join("trajectories");
    let record_n = config.record_episodes.min(episodes);
    let mut artifacts = Vec::new();
    let mut reports: Vec<EvalReport> = Vec::new();
    let agent_config;
    match config.policy {
        PolicyName::Agent(_) => {
            let dir = config
                .checkpoints
                .as_ref()
                .context("evaluating a learner needs --checkpoints DIR from a previous train run")?;
            let (manifest, agents) = load_agents(dir, seeds)?;
            if manifest.env != config.env || manifest.setting != config.realism.setting {
                eprintln!(
                    "note: checkpoints were trained on {} ({}), evaluating on {} ({})",
                    manifest.env, manifest.setting, config.env, config.realism.setting
                );
            }
            agent_config = manifest.agent.clone();
            let report = evaluate_per_seed(&mut |i| Ok::<&dyn Policy, EnvError>(&agents[i]), &mut env, seeds, episodes)?;
            for (agent, &seed) in agents.iter().zip(seeds) {
                artifacts.extend(record(agent, &mut env, seed, record_n, &traj_root.join(agent.name()))?);
            }
            reports.push(report);
        }
        PolicyName::Baseline(b) => {
            agent_config = config.agent.clone();
            let policy = BaselinePolicy::new(b, &env);
            for &seed in seeds {
                artifacts.extend(record(&policy, &mut env, seed, record_n, &traj_root.join(policy.name()))?);
            }
        }
    }
    let (baselines, best) = evaluate_baselines(&mut env, seeds, episodes)?;
    let mut pi_b = baselines[best].clone();
    pi_b.policy = BEST_BASELINE.into();
    reports.extend(baselines);
    let mut rows = rows_from_reports(&reports);
    rows.extend(rows_from_reports(std::slice::from_ref(&pi_b)));
    flag_ranks(&mut rows);
    write_results(&config.out, &reports, &rows)?;
    artifacts.extend(["episodes.csv", "summary.csv", "report.txt"].map(String::from));
    let mut m = Manifest::new("evaluate", config, &agent_config);
    m.artifacts = artifacts;
    m.save(&config.out)?;
    Ok(())
}

fn write_results(out: &Path, reports: &[EvalReport], rows: &[BenchmarkRow]) -> Result<()> {
    write_episodes(&out.join("episodes.csv"), reports)?;
    write_summary(&out.join("summary.csv"), rows)?;
    let text = format_report(rows);
    std::fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn benchmark(config: &RunConfig) -> Result<()> {
    let b = &config.benchmark;
    let mut entries: Vec<Entry> = b.algorithms.iter().map(|&a| Entry::Agent(a)).collect();
    if b.baselines {
        entries.push(Entry::Baselines);
    }
    let mut rows = Vec::new();
    for env in &b.envs {
        let mut configs = BTreeMap::new();
        for &alg in &b.algorithms {
            let c = if config.tune {
                let mut tuned = config.clone();
                tuned.realism.setting = Setting::Base;
                tune_agent(&tune_settings(&tuned, alg, env))?.1
            } else {
                config.agent.clone()
            };
            configs.insert(alg, c);
        }
        let spec = MatrixSpec {
            entries: entries.clone(),
            envs: vec![env.clone()],
            settings: b.settings.clone(),
            realism: config.realism.clone(),
            seeds: config.seeds.clone(),
            episodes_per_seed: config.effective_episodes(),
            training_steps: config.effective_training_steps(),
            configs,
        };
        rows.extend(run_benchmark(&spec));
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("failed: {} on {} ({}): {}", r.policy, r.env, r.setting, r.error.as_deref().unwrap_or(""));
    }
    let reports: Vec<EvalReport> = rows
        .iter()
        .filter(|r| r.policy != BEST_BASELINE)
        .filter_map(|r| r.report.clone())
        .collect();
    write_results(&config.out, &reports, &rows)?;
    let mut m = Manifest::new("benchmark", config, &config.agent);
    m.artifacts = ["episodes.csv", "summary.csv", "report.txt"].map(String::from).to_vec();
    m.save(&config.out)?;
    Ok(())
}

/// Writes one plot table per trajectory file in `input` and their cohort
/// mean.
pub fn visualize(input: &Path, out: &Path) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no trajectory files in {}", input.display());
    }
    let mut trajectories = Vec::new();
    for f in &files {
        let t = load_trajectory(f)?;
        let (cols, rows) = plot_columns(&t);
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("episode");
        write_table(&out.join(format!("plot_{stem}.csv")), &cols, &rows)?;
        trajectories.push(t);
    }
    let (cols, rows) = cohort_mean(&trajectories).map_err(anyhow::Error::msg)?;
    write_table(&out.join("cohort_mean.csv"), &cols, &rows)?;
    println!("{} episodes, {} steps in the longest", trajectories.len(), rows.len());
    Ok(())
}
