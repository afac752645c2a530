//! Command-line front end: `gen`, `train`, `eval`, `compare`, `export`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{episode_seeds, rollout, run_episode_traced, Agent, Comparison, ComparisonTable, EvalReport};
use crate::policy::{ActorCritic, Checkpoint};
use crate::ppo::{train, PpoConfig};
use crate::problem::WeekProblem;
use crate::synth::{generate_week, schedulable_hours, SynthConfig};
use crate::workers::Workers;

/// Environment variable naming the root under which default output
/// directories are created.
pub const OUT_ROOT_VAR: &str = "DSN_SCHED_OUT";

#[derive(Debug, Parser)]
#[command(name = "dsn-sched", version, about = "Deep Space Network week scheduling with PPO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic week problem.
    Gen(GenArgs),
    /// Train a policy with PPO.
    Train(TrainArgs),
    /// Roll out a trained or random agent and report schedule metrics.
    Eval(EvalArgs),
    /// Compare a trained agent against the random baseline.
    Compare(CompareArgs),
    /// Export one episode's schedule and step trace.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory [default: $DSN_SCHED_OUT/<command>, or runs/<command>]
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator config (TOML); flags override its values.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of requests; requested hours scale with it.
    #[arg(long)]
    pub requests: Option<usize>,
    #[arg(long)]
    pub antennas: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    /// Worker threads [default: available cores, at most 16]. Results do not
    /// depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl WorkerArgs {
    fn pool(&self) -> Result<Workers> {
        Workers::new(self.workers.unwrap_or_else(Workers::default_threads))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(short, long)]
    pub problem: PathBuf,
    /// PPO config (TOML); flags override its values.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub total_steps: Option<usize>,
    /// Continue from the checkpoints in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Write 0 in the log's wall-clock column so reruns are byte-identical.
    #[arg(long)]
    pub no_wallclock: bool,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct AgentArgs {
    /// Policy checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use the random baseline instead of a checkpoint.
    #[arg(long)]
    pub random: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(short, long)]
    pub problem: PathBuf,
    #[command(flatten)]
    pub agent: AgentArgs,
    /// Let the random agent pick any slot, satisfied or not.
    #[arg(long, requires = "random")]
    pub unmasked: bool,
    /// Take the most likely action instead of sampling.
    #[arg(long)]
    pub greedy: bool,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(short, long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(short, long)]
    pub problem: PathBuf,
    #[command(flatten)]
    pub agent: AgentArgs,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the published week-44 comparison table.
    #[arg(long)]
    pub published_table: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Reproducibility record written beside every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub problem_path: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tool_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    /// Files written, relative to `output_dir`.
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn start(subcommand: &str, out: &Path, seed: u64) -> Self {
        Self {
            subcommand: subcommand.into(),
            args: std::env::args().collect(),
            config_path: None,
            problem_path: None,
            seed,
            output_dir: out.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
            outputs: Vec::new(),
        }
    }

    fn finish(mut self, outputs: &[&str]) -> Result<()> {
        self.finished_unix_s = unix_now();
        self.outputs = outputs.iter().map(|s| s.to_string()).collect();
        let path = self.output_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn out_dir(args: &OutArgs, command: &str) -> Result<PathBuf> {
    let dir = args.out.clone().unwrap_or_else(|| {
        std::env::var_os(OUT_ROOT_VAR)
            .map_or_else(|| PathBuf::from("runs"), PathBuf::from)
            .join(command)
    });
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_problem(path: &Path) -> Result<Arc<WeekProblem>> {
    Ok(Arc::new(WeekProblem::load(path)?))
}

fn load_policy(path: &Path) -> Result<ActorCritic> {
    Checkpoint::load(path)?.network()
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 success, 1 usage, 2 invalid input, 3 runtime failure.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Export(a) => cmd_export(&a),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    if args.requests.is_some() || args.antennas.is_some() {
        let n = args.requests.unwrap_or(config.n_requests);
        let a = args.antennas.unwrap_or(config.n_antennas);
        config = config.resized(n, a);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = out_dir(&args.out, "gen")?;
    let mut manifest = RunManifest::start("gen", &out, config.seed);
    manifest.config_path = args.config.clone();

    let problem = generate_week(&config)?;
    problem.save(out.join("problem.json"))?;
    let config_path = out.join("synth.toml");
    std::fs::write(&config_path, toml::to_string(&config).expect("config serializes"))
        .map_err(|e| Error::io(&config_path, e))?;
    println!(
        "{} requests from {} missions on {} antennas: {:.1} h requested, {:.1} h schedulable -> {}",
        problem.n_requests(),
        problem.missions().len(),
        problem.antennas.len(),
        crate::problem::hours(problem.total_requested_s()),
        schedulable_hours(&problem),
        out.join("problem.json").display()
    );
    manifest.finish(&["problem.json", "synth.toml"])
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => PpoConfig::load(p)?,
        None => PpoConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.total_steps {
        config.total_env_steps = n;
    }
    if args.no_wallclock {
        config.record_wallclock = false;
    }
    config.validate()?;
    let problem = load_problem(&args.problem)?;
    let out = out_dir(&args.out, "train")?;
    let mut manifest = RunManifest::start("train", &out, config.seed);
    manifest.config_path = args.config.clone();
    manifest.problem_path = Some(args.problem.clone());
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, config.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    let outcome = train(config, problem, Some(&out), args.resume, args.workers.pool()?, |r| {
        println!(
            "iter {:4} steps {:9} eval_reward {:8.3} (max {:8.3}) entropy {:.4} kl {:.5}{}",
            r.row.iter,
            r.row.env_steps,
            r.row.eval_reward_mean,
            r.row.eval_reward_max,
            r.row.entropy,
            r.row.kl,
            if r.improved { " *" } else { "" }
        );
    })?;
    println!(
        "best mean eval reward {:.3} at iteration {}",
        outcome.best_eval_reward, outcome.best_iteration
    );
    manifest.finish(&["config.toml", "latest.json", "best.json", "trainer_state.bin", "train_log.csv"])
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let problem = load_problem(&args.problem)?;
    let net = args.agent.checkpoint.as_deref().map(load_policy).transpose()?;
    let agent = match &net {
        Some(net) => Agent::Policy {
            net,
            greedy: args.greedy,
        },
        None => Agent::Random {
            masked: !args.unmasked,
        },
    };
    let out = out_dir(&args.out, "eval")?;
    let mut manifest = RunManifest::start("eval", &out, args.seed);
    manifest.problem_path = Some(args.problem.clone());
    manifest.config_path = args.agent.checkpoint.clone();

    let set = rollout(&agent, &problem, args.episodes, args.seed, &args.workers.pool()?)?;
    let report = EvalReport::new(&set, &problem)?;
    report.write(&set, &problem, &out)?;
    let s = &report.summary;
    println!(
        "{}: mean reward {:.3} (min {:.3}, max {:.3}) over {} episodes; representative episode {}: {:.1} h, U_RMS {:.4}, utilization {:.4}",
        s.agent,
        s.mean_reward,
        s.min_reward,
        s.max_reward,
        s.episodes,
        s.representative_episode,
        s.report.hours_satisfied,
        s.report.u_rms,
        s.report.utilization
    );
    manifest.finish(&[
        "summary.json",
        "rewards.csv",
        "missions.csv",
        "reward_hist.csv",
        "action_hist.csv",
        "schedule.csv",
    ])
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let problem = load_problem(&args.problem)?;
    let net = load_policy(&args.checkpoint)?;
    let workers = args.workers.pool()?;
    let out = out_dir(&args.out, "compare")?;
    let mut manifest = RunManifest::start("compare", &out, args.seed);
    manifest.problem_path = Some(args.problem.clone());
    manifest.config_path = Some(args.checkpoint.clone());

    let random = rollout(&Agent::Random { masked: true }, &problem, args.episodes, args.seed, &workers)?;
    let trained = rollout(
        &Agent::Policy {
            net: &net,
            greedy: args.greedy,
        },
        &problem,
        args.episodes,
        args.seed,
        &workers,
    )?;
    let cmp = Comparison::new(&random, &trained, &problem)?;
    cmp.write(&out)?;
    print!("{}", cmp.table.to_markdown());
    println!(
        "mean episode reward: random {:.3}, trained {:.3} (ratio {:.4})",
        cmp.random.mean_reward, cmp.trained.mean_reward, cmp.reward_ratio
    );
    manifest.finish(&[
        "comparison.json",
        "table1.csv",
        "table1.md",
        "reward_hist_random.csv",
        "reward_hist_trained.csv",
        "action_hist_random.csv",
        "action_hist_trained.csv",
        "missions_random.csv",
        "missions_trained.csv",
    ])
}

pub fn cmd_export(args: &ExportArgs) -> Result<()> {
    let problem = load_problem(&args.problem)?;
    let net = args.agent.checkpoint.as_deref().map(load_policy).transpose()?;
    let out = out_dir(&args.out, "export")?;
    let mut manifest = RunManifest::start("export", &out, args.seed);
    manifest.problem_path = Some(args.problem.clone());

    let agent = match &net {
        Some(net) => Agent::Policy {
            net,
            greedy: args.greedy,
        },
        None => Agent::Random { masked: true },
    };
    let (env_seed, agent_seed) = episode_seeds(args.seed, 0);
    let (episode, trace) = run_episode_traced(&agent, &problem, env_seed, agent_seed)?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("schedule.json", episode.schedule.to_json())?;
    write("schedule.csv", episode.schedule.to_csv(&problem))?;
    write("trace.csv", trace.to_csv())?;
    let mut outputs = vec!["schedule.json", "schedule.csv", "trace.csv"];
    if args.published_table {
        let table = ComparisonTable::published();
        write("table1_published.csv", table.to_csv())?;
        write("table1_published.md", table.to_markdown())?;
        outputs.extend(["table1_published.csv", "table1_published.md"]);
    }
    println!(
        "episode reward {:.3} in {} steps, {} tracks -> {}",
        episode.total_reward,
        episode.length,
        episode.schedule.tracks.len(),
        out.display()
    );
    manifest.finish(&outputs)
}
