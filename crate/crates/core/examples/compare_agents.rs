//! Briefly trains a policy, then writes the comparison report against the
//! random baseline.
//!
//! cargo run --release --example compare_agents -- [total_steps] [out_dir]

use std::path::PathBuf;
use std::sync::Arc;

use dsn_sched::eval::{rollout, Agent, Comparison};
use dsn_sched::ppo::{PpoConfig, Trainer};
use dsn_sched::synth::{generate_week, SynthConfig};
use dsn_sched::workers::Workers;

fn main() -> dsn_sched::Result<()> {
    let mut args = std::env::args().skip(1);
    let total: usize = args.next().map_or(20_000, |s| s.parse().expect("total steps"));
    let out = args.next().map_or_else(|| PathBuf::from("runs/compare_agents"), PathBuf::from);

    let problem = Arc::new(generate_week(&SynthConfig::desk())?);
    let config = PpoConfig {
        total_env_steps: total,
        ..PpoConfig::default()
    };
    let mut trainer = Trainer::new(config, problem.clone(), Workers::new(Workers::default_threads())?)?;
    trainer.run(None, |r| println!("iter {:3} eval {:.3}", r.row.iter, r.row.eval_reward_mean))?;

    let workers = Workers::new(Workers::default_threads())?;
    let random = rollout(&Agent::Random { masked: true }, &problem, 50, 1, &workers)?;
    let best = trainer.best_network();
    let trained = rollout(&Agent::Policy { net: best, greedy: false }, &problem, 50, 1, &workers)?;
    let cmp = Comparison::new(&random, &trained, &problem)?;
    cmp.write(&out)?;
    print!("{}", cmp.table.to_markdown());
    println!("reward ratio {:.4}; report in {}", cmp.reward_ratio, out.display());
    Ok(())
}
