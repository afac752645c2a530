//! Trains a policy on the small three-antenna week and compares it with the
//! random baseline.
//!
//! cargo run --release --example train_desk -- [total_steps] [threads]

use std::sync::Arc;
use std::time::Instant;

use dsn_sched::eval::{rollout, Agent};
use dsn_sched::ppo::{PpoConfig, Trainer};
use dsn_sched::synth::{generate_week, SynthConfig};
use dsn_sched::workers::Workers;

fn main() -> dsn_sched::Result<()> {
    let mut args = std::env::args().skip(1);
    let total: usize = args.next().map_or(200_000, |s| s.parse().expect("total steps"));
    let threads: usize = args.next().map_or_else(Workers::default_threads, |s| s.parse().expect("threads"));
    let input_scale: f64 = args.next().map_or(1.0, |s| s.parse().expect("scale"));

    let problem = Arc::new(generate_week(&SynthConfig::desk())?);
    let workers = Workers::new(threads)?;
    let random = rollout(&Agent::Random { masked: true }, &problem, 100, 7, &workers)?;
    println!("random baseline: mean reward {:.3} over 100 episodes", random.mean_reward());

    let config = PpoConfig {
        total_env_steps: total,
        input_scale,
        ..PpoConfig::default()
    };
    let mut trainer = Trainer::new(config, problem.clone(), workers)?;
    let t0 = Instant::now();
    trainer.run(None, |r| {
        println!(
            "iter {:3} steps {:7} eval {:.3} (max {:.3}) len {:.1} entropy {:.4} kl {:.4} epochs {:2} vloss {:.3} [{:.0}s]",
            r.row.iter,
            r.row.env_steps,
            r.row.eval_reward_mean,
            r.row.eval_reward_max,
            r.row.eval_ep_len_mean,
            r.row.entropy,
            r.update.kl,
            r.update.epochs,
            r.update.value_loss,
            t0.elapsed().as_secs_f64()
        );
    })?;

    let best = trainer.best_network();
    let trained = rollout(&Agent::Policy { net: best, greedy: false }, &problem, 100, 7, &Workers::new(threads)?)?;
    println!(
        "best checkpoint (iteration {}): mean reward {:.3}, ratio to random {:.4}",
        trainer.best_iteration(),
        trained.mean_reward(),
        trained.mean_reward() / random.mean_reward()
    );
    Ok(())
}
