//! Steps the environment by hand with a simple rule: always pick the open
//! request with the most remaining time, skipping requests that could not be
//! placed before.
//!
//! cargo run --example greedy_episode

use std::sync::Arc;

use dsn_sched::env::SchedulingEnv;
use dsn_sched::synth::{generate_week, SynthConfig};

fn main() -> dsn_sched::Result<()> {
    let problem = Arc::new(generate_week(&SynthConfig::desk())?);
    let mut env = SchedulingEnv::new(problem.clone())?;
    let obs = env.reset(1);
    println!("observation length {}, {} requests, step cap {}", obs.len(), env.n_requests(), env.step_cap());

    let mut total = 0.0;
    let mut stuck = vec![false; env.n_requests()];
    while !env.is_done() {
        let mask = env.action_mask();
        let open = |i: &usize| mask[*i] && !stuck[*i];
        let Some(action) = (0..env.n_requests())
            .filter(open)
            .max_by_key(|&i| (env.remaining()[i], std::cmp::Reverse(i)))
        else {
            break;
        };
        let step = env.step(action)?;
        total += step.reward;
        stuck[action] = step.info.track.is_none();
        if let Some(t) = &step.info.track {
            if env.n_steps() <= 10 {
                println!(
                    "step {:3}: request {:2} on {} at [{}, {}) reward {:.3}",
                    env.n_steps(),
                    action,
                    t.antennas.join("+"),
                    t.window.start(),
                    t.window.end(),
                    step.reward
                );
            }
        }
    }
    let tracks = env.schedule().tracks.len();
    println!("episode reward {total:.3} after {} steps, {tracks} tracks", env.n_steps());
    Ok(())
}
