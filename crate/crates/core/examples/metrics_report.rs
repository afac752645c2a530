//! Schedule quality metrics for random rollouts on the default week.
//!
//! cargo run --release --example metrics_report

use std::sync::Arc;

use dsn_sched::eval::{rollout, Agent, ScheduleReport};
use dsn_sched::synth::{generate_week, SynthConfig};
use dsn_sched::workers::Workers;

fn main() -> dsn_sched::Result<()> {
    let problem = Arc::new(generate_week(&SynthConfig::default())?);
    let workers = Workers::new(Workers::default_threads())?;
    let set = rollout(&Agent::Random { masked: true }, &problem, 10, 0, &workers)?;
    println!("mean reward {:.3} over {} episodes", set.mean_reward(), set.episodes.len());

    let rep = &set.episodes[set.representative()?];
    let report = ScheduleReport::new(&rep.schedule, &problem)?;
    println!("representative episode {} (reward {:.3})", rep.episode, rep.total_reward);
    println!("  hours satisfied       {:.1}", report.hours_satisfied);
    println!("  satisfied requests    {}", report.satisfied_requests);
    println!("  U_RMS                 {:.2}%", 100.0 * report.u_rms);
    println!("  U_max                 {:.2}%", 100.0 * report.u_max);
    println!("  antenna utilization   {:.2}%", 100.0 * report.utilization);
    print!("{}", report.missions_csv());
    Ok(())
}
