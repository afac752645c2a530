//! Generates a synthetic week and prints its shape.
//!
//! cargo run --example generate_week -- [seed] [requests] [antennas]

use dsn_sched::problem::hours;
use dsn_sched::synth::{generate_week, schedulable_hours, SynthConfig};

fn main() -> dsn_sched::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut config = SynthConfig::default();
    if let (Some(r), Some(a)) = (args.next(), args.next()) {
        config = config.resized(r.parse().expect("requests"), a.parse().expect("antennas"));
    }
    config.seed = seed;

    let problem = generate_week(&config)?;
    println!("week {}", problem.week_label);
    println!("{} requests, {} antennas, {} missions", problem.n_requests(), problem.antennas.len(), problem.missions().len());
    println!("requested {:.1} h, schedulable {:.1} h", hours(problem.total_requested_s()), schedulable_hours(&problem));
    for r in problem.requests.iter().take(5) {
        let combos: Vec<String> = r.combos.iter().map(|c| c.antennas.join("+")).collect();
        println!(
            "  request {:3} {:8} {:5.2} h (min {:4.2} h) setup {:4} s teardown {:4} s on {}",
            r.id,
            r.mission,
            hours(r.requested_duration_s),
            hours(r.min_duration_s),
            r.setup_s,
            r.teardown_s,
            combos.join(", ")
        );
    }
    Ok(())
}
