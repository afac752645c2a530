//! Canonical window sets: building, subtracting and intersecting.
//!
//! cargo run --example interval_algebra

use dsn_sched::timewindow::{TimeWindow, WindowSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Overlapping and touching inputs collapse into disjoint windows.
    let view = WindowSet::from_pairs(&[(0, 3600), (3000, 7200), (7200, 9000), (20_000, 26_000)])?;
    println!("view periods:     {:?}", pairs(&view));

    let maintenance = WindowSet::from_pairs(&[(4000, 5000)])?;
    let available = view.subtract(&maintenance);
    println!("minus maintenance {:?}", pairs(&available));

    let other = WindowSet::from_pairs(&[(1000, 4500), (21_000, 30_000)])?;
    let both = WindowSet::intersect_all([&available, &other]).expect("two sets");
    println!("common to both:   {:?}", pairs(&both));
    println!("total common time {} s", both.total_duration());

    let long = both.retain_min_duration(3000);
    println!("at least 3000 s:  {:?}", pairs(&long));

    let probe = TimeWindow::new(22_000, 23_000)?;
    println!("contains {:?}: {}", (probe.start(), probe.end()), both.contains(&probe));
    Ok(())
}

fn pairs(set: &WindowSet) -> Vec<(i64, i64)> {
    set.iter().map(|w| (w.start(), w.end())).collect()
}
