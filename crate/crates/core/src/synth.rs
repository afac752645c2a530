//! Seeded generator of synthetic, oversubscribed week problems.
//!
//! Visibility is modelled as periodic daily passes: each mission has a sky
//! phase, each antenna complex sees the mission at a fixed offset from that
//! phase, and each mission-antenna pair has its own duty cycle. Most missions
//! share one region of the sky, which clusters demand the way real weeks do.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{
    derive_valid_vps, Antenna, AntennaCombo, TrackRequest, WeekProblem, ANTENNA_SLOTS,
    DEFAULT_MAX_REQUESTS,
};
use crate::timewindow::{Seconds, TimeWindow, WindowSet, SECONDS_PER_HOUR};

pub const WEEK_S: Seconds = 7 * 24 * SECONDS_PER_HOUR;
const GRID_S: Seconds = 300;

/// Roster in the order antennas are handed out: the three 70 m dishes first,
/// then the 34 m dishes, cycling through the complexes.
const ROSTER: [(&str, usize); ANTENNA_SLOTS] = [
    ("DSS-14", 0),
    ("DSS-43", 1),
    ("DSS-63", 2),
    ("DSS-24", 0),
    ("DSS-34", 1),
    ("DSS-54", 2),
    ("DSS-25", 0),
    ("DSS-35", 1),
    ("DSS-55", 2),
    ("DSS-26", 0),
    ("DSS-36", 1),
    ("DSS-56", 2),
    ("DSS-15", 0),
    ("DSS-45", 1),
    ("DSS-65", 2),
];

/// Hours after the first complex at which each complex sees the same sky.
const COMPLEX_OFFSET_H: [f64; 3] = [0.0, 6.3, 16.5];

const PAPER_REQUESTS: usize = 286;
const PAPER_HOURS: f64 = 1770.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_antennas: usize,
    pub n_missions: usize,
    pub n_requests: usize,
    pub total_requested_hours: f64,
    pub max_requests: usize,
    pub week_s: Seconds,
    pub visibility_period_s: Seconds,
    /// Range the per mission-antenna duty cycle is drawn from.
    pub duty_cycle: [f64; 2],
    /// Fraction of missions whose sky phase sits in the shared cluster.
    pub sky_cluster_fraction: f64,
    pub sky_cluster_spread_s: Seconds,
    /// Range of the number of antennas each mission may use.
    pub antennas_per_mission: [usize; 2],
    pub maintenance_per_antenna: usize,
    pub maintenance_hours: [f64; 2],
    /// Fraction of requests that ask for a two-antenna array.
    pub array_fraction: f64,
    /// Range of min_duration as a fraction of requested duration.
    pub min_duration_fraction: [f64; 2],
    pub setup_s: Seconds,
    pub teardown_s: Seconds,
    /// Optional grid the derived view periods are shrunk onto.
    pub quantum_s: Option<Seconds>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_antennas: ANTENNA_SLOTS,
            n_missions: 30,
            n_requests: PAPER_REQUESTS,
            total_requested_hours: PAPER_HOURS,
            max_requests: DEFAULT_MAX_REQUESTS,
            week_s: WEEK_S,
            visibility_period_s: 24 * SECONDS_PER_HOUR,
            duty_cycle: [0.25, 0.45],
            sky_cluster_fraction: 0.8,
            sky_cluster_spread_s: 2 * SECONDS_PER_HOUR,
            antennas_per_mission: [2, 5],
            maintenance_per_antenna: 2,
            maintenance_hours: [4.0, 8.0],
            array_fraction: 0.1,
            min_duration_fraction: [0.5, 1.0],
            setup_s: SECONDS_PER_HOUR,
            teardown_s: 15 * 60,
            quantum_s: None,
        }
    }
}

impl SynthConfig {
    /// Default shape resized to `n_requests` requests on `n_antennas`
    /// antennas, keeping the mean requested duration per request.
    pub fn scaled(n_requests: usize, n_antennas: usize) -> Self {
        Self::default().resized(n_requests, n_antennas)
    }

    /// This config resized to `n_requests` requests on `n_antennas`
    /// antennas, keeping its mean requested duration per request.
    pub fn resized(self, n_requests: usize, n_antennas: usize) -> Self {
        let (hours, base_n) = if self.n_requests > 0 {
            (self.total_requested_hours, self.n_requests)
        } else {
            (PAPER_HOURS, PAPER_REQUESTS)
        };
        Self {
            n_requests,
            n_antennas,
            n_missions: self.n_missions.min(n_requests.max(1)),
            total_requested_hours: hours * n_requests as f64 / base_n as f64,
            antennas_per_mission: [
                self.antennas_per_mission[0].min(n_antennas),
                self.antennas_per_mission[1].min(n_antennas),
            ],
            ..self
        }
    }

    /// The 3-antenna, 60-request instance used for quick training runs.
    pub fn desk() -> Self {
        Self::scaled(60, 3)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Generation(m));
        if self.n_antennas == 0 || self.n_antennas > ANTENNA_SLOTS {
            return fail(format!("n_antennas must be in 1..={ANTENNA_SLOTS}"));
        }
        if self.n_missions == 0 {
            return fail("n_missions must be positive".into());
        }
        if self.n_requests > self.max_requests {
            return fail(format!(
                "n_requests {} exceeds max_requests {}",
                self.n_requests, self.max_requests
            ));
        }
        if self.n_requests > 0 && self.n_missions > self.n_requests {
            return fail("more missions than requests".into());
        }
        if self.week_s <= 0 || self.visibility_period_s <= 0 {
            return fail("week and visibility period must be positive".into());
        }
        let [dlo, dhi] = self.duty_cycle;
        if !(0.0..=1.0).contains(&dlo) || !(dlo..=1.0).contains(&dhi) {
            return fail("duty_cycle must be an ordered range inside [0, 1]".into());
        }
        if self.n_requests > 0 && dhi <= 0.0 {
            return fail("duty cycle 0 leaves no visibility for any request".into());
        }
        let [alo, ahi] = self.antennas_per_mission;
        if alo == 0 || alo > ahi || ahi > self.n_antennas {
            return fail("antennas_per_mission must be an ordered range in 1..=n_antennas".into());
        }
        let [flo, fhi] = self.min_duration_fraction;
        if !(flo > 0.0 && flo <= fhi && fhi <= 1.0) {
            return fail("min_duration_fraction must be an ordered range in (0, 1]".into());
        }
        let [mlo, mhi] = self.maintenance_hours;
        if !(mlo > 0.0 && mlo <= mhi) {
            return fail("maintenance_hours must be an ordered positive range".into());
        }
        let n = self.n_requests as f64;
        if self.n_requests > 0
            && !(n * 1.0..=n * 8.0).contains(&self.total_requested_hours)
        {
            return fail(format!(
                "{} h cannot be split into {} requests of 1-8 h",
                self.total_requested_hours, self.n_requests
            ));
        }
        if self.setup_s < 0 || self.teardown_s < 0 {
            return fail("setup_s and teardown_s must be non-negative".into());
        }
        if matches!(self.quantum_s, Some(q) if q <= 0) {
            return fail("quantum_s must be positive".into());
        }
        Ok(())
    }
}

struct MissionSky {
    phase_s: f64,
    antennas: Vec<usize>,
}

/// Generates a week problem. Identical configs give identical problems.
pub fn generate_week(config: &SynthConfig) -> Result<WeekProblem> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let week = TimeWindow::new(0, config.week_s).expect("week is non-empty");
    let period = config.visibility_period_s as f64;

    let antennas: Vec<Antenna> = ROSTER[..config.n_antennas]
        .iter()
        .map(|&(id, _)| Antenna {
            id: id.to_string(),
            bounds: week,
            maintenance: random_maintenance(&mut rng, config),
        })
        .collect();

    let cluster_center = rng.random_range(0.0..period);
    let missions: Vec<MissionSky> = (0..config.n_missions)
        .map(|_| {
            let phase_s = if rng.random_bool(config.sky_cluster_fraction.clamp(0.0, 1.0)) {
                let spread = config.sky_cluster_spread_s as f64;
                cluster_center + rng.random_range(-spread..=spread)
            } else {
                rng.random_range(0.0..period)
            };
            let [lo, hi] = config.antennas_per_mission;
            let k = rng.random_range(lo..=hi);
            let mut pool: Vec<usize> = (0..config.n_antennas).collect();
            pool.shuffle(&mut rng);
            let mut antennas = pool[..k].to_vec();
            antennas.sort_unstable();
            MissionSky { phase_s, antennas }
        })
        .collect();

    // Raw visibility per mission, keyed by antenna id.
    let raw_vps: Vec<BTreeMap<String, WindowSet>> = missions
        .iter()
        .map(|m| {
            m.antennas
                .iter()
                .map(|&a| {
                    let (id, complex) = ROSTER[a];
                    let duty = rng.random_range(config.duty_cycle[0]..=config.duty_cycle[1]);
                    let jitter = rng.random_range(-1200.0..=1200.0);
                    let center = m.phase_s + COMPLEX_OFFSET_H[complex] * 3600.0 + jitter;
                    let set = periodic_passes(center, duty * period, period, config.week_s);
                    (id.to_string(), set)
                })
                .collect()
        })
        .collect();

    let maintenance: BTreeMap<String, WindowSet> = antennas
        .iter()
        .map(|a| (a.id.clone(), a.maintenance.clone()))
        .collect();

    // Every mission gets one request, the rest are spread at random.
    let mut owner: Vec<usize> = (0..config.n_missions.min(config.n_requests)).collect();
    while owner.len() < config.n_requests {
        owner.push(rng.random_range(0..config.n_missions));
    }
    owner.shuffle(&mut rng);

    let durations = requested_durations(&mut rng, config);

    let mut requests = Vec::with_capacity(config.n_requests);
    for (id, (&m, &requested)) in owner.iter().zip(&durations).enumerate() {
        let mission = &missions[m];
        let frac = rng.random_range(config.min_duration_fraction[0]..=config.min_duration_fraction[1]);
        let min_duration = (((requested as f64 * frac) as Seconds / GRID_S) * GRID_S)
            .max(1800)
            .min(requested);
        let combos = random_combos(&mut rng, config, &mission.antennas);
        let mut request = TrackRequest {
            id,
            mission: format!("M{:02}", m + 1),
            requested_duration_s: requested,
            min_duration_s: min_duration,
            setup_s: config.setup_s,
            teardown_s: config.teardown_s,
            combos: combos
                .into_iter()
                .map(|ids| AntennaCombo {
                    antennas: ids,
                    view_periods: WindowSet::new(),
                })
                .collect(),
        };
        let vps = derive_valid_vps(&request, &raw_vps[m], &maintenance)?;
        for (combo, vp) in request.combos.iter_mut().zip(vps) {
            combo.view_periods = match config.quantum_s {
                Some(q) => vp.quantize(q).retain_min_duration(request.min_duration_s),
                None => vp,
            };
        }
        requests.push(request);
    }

    let problem = WeekProblem {
        week_label: format!("synthetic-seed-{}", config.seed),
        max_requests: config.max_requests,
        antennas,
        requests,
    };
    problem.validate()?;
    Ok(problem)
}

fn random_maintenance(rng: &mut ChaCha8Rng, config: &SynthConfig) -> WindowSet {
    let [lo, hi] = config.maintenance_hours;
    let windows: Vec<TimeWindow> = (0..config.maintenance_per_antenna)
        .filter_map(|_| {
            let len = ((rng.random_range(lo..=hi) * 3600.0) as Seconds / GRID_S * GRID_S)
                .clamp(GRID_S, config.week_s);
            let slots = (config.week_s - len) / GRID_S;
            let start = rng.random_range(0..=slots) * GRID_S;
            TimeWindow::new(start, start + len).ok()
        })
        .collect();
    WindowSet::from_windows(windows)
}

/// Daily passes of length `on_s` centred on `center + k * period`, clipped
/// to the week.
fn periodic_passes(center: f64, on_s: f64, period: f64, week_s: Seconds) -> WindowSet {
    if on_s <= 0.0 {
        return WindowSet::new();
    }
    let first = ((0.0 - center - on_s) / period).floor() as i64;
    let last = ((week_s as f64 - center + on_s) / period).ceil() as i64;
    let windows = (first..=last).filter_map(|k| {
        let mid = center + k as f64 * period;
        let start = ((mid - on_s / 2.0).round() as Seconds).max(0);
        let end = ((mid + on_s / 2.0).round() as Seconds).min(week_s);
        TimeWindow::new(start, end).ok()
    });
    WindowSet::from_windows(windows)
}

/// Requested durations in [1 h, 8 h] on a 5-minute grid whose sum tracks the
/// configured total.
fn requested_durations(rng: &mut ChaCha8Rng, config: &SynthConfig) -> Vec<Seconds> {
    let n = config.n_requests;
    if n == 0 {
        return Vec::new();
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=8.0)).collect();
    let stretched = |scale: f64| -> Vec<f64> {
        raw.iter()
            .map(|r| (1.0 + (r - 1.0) * scale).clamp(1.0, 8.0))
            .collect()
    };
    let target = config.total_requested_hours;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while stretched(hi).iter().sum::<f64>() < target && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if stretched(mid).iter().sum::<f64>() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    stretched(hi)
        .into_iter()
        .map(|h| {
            let s = (h * 3600.0 / GRID_S as f64).round() as Seconds * GRID_S;
            s.clamp(SECONDS_PER_HOUR, 8 * SECONDS_PER_HOUR)
        })
        .collect()
}

fn random_combos(rng: &mut ChaCha8Rng, config: &SynthConfig, usable: &[usize]) -> Vec<Vec<String>> {
    let id = |a: usize| ROSTER[a].0.to_string();
    if rng.random_bool(config.array_fraction.clamp(0.0, 1.0)) {
        let pairs: Vec<(usize, usize)> = usable
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| usable[i + 1..].iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| ROSTER[a].1 == ROSTER[b].1)
            .collect();
        if let Some(&(a, b)) = pairs.choose(rng) {
            return vec![vec![id(a), id(b)]];
        }
    }
    let k = rng.random_range(1..=usable.len().min(3));
    let mut pick: Vec<usize> = usable.choose_multiple(rng, k).copied().collect();
    pick.sort_unstable();
    pick.into_iter().map(|a| vec![id(a)]).collect()
}

/// Antenna hours (net of maintenance) that fall inside at least one
/// request's valid view period on that antenna. Requests beyond this total
/// cannot all be served.
pub fn schedulable_hours(problem: &WeekProblem) -> f64 {
    let mut per_antenna: BTreeMap<&str, Vec<TimeWindow>> = BTreeMap::new();
    for r in &problem.requests {
        for c in &r.combos {
            for a in &c.antennas {
                per_antenna
                    .entry(a.as_str())
                    .or_default()
                    .extend(c.view_periods.iter().copied());
            }
        }
    }
    problem
        .antennas
        .iter()
        .map(|a| {
            let demand = WindowSet::from_windows(per_antenna.remove(a.id.as_str()).unwrap_or_default());
            demand.intersect(&a.available()).total_duration()
        })
        .sum::<Seconds>() as f64
        / 3600.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig {
            seed: 1,
            ..SynthConfig::default()
        };
        assert_eq!(generate_week(&cfg).unwrap().to_json(), generate_week(&cfg).unwrap().to_json());
    }

    #[test]
    fn default_week_hits_headline_totals() {
        let p = generate_week(&SynthConfig::default()).unwrap();
        assert_eq!(p.n_requests(), 286);
        let hours = p.total_requested_s() as f64 / 3600.0;
        assert!((hours - 1770.0).abs() <= 0.05 * 1770.0, "{hours}");
        assert_eq!(p.missions().len(), 30);
        assert_eq!(p.antennas.len(), 15);
    }

    #[test]
    fn durations_in_range() {
        for seed in 0..5 {
            let p = generate_week(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
            for r in &p.requests {
                assert!((3600..=8 * 3600).contains(&r.requested_duration_s));
                assert!(r.min_duration_s <= r.requested_duration_s);
                for c in &r.combos {
                    assert!(c.view_periods.iter().all(|w| w.duration() >= r.min_duration_s));
                }
            }
        }
    }

    #[test]
    fn default_week_is_oversubscribed() {
        for seed in 0..5 {
            let p = generate_week(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
            let requested = p.total_requested_s() as f64 / 3600.0;
            assert!(requested > schedulable_hours(&p), "seed {seed}");
        }
    }

    #[test]
    fn full_maintenance_blocks_antenna() {
        let cfg = SynthConfig {
            maintenance_per_antenna: 1,
            maintenance_hours: [168.0, 168.0],
            ..SynthConfig::desk()
        };
        let p = generate_week(&cfg).unwrap();
        for r in &p.requests {
            for c in &r.combos {
                assert!(c.view_periods.is_empty());
            }
        }
    }

    #[test]
    fn infeasible_configs_fail() {
        let zero_duty = SynthConfig {
            duty_cycle: [0.0, 0.0],
            ..SynthConfig::default()
        };
        assert!(matches!(generate_week(&zero_duty), Err(Error::Generation(_))));
        let too_many = SynthConfig {
            n_requests: 501,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_week(&too_many), Err(Error::Generation(_))));
        let too_long = SynthConfig {
            total_requested_hours: 286.0 * 9.0,
            ..SynthConfig::default()
        };
        assert!(generate_week(&too_long).is_err());
    }

    #[test]
    fn quantum_aligns_view_periods() {
        let cfg = SynthConfig {
            quantum_s: Some(300),
            ..SynthConfig::desk()
        };
        let p = generate_week(&cfg).unwrap();
        for r in &p.requests {
            for c in &r.combos {
                assert!(c.view_periods.iter().all(|w| w.start() % 300 == 0 && w.end() % 300 == 0));
            }
        }
    }
}
