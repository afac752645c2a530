//! Episodic scheduling environment.
//!
//! The agent picks a request index; the environment greedily places one track
//! for it on the longest valid candidate window across the request's antenna
//! combinations, and rewards the on-air seconds placed as a fraction of the
//! request's weekly requested time.
//!
//! A candidate window `[t1, t2)` (a maximal piece of the combination's view
//! periods that is free on every member antenna) is valid when, on every
//! member antenna:
//!
//! 1. the setup flank `[t1 - setup, t1)` is free, or the window is at least
//!    `min + setup + teardown` long;
//! 2. the teardown flank `[t2, t2 + teardown)` is free, or the window is at
//!    least `min + setup + teardown` long;
//! 3. the window is at least `min` long.
//!
//! When a flank is busy the corresponding overhead is carved out of the
//! window itself, shrinking the on-air capacity.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Schedule, Track, TrackRequest, WeekProblem, ANTENNA_SLOTS};
use crate::timewindow::{Seconds, TimeWindow, WindowSet, SECONDS_PER_HOUR};

/// Length of the observation vector for a given request bound.
pub const fn obs_dim(max_requests: usize) -> usize {
    3 + max_requests + ANTENNA_SLOTS
}

/// `[hours remaining, missions outstanding, requests outstanding,
/// per-request remaining hours .., per-antenna free hours ..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn total_remaining_hours(&self) -> f64 {
        self.0[0]
    }

    pub fn missions_outstanding(&self) -> f64 {
        self.0[1]
    }

    pub fn requests_outstanding(&self) -> f64 {
        self.0[2]
    }

    pub fn request_hours(&self) -> &[f64] {
        &self.0[3..self.0.len() - ANTENNA_SLOTS]
    }

    pub fn antenna_free_hours(&self) -> &[f64] {
        &self.0[self.0.len() - ANTENNA_SLOTS..]
    }
}

/// Where a track went and which validity branches it used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub combo_index: usize,
    pub candidate: TimeWindow,
    pub setup_flank_free: bool,
    pub teardown_flank_free: bool,
    /// On-air span left after overhead that had to move inside the window.
    pub usable: TimeWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub allocated_s: Seconds,
    /// True when the chosen action was masked (satisfied or nonexistent).
    pub masked: bool,
    pub placement: Option<Placement>,
    pub track: Option<Track>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Flank and length check for one candidate window. Returns the usable
/// on-air span when the candidate is valid.
pub fn candidate_placement(
    window: &TimeWindow,
    request: &TrackRequest,
    member_free: &[&WindowSet],
) -> Option<(bool, bool, TimeWindow)> {
    let (t1, t2) = (window.start(), window.end());
    let len = t2 - t1;
    let d_min = request.min_duration_s;
    let (d_s, d_t) = (request.setup_s, request.teardown_s);
    if len < d_min {
        return None;
    }
    let roomy = len >= d_min + d_s + d_t;
    let flank_free = |probe: Option<TimeWindow>| match probe {
        None => true,
        Some(p) => member_free.iter().all(|f| f.contains(&p)),
    };
    let setup_free = flank_free(TimeWindow::probe(t1 - d_s, t1));
    let teardown_free = flank_free(TimeWindow::probe(t2, t2 + d_t));
    if !(setup_free || roomy) || !(teardown_free || roomy) {
        return None;
    }
    let lo = if setup_free { t1 } else { t1 + d_s };
    let hi = if teardown_free { t2 } else { t2 - d_t };
    Some((setup_free, teardown_free, TimeWindow::new(lo, hi).ok()?))
}

pub fn is_valid_candidate(window: &TimeWindow, request: &TrackRequest, member_free: &[&WindowSet]) -> bool {
    candidate_placement(window, request, member_free).is_some()
}

pub struct SchedulingEnv {
    problem: Arc<WeekProblem>,
    /// Antenna indices per request, per combination.
    combos: Vec<Vec<Vec<usize>>>,
    available: Vec<WindowSet>,
    free: Vec<WindowSet>,
    schedule: Schedule,
    remaining: Vec<Seconds>,
    n_steps: usize,
    done: bool,
    seed: u64,
    rng: ChaCha8Rng,
}

impl SchedulingEnv {
    /// Builds an environment over a validated problem. Call [`reset`] before
    /// stepping.
    ///
    /// [`reset`]: SchedulingEnv::reset
    pub fn new(problem: Arc<WeekProblem>) -> Result<Self> {
        problem.validate()?;
        let combos = problem
            .requests
            .iter()
            .map(|r| {
                r.combos
                    .iter()
                    .map(|c| {
                        c.antennas
                            .iter()
                            .map(|id| problem.antenna_index(id).expect("validated"))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let available: Vec<WindowSet> = problem.antennas.iter().map(|a| a.available()).collect();
        let mut env = Self {
            free: available.clone(),
            available,
            remaining: problem.requests.iter().map(|r| r.requested_duration_s).collect(),
            combos,
            problem,
            schedule: Schedule::default(),
            n_steps: 0,
            done: false,
            seed: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        env.reset(0);
        Ok(env)
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        self.free.clone_from(&self.available);
        self.schedule = Schedule::default();
        for (rem, r) in self.remaining.iter_mut().zip(&self.problem.requests) {
            *rem = r.requested_duration_s;
        }
        self.n_steps = 0;
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.done = self.remaining.iter().all(|&r| r == 0);
        self.observation()
    }

    pub fn problem(&self) -> &Arc<WeekProblem> {
        &self.problem
    }

    pub fn n_requests(&self) -> usize {
        self.problem.requests.len()
    }

    pub fn max_requests(&self) -> usize {
        self.problem.max_requests
    }

    pub fn step_cap(&self) -> usize {
        2 * self.n_requests()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn remaining(&self) -> &[Seconds] {
        &self.remaining
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn free(&self) -> &[WindowSet] {
        &self.free
    }

    /// `mask[i]` is true iff request `i` exists and is not yet satisfied.
    pub fn action_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.problem.max_requests];
        for (m, &rem) in mask.iter_mut().zip(&self.remaining) {
            *m = rem > 0;
        }
        mask
    }

    pub fn observation(&self) -> Observation {
        let max = self.problem.max_requests;
        let mut v = vec![0.0; obs_dim(max)];
        let mut missions: Vec<&str> = Vec::new();
        let mut outstanding = 0usize;
        for (i, (&rem, r)) in self.remaining.iter().zip(&self.problem.requests).enumerate() {
            if rem > 0 {
                v[3 + i] = rem as f64 / SECONDS_PER_HOUR as f64;
                outstanding += 1;
                if !missions.contains(&r.mission.as_str()) {
                    missions.push(&r.mission);
                }
            }
        }
        v[0] = v[3..3 + max].iter().sum();
        v[1] = missions.len() as f64;
        v[2] = outstanding as f64;
        for (slot, f) in v[3 + max..].iter_mut().zip(&self.free) {
            *slot = f.total_duration() as f64 / SECONDS_PER_HOUR as f64;
        }
        Observation(v)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if action >= self.problem.max_requests {
            return Err(Error::Contract(format!(
                "action {action} outside [0, {})",
                self.problem.max_requests
            )));
        }
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        self.n_steps += 1;
        let masked = action >= self.remaining.len() || self.remaining[action] == 0;
        let mut info = StepInfo {
            allocated_s: 0,
            masked,
            placement: None,
            track: None,
            mask: Vec::new(),
        };
        let mut reward = 0.0;
        if !masked {
            if let Some((placement, track)) = self.allocate_request(action) {
                let allocated = track.on_air_s();
                self.remaining[action] -= allocated;
                reward = allocated as f64 / self.problem.requests[action].requested_duration_s as f64;
                info.allocated_s = allocated;
                info.placement = Some(placement);
                info.track = Some(track.clone());
                self.schedule.tracks.push(track);
            }
        }
        self.done = self.remaining.iter().all(|&r| r == 0) || self.n_steps >= self.step_cap();
        info.mask = self.action_mask();
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            info,
        })
    }

    /// Places one track for `request_id`, or returns `None` when no valid
    /// candidate can hold a track of at least the minimum duration.
    fn allocate_request(&mut self, request_id: usize) -> Option<(Placement, Track)> {
        let request = &self.problem.requests[request_id];
        let remaining = self.remaining[request_id];
        let mut best: Option<Placement> = None;
        for (ci, (combo, members)) in request.combos.iter().zip(&self.combos[request_id]).enumerate() {
            let member_free: Vec<&WindowSet> = members.iter().map(|&a| &self.free[a]).collect();
            let mut candidates = combo.view_periods.clone();
            for f in &member_free {
                if candidates.is_empty() {
                    break;
                }
                candidates = candidates.intersect(f);
            }
            for cand in candidates.iter() {
                if best.is_some_and(|b| cand.duration() <= b.candidate.duration()) {
                    continue;
                }
                if let Some((setup_free, teardown_free, usable)) =
                    candidate_placement(cand, request, &member_free)
                {
                    best = Some(Placement {
                        combo_index: ci,
                        candidate: *cand,
                        setup_flank_free: setup_free,
                        teardown_flank_free: teardown_free,
                        usable,
                    });
                }
            }
        }
        let placement = best?;
        let on_air = placement.usable.duration().min(remaining);
        if on_air < request.min_duration_s {
            return None;
        }
        let slack = placement.usable.duration() - on_air;
        let start = placement.usable.start() + if slack > 0 { self.rng.random_range(0..=slack) } else { 0 };
        let window = TimeWindow::new(start, start + on_air).expect("on-air is non-empty");
        let setup = TimeWindow::probe(start - request.setup_s, start);
        let teardown = TimeWindow::probe(window.end(), window.end() + request.teardown_s);
        let combo = &request.combos[placement.combo_index];
        let track = Track {
            request_id,
            combo_index: placement.combo_index,
            antennas: combo.antennas.clone(),
            window,
            setup,
            teardown,
        };
        let busy = track.busy_window();
        for &a in &self.combos[request_id][placement.combo_index] {
            debug_assert!(self.free[a].contains(&busy), "busy time must be free");
            self.free[a].remove(&busy);
        }
        Some((placement, track))
    }
}

/// Per-step record of an episode, exportable as CSV.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub action: usize,
    pub masked: bool,
    pub reward: f64,
    pub allocated_s: Seconds,
    pub combo: Option<String>,
}

impl EpisodeTrace {
    pub fn record(&mut self, action: usize, result: &StepResult) {
        self.rows.push(TraceRow {
            step: self.rows.len() + 1,
            action,
            masked: result.info.masked,
            reward: result.reward,
            allocated_s: result.info.allocated_s,
            combo: result.info.track.as_ref().map(|t| t.antennas.join("+")),
        });
    }

    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    /// `step,action,masked,reward,allocated_s,combo`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,action,masked,reward,allocated_s,combo\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step,
                r.action,
                r.masked,
                r.reward,
                r.allocated_s,
                r.combo.as_deref().unwrap_or("")
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Antenna, AntennaCombo};

    fn ws(pairs: &[(Seconds, Seconds)]) -> WindowSet {
        WindowSet::from_pairs(pairs).unwrap()
    }

    fn w(s: Seconds, e: Seconds) -> TimeWindow {
        TimeWindow::new(s, e).unwrap()
    }

    fn antenna(id: &str, maintenance: &[(Seconds, Seconds)]) -> Antenna {
        Antenna {
            id: id.into(),
            bounds: w(0, 604_800),
            maintenance: ws(maintenance),
        }
    }

    fn req(id: usize, requested: Seconds, min: Seconds, setup: Seconds, teardown: Seconds, combos: Vec<(Vec<&str>, WindowSet)>) -> TrackRequest {
        TrackRequest {
            id,
            mission: format!("M{}", id % 2),
            requested_duration_s: requested,
            min_duration_s: min,
            setup_s: setup,
            teardown_s: teardown,
            combos: combos
                .into_iter()
                .map(|(a, vp)| AntennaCombo {
                    antennas: a.into_iter().map(String::from).collect(),
                    view_periods: vp,
                })
                .collect(),
        }
    }

    fn env(antennas: Vec<Antenna>, requests: Vec<TrackRequest>) -> SchedulingEnv {
        SchedulingEnv::new(Arc::new(WeekProblem {
            week_label: "t".into(),
            max_requests: 500,
            antennas,
            requests,
        }))
        .unwrap()
    }

    #[test]
    fn reset_observation_totals() {
        let mut e = env(
            vec![antenna("A", &[])],
            vec![
                req(0, 7200, 3600, 0, 0, vec![(vec!["A"], ws(&[(0, 10_000)]))]),
                req(1, 3600, 3600, 0, 0, vec![(vec!["A"], ws(&[(0, 10_000)]))]),
            ],
        );
        let obs = e.reset(3);
        assert_eq!(obs.len(), 518);
        assert_eq!(obs.requests_outstanding(), 2.0);
        assert_eq!(obs.total_remaining_hours(), 3.0);
        assert_eq!(obs.missions_outstanding(), 2.0);
        assert_eq!(obs.antenna_free_hours()[0], 168.0);
        assert_eq!(obs.antenna_free_hours()[1], 0.0);
    }

    #[test]
    fn mask_and_rewards() {
        let mut e = env(
            vec![antenna("A", &[])],
            vec![req(0, 7200, 3600, 0, 0, vec![(vec!["A"], ws(&[(0, 20_000)]))])],
        );
        e.reset(0);
        let mask = e.action_mask();
        assert!(mask[0] && !mask[1] && !mask[499]);
        let r = e.step(0).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.done);
        assert!(r.info.mask.iter().all(|m| !m));
        assert!(matches!(e.step(0), Err(Error::Contract(_))));
    }

    #[test]
    fn masked_action_costs_a_step_only() {
        let mut e = env(
            vec![antenna("A", &[])],
            vec![req(0, 7200, 3600, 0, 0, vec![(vec!["A"], ws(&[(0, 3000)]))])],
        );
        e.reset(0);
        let free_before = e.free().to_vec();
        let r = e.step(42).unwrap();
        assert!(r.info.masked);
        assert_eq!(r.reward, 0.0);
        assert_eq!(e.n_steps(), 1);
        assert_eq!(e.free(), &free_before[..]);
        assert!(matches!(e.step(500), Err(Error::Contract(_))));
        // Unplaceable request: episode ends at the step cap of 2.
        let r = e.step(0).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(r.done);
    }

    #[test]
    fn shortened_track_lands_in_feasible_range() {
        // Free window [0, 14400) bounded by maintenance on the right; the week
        // start bounds the left flank.
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let mut e = env(
                vec![antenna("A", &[(14_400, 20_000)])],
                vec![req(0, 7200, 3600, 3600, 900, vec![(vec!["A"], ws(&[(0, 14_400)]))])],
            );
            e.reset(seed);
            let r = e.step(0).unwrap();
            let t = r.info.track.unwrap();
            assert_eq!(t.on_air_s(), 7200);
            let start = t.window.start();
            // Enumerated feasible starts: setup must fit after 0 and teardown
            // before 14400.
            let feasible: Vec<Seconds> = (0..=14_400 - 7200)
                .filter(|&s| s - 3600 >= 0 && s + 7200 + 900 <= 14_400)
                .collect();
            assert!(feasible.contains(&start), "{start}");
            assert_eq!(t.setup, Some(w(start - 3600, start)));
            assert_eq!(t.teardown, Some(w(start + 7200, start + 8100)));
            seen.insert(start);
        }
        assert!(*seen.iter().next().unwrap() >= 3600);
        assert!(*seen.iter().last().unwrap() <= 14_400 - 7200 - 900);
        assert!(seen.len() > 50, "offsets should vary with the seed");
    }

    #[test]
    fn longest_combo_wins() {
        let mut e = env(
            vec![antenna("A", &[]), antenna("B", &[])],
            vec![req(
                0,
                7 * 3600,
                3600,
                0,
                0,
                vec![
                    (vec!["A"], ws(&[(0, 3 * 3600)])),
                    (vec!["B"], ws(&[(0, 5 * 3600)])),
                ],
            )],
        );
        e.reset(0);
        let r = e.step(0).unwrap();
        assert_eq!(r.info.placement.unwrap().combo_index, 1);
        assert_eq!(r.info.allocated_s, 5 * 3600);
        assert!((r.reward - 5.0 / 7.0).abs() < 1e-15);
        // Partial allocation keeps the request selectable.
        assert!(r.info.mask[0]);
        let r = e.step(0).unwrap();
        assert_eq!(r.info.placement.unwrap().combo_index, 0);
        assert_eq!(r.info.allocated_s, 2 * 3600);
        assert!(r.done);
    }

    #[test]
    fn ties_prefer_lower_combo_then_earlier_start() {
        let mut e = env(
            vec![antenna("A", &[]), antenna("B", &[])],
            vec![req(
                0,
                3600,
                3600,
                0,
                0,
                vec![
                    (vec!["A"], ws(&[(50_000, 60_000), (10_000, 20_000)])),
                    (vec!["B"], ws(&[(0, 10_000)])),
                ],
            )],
        );
        e.reset(0);
        let p = e.step(0).unwrap().info.placement.unwrap();
        assert_eq!(p.combo_index, 0);
        assert_eq!(p.candidate, w(10_000, 20_000));
    }

    #[test]
    fn array_track_lands_on_overlap() {
        let mut e = env(
            vec![
                antenna("A", &[(10_800, 604_800)]),
                antenna("B", &[(0, 7200), (18_000, 604_800)]),
            ],
            vec![req(0, 3600, 3600, 0, 0, vec![(vec!["A", "B"], ws(&[(0, 604_800)]))])],
        );
        e.reset(5);
        let r = e.step(0).unwrap();
        let p = r.info.placement.unwrap();
        assert_eq!(p.candidate, w(7200, 10_800));
        let t = r.info.track.unwrap();
        assert!(w(7200, 10_800).contains_window(&t.window));
        assert!(!e.free()[0].contains(&t.window));
        assert!(!e.free()[1].contains(&t.window));
    }

    /// Enumerates the 8 combinations of setup flank, teardown flank and window
    /// length against conditions 1-3 evaluated directly.
    #[test]
    fn validity_condition_table() {
        let (d_min, d_s, d_t) = (3600, 1800, 900);
        let r = req(0, 3 * 3600, d_min, d_s, d_t, vec![(vec!["A"], WindowSet::new())]);
        let t1 = 10_000;
        for setup_free in [false, true] {
            for teardown_free in [false, true] {
                for roomy in [false, true] {
                    let len = if roomy { d_min + d_s + d_t } else { d_min };
                    let t2 = t1 + len;
                    let mut free = vec![w(t1, t2)];
                    if setup_free {
                        free.push(w(t1 - d_s, t1));
                    }
                    if teardown_free {
                        free.push(w(t2, t2 + d_t));
                    }
                    let free = WindowSet::from_windows(free);
                    let cond1 = setup_free || len >= d_min + d_s + d_t;
                    let cond2 = teardown_free || len >= d_min + d_s + d_t;
                    let cond3 = len >= d_min;
                    let expect = cond1 && cond2 && cond3;
                    let got = candidate_placement(&w(t1, t2), &r, &[&free]);
                    assert_eq!(got.is_some(), expect, "{setup_free} {teardown_free} {roomy}");
                    if let Some((sf, tf, usable)) = got {
                        assert_eq!((sf, tf), (setup_free, teardown_free));
                        let expected_on_air = len - if sf { 0 } else { d_s } - if tf { 0 } else { d_t };
                        assert_eq!(usable.duration(), expected_on_air);
                        if roomy && !sf && !tf {
                            assert_eq!(usable.duration(), d_min);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn residual_below_minimum_is_not_placed() {
        let mut e = env(
            vec![antenna("A", &[])],
            vec![req(0, 5 * 3600, 3 * 3600, 0, 0, vec![(vec!["A"], ws(&[(0, 4 * 3600), (86_400, 86_400 + 4 * 3600)]))])],
        );
        e.reset(0);
        assert_eq!(e.step(0).unwrap().info.allocated_s, 4 * 3600);
        let r = e.step(0).unwrap();
        assert_eq!(r.info.allocated_s, 0);
        assert_eq!(e.remaining()[0], 3600);
    }

    #[test]
    fn trace_csv_header() {
        let mut e = env(
            vec![antenna("A", &[])],
            vec![req(0, 3600, 3600, 0, 0, vec![(vec!["A"], ws(&[(0, 9000)]))])],
        );
        e.reset(0);
        let mut trace = EpisodeTrace::default();
        let r = e.step(0).unwrap();
        trace.record(0, &r);
        assert_eq!(trace.to_csv(), "step,action,masked,reward,allocated_s,combo\n1,0,false,1,3600,A\n");
    }
}
