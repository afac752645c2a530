//! Evaluation rollouts and schedule-quality metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EpisodeTrace, SchedulingEnv};
use crate::error::{Error, Result};
use crate::policy::{greedy_action, sample_action, ActorCritic};
use crate::problem::{hours, Schedule, WeekProblem};
use crate::seed::{derive, tag};
use crate::timewindow::Seconds;
use crate::workers::Workers;

/// Who picks the actions.
#[derive(Debug, Clone, Copy)]
pub enum Agent<'a> {
    Policy { net: &'a ActorCritic, greedy: bool },
    /// Uniform over unmasked requests, or over every slot when `masked` is
    /// false.
    Random { masked: bool },
}

impl Agent<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Agent::Policy { greedy: true, .. } => "trained-greedy",
            Agent::Policy { .. } => "trained",
            Agent::Random { masked: true } => "random",
            Agent::Random { masked: false } => "random-unmasked",
        }
    }

    fn check(&self, problem: &WeekProblem) -> Result<()> {
        if let Agent::Policy { net, .. } = self {
            let arch = net.architecture();
            let want = crate::env::obs_dim(problem.max_requests);
            if arch.obs_dim != want || arch.n_actions != problem.max_requests {
                return Err(Error::Config(format!(
                    "checkpoint expects {} inputs and {} actions, problem has {want} and {}",
                    arch.obs_dim, arch.n_actions, problem.max_requests
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub env_seed: u64,
    pub total_reward: f64,
    pub length: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Steps whose action was masked at the time it was taken.
    pub masked_actions: usize,
    /// Mean entropy of the action distribution over the episode's steps.
    pub mean_entropy: f64,
    pub schedule: Schedule,
}

/// Runs one episode to completion.
pub fn run_episode(
    agent: &Agent<'_>,
    problem: &Arc<WeekProblem>,
    env_seed: u64,
    agent_seed: u64,
) -> Result<EpisodeResult> {
    run_episode_traced(agent, problem, env_seed, agent_seed).map(|(ep, _)| ep)
}

/// [`run_episode`] plus the per-step trace.
pub fn run_episode_traced(
    agent: &Agent<'_>,
    problem: &Arc<WeekProblem>,
    env_seed: u64,
    agent_seed: u64,
) -> Result<(EpisodeResult, EpisodeTrace)> {
    agent.check(problem)?;
    let mut trace = EpisodeTrace::default();
    let mut env = SchedulingEnv::new(problem.clone())?;
    let mut obs = env.reset(env_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
    let mut out = EpisodeResult {
        episode: 0,
        env_seed,
        total_reward: 0.0,
        length: 0,
        actions: Vec::new(),
        rewards: Vec::new(),
        masked_actions: 0,
        mean_entropy: 0.0,
        schedule: Schedule::default(),
    };
    let mut entropy_sum = 0.0;
    while !env.is_done() {
        let mask = env.action_mask();
        let action = match agent {
            Agent::Policy { net, greedy } => {
                let policy = net.act(obs.as_slice(), &mask)?;
                entropy_sum += policy.entropy();
                if *greedy {
                    greedy_action(&policy).0
                } else {
                    sample_action(&policy, &mut rng).0
                }
            }
            Agent::Random { masked: true } => {
                let open: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
                entropy_sum += (open.len() as f64).ln();
                open[rng.random_range(0..open.len())]
            }
            Agent::Random { masked: false } => {
                entropy_sum += (mask.len() as f64).ln();
                rng.random_range(0..mask.len())
            }
        };
        let step = env.step(action)?;
        trace.record(action, &step);
        out.actions.push(action);
        out.rewards.push(step.reward);
        out.total_reward += step.reward;
        out.masked_actions += usize::from(step.info.masked);
        obs = step.observation;
    }
    out.length = env.n_steps();
    out.mean_entropy = if out.length > 0 {
        entropy_sum / out.length as f64
    } else {
        0.0
    };
    out.schedule = env.schedule().clone();
    Ok((out, trace))
}

/// Seeds of episode `i` in a rollout seeded with `seed`: environment, then
/// agent.
pub fn episode_seeds(seed: u64, i: usize) -> (u64, u64) {
    (derive(seed, &[tag::EPISODE, i as u64]), derive(seed, &[tag::EVAL, i as u64]))
}

/// A set of evaluation episodes by one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSet {
    pub agent: String,
    pub seed: u64,
    pub episodes: Vec<EpisodeResult>,
}

impl RolloutSet {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.total_reward))
    }

    pub fn max_reward(&self) -> f64 {
        self.episodes
            .iter()
            .map(|e| e.total_reward)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_length(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.length as f64))
    }

    pub fn mean_entropy(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.mean_entropy))
    }

    pub fn masked_actions(&self) -> usize {
        self.episodes.iter().map(|e| e.masked_actions).sum()
    }

    /// Index of the episode whose reward is closest to the mean; ties go to
    /// the lower index.
    pub fn representative(&self) -> Result<usize> {
        if self.episodes.is_empty() {
            return Err(Error::Validation("empty rollout set".into()));
        }
        let m = self.mean_reward();
        let mut best = 0;
        for (i, e) in self.episodes.iter().enumerate() {
            if (e.total_reward - m).abs() < (self.episodes[best].total_reward - m).abs() {
                best = i;
            }
        }
        Ok(best)
    }

    /// `episode,env_seed,reward,length`
    pub fn rewards_csv(&self) -> String {
        let mut out = String::from("episode,env_seed,reward,length\n");
        for e in &self.episodes {
            let _ = writeln!(out, "{},{},{},{}", e.episode, e.env_seed, e.total_reward, e.length);
        }
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs `n_episodes` episodes. Episode `i` uses seeds derived from
/// `(seed, i)` only, so the result is independent of the thread count.
pub fn rollout(
    agent: &Agent<'_>,
    problem: &Arc<WeekProblem>,
    n_episodes: usize,
    seed: u64,
    workers: &Workers,
) -> Result<RolloutSet> {
    agent.check(problem)?;
    let episodes = workers.map(n_episodes, |i| {
        let (env_seed, agent_seed) = episode_seeds(seed, i);
        let mut ep = run_episode(agent, problem, env_seed, agent_seed)?;
        ep.episode = i;
        Ok(ep)
    })?;
    Ok(RolloutSet {
        agent: agent.label().into(),
        seed,
        episodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionStats {
    pub mission: String,
    pub requested_s: Seconds,
    pub scheduled_s: Seconds,
    /// `(requested - scheduled) / requested`.
    pub unsatisfied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub missions: Vec<MissionStats>,
    pub u_rms: f64,
    pub u_max: f64,
}

/// Unsatisfied fraction per mission, in first-appearance order, with the RMS
/// and maximum across missions. Missions without requested time are left
/// out.
pub fn mission_stats(schedule: &Schedule, problem: &WeekProblem) -> MissionSummary {
    let allocated = schedule.allocated_per_request(problem.n_requests());
    let mut totals: BTreeMap<&str, (Seconds, Seconds)> = BTreeMap::new();
    for (r, &a) in problem.requests.iter().zip(&allocated) {
        let t = totals.entry(&r.mission).or_default();
        t.0 += r.requested_duration_s;
        t.1 += a.min(r.requested_duration_s);
    }
    let missions: Vec<MissionStats> = problem
        .missions()
        .into_iter()
        .filter_map(|m| {
            let (req, sched) = totals[m];
            (req > 0).then(|| MissionStats {
                mission: m.to_string(),
                requested_s: req,
                scheduled_s: sched,
                unsatisfied: (req - sched) as f64 / req as f64,
            })
        })
        .collect();
    let n = missions.len();
    let (u_rms, u_max) = if n == 0 {
        (0.0, 0.0)
    } else {
        let sq: f64 = missions.iter().map(|m| m.unsatisfied * m.unsatisfied).sum();
        let max = missions.iter().map(|m| m.unsatisfied).fold(0.0, f64::max);
        ((sq / n as f64).sqrt(), max)
    };
    MissionSummary { missions, u_rms, u_max }
}

/// Busy time (setup, on-air, teardown) over available antenna time.
pub fn antenna_utilization(schedule: &Schedule, problem: &WeekProblem) -> Result<f64> {
    let available: Seconds = problem
        .antennas
        .iter()
        .map(|a| a.available().total_duration())
        .sum();
    if available == 0 {
        return Err(Error::Validation("antennas have no available time".into()));
    }
    let busy: Seconds = schedule
        .busy_by_antenna()
        .values()
        .map(|w| w.total_duration())
        .sum();
    Ok(busy as f64 / available as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    /// On-air hours, overhead excluded.
    pub hours_satisfied: f64,
    /// Mean over missions of `1 - U_i`.
    pub mean_satisfied_time_fraction: f64,
    /// Requests that received at least one track.
    pub satisfied_requests: usize,
    /// `satisfied_requests / n_requests`.
    pub mean_satisfied_request_fraction: f64,
    pub u_rms: f64,
    pub u_max: f64,
    pub utilization: f64,
    pub missions: Vec<MissionStats>,
}

impl ScheduleReport {
    pub fn new(schedule: &Schedule, problem: &WeekProblem) -> Result<Self> {
        let summary = mission_stats(schedule, problem);
        let allocated = schedule.allocated_per_request(problem.n_requests());
        let satisfied = problem
            .requests
            .iter()
            .zip(&allocated)
            .filter(|(r, &a)| a >= r.min_duration_s)
            .count();
        let n_missions = summary.missions.len();
        Ok(Self {
            hours_satisfied: hours(schedule.total_on_air_s()),
            mean_satisfied_time_fraction: if n_missions == 0 {
                0.0
            } else {
                summary.missions.iter().map(|m| 1.0 - m.unsatisfied).sum::<f64>() / n_missions as f64
            },
            satisfied_requests: satisfied,
            mean_satisfied_request_fraction: if problem.n_requests() == 0 {
                0.0
            } else {
                satisfied as f64 / problem.n_requests() as f64
            },
            u_rms: summary.u_rms,
            u_max: summary.u_max,
            utilization: antenna_utilization(schedule, problem)?,
            missions: summary.missions,
        })
    }

    /// `mission,requested_h,scheduled_h,U_i`
    pub fn missions_csv(&self) -> String {
        let mut out = String::from("mission,requested_h,scheduled_h,U_i\n");
        for m in &self.missions {
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.6}",
                m.mission,
                hours(m.requested_s),
                hours(m.scheduled_s),
                m.unsatisfied
            );
        }
        out
    }
}

/// Binned counts over `[lo, hi)`; the last bin also takes `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<(f64, f64, usize)>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Self {
        let n_bins = n_bins.max(1);
        let width = (hi - lo) / n_bins as f64;
        let mut bins: Vec<(f64, f64, usize)> = (0..n_bins)
            .map(|i| (lo + i as f64 * width, lo + (i + 1) as f64 * width, 0))
            .collect();
        for &v in values {
            if v < lo || v > hi || width <= 0.0 {
                continue;
            }
            let i = (((v - lo) / width) as usize).min(n_bins - 1);
            bins[i].2 += 1;
        }
        Self { bins }
    }

    /// One unit-width bin per action slot.
    pub fn of_actions(set: &RolloutSet, n_slots: usize) -> Self {
        let mut counts = vec![0usize; n_slots];
        for e in &set.episodes {
            for &a in &e.actions {
                counts[a] += 1;
            }
        }
        Self {
            bins: counts
                .into_iter()
                .enumerate()
                .map(|(i, c)| (i as f64, (i + 1) as f64, c))
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.2).sum()
    }

    /// `bin_lo,bin_hi,count`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (lo, hi, c) in &self.bins {
            let _ = writeln!(out, "{lo},{hi},{c}");
        }
        out
    }
}

/// One column of the comparison table. Fractions are stored in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub hours_satisfied: f64,
    pub mean_satisfied_time_fraction: f64,
    pub satisfied_requests: f64,
    pub mean_satisfied_request_fraction: f64,
    pub u_rms: f64,
}

impl From<&ScheduleReport> for TableColumn {
    fn from(r: &ScheduleReport) -> Self {
        Self {
            hours_satisfied: r.hours_satisfied,
            mean_satisfied_time_fraction: r.mean_satisfied_time_fraction,
            satisfied_requests: r.satisfied_requests as f64,
            mean_satisfied_request_fraction: r.mean_satisfied_request_fraction,
            u_rms: r.u_rms,
        }
    }
}

impl TableColumn {
    fn cells(&self) -> [String; 5] {
        [
            format!("{:.0}", self.hours_satisfied),
            format!("{:.1}", 100.0 * self.mean_satisfied_time_fraction),
            format!("{:.0}", self.satisfied_requests),
            format!("{:.1}", 100.0 * self.mean_satisfied_request_fraction),
            format!("{:.1}", 100.0 * self.u_rms),
        ]
    }
}

pub const TABLE_ROWS: [&str; 5] = [
    "Hours satisfied",
    "Mean satisfied time fraction (%)",
    "Satisfied requests",
    "Mean satisfied request fraction (%)",
    "U_RMS (%)",
];

/// Random-versus-trained summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub random: TableColumn,
    pub trained: TableColumn,
}

impl ComparisonTable {
    /// The published week-44 figures for the random and trained agents.
    pub fn published() -> Self {
        Self {
            random: TableColumn {
                hours_satisfied: 944.0,
                mean_satisfied_time_fraction: 0.605,
                satisfied_requests: 180.0,
                mean_satisfied_request_fraction: 0.629,
                u_rms: 0.043,
            },
            trained: TableColumn {
                hours_satisfied: 1007.0,
                mean_satisfied_time_fraction: 0.594,
                satisfied_requests: 188.0,
                mean_satisfied_request_fraction: 0.657,
                u_rms: 0.039,
            },
        }
    }

    /// `metric,random,trained`
    pub fn to_csv(&self) -> String {
        let (r, t) = (self.random.cells(), self.trained.cells());
        let mut out = String::from("metric,random,trained\n");
        for i in 0..5 {
            let _ = writeln!(out, "{},{},{}", TABLE_ROWS[i], r[i], t[i]);
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let (r, t) = (self.random.cells(), self.trained.cells());
        let mut out = String::from("| Metric | Random | Trained |\n|---|---:|---:|\n");
        for i in 0..5 {
            let _ = writeln!(out, "| {} | {} | {} |", TABLE_ROWS[i], r[i], t[i]);
        }
        out
    }
}

/// Summary of one rollout set around its representative episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub agent: String,
    pub episodes: usize,
    pub mean_reward: f64,
    pub min_reward: f64,
    pub max_reward: f64,
    pub mean_length: f64,
    pub masked_actions: usize,
    pub representative_episode: usize,
    pub representative_reward: f64,
    pub report: ScheduleReport,
}

impl SetSummary {
    pub fn new(set: &RolloutSet, problem: &WeekProblem) -> Result<Self> {
        let rep = set.representative()?;
        Ok(Self {
            agent: set.agent.clone(),
            episodes: set.episodes.len(),
            mean_reward: set.mean_reward(),
            min_reward: set.rewards().into_iter().fold(f64::INFINITY, f64::min),
            max_reward: set.max_reward(),
            mean_length: set.mean_length(),
            masked_actions: set.masked_actions(),
            representative_episode: rep,
            representative_reward: set.episodes[rep].total_reward,
            report: ScheduleReport::new(&set.episodes[rep].schedule, problem)?,
        })
    }
}

/// Evaluation output for a single agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: SetSummary,
    pub reward_histogram: Histogram,
    pub action_histogram: Histogram,
}

pub const REWARD_BINS: usize = 20;

impl EvalReport {
    pub fn new(set: &RolloutSet, problem: &WeekProblem) -> Result<Self> {
        let summary = SetSummary::new(set, problem)?;
        let rewards = set.rewards();
        Ok(Self {
            reward_histogram: Histogram::new(&rewards, 0.0, problem.n_requests() as f64, REWARD_BINS),
            action_histogram: Histogram::of_actions(set, problem.max_requests),
            summary,
        })
    }

    /// Writes `summary.json`, `rewards.csv`, `missions.csv`,
    /// `reward_hist.csv`, `action_hist.csv` and the representative
    /// `schedule.csv`.
    pub fn write(&self, set: &RolloutSet, problem: &WeekProblem, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rep = &set.episodes[self.summary.representative_episode];
        write(dir, "summary.json", &to_json(self))?;
        write(dir, "rewards.csv", &set.rewards_csv())?;
        write(dir, "missions.csv", &self.summary.report.missions_csv())?;
        write(dir, "reward_hist.csv", &self.reward_histogram.to_csv())?;
        write(dir, "action_hist.csv", &self.action_histogram.to_csv())?;
        write(dir, "schedule.csv", &rep.schedule.to_csv(problem))
    }
}

/// Random baseline against a trained agent on the same problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub random: SetSummary,
    pub trained: SetSummary,
    pub table: ComparisonTable,
    pub reward_ratio: f64,
    pub reward_histograms: [Histogram; 2],
    pub action_histograms: [Histogram; 2],
}

impl Comparison {
    pub fn new(random: &RolloutSet, trained: &RolloutSet, problem: &WeekProblem) -> Result<Self> {
        let r = SetSummary::new(random, problem)?;
        let t = SetSummary::new(trained, problem)?;
        let n = problem.n_requests() as f64;
        Ok(Self {
            table: ComparisonTable {
                random: TableColumn::from(&r.report),
                trained: TableColumn::from(&t.report),
            },
            reward_ratio: t.mean_reward / r.mean_reward,
            reward_histograms: [
                Histogram::new(&random.rewards(), 0.0, n, REWARD_BINS),
                Histogram::new(&trained.rewards(), 0.0, n, REWARD_BINS),
            ],
            action_histograms: [
                Histogram::of_actions(random, problem.max_requests),
                Histogram::of_actions(trained, problem.max_requests),
            ],
            random: r,
            trained: t,
        })
    }

    /// Writes `comparison.json`, `table1.csv`, `table1.md`, per-agent
    /// histograms and per-mission tables.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(dir, "comparison.json", &to_json(self))?;
        write(dir, "table1.csv", &self.table.to_csv())?;
        write(dir, "table1.md", &self.table.to_markdown())?;
        for (label, i) in [("random", 0), ("trained", 1)] {
            write(dir, &format!("reward_hist_{label}.csv"), &self.reward_histograms[i].to_csv())?;
            write(dir, &format!("action_hist_{label}.csv"), &self.action_histograms[i].to_csv())?;
        }
        write(dir, "missions_random.csv", &self.random.report.missions_csv())?;
        write(dir, "missions_trained.csv", &self.trained.report.missions_csv())
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Antenna, AntennaCombo, TrackRequest, Track};
    use crate::timewindow::{TimeWindow, WindowSet};

    fn problem(requests: &[(&str, Seconds)]) -> WeekProblem {
        WeekProblem {
            week_label: "t".into(),
            max_requests: 10,
            antennas: vec![Antenna {
                id: "DSS-14".into(),
                bounds: TimeWindow::new(0, 360_000).unwrap(),
                maintenance: WindowSet::default(),
            }],
            requests: requests
                .iter()
                .enumerate()
                .map(|(i, &(m, d))| TrackRequest {
                    id: i,
                    mission: m.into(),
                    requested_duration_s: d,
                    min_duration_s: d / 2,
                    setup_s: 0,
                    teardown_s: 0,
                    combos: vec![AntennaCombo {
                        antennas: vec!["DSS-14".into()],
                        view_periods: WindowSet::from_pairs(&[(0, 360_000)]).unwrap(),
                    }],
                })
                .collect(),
        }
    }

    fn track(request_id: usize, start: Seconds, end: Seconds) -> Track {
        Track {
            request_id,
            combo_index: 0,
            antennas: vec!["DSS-14".into()],
            window: TimeWindow::new(start, end).unwrap(),
            setup: None,
            teardown: None,
        }
    }

    #[test]
    fn empty_schedule_is_fully_unsatisfied() {
        let p = problem(&[("A", 3600), ("B", 7200)]);
        let s = mission_stats(&Schedule::default(), &p);
        assert_eq!((s.u_rms, s.u_max), (1.0, 1.0));
        assert_eq!(antenna_utilization(&Schedule::default(), &p).unwrap(), 0.0);
    }

    #[test]
    fn two_mission_rms() {
        let p = problem(&[("A", 10_000), ("B", 10_000)]);
        let sched = Schedule {
            tracks: vec![track(0, 0, 10_000), track(1, 20_000, 24_000)],
        };
        let s = mission_stats(&sched, &p);
        assert_eq!(s.missions[1].unsatisfied, 0.6);
        assert!((s.u_rms - 0.18f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.u_max, 0.6);
    }

    #[test]
    fn utilization_quarter() {
        let p = problem(&[("A", 90_000)]);
        let sched = Schedule {
            tracks: vec![track(0, 0, 90_000)],
        };
        assert_eq!(antenna_utilization(&sched, &p).unwrap(), 0.25);
    }

    #[test]
    fn report_counts_requests_with_tracks() {
        let p = problem(&[("A", 3600), ("A", 3600), ("B", 7200)]);
        let sched = Schedule {
            tracks: vec![track(0, 0, 3600), track(2, 4000, 8000)],
        };
        let r = ScheduleReport::new(&sched, &p).unwrap();
        assert_eq!(r.satisfied_requests, 2);
        assert!((r.mean_satisfied_request_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.hours_satisfied - 7600.0 / 3600.0).abs() < 1e-12);
        let expect = (0.5 + 4000.0 / 7200.0) / 2.0;
        assert!((r.mean_satisfied_time_fraction - expect).abs() < 1e-15);
    }

    #[test]
    fn random_agent_on_trivial_problem_always_scores_one() {
        let p = Arc::new(problem(&[("A", 3600)]));
        let set = rollout(&Agent::Random { masked: true }, &p, 10, 4, &Workers::serial()).unwrap();
        assert!(set.episodes.iter().all(|e| e.total_reward == 1.0 && e.length == 1));
    }

    #[test]
    fn unmasked_random_agent_reaches_every_slot() {
        let p = Arc::new(problem(&[("A", 3600), ("B", 3600)]));
        let set = rollout(&Agent::Random { masked: false }, &p, 200, 1, &Workers::serial()).unwrap();
        let h = Histogram::of_actions(&set, 10);
        assert!(h.bins.iter().all(|b| b.2 > 0));
        assert!(set.masked_actions() > 0);
    }

    #[test]
    fn representative_prefers_lower_index_on_ties() {
        let ep = |r: f64| EpisodeResult {
            episode: 0,
            env_seed: 0,
            total_reward: r,
            length: 0,
            actions: vec![],
            rewards: vec![],
            masked_actions: 0,
            mean_entropy: 0.0,
            schedule: Schedule::default(),
        };
        let set = RolloutSet {
            agent: "x".into(),
            seed: 0,
            episodes: vec![ep(1.0), ep(5.0), ep(3.1), ep(2.0), ep(4.0)],
        };
        assert_eq!(set.representative().unwrap(), 2);
        let tie = RolloutSet {
            episodes: vec![ep(1.0), ep(3.0)],
            ..set
        };
        assert_eq!(tie.representative().unwrap(), 0);
        let empty = RolloutSet {
            episodes: vec![],
            ..tie
        };
        assert!(empty.representative().is_err());
    }

    #[test]
    fn histogram_bins_edges() {
        let h = Histogram::new(&[0.0, 0.5, 1.0, 2.0, 2.5], 0.0, 2.0, 2);
        assert_eq!(h.bins, vec![(0.0, 1.0, 2), (1.0, 2.0, 2)]);
    }

    #[test]
    fn identical_sets_give_identical_columns() {
        let p = Arc::new(problem(&[("A", 3600), ("B", 7200), ("B", 3600)]));
        let set = rollout(&Agent::Random { masked: true }, &p, 5, 2, &Workers::serial()).unwrap();
        let c = Comparison::new(&set, &set, &p).unwrap();
        assert_eq!(c.table.random, c.table.trained);
        assert_eq!(c.reward_ratio, 1.0);
    }
}
