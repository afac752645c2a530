//! Proximal policy optimisation: rollout collection, generalised advantage
//! estimation, clipped-surrogate updates and the training loop.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::SchedulingEnv;
use crate::error::{Error, Result};
use crate::eval::{rollout, Agent};
use crate::optim::{Adam, AdamConfig};
use crate::policy::{sample_action, ActorCritic, Architecture, Checkpoint, LossCoefficients, SampleRef};
use crate::problem::WeekProblem;
use crate::seed::{derive, tag};
use crate::workers::Workers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub epochs_per_batch: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub kl_target: f64,
    /// An update stops after the epoch whose mean KL exceeds
    /// `kl_stop_multiple * kl_target`.
    pub kl_stop_multiple: f64,
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub value_clip: Option<f64>,
    pub normalize_advantages: bool,
    /// Environment steps collected per iteration.
    pub rollout_batch_size: usize,
    /// Independent rollout streams per iteration. Fixed by the config so the
    /// batch does not depend on the thread count.
    pub rollout_streams: usize,
    pub total_env_steps: usize,
    pub eval_episodes: usize,
    /// Evaluate with argmax actions instead of sampling.
    pub greedy_eval: bool,
    pub seed: u64,
    pub hidden: [usize; 2],
    pub input_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// When false the log's `wallclock_s` column is written as 0 so reruns
    /// are byte-identical.
    pub record_wallclock: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            minibatch_size: 128,
            epochs_per_batch: 30,
            gamma: 0.99,
            gae_lambda: 1.0,
            kl_target: 0.01,
            kl_stop_multiple: 4.0,
            clip_epsilon: 0.3,
            value_coef: 1.0,
            entropy_coef: 0.0,
            value_clip: None,
            normalize_advantages: true,
            rollout_batch_size: 4000,
            rollout_streams: 4,
            total_env_steps: 10_000_000,
            eval_episodes: 20,
            greedy_eval: false,
            seed: 0,
            hidden: [256, 256],
            input_scale: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            record_wallclock: true,
        }
    }
}

impl PpoConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.clip_epsilon) {
            return bad("clip_epsilon must be positive");
        }
        if !positive(self.learning_rate) {
            return bad("learning_rate must be positive");
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.rollout_batch_size {
            return bad("minibatch_size must be in [1, rollout_batch_size]");
        }
        if self.rollout_streams == 0 || self.rollout_streams > self.rollout_batch_size {
            return bad("rollout_streams must be in [1, rollout_batch_size]");
        }
        if self.epochs_per_batch == 0 || self.eval_episodes == 0 {
            return bad("epochs_per_batch and eval_episodes must be positive");
        }
        if self.hidden.contains(&0) || !positive(self.input_scale) {
            return bad("hidden sizes and input_scale must be positive");
        }
        if let Some(c) = self.value_clip {
            if !positive(c) {
                return bad("value_clip must be positive");
            }
        }
        Ok(())
    }

    pub fn architecture(&self, max_requests: usize) -> Architecture {
        Architecture {
            hidden: self.hidden,
            input_scale: self.input_scale,
            ..Architecture::for_problem(max_requests)
        }
    }

    pub fn loss_coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip_epsilon: self.clip_epsilon,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            value_clip: self.value_clip,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub reward: f64,
    pub log_prob: f64,
    pub value: f64,
    pub done: bool,
    /// Behaviour-policy probabilities over all slots.
    pub probs: Vec<f64>,
}

/// The steps of one rollout stream, possibly spanning several episodes.
/// `bootstrap_value` estimates the return after the last step when it did
/// not end an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub transitions: Vec<Transition>,
    pub bootstrap_value: f64,
    /// Rewards and lengths of the episodes that finished in this stream.
    pub finished_episodes: Vec<(f64, usize)>,
}

/// Advantages and returns for a reward sequence. `dones[t]` marks the last
/// step of an episode; accumulation restarts there. `bootstrap` is
/// `V(s_T)` for a sequence cut before its episode ended.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n);
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut acc = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_value = 0.0;
            acc = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// `sum p_old ln(p_old / p_new)` over entries with `p_old > 0`. Infinite
/// when `p_new` drops support that `p_old` has.
pub fn kl_divergence(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| if q > 0.0 { p * (p / q).ln() } else { f64::INFINITY })
        .sum()
}

/// Learner input assembled from all streams, in stream order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainBatch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub finished_episodes: Vec<(f64, usize)>,
}

impl TrainBatch {
    pub fn from_segments(segments: Vec<Segment>, gamma: f64, lambda: f64) -> Result<Self> {
        let mut batch = TrainBatch {
            transitions: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            finished_episodes: Vec::new(),
        };
        for seg in segments {
            let rewards: Vec<f64> = seg.transitions.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seg.transitions.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = seg.transitions.iter().map(|t| t.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, seg.bootstrap_value, gamma, lambda);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
            batch.transitions.extend(seg.transitions);
            batch.finished_episodes.extend(seg.finished_episodes);
        }
        if let Some(i) = batch.advantages.iter().position(|a| !a.is_finite()) {
            return Err(Error::Training(format!("non-finite advantage at batch index {i}")));
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Transitions whose action was masked; always zero for a correct
    /// sampler.
    pub fn masked_actions(&self) -> usize {
        self.transitions.iter().filter(|t| !t.mask[t.action]).count()
    }

    /// Shifts and scales advantages to mean 0 and standard deviation 1.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for a in &mut self.advantages {
            *a = (*a - mean) * scale;
        }
    }
}

/// Collects exactly `n_steps` transitions split across `n_streams`
/// streams. Stream `w` of iteration `iteration` is seeded from
/// `(seed, iteration, w)`; episodes reset automatically.
pub fn collect_rollouts(
    net: &ActorCritic,
    problem: &Arc<WeekProblem>,
    n_steps: usize,
    n_streams: usize,
    seed: u64,
    iteration: usize,
    workers: &Workers,
) -> Result<Vec<Segment>> {
    workers.map(n_streams, |w| {
        let steps = n_steps / n_streams + usize::from(w < n_steps % n_streams);
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag::ROLLOUT, iteration as u64, w as u64]));
        let mut env = SchedulingEnv::new(problem.clone())?;
        let mut obs = env.reset(rng.next_u64());
        let mut seg = Segment {
            transitions: Vec::with_capacity(steps),
            bootstrap_value: 0.0,
            finished_episodes: Vec::new(),
        };
        let mut episode_reward = 0.0;
        for _ in 0..steps {
            if env.is_done() {
                obs = env.reset(rng.next_u64());
            }
            let mask = env.action_mask();
            let out = net.act(obs.as_slice(), &mask)?;
            let (action, log_prob) = sample_action(&out, &mut rng);
            let step = env.step(action)?;
            episode_reward += step.reward;
            if step.done {
                seg.finished_episodes.push((episode_reward, env.n_steps()));
                episode_reward = 0.0;
            }
            seg.transitions.push(Transition {
                obs: std::mem::replace(&mut obs, step.observation).into_vec(),
                mask,
                action,
                reward: step.reward,
                log_prob,
                value: out.value,
                done: step.done,
                probs: out.probs,
            });
        }
        if !env.is_done() {
            seg.bootstrap_value = net.act(obs.as_slice(), &env.action_mask())?.value;
        }
        Ok(seg)
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub epochs: usize,
    pub stopped_early: bool,
    /// Means over the last epoch's minibatches.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Runs up to `epochs_per_batch` passes of shuffled minibatch Adam steps on
/// the clipped objective. KL is measured on each minibatch before its step;
/// the update stops after an epoch whose mean KL exceeds the stop threshold.
pub fn ppo_update(
    net: &mut ActorCritic,
    adam: &mut Adam,
    batch: &TrainBatch,
    config: &PpoConfig,
    shuffle_seed: u64,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let coef = config.loss_coefficients();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..config.epochs_per_batch {
        order.shuffle(&mut rng);
        let mut sums = UpdateStats::default();
        for chunk in order.chunks(config.minibatch_size) {
            let samples: Vec<SampleRef<'_>> = chunk
                .iter()
                .map(|&i| {
                    let t = &batch.transitions[i];
                    SampleRef {
                        obs: &t.obs,
                        mask: &t.mask,
                        action: t.action,
                        advantage: batch.advantages[i],
                        value_target: batch.returns[i],
                        old_log_prob: t.log_prob,
                        old_value: t.value,
                        old_probs: Some(&t.probs),
                    }
                })
                .collect();
            let (loss, grad) = net.loss_and_grad(&samples, &coef)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training("non-finite gradient".into()));
            }
            adam.step(net.params_mut(), &grad);
            if !net.is_finite() {
                return Err(Error::Training("non-finite parameters after update".into()));
            }
            let w = chunk.len() as f64 / batch.len() as f64;
            sums.policy_loss += w * loss.policy_loss;
            sums.value_loss += w * loss.value_loss;
            sums.entropy += w * loss.entropy;
            sums.kl += w * loss.kl;
            sums.clip_fraction += w * loss.clip_fraction;
        }
        stats = UpdateStats {
            epochs: epoch + 1,
            ..sums
        };
        if stats.kl > config.kl_stop_multiple * config.kl_target {
            stats.stopped_early = epoch + 1 < config.epochs_per_batch;
            break;
        }
    }
    Ok(stats)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    pub env_steps: usize,
    pub eval_reward_mean: f64,
    pub eval_reward_max: f64,
    pub eval_ep_len_mean: f64,
    pub entropy: f64,
    pub kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub lr: f64,
    pub wallclock_s: f64,
}

pub const LOG_HEADER: &str =
    "iter,env_steps,eval_reward_mean,eval_reward_max,eval_ep_len_mean,entropy,kl,policy_loss,value_loss,lr,wallclock_s";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{LOG_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{:.3}",
                r.iter,
                r.env_steps,
                r.eval_reward_mean,
                r.eval_reward_max,
                r.eval_ep_len_mean,
                r.entropy,
                r.kl,
                r.policy_loss,
                r.value_loss,
                r.lr,
                r.wallclock_s
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::Parse("train log header mismatch".into()));
        }
        let rows = lines
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                let bad = || Error::Parse(format!("train log row {}: {line}", i + 1));
                if f.len() != 11 {
                    return Err(bad());
                }
                let u = |k: usize| f[k].parse::<usize>().map_err(|_| bad());
                let x = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
                Ok(LogRow {
                    iter: u(0)?,
                    env_steps: u(1)?,
                    eval_reward_mean: x(2)?,
                    eval_reward_max: x(3)?,
                    eval_ep_len_mean: x(4)?,
                    entropy: x(5)?,
                    kl: x(6)?,
                    policy_loss: x(7)?,
                    value_loss: x(8)?,
                    lr: x(9)?,
                    wallclock_s: x(10)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    /// Least-squares slope of `y` against the row index.
    pub fn slope(&self, y: impl Fn(&LogRow) -> f64) -> f64 {
        let n = self.rows.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let xm = (n - 1.0) / 2.0;
        let ym = self.rows.iter().map(&y).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, r) in self.rows.iter().enumerate() {
            let dx = i as f64 - xm;
            sxy += dx * (y(r) - ym);
            sxx += dx * dx;
        }
        sxy / sxx
    }
}

/// What one training iteration produced.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub row: LogRow,
    pub update: UpdateStats,
    pub batch_masked_actions: usize,
    pub eval_masked_actions: usize,
    pub finished_episodes: Vec<(f64, usize)>,
    pub improved: bool,
}

const STATE_MAGIC: &[u8; 8] = b"DSNTRAIN";
const STATE_VERSION: u32 = 1;

pub const LATEST_CHECKPOINT: &str = "latest.json";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const TRAINER_STATE: &str = "trainer_state.bin";
pub const TRAIN_LOG: &str = "train_log.csv";

/// The training loop with everything needed to checkpoint and resume it.
pub struct Trainer {
    config: PpoConfig,
    problem: Arc<WeekProblem>,
    net: ActorCritic,
    best: ActorCritic,
    adam: Adam,
    iteration: usize,
    env_steps: usize,
    best_eval: f64,
    best_iteration: usize,
    log: TrainLog,
    workers: Workers,
    started: Instant,
    wallclock_offset: f64,
}

impl Trainer {
    pub fn new(config: PpoConfig, problem: Arc<WeekProblem>, workers: Workers) -> Result<Self> {
        config.validate()?;
        problem.validate()?;
        let net = ActorCritic::new(
            config.architecture(problem.max_requests),
            derive(config.seed, &[tag::INIT]),
        );
        Ok(Self {
            adam: Adam::new(config.adam(), net.n_params()),
            best: net.clone(),
            net,
            config,
            problem,
            iteration: 0,
            env_steps: 0,
            best_eval: f64::NEG_INFINITY,
            best_iteration: 0,
            log: TrainLog::default(),
            workers,
            started: Instant::now(),
            wallclock_offset: 0.0,
        })
    }

    /// Restores the state written by [`Trainer::save`] into `dir`. The
    /// config must match the one the run started with, apart from
    /// `total_env_steps` and `record_wallclock`.
    pub fn resume(config: PpoConfig, problem: Arc<WeekProblem>, workers: Workers, dir: &Path) -> Result<Self> {
        let mut t = Self::new(config, problem, workers)?;
        let latest = Checkpoint::load(dir.join(LATEST_CHECKPOINT))?.network()?;
        if latest.architecture() != t.net.architecture() {
            return Err(Error::Config("checkpoint architecture does not match the config".into()));
        }
        let best = Checkpoint::load(dir.join(BEST_CHECKPOINT))?.network()?;
        let log_path = dir.join(TRAIN_LOG);
        let log_text = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let mut log = TrainLog::from_csv(&log_text)?;

        let state_path = dir.join(TRAINER_STATE);
        let bytes = std::fs::read(&state_path).map_err(|e| Error::io(&state_path, e))?;
        let mut r = StateReader { bytes: &bytes, pos: 0 };
        if r.take(8)? != STATE_MAGIC || r.u64()? != u64::from(STATE_VERSION) {
            return Err(Error::Parse(format!("{} is not a trainer state file", state_path.display())));
        }
        let iteration = r.u64()? as usize;
        let env_steps = r.u64()? as usize;
        let best_eval = r.f64()?;
        let best_iteration = r.u64()? as usize;
        let adam_t = r.u64()?;
        let n = r.u64()? as usize;
        if n != t.net.n_params() {
            return Err(Error::Config("trainer state does not match the network".into()));
        }
        let m = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let v = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;

        // A crash between writing the log and the state leaves extra rows.
        log.rows.retain(|row| row.iter <= iteration);
        if log.rows.len() != iteration {
            return Err(Error::Parse(format!(
                "train log has {} rows, state is at iteration {iteration}",
                log.rows.len()
            )));
        }
        t.wallclock_offset = log.rows.last().map_or(0.0, |row| row.wallclock_s);
        t.net = latest;
        t.best = best;
        t.adam = Adam::from_state(t.config.adam(), m, v, adam_t);
        t.iteration = iteration;
        t.env_steps = env_steps;
        t.best_eval = best_eval;
        t.best_iteration = best_iteration;
        t.log = log;
        Ok(t)
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn network(&self) -> &ActorCritic {
        &self.net
    }

    pub fn best_network(&self) -> &ActorCritic {
        &self.best
    }

    pub fn best_eval_reward(&self) -> f64 {
        self.best_eval
    }

    pub fn best_iteration(&self) -> usize {
        self.best_iteration
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.config.total_env_steps
    }

    /// Collect, estimate advantages, update, evaluate.
    pub fn run_iteration(&mut self) -> Result<IterationReport> {
        self.run_iteration_inner().map_err(|(e, _)| e)
    }

    fn run_iteration_inner(&mut self) -> std::result::Result<IterationReport, (Error, Option<Box<TrainBatch>>)> {
        let c = &self.config;
        let iter = self.iteration + 1;
        let segments = collect_rollouts(
            &self.net,
            &self.problem,
            c.rollout_batch_size,
            c.rollout_streams,
            c.seed,
            iter,
            &self.workers,
        )
        .map_err(|e| (e, None))?;
        let mut batch = TrainBatch::from_segments(segments, c.gamma, c.gae_lambda).map_err(|e| (e, None))?;
        if c.normalize_advantages {
            batch.normalize_advantages();
        }
        let batch_masked_actions = batch.masked_actions();
        let update = ppo_update(
            &mut self.net,
            &mut self.adam,
            &batch,
            c,
            derive(c.seed, &[tag::SHUFFLE, iter as u64]),
        )
        .map_err(|e| (e, Some(Box::new(batch.clone()))))?;

        let eval_seed = derive(c.seed, &[tag::EVAL, iter as u64]);
        let agent = Agent::Policy {
            net: &self.net,
            greedy: c.greedy_eval,
        };
        let eval = rollout(&agent, &self.problem, c.eval_episodes, eval_seed, &self.workers).map_err(|e| (e, None))?;

        self.iteration = iter;
        self.env_steps += batch.len();
        let row = LogRow {
            iter,
            env_steps: self.env_steps,
            eval_reward_mean: eval.mean_reward(),
            eval_reward_max: eval.max_reward(),
            eval_ep_len_mean: eval.mean_length(),
            entropy: eval.mean_entropy(),
            kl: update.kl,
            policy_loss: update.policy_loss,
            value_loss: update.value_loss,
            lr: c.learning_rate,
            wallclock_s: if c.record_wallclock {
                self.wallclock_offset + self.started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        self.log.rows.push(row);
        let improved = row.eval_reward_mean > self.best_eval;
        if improved {
            self.best_eval = row.eval_reward_mean;
            self.best_iteration = iter;
            self.best = self.net.clone();
        }
        Ok(IterationReport {
            row,
            update,
            batch_masked_actions,
            eval_masked_actions: eval.masked_actions(),
            finished_episodes: batch.finished_episodes,
            improved,
        })
    }

    /// Writes the latest and best checkpoints, the log and the optimiser
    /// state. The state file goes last so a partial save resumes from the
    /// previous iteration.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Checkpoint::new(&self.net, self.config.seed, self.iteration, self.env_steps, self.last_eval())
            .save(dir.join(LATEST_CHECKPOINT))?;
        Checkpoint::new(&self.best, self.config.seed, self.best_iteration, 0, self.best_eval)
            .save(dir.join(BEST_CHECKPOINT))?;
        let log_path = dir.join(TRAIN_LOG);
        std::fs::write(&log_path, self.log.to_csv()).map_err(|e| Error::io(&log_path, e))?;

        let (m, v) = self.adam.moments();
        let mut bytes = Vec::with_capacity(64 + 16 * m.len());
        bytes.extend_from_slice(STATE_MAGIC);
        for x in [
            u64::from(STATE_VERSION),
            self.iteration as u64,
            self.env_steps as u64,
        ] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        bytes.extend_from_slice(&self.best_eval.to_le_bytes());
        for x in [self.best_iteration as u64, self.adam.steps(), m.len() as u64] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        for x in m.iter().chain(v) {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let tmp = dir.join(format!("{TRAINER_STATE}.tmp"));
        let path = dir.join(TRAINER_STATE);
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn last_eval(&self) -> f64 {
        self.log.rows.last().map_or(f64::NAN, |r| r.eval_reward_mean)
    }

    /// Runs iterations until the step budget is spent, saving after each
    /// one when `out` is given. `on_iteration` sees every report.
    pub fn run(&mut self, out: Option<&Path>, mut on_iteration: impl FnMut(&IterationReport)) -> Result<()> {
        while !self.is_finished() {
            let report = match self.run_iteration_inner() {
                Ok(r) => r,
                Err((e, batch)) => {
                    if let (Some(dir), Some(batch)) = (out, batch) {
                        self.dump_failure(dir, &batch);
                    }
                    return Err(e);
                }
            };
            if let Some(dir) = out {
                self.save(dir)?;
            }
            on_iteration(&report);
        }
        Ok(())
    }

    /// Best effort: the training error is what gets reported.
    fn dump_failure(&self, dir: &Path, batch: &TrainBatch) {
        let _ = std::fs::create_dir_all(dir);
        let _ = std::fs::write(
            dir.join("failed_batch.json"),
            serde_json::to_string(batch).unwrap_or_default(),
        );
        let _ = Checkpoint::new(&self.net, self.config.seed, self.iteration, self.env_steps, f64::NAN)
            .save(dir.join("failed_params.json"));
    }
}

struct StateReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl StateReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Parse("truncated trainer state".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Final state of a finished run.
pub struct TrainOutcome {
    pub log: TrainLog,
    pub best: ActorCritic,
    pub best_eval_reward: f64,
    pub best_iteration: usize,
    pub last: ActorCritic,
}

/// Trains from scratch, or resumes from `out` when `resume` is set.
pub fn train(
    config: PpoConfig,
    problem: Arc<WeekProblem>,
    out: Option<&Path>,
    resume: bool,
    workers: Workers,
    on_iteration: impl FnMut(&IterationReport),
) -> Result<TrainOutcome> {
    let mut trainer = match (out, resume) {
        (Some(dir), true) => Trainer::resume(config, problem, workers, dir)?,
        (None, true) => return Err(Error::Config("resume needs an output directory".into())),
        _ => Trainer::new(config, problem, workers)?,
    };
    trainer.run(out, on_iteration)?;
    Ok(TrainOutcome {
        log: trainer.log.clone(),
        best_eval_reward: trainer.best_eval,
        best_iteration: trainer.best_iteration,
        best: trainer.best,
        last: trainer.net,
    })
}

/// Paths of the files a training run writes into its output directory.
pub fn output_files(dir: &Path) -> [PathBuf; 4] {
    [LATEST_CHECKPOINT, BEST_CHECKPOINT, TRAINER_STATE, TRAIN_LOG].map(|f| dir.join(f))
}
