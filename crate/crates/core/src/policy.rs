//! Actor-critic network with analytic gradients.
//!
//! Two independent fully connected branches share only the input: the actor
//! maps an observation to one logit per request slot, the critic to a scalar
//! state value. Hidden layers use the SiLU activation `z * sigmoid(z)`.
//!
//! All parameters live in one flat `Vec<f64>`. For each branch the layout is
//! `W1 (in x h1), b1, W2 (h1 x h2), b2, W3 (h2 x out), b3`, actor first.
//!
//! Observations are sparse (empty request slots are zero) and most action
//! slots are masked, so the batched passes only touch the input rows with a
//! non-zero feature and the output columns some sample can choose. Skipped
//! terms contribute exactly zero to both the outputs and the gradients.

use std::path::Path;

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substituted for masked logits before the softmax.
pub const MASKED_LOGIT: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let sig = 1.0 / (1.0 + (-z).exp());
                sig * (1.0 + z * (1.0 - sig))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_dim: usize,
    pub hidden: [usize; 2],
    pub n_actions: usize,
    pub activation: Activation,
    /// Observations are multiplied by this before the first layer.
    pub input_scale: f64,
}

impl Architecture {
    /// Two hidden layers of 256 units over the scheduling observation.
    pub fn for_problem(max_requests: usize) -> Self {
        Self {
            obs_dim: crate::env::obs_dim(max_requests),
            hidden: [256, 256],
            n_actions: max_requests,
            activation: Activation::Silu,
            input_scale: 1.0,
        }
    }

    fn branch_dims(&self, out: usize) -> [usize; 4] {
        [self.obs_dim, self.hidden[0], self.hidden[1], out]
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSlot {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    actor: [LayerSlot; 3],
    critic: [LayerSlot; 3],
    len: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let mut off = 0;
        let mut branch = |dims: [usize; 4]| {
            std::array::from_fn(|i| {
                let (n_in, n_out) = (dims[i], dims[i + 1]);
                let slot = LayerSlot {
                    w: off,
                    b: off + n_in * n_out,
                    n_in,
                    n_out,
                };
                off += n_in * n_out + n_out;
                slot
            })
        };
        let actor = branch(arch.branch_dims(arch.n_actions));
        let critic = branch(arch.branch_dims(1));
        Layout {
            actor,
            critic,
            len: off,
        }
    }

    fn actor_range(&self) -> std::ops::Range<usize> {
        0..self.critic[0].w
    }
}

/// Policy output for a single observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// Raw actor logits, before masking.
    pub logits: Vec<f64>,
    pub value: f64,
    /// Softmax over unmasked slots; exactly zero where masked.
    pub probs: Vec<f64>,
}

impl PolicyOutput {
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// One row of a training minibatch.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    pub obs: &'a [f64],
    pub mask: &'a [bool],
    pub action: usize,
    pub advantage: f64,
    pub value_target: f64,
    pub old_log_prob: f64,
    pub old_value: f64,
    /// Behaviour-policy probabilities over all slots, for KL monitoring.
    pub old_probs: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Clip range for the value prediction around the behaviour value.
    pub value_clip: Option<f64>,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.3,
            value_coef: 1.0,
            entropy_coef: 0.0,
            value_clip: None,
        }
    }
}

/// Minibatch means of the loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    /// `policy_loss + value_coef * value_loss - entropy_coef * entropy`.
    pub total: f64,
    /// Negated clipped surrogate.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean KL(old || new); `+inf` if the new policy drops old support.
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Activations of one branch over a batch.
struct BranchPass {
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    /// `h2 x k` output weights restricted to the requested columns.
    w3: Array2<f64>,
    out: Array2<f64>,
}

/// Sparse batch input: the non-zero (index, scaled value) pairs per row.
struct SparseRows(Vec<Vec<(usize, f64)>>);

impl SparseRows {
    fn new<'a, I: IntoIterator<Item = &'a [f64]>>(rows: I, scale: f64) -> Self {
        SparseRows(
            rows.into_iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, &x)| x != 0.0)
                        .map(|(j, &x)| (j, x * scale))
                        .collect()
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    arch: Architecture,
    params: Vec<f64>,
}

impl ActorCritic {
    /// Random initialisation: weights drawn with variance `1 / fan_in`,
    /// biases zero. The final actor layer is scaled down by 100 so the
    /// initial policy is close to uniform over unmasked slots.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |slot: &LayerSlot, gain: f64| {
            let std = gain / (slot.n_in as f64).sqrt();
            for p in &mut params[slot.w..slot.b] {
                let z: f64 = rng.sample(StandardNormal);
                *p = z * std;
            }
        };
        for (i, slot) in layout.actor.iter().enumerate() {
            fill(slot, if i == 2 { 0.01 } else { 1.0 });
        }
        for slot in &layout.critic {
            fill(slot, 1.0);
        }
        Self { arch, params }
    }

    pub fn zeros(arch: Architecture) -> Self {
        let len = Layout::new(&arch).len;
        Self {
            arch,
            params: vec![0.0; len],
        }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let len = Layout::new(&arch).len;
        if params.len() != len {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, architecture needs {len}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Index range of the actor branch inside the flat parameter vector.
    pub fn actor_param_range(&self) -> std::ops::Range<usize> {
        Layout::new(&self.arch).actor_range()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_shapes(&self, obs: &[f64], mask: &[bool]) -> Result<()> {
        if obs.len() != self.arch.obs_dim || mask.len() != self.arch.n_actions {
            return Err(Error::Contract(format!(
                "expected observation of {} and mask of {}, got {} and {}",
                self.arch.obs_dim,
                self.arch.n_actions,
                obs.len(),
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract("all actions masked".into()));
        }
        Ok(())
    }

    /// Full forward pass: all logits, masked probabilities and the value.
    pub fn forward(&self, obs: &[f64], mask: &[bool]) -> Result<PolicyOutput> {
        self.check_shapes(obs, mask)?;
        let layout = Layout::new(&self.arch);
        let x = SparseRows::new([obs], self.arch.input_scale);
        let all: Vec<usize> = (0..self.arch.n_actions).collect();
        let actor = self.branch_forward(&layout.actor, &x, &all);
        let critic = self.branch_forward(&layout.critic, &x, &[0]);
        let logits = actor.out.row(0).to_vec();
        let probs = masked_softmax(&logits, mask);
        Ok(PolicyOutput {
            logits,
            value: critic.out[[0, 0]],
            probs,
        })
    }

    /// Masked probabilities and value, computing only unmasked logits.
    /// Masked logits in the returned output are left at zero.
    pub fn act(&self, obs: &[f64], mask: &[bool]) -> Result<PolicyOutput> {
        self.check_shapes(obs, mask)?;
        let layout = Layout::new(&self.arch);
        let x = SparseRows::new([obs], self.arch.input_scale);
        let cols: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let actor = self.branch_forward(&layout.actor, &x, &cols);
        let critic = self.branch_forward(&layout.critic, &x, &[0]);
        let mut logits = vec![0.0; self.arch.n_actions];
        for (k, &c) in cols.iter().enumerate() {
            logits[c] = actor.out[[0, k]];
        }
        let probs = masked_softmax(&logits, mask);
        Ok(PolicyOutput {
            logits,
            value: critic.out[[0, 0]],
            probs,
        })
    }

    /// Loss of a minibatch without gradients.
    pub fn loss(&self, batch: &[SampleRef<'_>], coef: &LossCoefficients) -> Result<LossStats> {
        self.loss_impl(batch, coef, None)
    }

    /// Loss of a minibatch and its exact gradient with respect to every
    /// parameter.
    pub fn loss_and_grad(
        &self,
        batch: &[SampleRef<'_>],
        coef: &LossCoefficients,
    ) -> Result<(LossStats, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let stats = self.loss_impl(batch, coef, Some(&mut grad))?;
        Ok((stats, grad))
    }

    fn loss_impl(
        &self,
        batch: &[SampleRef<'_>],
        coef: &LossCoefficients,
        grad: Option<&mut Vec<f64>>,
    ) -> Result<LossStats> {
        if batch.is_empty() {
            return Err(Error::Contract("empty minibatch".into()));
        }
        for s in batch {
            self.check_shapes(s.obs, s.mask)?;
            if !s.mask[s.action] {
                return Err(Error::Contract(format!("action {} is masked", s.action)));
            }
        }
        let layout = Layout::new(&self.arch);
        let n = batch.len();
        let inv_n = 1.0 / n as f64;
        let x = SparseRows::new(batch.iter().map(|s| s.obs), self.arch.input_scale);

        // Columns any sample in the batch can choose.
        let mut col_of = vec![usize::MAX; self.arch.n_actions];
        let mut cols = Vec::new();
        for (a, slot) in col_of.iter_mut().enumerate() {
            if batch.iter().any(|s| s.mask[a]) {
                *slot = cols.len();
                cols.push(a);
            }
        }
        let actor = self.branch_forward(&layout.actor, &x, &cols);
        let critic = self.branch_forward(&layout.critic, &x, &[0]);

        let k = cols.len();
        let mut d_logits = Array2::<f64>::zeros((n, k));
        let mut d_value = Array2::<f64>::zeros((n, 1));
        let mut stats = LossStats::default();
        let mut probs = vec![0.0; k];
        let mut kl_inf = false;
        for (i, s) in batch.iter().enumerate() {
            let row = actor.out.row(i);
            let mut max = f64::NEG_INFINITY;
            let logits: Vec<f64> = (0..k)
                .map(|c| {
                    let l = if s.mask[cols[c]] { row[c] } else { MASKED_LOGIT };
                    max = max.max(l);
                    l
                })
                .collect();
            let mut z = 0.0;
            for c in 0..k {
                probs[c] = (logits[c] - max).exp();
                z += probs[c];
            }
            let log_z = max + z.ln();
            for p in probs.iter_mut() {
                *p /= z;
            }
            let a = col_of[s.action];
            let log_p = logits[a] - log_z;
            let ratio = (log_p - s.old_log_prob).exp();
            let eps = coef.clip_epsilon;
            let unclipped = ratio * s.advantage;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * s.advantage;
            let surrogate = unclipped.min(clipped);
            if clipped < unclipped {
                stats.clip_fraction += inv_n;
            }
            // d(surrogate)/d(ratio): zero where the clipped branch is active
            // and saturated.
            let d_ratio = if unclipped <= clipped { s.advantage } else { 0.0 };

            let ent: f64 = -probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>();

            if let Some(old) = s.old_probs {
                let mut kl = 0.0;
                for (c, &col) in cols.iter().enumerate() {
                    let po = old[col];
                    if po > 0.0 {
                        if probs[c] <= 0.0 {
                            kl_inf = true;
                        } else {
                            kl += po * (po / probs[c]).ln();
                        }
                    }
                }
                stats.kl += kl * inv_n;
            }

            let v = critic.out[[i, 0]];
            let err = v - s.value_target;
            let (v_loss, d_v) = match coef.value_clip {
                Some(clip) => {
                    let v_clipped = s.old_value + (v - s.old_value).clamp(-clip, clip);
                    let err_c = v_clipped - s.value_target;
                    let inside = (v - s.old_value).abs() <= clip;
                    if err * err >= err_c * err_c {
                        (err * err, 2.0 * err)
                    } else {
                        (err_c * err_c, if inside { 2.0 * err_c } else { 0.0 })
                    }
                }
                None => (err * err, 2.0 * err),
            };

            stats.policy_loss -= surrogate * inv_n;
            stats.value_loss += v_loss * inv_n;
            stats.entropy += ent * inv_n;

            if grad.is_some() {
                // loss = -surrogate/n + vc * v_loss/n - ec * entropy/n
                let g_ratio = -d_ratio * ratio * inv_n;
                for c in 0..k {
                    let p = probs[c];
                    let onehot = if c == a { 1.0 } else { 0.0 };
                    let mut g = g_ratio * (onehot - p);
                    if p > 0.0 && coef.entropy_coef != 0.0 {
                        g += coef.entropy_coef * inv_n * p * (p.ln() + ent);
                    }
                    // Masked slots were replaced by a constant.
                    if s.mask[cols[c]] {
                        d_logits[[i, c]] = g;
                    }
                }
                d_value[[i, 0]] = coef.value_coef * inv_n * d_v;
            }
        }
        if kl_inf {
            stats.kl = f64::INFINITY;
        }
        stats.total =
            stats.policy_loss + coef.value_coef * stats.value_loss - coef.entropy_coef * stats.entropy;
        if !stats.total.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss over {n} samples: policy {} value {} entropy {}",
                stats.policy_loss, stats.value_loss, stats.entropy
            )));
        }

        if let Some(grad) = grad {
            self.branch_backward(&layout.actor, &x, &cols, &actor, d_logits, grad);
            self.branch_backward(&layout.critic, &x, &[0], &critic, d_value, grad);
        }
        Ok(stats)
    }

    fn view(&self, slot: &LayerSlot) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let w = ArrayView2::from_shape((slot.n_in, slot.n_out), &self.params[slot.w..slot.b])
            .expect("layout");
        let b = ArrayView1::from(&self.params[slot.b..slot.b + slot.n_out]);
        (w, b)
    }

    fn branch_forward(&self, slots: &[LayerSlot; 3], x: &SparseRows, out_cols: &[usize]) -> BranchPass {
        let act = self.arch.activation;
        let n = x.0.len();
        let (w1, b1) = self.view(&slots[0]);
        let mut z1 = Array2::<f64>::zeros((n, slots[0].n_out));
        for (i, row) in x.0.iter().enumerate() {
            let mut zr = z1.row_mut(i);
            zr.assign(&b1);
            for &(j, xj) in row {
                zr.scaled_add(xj, &w1.row(j));
            }
        }
        let h1 = z1.mapv(|z| act.apply(z));

        let (w2, b2) = self.view(&slots[1]);
        let mut z2 = broadcast_rows(&b2, n);
        general_mat_mul(1.0, &h1, &w2, 1.0, &mut z2);
        let h2 = z2.mapv(|z| act.apply(z));

        let (w3_full, b3_full) = self.view(&slots[2]);
        let w3 = w3_full.select(Axis(1), out_cols);
        let b3: Array1<f64> = out_cols.iter().map(|&c| b3_full[c]).collect();
        let mut out = broadcast_rows(&b3.view(), n);
        general_mat_mul(1.0, &h2, &w3, 1.0, &mut out);
        BranchPass {
            z1,
            h1,
            z2,
            h2,
            w3,
            out,
        }
    }

    fn branch_backward(
        &self,
        slots: &[LayerSlot; 3],
        x: &SparseRows,
        out_cols: &[usize],
        pass: &BranchPass,
        d_out: Array2<f64>,
        grad: &mut [f64],
    ) {
        let act = self.arch.activation;
        let (h2w, h2b) = (slots[2].n_in, slots[2].n_out);

        // Output layer, scattered back to the selected columns.
        let mut d_w3 = Array2::<f64>::zeros((h2w, out_cols.len()));
        general_mat_mul(1.0, &pass.h2.t(), &d_out, 0.0, &mut d_w3);
        {
            let mut gw3 = grad_view(grad, slots[2].w, h2w, h2b);
            for (k, &c) in out_cols.iter().enumerate() {
                let mut col = gw3.column_mut(c);
                col += &d_w3.column(k);
            }
        }
        let d_b3 = d_out.sum_axis(Axis(0));
        for (k, &c) in out_cols.iter().enumerate() {
            grad[slots[2].b + c] += d_b3[k];
        }

        let mut d_h2 = Array2::<f64>::zeros(pass.h2.raw_dim());
        general_mat_mul(1.0, &d_out, &pass.w3.t(), 0.0, &mut d_h2);
        let d_z2 = &d_h2 * &pass.z2.mapv(|z| act.derivative(z));

        let (w2, _) = self.view(&slots[1]);
        {
            let mut gw2 = grad_view(grad, slots[1].w, slots[1].n_in, slots[1].n_out);
            general_mat_mul(1.0, &pass.h1.t(), &d_z2, 1.0, &mut gw2);
        }
        add_into(&mut grad[slots[1].b..slots[1].b + slots[1].n_out], &d_z2.sum_axis(Axis(0)));

        let mut d_h1 = Array2::<f64>::zeros(pass.h1.raw_dim());
        general_mat_mul(1.0, &d_z2, &w2.t(), 0.0, &mut d_h1);
        let d_z1 = &d_h1 * &pass.z1.mapv(|z| act.derivative(z));

        {
            let mut gw1 = grad_view(grad, slots[0].w, slots[0].n_in, slots[0].n_out);
            for (i, row) in x.0.iter().enumerate() {
                let dz = d_z1.row(i);
                for &(j, xj) in row {
                    gw1.row_mut(j).scaled_add(xj, &dz);
                }
            }
        }
        add_into(&mut grad[slots[0].b..slots[0].b + slots[0].n_out], &d_z1.sum_axis(Axis(0)));
    }
}

fn broadcast_rows(b: &ArrayView1<'_, f64>, n: usize) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((n, b.len()));
    for mut row in m.rows_mut() {
        row.assign(b);
    }
    m
}

fn grad_view(grad: &mut [f64], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut grad[off..off + rows * cols]).expect("layout")
}

fn add_into(dst: &mut [f64], src: &Array1<f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

/// Softmax over unmasked entries after substituting [`MASKED_LOGIT`] for
/// masked ones. Masked entries come out exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let subst: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l } else { MASKED_LOGIT })
        .collect();
    let max = subst.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = subst.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    for (v, &m) in p.iter_mut().zip(mask) {
        *v = if m { *v / z } else { 0.0 };
    }
    p
}

/// Draws an action by inverse CDF. Masked slots have probability zero and
/// are never returned.
pub fn sample_action<R: Rng + ?Sized>(output: &PolicyOutput, rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in output.probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(i);
            if u < acc {
                return (i, p.ln());
            }
        }
    }
    // Rounding left `acc` just below one.
    let i = last.expect("at least one unmasked action");
    (i, output.probs[i].ln())
}

/// Highest-probability unmasked action; ties go to the lowest index.
pub fn greedy_action(output: &PolicyOutput) -> (usize, f64) {
    let mut best = None;
    for (i, &p) in output.probs.iter().enumerate() {
        if p > 0.0 && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((i, p));
        }
    }
    let (i, p) = best.expect("at least one unmasked action");
    (i, p.ln())
}

pub const CHECKPOINT_FORMAT: &str = "dsn-sched-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized policy: architecture, provenance and the flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub init_seed: u64,
    pub iteration: usize,
    pub env_steps: usize,
    pub eval_reward_mean: f64,
    pub n_params: usize,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(net: &ActorCritic, init_seed: u64, iteration: usize, env_steps: usize, eval_reward_mean: f64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: net.architecture().clone(),
            init_seed,
            iteration,
            env_steps,
            eval_reward_mean,
            n_params: net.n_params(),
            params: net.params().to_vec(),
        }
    }

    pub fn network(&self) -> Result<ActorCritic> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        ActorCritic::from_params(self.architecture.clone(), self.params.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_arch(n_actions: usize) -> Architecture {
        Architecture {
            obs_dim: 7,
            hidden: [6, 5],
            n_actions,
            activation: Activation::Silu,
            input_scale: 0.5,
        }
    }

    #[test]
    fn zero_params_give_uniform_policy() {
        let net = ActorCritic::zeros(toy_arch(4));
        let out = net.forward(&[1.0; 7], &[true, false, true, true]).unwrap();
        assert_eq!(out.value, 0.0);
        for (i, &p) in out.probs.iter().enumerate() {
            if i == 1 {
                assert_eq!(p, 0.0);
            } else {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_unmasked_action_is_certain() {
        let net = ActorCritic::new(toy_arch(4), 3);
        let out = net.forward(&[0.3; 7], &[false, false, true, false]).unwrap();
        assert_eq!(out.probs, vec![0.0, 0.0, 1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_action(&out, &mut rng), (2, 0.0));
    }

    #[test]
    fn all_masked_is_a_contract_violation() {
        let net = ActorCritic::new(toy_arch(3), 0);
        assert!(matches!(net.forward(&[0.0; 7], &[false; 3]), Err(Error::Contract(_))));
        assert!(matches!(net.forward(&[0.0; 6], &[true; 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn act_matches_forward_on_unmasked_entries() {
        let net = ActorCritic::new(toy_arch(5), 11);
        let obs = [0.0, 2.0, 0.0, -1.0, 3.0, 0.0, 0.5];
        let mask = [true, false, true, true, false];
        let full = net.forward(&obs, &mask).unwrap();
        let fast = net.act(&obs, &mask).unwrap();
        assert_eq!(full.value, fast.value);
        for i in 0..5 {
            assert!((full.probs[i] - fast.probs[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn greedy_picks_highest_probability() {
        let out = PolicyOutput {
            logits: vec![0.0; 4],
            value: 0.0,
            probs: vec![0.2, 0.0, 0.5, 0.3],
        };
        assert_eq!(greedy_action(&out).0, 2);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = ActorCritic::new(toy_arch(4), 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        Checkpoint::new(&net, 9, 3, 100, 1.5).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().network().unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn checkpoint_rejects_wrong_length() {
        let net = ActorCritic::new(toy_arch(4), 9);
        let mut ck = Checkpoint::new(&net, 9, 0, 0, 0.0);
        ck.params.pop();
        assert!(matches!(ck.network(), Err(Error::Config(_))));
    }

    #[test]
    fn default_architecture_shape() {
        let arch = Architecture::for_problem(500);
        assert_eq!(arch.obs_dim, 518);
        let net = ActorCritic::zeros(arch);
        let actor = 518 * 256 + 256 + 256 * 256 + 256 + 256 * 500 + 500;
        let critic = 518 * 256 + 256 + 256 * 256 + 256 + 256 + 1;
        assert_eq!(net.n_params(), actor + critic);
        assert_eq!(net.actor_param_range(), 0..actor);
    }

    fn finite_difference_check(coef: LossCoefficients, seed: u64) {
        let arch = toy_arch(5);
        let net = ActorCritic::new(arch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let masks = [
            [true, true, false, true, false],
            [false, true, true, true, true],
            [true, false, false, false, true],
        ];
        let obs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..7).map(|j| if j == 2 { 0.0 } else { rng.random_range(-2.0..2.0) }).collect())
            .collect();
        let old: Vec<PolicyOutput> = (0..3).map(|i| net.forward(&obs[i], &masks[i]).unwrap()).collect();
        let actions = [3, 2, 4];
        let batch: Vec<SampleRef<'_>> = (0..3)
            .map(|i| SampleRef {
                obs: &obs[i],
                mask: &masks[i],
                action: actions[i],
                advantage: [1.3, -0.7, 0.4][i],
                value_target: [0.5, -1.0, 2.0][i],
                old_log_prob: old[i].probs[actions[i]].ln() + [0.05, -0.1, 0.02][i],
                old_value: old[i].value + 0.01,
                old_probs: Some(&old[i].probs),
            })
            .collect();
        let (_, grad) = net.loss_and_grad(&batch, &coef).unwrap();
        let h = 1e-6;
        for (k, &g) in grad.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let numeric =
                (plus.loss(&batch, &coef).unwrap().total - minus.loss(&batch, &coef).unwrap().total) / (2.0 * h);
            let err = (numeric - g).abs() / (numeric.abs() + g.abs()).max(1e-4);
            assert!(err < 1e-5, "param {k}: analytic {g} numeric {numeric}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        finite_difference_check(LossCoefficients::default(), 1);
        finite_difference_check(
            LossCoefficients {
                clip_epsilon: 0.2,
                value_coef: 0.5,
                entropy_coef: 0.05,
                value_clip: Some(10.0),
            },
            2,
        );
    }

    #[test]
    fn value_loss_leaves_actor_gradient_zero() {
        let net = ActorCritic::new(toy_arch(3), 5);
        let obs = [1.0, 0.0, 2.0, 0.0, -1.0, 0.5, 0.0];
        let mask = [true, true, false];
        let out = net.forward(&obs, &mask).unwrap();
        let sample = SampleRef {
            obs: &obs,
            mask: &mask,
            action: 0,
            advantage: 0.0,
            value_target: 3.0,
            old_log_prob: out.probs[0].ln(),
            old_value: out.value,
            old_probs: None,
        };
        let (_, grad) = net.loss_and_grad(&[sample], &LossCoefficients::default()).unwrap();
        assert!(grad[net.actor_param_range()].iter().all(|&g| g == 0.0));
        assert!(grad[net.actor_param_range().end..].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn masked_softmax_matches_renormalised_softmax() {
        let logits = [0.3, 5.0, -1.2, 0.0];
        let mask = [true, false, true, true];
        let p = masked_softmax(&logits, &mask);
        let z: f64 = [0.3f64, -1.2, 0.0].iter().map(|l| l.exp()).sum();
        assert_eq!(p[1], 0.0);
        for i in [0, 2, 3] {
            assert!((p[i] - logits[i].exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_is_zero_against_itself() {
        let net = ActorCritic::new(toy_arch(4), 8);
        let obs = [0.5; 7];
        let mask = [true, true, true, false];
        let out = net.forward(&obs, &mask).unwrap();
        let sample = SampleRef {
            obs: &obs,
            mask: &mask,
            action: 1,
            advantage: 1.0,
            value_target: 0.0,
            old_log_prob: out.probs[1].ln(),
            old_value: out.value,
            old_probs: Some(&out.probs),
        };
        let stats = net.loss(&[sample], &LossCoefficients::default()).unwrap();
        assert!(stats.kl.abs() < 1e-15);
        assert_eq!(stats.clip_fraction, 0.0);
        assert!((stats.policy_loss + 1.0).abs() < 1e-12);
    }
}
