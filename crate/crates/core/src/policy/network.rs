use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_top_p_mask, PolicyError, PolicyParams};

/// Token ids of a question and of each candidate item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub question: Vec<usize>,
    pub items: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Item(usize),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub action: Action,
    /// Log-probability under the behavior policy (top-p masked when sampling
    /// with a mask).
    pub logp: f64,
    /// Log-probability of the same action under the unmasked policy.
    pub logp_unmasked: f64,
    pub logp_ref: f64,
    pub value: f64,
    /// STOP taken because no candidate remained; carries no decision.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<EpisodeStep>,
    pub selected: BTreeSet<usize>,
    pub task_reward: f64,
}

impl EpisodeTrace {
    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn logp_total(&self) -> f64 {
        self.steps.iter().map(|s| s.logp).sum()
    }

    pub fn logp_ref_total(&self) -> f64 {
        self.steps.iter().map(|s| s.logp_ref).sum()
    }
}

/// Mean of the embeddings of `tokens`.
pub fn encode_tokens(params: &PolicyParams, tokens: &[usize]) -> Vec<f64> {
    let d = params.dim;
    let mut out = vec![0.0; d];
    for &t in tokens {
        for (o, e) in out.iter_mut().zip(params.embedding_row(t)) {
            *o += e;
        }
    }
    if !tokens.is_empty() {
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `xᵀ A` for row-major `d × d` A.
fn vec_mat(x: &[f64], a: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, m) in out.iter_mut().zip(&a[i * d..(i + 1) * d]) {
            *o += xi * m;
        }
    }
    out
}

/// `A y` for row-major `d × d` A.
fn mat_vec(a: &[f64], y: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|i| dot(&a[i * d..(i + 1) * d], y)).collect()
}

fn log_softmax(scores: &[f64]) -> Result<Vec<f64>, PolicyError> {
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(PolicyError::Numerical(format!("non-finite score {s}")));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(scores.iter().map(|s| s - lse).collect())
}

/// Action probabilities over `remaining` candidates followed by STOP.
pub fn step_distribution(
    params: &PolicyParams,
    q: &[f64],
    h: &[f64],
    remaining: &[&[f64]],
) -> Result<Vec<f64>, PolicyError> {
    let d = params.dim;
    let mut z = vec_mat(q, &params.query_bilinear, d);
    for (zi, x) in z.iter_mut().zip(vec_mat(h, &params.history_bilinear, d)) {
        *zi += x;
    }
    let mut scores: Vec<f64> = remaining.iter().map(|v| dot(&z, v)).collect();
    scores.push(dot(q, &params.stop_query) + dot(h, &params.stop_history) + params.stop_bias);
    Ok(log_softmax(&scores)?.into_iter().map(f64::exp).collect())
}

pub fn value_estimate(params: &PolicyParams, q: &[f64], h: &[f64]) -> f64 {
    dot(q, &params.value_query) + dot(h, &params.value_history) + params.value_bias
}

/// Shannon entropy in nats of a log-probability vector.
pub fn entropy(logp: &[f64]) -> f64 {
    -logp
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() * l })
        .sum::<f64>()
}

/// Encodings that stay fixed during an episode.
struct Context<'a> {
    params: &'a PolicyParams,
    q: Vec<f64>,
    vs: Vec<Vec<f64>>,
    qm: Vec<f64>,
    stop_q: f64,
    value_q: f64,
}

struct StepForward {
    remaining: Vec<usize>,
    h: Vec<f64>,
    z: Vec<f64>,
    logp: Vec<f64>,
    value: f64,
}

impl<'a> Context<'a> {
    fn new(params: &'a PolicyParams, enc: &EncodedInstance) -> Self {
        let q = encode_tokens(params, &enc.question);
        let vs = enc.items.iter().map(|t| encode_tokens(params, t)).collect();
        let qm = vec_mat(&q, &params.query_bilinear, params.dim);
        Context {
            params,
            stop_q: dot(&q, &params.stop_query) + params.stop_bias,
            value_q: dot(&q, &params.value_query) + params.value_bias,
            q,
            vs,
            qm,
        }
    }

    fn history(&self, selected: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.params.dim];
        if selected.is_empty() {
            return h;
        }
        for &i in selected {
            for (x, v) in h.iter_mut().zip(&self.vs[i]) {
                *x += v;
            }
        }
        let n = selected.len() as f64;
        h.iter_mut().for_each(|x| *x /= n);
        h
    }

    fn step(&self, selected: &[usize], remaining: Vec<usize>) -> Result<StepForward, PolicyError> {
        let p = self.params;
        let h = self.history(selected);
        let mut z = self.qm.clone();
        if !selected.is_empty() {
            for (zi, x) in z.iter_mut().zip(vec_mat(&h, &p.history_bilinear, p.dim)) {
                *zi += x;
            }
        }
        let mut scores: Vec<f64> = remaining.iter().map(|&j| dot(&z, &self.vs[j])).collect();
        scores.push(self.stop_q + dot(&h, &p.stop_history));
        let logp = log_softmax(&scores)?;
        let value = self.value_q + dot(&h, &p.value_history);
        if !value.is_finite() {
            return Err(PolicyError::Numerical("non-finite value estimate".into()));
        }
        Ok(StepForward {
            remaining,
            h,
            z,
            logp,
            value,
        })
    }

    /// Accumulate gradients given `dL/dscores` (`c`, STOP last) and `dL/dV`.
    /// `c_value_features` is the part of `dL/dV` passed on to the encodings.
    fn backward(
        &self,
        sf: &StepForward,
        selected: &[usize],
        c: &[f64],
        c_value: f64,
        c_value_features: f64,
        g: &mut ExampleGrad,
    ) {
        let p = self.params;
        let d = p.dim;
        let c_stop = *c.last().unwrap();
        let mut gz = vec![0.0; d];
        for (&j, &cj) in sf.remaining.iter().zip(c) {
            if cj != 0.0 {
                for (x, v) in gz.iter_mut().zip(&self.vs[j]) {
                    *x += cj * v;
                }
            }
        }
        let gp = &mut g.params;
        for i in 0..d {
            let (qi, hi) = (self.q[i], sf.h[i]);
            let row = i * d..(i + 1) * d;
            for (m, z) in gp.query_bilinear[row.clone()].iter_mut().zip(&gz) {
                *m += qi * z;
            }
            if hi != 0.0 {
                for (m, z) in gp.history_bilinear[row].iter_mut().zip(&gz) {
                    *m += hi * z;
                }
            }
        }
        let mgz = mat_vec(&p.query_bilinear, &gz, d);
        for i in 0..d {
            g.dq[i] += mgz[i] + c_stop * p.stop_query[i] + c_value_features * p.value_query[i];
            gp.stop_query[i] += c_stop * self.q[i];
            gp.stop_history[i] += c_stop * sf.h[i];
            gp.value_query[i] += c_value * self.q[i];
            gp.value_history[i] += c_value * sf.h[i];
        }
        gp.stop_bias += c_stop;
        gp.value_bias += c_value;
        for (&j, &cj) in sf.remaining.iter().zip(c) {
            if cj != 0.0 {
                for (x, z) in g.dv[j].iter_mut().zip(&sf.z) {
                    *x += cj * z;
                }
            }
        }
        if !selected.is_empty() {
            let ngz = mat_vec(&p.history_bilinear, &gz, d);
            let n = selected.len() as f64;
            let dh: Vec<f64> = (0..d)
                .map(|i| (ngz[i] + c_stop * p.stop_history[i] + c_value_features * p.value_history[i]) / n)
                .collect();
            for &i in selected {
                for (x, y) in g.dv[i].iter_mut().zip(&dh) {
                    *x += y;
                }
            }
        }
    }
}

/// Gradient of one example before embedding gradients are scattered.
struct ExampleGrad {
    params: PolicyParams,
    dq: Vec<f64>,
    dv: Vec<Vec<f64>>,
}

impl ExampleGrad {
    fn new(params: &PolicyParams, n_items: usize) -> Self {
        ExampleGrad {
            params: PolicyParams::zeros(0, params.dim),
            dq: vec![0.0; params.dim],
            dv: vec![vec![0.0; params.dim]; n_items],
        }
    }

    fn add_into(self, total: &mut PolicyParams, enc: &EncodedInstance) {
        for (a, b) in total.tensors_mut().into_iter().zip(self.params.tensors()).skip(1) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        let d = total.dim;
        let mut scatter = |tokens: &[usize], grad: &[f64]| {
            if tokens.is_empty() {
                return;
            }
            let n = tokens.len() as f64;
            for &t in tokens {
                for (x, y) in total.embedding[t * d..(t + 1) * d].iter_mut().zip(grad) {
                    *x += y / n;
                }
            }
        };
        scatter(&enc.question, &self.dq);
        for (tokens, grad) in enc.items.iter().zip(&self.dv) {
            scatter(tokens, grad);
        }
    }
}

/// One decision point while replaying an action sequence.
struct ReplayStep {
    selected: Vec<usize>,
    remaining: Vec<usize>,
    /// Position of the taken action in `remaining ++ [STOP]`.
    choice: usize,
}

fn plan(n_items: usize, actions: &[Action]) -> Result<Vec<ReplayStep>, PolicyError> {
    let mut selected = Vec::new();
    let mut taken = vec![false; n_items];
    let mut steps = Vec::new();
    for (k, &a) in actions.iter().enumerate() {
        let remaining: Vec<usize> = (0..n_items).filter(|&j| !taken[j]).collect();
        match a {
            Action::Stop => {
                if k + 1 != actions.len() {
                    return Err(PolicyError::InvalidAction("actions after STOP".into()));
                }
                let choice = remaining.len();
                steps.push(ReplayStep {
                    selected: selected.clone(),
                    remaining,
                    choice,
                });
                return Ok(steps);
            }
            Action::Item(j) => {
                if j >= n_items {
                    return Err(PolicyError::InvalidAction(format!(
                        "item {j} out of range for {n_items} candidates"
                    )));
                }
                if taken[j] {
                    return Err(PolicyError::InvalidAction(format!("item {j} selected twice")));
                }
                let choice = remaining.iter().position(|&r| r == j).unwrap();
                steps.push(ReplayStep {
                    selected: selected.clone(),
                    remaining,
                    choice,
                });
                taken[j] = true;
                selected.push(j);
            }
        }
    }
    if selected.len() == n_items {
        // exhausted: implicit forced STOP
        steps.push(ReplayStep {
            selected,
            remaining: Vec::new(),
            choice: 0,
        });
        Ok(steps)
    } else {
        Err(PolicyError::InvalidAction("sequence does not end with STOP".into()))
    }
}

/// Sum of unmasked step log-probabilities of `actions`.
pub fn sequence_logprob(
    params: &PolicyParams,
    enc: &EncodedInstance,
    actions: &[Action],
) -> Result<f64, PolicyError> {
    let ctx = Context::new(params, enc);
    let mut total = 0.0;
    for st in plan(enc.items.len(), actions)? {
        let choice = st.choice;
        let sf = ctx.step(&st.selected, st.remaining)?;
        total += sf.logp[choice];
    }
    Ok(total)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last = i;
            if u < cum {
                return i;
            }
        }
    }
    last
}

/// Run one episode. With `reference`, `logp_ref` is the unmasked
/// log-probability of each taken action under the reference parameters;
/// otherwise it equals `logp_unmasked`.
pub fn sample_episode(
    params: &PolicyParams,
    reference: Option<&PolicyParams>,
    enc: &EncodedInstance,
    mode: DecodeMode,
    top_p: Option<f64>,
    rng: &mut impl Rng,
) -> Result<EpisodeTrace, PolicyError> {
    let ctx = Context::new(params, enc);
    let ref_ctx = reference.map(|r| Context::new(r, enc));
    let n = enc.items.len();
    let mut selected = Vec::new();
    let mut steps = Vec::new();
    loop {
        let remaining: Vec<usize> = (0..n).filter(|j| !selected.contains(j)).collect();
        let forced = remaining.is_empty();
        let sf = ctx.step(&selected, remaining.clone())?;
        let probs: Vec<f64> = sf.logp.iter().map(|l| l.exp()).collect();
        let (choice, logp) = match mode {
            DecodeMode::Greedy => {
                let c = argmax(&probs);
                (c, sf.logp[c])
            }
            DecodeMode::Sample => match top_p {
                Some(p) if p < 1.0 => {
                    let masked = apply_top_p_mask(&probs, p);
                    let c = sample_index(&masked, rng);
                    (c, masked[c].ln())
                }
                _ => {
                    let c = sample_index(&probs, rng);
                    (c, sf.logp[c])
                }
            },
        };
        let logp_ref = match &ref_ctx {
            Some(rc) => rc.step(&selected, remaining.clone())?.logp[choice],
            None => sf.logp[choice],
        };
        let action = if choice == remaining.len() {
            Action::Stop
        } else {
            Action::Item(remaining[choice])
        };
        steps.push(EpisodeStep {
            action,
            logp,
            logp_unmasked: sf.logp[choice],
            logp_ref,
            value: sf.value,
            forced,
        });
        match action {
            Action::Stop => break,
            Action::Item(j) => selected.push(j),
        }
    }
    Ok(EpisodeTrace {
        steps,
        selected: selected.into_iter().collect(),
        task_reward: 0.0,
    })
}

fn sum_grads(
    params: &PolicyParams,
    parts: Vec<(f64, ExampleGrad)>,
    encs: &[&EncodedInstance],
) -> (f64, PolicyParams) {
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for ((l, g), enc) in parts.into_iter().zip(encs) {
        loss += l;
        g.add_into(&mut total, enc);
    }
    (loss, total)
}

/// Mean negative log-likelihood of gold action sequences and its gradient.
pub fn sft_loss_and_grad(
    params: &PolicyParams,
    batch: &[(&EncodedInstance, &[Action])],
) -> Result<(f64, PolicyParams), PolicyError> {
    if batch.is_empty() {
        return Ok((0.0, params.zeros_like()));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts = batch
        .par_iter()
        .map(|(enc, actions)| {
            let ctx = Context::new(params, enc);
            let mut g = ExampleGrad::new(params, enc.items.len());
            let mut loss = 0.0;
            for st in plan(enc.items.len(), actions)? {
                let choice = st.choice;
                let selected = st.selected.clone();
                let sf = ctx.step(&st.selected, st.remaining)?;
                if sf.remaining.is_empty() {
                    continue;
                }
                loss -= sf.logp[choice] * scale;
                let c: Vec<f64> = sf
                    .logp
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (l.exp() - f64::from(k == choice)) * scale)
                    .collect();
                ctx.backward(&sf, &selected, &c, 0.0, 0.0, &mut g);
            }
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let encs: Vec<&EncodedInstance> = batch.iter().map(|(e, _)| *e).collect();
    let (loss, grad) = sum_grads(params, parts, &encs);
    if !loss.is_finite() || !grad.is_finite() {
        return Err(PolicyError::Numerical("non-finite SFT loss or gradient".into()));
    }
    Ok((loss, grad))
}

/// One episode prepared for a PPO update. Per-step slices cover every
/// step of `actions` including a trailing forced STOP, which is ignored.
#[derive(Debug, Clone, Copy)]
pub struct PpoSample<'a> {
    pub enc: &'a EncodedInstance,
    pub actions: &'a [Action],
    pub old_logp: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLossConfig {
    pub clip_epsilon: f64,
    pub value_loss_coef: f64,
    pub entropy_coef: f64,
    /// When false the value loss trains only the value head and the
    /// returned gradient omits its path through the shared embeddings.
    pub value_grad_to_encoder: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoLossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub steps: usize,
}

/// Clipped surrogate plus value and entropy terms, averaged over the
/// non-forced steps of `batch`.
pub fn ppo_loss_and_grad(
    params: &PolicyParams,
    batch: &[PpoSample<'_>],
    cfg: &PpoLossConfig,
) -> Result<(PpoLossStats, PolicyParams), PolicyError> {
    let plans = batch
        .iter()
        .map(|s| {
            let p = plan(s.enc.items.len(), s.actions)?;
            if s.old_logp.len() < p.len() || s.advantages.len() < p.len() || s.returns.len() < p.len()
            {
                return Err(PolicyError::InvalidAction("per-step arrays too short".into()));
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let n_steps: usize = plans
        .iter()
        .map(|p| p.iter().filter(|s| !s.remaining.is_empty()).count())
        .sum();
    if n_steps == 0 {
        return Ok((PpoLossStats::default(), params.zeros_like()));
    }
    let scale = 1.0 / n_steps as f64;
    let (lo, hi) = (1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    let parts = batch
        .par_iter()
        .zip(plans)
        .map(|(s, steps)| {
            let ctx = Context::new(params, s.enc);
            let mut g = ExampleGrad::new(params, s.enc.items.len());
            let mut stats = PpoLossStats::default();
            for (k, st) in steps.into_iter().enumerate() {
                if st.remaining.is_empty() {
                    continue;
                }
                let choice = st.choice;
                let selected = st.selected.clone();
                let sf = ctx.step(&st.selected, st.remaining)?;
                let adv = s.advantages[k];
                let ratio = (sf.logp[choice] - s.old_logp[k]).exp();
                let surr1 = ratio * adv;
                let surr2 = ratio.clamp(lo, hi) * adv;
                // d(-min)/d(logp_a): flows only through the unclipped branch
                let g_logp = if surr1 <= surr2 { -adv * ratio } else { 0.0 };
                if surr1 > surr2 {
                    stats.clip_fraction += 1.0;
                }
                let h = entropy(&sf.logp);
                let verr = sf.value - s.returns[k];
                stats.policy_loss -= surr1.min(surr2) * scale;
                stats.value_loss += verr * verr * scale;
                stats.entropy += h * scale;
                let c: Vec<f64> = sf
                    .logp
                    .iter()
                    .enumerate()
                    .map(|(j, &l)| {
                        let p = l.exp();
                        let d_pg = g_logp * (f64::from(j == choice) - p);
                        let d_ent = if p > 0.0 { cfg.entropy_coef * p * (l + h) } else { 0.0 };
                        (d_pg + d_ent) * scale
                    })
                    .collect();
                let c_value = 2.0 * cfg.value_loss_coef * verr * scale;
                let c_features = if cfg.value_grad_to_encoder { c_value } else { 0.0 };
                ctx.backward(&sf, &selected, &c, c_value, c_features, &mut g);
            }
            Ok((stats, g))
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let mut total = PpoLossStats {
        steps: n_steps,
        ..Default::default()
    };
    let mut grad = params.zeros_like();
    for ((st, g), s) in parts.into_iter().zip(batch) {
        total.policy_loss += st.policy_loss;
        total.value_loss += st.value_loss;
        total.entropy += st.entropy;
        total.clip_fraction += st.clip_fraction;
        g.add_into(&mut grad, s.enc);
    }
    total.clip_fraction *= scale;
    total.loss = total.policy_loss + cfg.value_loss_coef * total.value_loss
        - cfg.entropy_coef * total.entropy;
    if !total.loss.is_finite() || !grad.is_finite() {
        return Err(PolicyError::Numerical("non-finite PPO loss or gradient".into()));
    }
    Ok((total, grad))
}
