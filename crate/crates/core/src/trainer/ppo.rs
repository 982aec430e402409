use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derived_rng, evaluate_recall, shuffled, Adam, TrainError, TrainExample};
use crate::metrics::item_recall;
use crate::policy::{
    ppo_loss_and_grad, sample_episode, Action, DecodeMode, EpisodeTrace, PolicyError, PolicyModel,
    PolicyParams, PpoLossConfig, PpoLossStats, PpoSample,
};
use crate::reward::{task_reward, RewardConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub epochs_per_iter: usize,
    pub minibatch_episodes: usize,
    pub rollout_episodes_per_iter: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub value_loss_coef: f64,
    pub entropy_coef: f64,
    pub beta0: f64,
    pub k_beta: f64,
    pub kl_target: f64,
    pub top_p: f64,
    pub iterations: usize,
    pub eval_every: usize,
    /// Rescale each minibatch gradient to at most this norm.
    pub max_grad_norm: Option<f64>,
    /// Let the value loss update the shared embeddings. Off by default:
    /// the critic's pull on the embeddings moves the policy away from the
    /// reference far faster than the KL controller can react.
    pub value_grad_to_encoder: bool,
    pub reward: RewardConfig,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_epsilon: 0.2,
            epochs_per_iter: 4,
            minibatch_episodes: 32,
            rollout_episodes_per_iter: 512,
            learning_rate: 1e-3,
            discount: 1.0,
            value_loss_coef: 0.5,
            entropy_coef: 0.01,
            beta0: 1.0,
            k_beta: 0.1,
            kl_target: 0.05,
            top_p: 0.9,
            iterations: 10,
            eval_every: 3,
            max_grad_norm: None,
            value_grad_to_encoder: false,
            reward: RewardConfig::default(),
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must be in (0, 1)");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must be in (0, 1]");
        }
        if self.iterations == 0 || self.eval_every == 0 {
            return bad("iterations and eval_every must be at least 1");
        }
        if self.epochs_per_iter == 0 || self.minibatch_episodes == 0 {
            return bad("epochs_per_iter and minibatch_episodes must be positive");
        }
        if !(self.kl_target > 0.0) || !(self.beta0 >= 0.0) || !(self.learning_rate > 0.0) {
            return bad("kl_target and learning_rate must be positive, beta0 non-negative");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must be in [0, 1]");
        }
        self.reward
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }

    fn loss_config(&self) -> PpoLossConfig {
        PpoLossConfig {
            clip_epsilon: self.clip_epsilon,
            value_loss_coef: self.value_loss_coef,
            entropy_coef: self.entropy_coef,
            value_grad_to_encoder: self.value_grad_to_encoder,
        }
    }
}

/// `β (1 + K_β e)` with `e = clip((KL - target) / target, -0.2, 0.2)`.
pub fn update_beta(beta: f64, measured_kl: f64, cfg: &PpoConfig) -> f64 {
    let e = ((measured_kl - cfg.kl_target) / cfg.kl_target).clamp(-0.2, 0.2);
    beta * (1.0 + cfg.k_beta * e)
}

/// Iterations (1-based) at which validation recall is measured.
pub fn eval_iterations(cfg: &PpoConfig) -> Vec<usize> {
    (1..=cfg.iterations)
        .filter(|k| k % cfg.eval_every == 0 || *k == cfg.iterations)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub example: usize,
    pub trace: EpisodeTrace,
    /// Per-step KL penalty, with the task reward added on the last step.
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

pub struct TrainState {
    pub iteration: usize,
    pub beta: f64,
    pub reference: PolicyParams,
    pub params: PolicyParams,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub beta: f64,
    pub next_beta: f64,
    pub mean_kl: f64,
    pub mean_task_reward: f64,
    pub mean_return: f64,
    pub mean_episode_length: f64,
    pub rollout_recall: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub valid_recall: Option<f64>,
    pub rolled_back: bool,
}

/// Sample `n` episodes with top-p masking. Episode `i` reads example
/// `perm[i % len]` and uses its own RNG stream, so results do not depend
/// on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    params: &PolicyParams,
    reference: &PolicyParams,
    beta: f64,
    examples: &[TrainExample],
    n: usize,
    cfg: &PpoConfig,
    iteration: usize,
) -> Result<Vec<Rollout>, PolicyError> {
    if n == 0 || examples.is_empty() {
        return Ok(Vec::new());
    }
    let perm = shuffled(examples.len(), &mut derived_rng(cfg.seed, &[2, iteration as u64]));
    (0..n)
        .into_par_iter()
        .map(|i| {
            let ex_idx = perm[i % perm.len()];
            let ex = &examples[ex_idx];
            let mut rng = derived_rng(cfg.seed, &[3, iteration as u64, i as u64]);
            let mut trace = sample_episode(
                params,
                Some(reference),
                &ex.enc,
                DecodeMode::Sample,
                Some(cfg.top_p),
                &mut rng,
            )?;
            trace.task_reward = task_reward(&trace.selected, &ex.gold, &cfg.reward).task_reward;
            let mut rewards: Vec<f64> = trace
                .steps
                .iter()
                .map(|s| if s.forced { 0.0 } else { -beta * (s.logp - s.logp_ref) })
                .collect();
            *rewards.last_mut().expect("episodes end with STOP") += trace.task_reward;
            Ok(Rollout {
                example: ex_idx,
                trace,
                rewards,
                returns: Vec::new(),
                advantages: Vec::new(),
            })
        })
        .collect()
}

/// Discounted return-to-go and `return - V`, normalized over all decision
/// steps of the batch. Forced steps get zero advantage.
pub fn compute_advantages(batch: &mut [Rollout], discount: f64) {
    for r in batch.iter_mut() {
        let mut g = 0.0;
        r.returns = vec![0.0; r.rewards.len()];
        for k in (0..r.rewards.len()).rev() {
            g = r.rewards[k] + discount * g;
            r.returns[k] = g;
        }
        r.advantages = r
            .returns
            .iter()
            .zip(&r.trace.steps)
            .map(|(g, s)| g - s.value)
            .collect();
    }
    let raw: Vec<f64> = batch
        .iter()
        .flat_map(|r| r.advantages.iter().zip(&r.trace.steps))
        .filter(|(_, s)| !s.forced)
        .map(|(a, _)| *a)
        .collect();
    if raw.is_empty() {
        return;
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let std = (raw.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for r in batch.iter_mut() {
        for (a, s) in r.advantages.iter_mut().zip(&r.trace.steps) {
            *a = if s.forced || std < 1e-8 { 0.0 } else { (*a - mean) / std };
        }
    }
}

/// Mean of `logp - logp_ref` over decision steps.
pub fn measured_kl(batch: &[Rollout]) -> f64 {
    let (sum, n) = batch
        .iter()
        .flat_map(|r| r.trace.steps.iter())
        .filter(|s| !s.forced)
        .fold((0.0, 0usize), |(s, n), st| (s + st.logp - st.logp_ref, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Epochs of shuffled minibatch updates. Returns step-weighted mean loss
/// statistics.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    batch: &[Rollout],
    examples: &[TrainExample],
    cfg: &PpoConfig,
    iteration: usize,
) -> Result<PpoLossStats, PolicyError> {
    let actions: Vec<Vec<Action>> = batch.iter().map(|r| r.trace.actions()).collect();
    let old: Vec<Vec<f64>> = batch
        .iter()
        .map(|r| r.trace.steps.iter().map(|s| s.logp).collect())
        .collect();
    let loss_cfg = cfg.loss_config();
    let mut acc = PpoLossStats::default();
    let mut total_steps = 0usize;
    for epoch in 0..cfg.epochs_per_iter {
        let mut rng = derived_rng(cfg.seed, &[4, iteration as u64, epoch as u64]);
        let order = shuffled(batch.len(), &mut rng);
        for chunk in order.chunks(cfg.minibatch_episodes) {
            let samples: Vec<PpoSample<'_>> = chunk
                .iter()
                .map(|&i| PpoSample {
                    enc: &examples[batch[i].example].enc,
                    actions: &actions[i],
                    old_logp: &old[i],
                    advantages: &batch[i].advantages,
                    returns: &batch[i].returns,
                })
                .collect();
            let (stats, mut grad) = ppo_loss_and_grad(params, &samples, &loss_cfg)?;
            if stats.steps == 0 {
                continue;
            }
            if let Some(max) = cfg.max_grad_norm {
                let norm = grad.norm();
                if norm > max {
                    grad.scale(max / norm);
                }
            }
            adam.step(params, &grad);
            if !params.is_finite() {
                return Err(PolicyError::Numerical("parameters became non-finite".into()));
            }
            let w = stats.steps as f64;
            acc.loss += stats.loss * w;
            acc.policy_loss += stats.policy_loss * w;
            acc.value_loss += stats.value_loss * w;
            acc.entropy += stats.entropy * w;
            acc.clip_fraction += stats.clip_fraction * w;
            total_steps += stats.steps;
        }
    }
    if total_steps > 0 {
        let n = total_steps as f64;
        acc.loss /= n;
        acc.policy_loss /= n;
        acc.value_loss /= n;
        acc.entropy /= n;
        acc.clip_fraction /= n;
    }
    acc.steps = total_steps;
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    /// Parameters of the best validation evaluation.
    pub model: PolicyModel,
    pub final_params: PolicyParams,
    pub best_iteration: usize,
    pub history: Vec<IterationRecord>,
    pub reference: PolicyParams,
}

/// PPO from `init`, which also becomes the frozen reference. `observe` is
/// called after every iteration with its record and current parameters.
pub fn train_rl(
    init: PolicyModel,
    train: &[TrainExample],
    valid: &[TrainExample],
    cfg: &PpoConfig,
    mut observe: impl FnMut(&IterationRecord, &PolicyParams) -> Result<(), TrainError>,
) -> Result<RlOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    let evals = eval_iterations(cfg);
    let mut state = TrainState {
        iteration: 0,
        beta: cfg.beta0,
        reference: init.params.clone(),
        params: init.params.clone(),
        history: Vec::new(),
    };
    let mut adam = Adam::new(&state.params, cfg.learning_rate);
    let mut best: Option<(f64, usize, PolicyParams)> = None;
    for k in 1..=cfg.iterations {
        state.iteration = k;
        let snapshot = (state.params.clone(), adam.clone());
        let step = (|| -> Result<(Vec<Rollout>, PpoLossStats), PolicyError> {
            let mut batch = collect_rollouts(
                &state.params,
                &state.reference,
                state.beta,
                train,
                cfg.rollout_episodes_per_iter,
                cfg,
                k,
            )?;
            compute_advantages(&mut batch, cfg.discount);
            let stats = ppo_update(&mut state.params, &mut adam, &batch, train, cfg, k)?;
            Ok((batch, stats))
        })();
        let record = match step {
            Ok((batch, stats)) => {
                let kl = measured_kl(&batch);
                let n = batch.len().max(1) as f64;
                let next_beta = update_beta(state.beta, kl, cfg);
                let rec = IterationRecord {
                    iteration: k,
                    beta: state.beta,
                    next_beta,
                    mean_kl: kl,
                    mean_task_reward: batch.iter().map(|r| r.trace.task_reward).sum::<f64>() / n,
                    mean_return: batch.iter().map(|r| r.returns[0]).sum::<f64>() / n,
                    mean_episode_length: batch.iter().map(|r| r.trace.steps.len() as f64).sum::<f64>() / n,
                    rollout_recall: batch
                        .iter()
                        .map(|r| item_recall(&r.trace.selected, &train[r.example].gold))
                        .sum::<f64>()
                        / n,
                    policy_loss: stats.policy_loss,
                    value_loss: stats.value_loss,
                    entropy: stats.entropy,
                    clip_fraction: stats.clip_fraction,
                    valid_recall: None,
                    rolled_back: false,
                };
                state.beta = next_beta;
                rec
            }
            Err(PolicyError::Numerical(msg)) => {
                log::warn!("iteration {k} rolled back: {msg}");
                state.params = snapshot.0;
                adam = snapshot.1;
                IterationRecord {
                    iteration: k,
                    beta: state.beta,
                    next_beta: state.beta,
                    mean_kl: f64::NAN,
                    mean_task_reward: f64::NAN,
                    mean_return: f64::NAN,
                    mean_episode_length: f64::NAN,
                    rollout_recall: f64::NAN,
                    policy_loss: f64::NAN,
                    value_loss: f64::NAN,
                    entropy: f64::NAN,
                    clip_fraction: f64::NAN,
                    valid_recall: None,
                    rolled_back: true,
                }
            }
            Err(e) => return Err(e.into()),
        };
        let mut record = record;
        if evals.contains(&k) {
            let eval_set = if valid.is_empty() { train } else { valid };
            let recall = evaluate_recall(&state.params, eval_set)?;
            record.valid_recall = Some(recall);
            if best.as_ref().is_none_or(|(b, _, _)| recall > *b) {
                best = Some((recall, k, state.params.clone()));
            }
        }
        log::info!(
            "rl iteration {k}: reward {:.3} kl {:.4} beta {:.4} recall {:?}",
            record.mean_task_reward,
            record.mean_kl,
            record.beta,
            record.valid_recall
        );
        observe(&record, &state.params)?;
        state.history.push(record);
    }
    let (_, best_iteration, params) = best.expect("final iteration is always evaluated");
    Ok(RlOutcome {
        model: PolicyModel {
            kind: init.kind,
            vocab: init.vocab,
            params,
        },
        final_params: state.params,
        best_iteration,
        history: state.history,
        reference: state.reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{EncodedInstance, EpisodeStep};

    #[test]
    fn beta_controller_examples() {
        let cfg = PpoConfig::default();
        assert_eq!(update_beta(0.2, 0.05, &cfg), 0.2);
        assert_eq!(update_beta(0.2, 0.1, &cfg), 0.2 * (1.0 + 0.1 * 0.2));
        assert_eq!(update_beta(0.2, 0.0, &cfg), 0.2 * (1.0 - 0.1 * 0.2));
        assert!((update_beta(0.2, 0.1, &cfg) - 0.204).abs() < 1e-15);
        assert!((update_beta(0.2, 0.0, &cfg) - 0.196).abs() < 1e-15);
    }

    #[test]
    fn eval_schedule() {
        assert_eq!(eval_iterations(&PpoConfig::default()), vec![3, 6, 9, 10]);
        let cfg = PpoConfig {
            iterations: 6,
            ..Default::default()
        };
        assert_eq!(eval_iterations(&cfg), vec![3, 6]);
    }

    fn step(action: Action, logp: f64, logp_ref: f64, value: f64, forced: bool) -> EpisodeStep {
        EpisodeStep {
            action,
            logp,
            logp_unmasked: logp,
            logp_ref,
            value,
            forced,
        }
    }

    fn rollout(steps: Vec<EpisodeStep>, rewards: Vec<f64>) -> Rollout {
        Rollout {
            example: 0,
            trace: EpisodeTrace {
                steps,
                selected: Default::default(),
                task_reward: 0.0,
            },
            rewards,
            returns: vec![],
            advantages: vec![],
        }
    }

    #[test]
    fn two_step_returns() {
        // rewards: step0 penalty -0.1, step1 penalty -0.05 + task 2.0
        let mut b = vec![rollout(
            vec![
                step(Action::Item(0), -0.5, -0.4, 0.3, false),
                step(Action::Stop, -0.2, -0.1, 1.0, false),
            ],
            vec![-0.1, 1.95],
        )];
        compute_advantages(&mut b, 1.0);
        assert!((b[0].returns[0] - 1.85).abs() < 1e-12);
        assert!((b[0].returns[1] - 1.95).abs() < 1e-12);
        // raw advantages 1.55 and 0.95 normalize to +1 and -1
        assert!((b[0].advantages[0] - 1.0).abs() < 1e-12);
        assert!((b[0].advantages[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rewards_give_zero_advantages() {
        let mut b: Vec<Rollout> = (0..3)
            .map(|_| rollout(vec![step(Action::Stop, -0.1, -0.1, 0.0, false)], vec![1.0]))
            .collect();
        compute_advantages(&mut b, 1.0);
        assert!(b.iter().all(|r| r.advantages == vec![0.0]));
        assert_eq!(b[0].returns, vec![1.0]);
        assert_eq!(measured_kl(&b), 0.0);
    }

    fn toy_examples() -> Vec<TrainExample> {
        (0..6)
            .map(|i| TrainExample {
                id: i.to_string(),
                enc: EncodedInstance {
                    question: vec![1 + i % 3, 4],
                    items: vec![vec![1], vec![2], vec![3]],
                },
                gold: [i % 3].into_iter().collect(),
            })
            .collect()
    }

    #[test]
    fn rollouts_without_penalty_and_empty() {
        let p = PolicyParams::init(&crate::policy::Vocabulary::build(["a b c d e"]), 4, 3);
        let ex = toy_examples();
        let cfg = PpoConfig::default();
        let b = collect_rollouts(&p, &p, 0.0, &ex, 16, &cfg, 1).unwrap();
        assert_eq!(b.len(), 16);
        for r in &b {
            let n = r.rewards.len();
            assert!(r.rewards[..n - 1].iter().all(|&x| x == 0.0));
            assert_eq!(r.rewards[n - 1], r.trace.task_reward);
            // π = θ: the log-ratio is exactly the mask renormalization
            for s in &r.trace.steps {
                assert!((s.logp_unmasked - s.logp_ref).abs() < 1e-12);
                assert!(s.logp - s.logp_ref >= -1e-12);
                assert!(s.logp - s.logp_ref <= -(0.9f64.ln()) + 1e-12);
            }
        }
        assert!(collect_rollouts(&p, &p, 0.2, &ex, 0, &cfg, 1).unwrap().is_empty());
        assert_eq!(b, collect_rollouts(&p, &p, 0.0, &ex, 16, &cfg, 1).unwrap());
    }

    #[test]
    fn zero_advantage_update_moves_only_value_and_entropy() {
        let vocab = crate::policy::Vocabulary::build(["a b c d e"]);
        let p = PolicyParams::init(&vocab, 4, 3);
        let ex = toy_examples();
        let cfg = PpoConfig {
            entropy_coef: 0.0,
            epochs_per_iter: 1,
            ..Default::default()
        };
        let mut b = collect_rollouts(&p, &p, 0.0, &ex, 8, &cfg, 1).unwrap();
        compute_advantages(&mut b, 1.0);
        for r in &mut b {
            r.advantages.iter_mut().for_each(|a| *a = 0.0);
        }
        let mut q = p.clone();
        let mut adam = Adam::new(&q, 1e-3);
        let stats = ppo_update(&mut q, &mut adam, &b, &ex, &cfg, 1).unwrap();
        assert_eq!(stats.policy_loss, 0.0);
        assert_eq!(q.query_bilinear, p.query_bilinear);
        assert_eq!(q.stop_query, p.stop_query);
        assert_ne!(q.value_bias, p.value_bias);
    }

    #[test]
    fn rl_improves_toy_and_freezes_reference() {
        let vocab = crate::policy::Vocabulary::build(["a b c d e"]);
        let init = PolicyModel {
            kind: crate::policy::ItemKind::Columns,
            vocab,
            params: PolicyParams::init(&crate::policy::Vocabulary::build(["a b c d e"]), 8, 5),
        };
        let ex = toy_examples();
        let cfg = PpoConfig {
            rollout_episodes_per_iter: 64,
            learning_rate: 1e-2,
            iterations: 6,
            ..Default::default()
        };
        let before = init.params.clone();
        let mut seen = 0;
        let out = train_rl(init, &ex, &ex, &cfg, |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 6);
        assert_eq!(out.reference, before);
        assert_eq!(out.history.len(), 6);
        assert!(out.history.iter().all(|r| r.beta > 0.0));
        let r0 = out.history[0].mean_task_reward;
        let r5 = out.history[5].mean_task_reward;
        assert!(r5 > r0, "{r0} -> {r5}");
        let evals: Vec<usize> = out
            .history
            .iter()
            .filter(|r| r.valid_recall.is_some())
            .map(|r| r.iteration)
            .collect();
        assert_eq!(evals, vec![3, 6]);
    }
}
