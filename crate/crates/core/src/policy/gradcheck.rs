use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ppo_loss_and_grad, sample_episode, sft_loss_and_grad, Action, DecodeMode, EncodedInstance,
    PolicyError, PolicyParams, PpoLossConfig, PpoSample, TENSOR_NAMES,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensor: &'static str,
    pub index: usize,
    pub checked: usize,
}

/// Compare `analytic` with central differences of `loss` on every parameter.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn finite_difference_check(
    params: &PolicyParams,
    analytic: &PolicyParams,
    epsilon: f64,
    loss: impl Fn(&PolicyParams) -> f64,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        tensor: TENSOR_NAMES[0],
        index: 0,
        checked: 0,
    };
    let mut probe = params.clone();
    for t in 0..TENSOR_NAMES.len() {
        for i in 0..params.tensors()[t].len() {
            let orig = params.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + epsilon;
            let up = loss(&probe);
            probe.tensors_mut()[t][i] = orig - epsilon;
            let down = loss(&probe);
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.tensors()[t][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            let err = if err.is_nan() { f64::INFINITY } else { err };
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.tensor = TENSOR_NAMES[t];
                report.index = i;
            }
        }
    }
    report
}

pub fn grad_check_sft(
    params: &PolicyParams,
    batch: &[(&EncodedInstance, &[Action])],
    epsilon: f64,
) -> Result<GradCheckReport, PolicyError> {
    let (_, grad) = sft_loss_and_grad(params, batch)?;
    Ok(finite_difference_check(params, &grad, epsilon, |p| {
        sft_loss_and_grad(p, batch).map(|(l, _)| l).unwrap_or(f64::NAN)
    }))
}

/// Owned PPO inputs for gradient checking.
#[derive(Debug, Clone)]
pub struct PpoFixture {
    pub enc: EncodedInstance,
    pub actions: Vec<Action>,
    pub old_logp: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoFixture {
    /// Sample an episode from `params` with top-p masking and attach random
    /// advantages and returns. Old log-probabilities are the masked
    /// behavior values jittered so ratios fall on both sides of 1.
    pub fn sampled(params: &PolicyParams, enc: EncodedInstance, seed: u64) -> Result<Self, PolicyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = sample_episode(params, None, &enc, DecodeMode::Sample, Some(0.9), &mut rng)?;
        let n = trace.steps.len();
        Ok(PpoFixture {
            actions: trace.actions(),
            old_logp: trace
                .steps
                .iter()
                .map(|s| s.logp + rng.gen_range(-0.3..0.3))
                .collect(),
            advantages: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            returns: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            enc,
        })
    }

    pub fn sample(&self) -> PpoSample<'_> {
        PpoSample {
            enc: &self.enc,
            actions: &self.actions,
            old_logp: &self.old_logp,
            advantages: &self.advantages,
            returns: &self.returns,
        }
    }
}

pub fn grad_check_ppo(
    params: &PolicyParams,
    fixtures: &[PpoFixture],
    cfg: &PpoLossConfig,
    epsilon: f64,
) -> Result<GradCheckReport, PolicyError> {
    let batch: Vec<PpoSample<'_>> = fixtures.iter().map(PpoFixture::sample).collect();
    let (_, grad) = ppo_loss_and_grad(params, &batch, cfg)?;
    Ok(finite_difference_check(params, &grad, epsilon, |p| {
        ppo_loss_and_grad(p, &batch, cfg).map(|(s, _)| s.loss).unwrap_or(f64::NAN)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_params(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyParams::zeros(9, 4);
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = rng.gen_range(-0.8..0.8);
            }
        }
        p
    }

    fn encs() -> Vec<EncodedInstance> {
        vec![
            EncodedInstance {
                question: vec![1, 2, 2],
                items: vec![vec![3], vec![4, 5], vec![6]],
            },
            EncodedInstance {
                question: vec![7],
                items: vec![vec![8, 1], vec![0]],
            },
        ]
    }

    #[test]
    fn sft_gradients_match() {
        let p = fixture_params(1);
        let e = encs();
        let s0 = [Action::Item(2), Action::Item(0), Action::Stop];
        let s1 = [Action::Item(0), Action::Item(1)];
        let batch: Vec<(&EncodedInstance, &[Action])> = vec![(&e[0], &s0), (&e[1], &s1)];
        let r = grad_check_sft(&p, &batch, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");

        let (_, mut bad) = sft_loss_and_grad(&p, &batch).unwrap();
        bad.query_bilinear[5] *= 1.5;
        let r = finite_difference_check(&p, &bad, 1e-5, |q| sft_loss_and_grad(q, &batch).unwrap().0);
        assert!(r.max_rel_error > 1e-2);
        assert_eq!(r.tensor, "query_bilinear");
    }

    #[test]
    fn ppo_gradients_match() {
        let p = fixture_params(2);
        let fx: Vec<PpoFixture> = encs()
            .into_iter()
            .enumerate()
            .map(|(i, e)| PpoFixture::sampled(&p, e, i as u64).unwrap())
            .collect();
        let cfg = PpoLossConfig {
            clip_epsilon: 0.2,
            value_loss_coef: 0.5,
            entropy_coef: 0.01,
            value_grad_to_encoder: true,
        };
        let r = grad_check_ppo(&p, &fx, &cfg, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn detached_value_gradient_splits_cleanly() {
        let p = fixture_params(3);
        let fx: Vec<PpoFixture> = encs()
            .into_iter()
            .enumerate()
            .map(|(i, e)| PpoFixture::sampled(&p, e, 10 + i as u64).unwrap())
            .collect();
        let batch: Vec<PpoSample<'_>> = fx.iter().map(PpoFixture::sample).collect();
        let full = PpoLossConfig {
            clip_epsilon: 0.2,
            value_loss_coef: 0.5,
            entropy_coef: 0.01,
            value_grad_to_encoder: true,
        };
        let detached = PpoLossConfig {
            value_grad_to_encoder: false,
            ..full
        };
        let no_value = PpoLossConfig {
            value_loss_coef: 0.0,
            ..full
        };
        let (_, g_full) = ppo_loss_and_grad(&p, &batch, &full).unwrap();
        let (_, g_det) = ppo_loss_and_grad(&p, &batch, &detached).unwrap();
        let (_, g_pol) = ppo_loss_and_grad(&p, &batch, &no_value).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&g_det.embedding, &g_pol.embedding));
        assert!(!close(&g_det.embedding, &g_full.embedding));
        for (name, (a, b)) in TENSOR_NAMES.iter().zip(g_det.tensors().iter().zip(g_full.tensors())).skip(1) {
            assert!(close(a, b), "{name}");
        }
    }

    #[test]
    fn zero_model_is_finite() {
        let p = PolicyParams::zeros(9, 4);
        let e = encs();
        let s0 = [Action::Stop];
        let r = grad_check_sft(&p, &[(&e[0], &s0)], 1e-5).unwrap();
        assert!(r.max_rel_error.is_finite());
    }
}
