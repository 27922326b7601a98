//! Exactness of the policy-gradient machinery at enumerable scale: the
//! expectation-weighted per-action REINFORCE gradient must equal the
//! analytic gradient of the exact expected advantage, the baseline must not
//! move the expectation, and single small steps must move the policy and the
//! discriminator the right way.

use ctr_core::adam::{AdamHyper, AdamState};
use ctr_core::data::{ItemRecord, Sample, RAW_DIM};
use ctr_core::model::{pairwise_hinge, ModelDims, ModelParams};
use ctr_core::sampler::{policy_distribution, policy_graph};
use ctr_core::tape::Tape;
use ctr_core::time::decompose_timestamp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn tiny_dims() -> ModelDims {
    ModelDims {
        embed_dim: 6,
        hidden_dim: 4,
        attn_dim: 4,
        history_len: 2,
        aux_dim: 2,
        n_categories: 4,
        time_aware: true,
    }
}

fn tiny_sample(seed: u64) -> Sample {
    let dims = tiny_dims();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let base = 1_600_000_000i64;
    let mut item = |t: i64| ItemRecord {
        raw: (0..RAW_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
        time: decompose_timestamp(t).unwrap(),
        cid3: rng.random_range(1..dims.n_categories),
    };
    Sample {
        history: (0..dims.history_len)
            .map(|l| item(base - 7200 * (dims.history_len - l) as i64))
            .collect(),
        n_padded: 0,
        target: item(base),
        aux: (0..dims.aux_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        label: false,
        user: Some(seed),
    }
}

/// Gradient of `sum_k p_k * c_k` with constants `c_k`, straight through the
/// softmax graph.
fn exact_expected_gradient(
    generator: &mut ModelParams,
    positive: &Sample,
    candidates: &[&Sample],
    temperature: f64,
    constants: &[f64],
) -> Vec<f64> {
    generator.params_mut().zero_grads();
    let mut tape = Tape::new();
    let graph = policy_graph(&mut tape, generator, positive, candidates, temperature).unwrap();
    let probs = tape.softmax(graph.logits).unwrap();
    let consts = tape.input_vector(constants.to_vec());
    let weighted = tape.mul(probs, consts).unwrap();
    let objective = tape.sum(weighted);
    tape.backward(objective, generator.params_mut()).unwrap();
    let grads = generator.params_mut().flat_grads();
    generator.params_mut().zero_grads();
    grads
}

/// Expectation-weighted REINFORCE estimate: sum_k p_k * (c_k) * grad log p_k.
fn reinforce_expected_gradient(
    generator: &mut ModelParams,
    positive: &Sample,
    candidates: &[&Sample],
    temperature: f64,
    constants: &[f64],
) -> Vec<f64> {
    let probs = policy_distribution(generator, positive, candidates, temperature).unwrap();
    let mut acc = vec![0.0; generator.params().flat_len()];
    for (k, (&p_k, &c_k)) in probs.iter().zip(constants).enumerate() {
        generator.params_mut().zero_grads();
        let mut tape = Tape::new();
        let graph =
            policy_graph(&mut tape, generator, positive, candidates, temperature).unwrap();
        let log_probs = tape.log_softmax(graph.logits);
        let lp_k = tape.index_scalar(log_probs, k).unwrap();
        tape.backward(lp_k, generator.params_mut()).unwrap();
        for (a, g) in acc.iter_mut().zip(generator.params_mut().flat_grads()) {
            *a += p_k * c_k * g;
        }
    }
    generator.params_mut().zero_grads();
    acc
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

#[test]
fn reinforce_matches_the_exact_expectation_for_small_candidate_sets() {
    let positive = tiny_sample(1);
    let cands: Vec<Sample> = (2..6).map(tiny_sample).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    for c in 2..=4usize {
        let mut generator = ModelParams::init(tiny_dims(), 40 + c as u64).unwrap();
        let refs: Vec<&Sample> = cands[..c].iter().collect();
        let rewards: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
        let baseline = 0.35;
        let advantages: Vec<f64> = rewards.iter().map(|r| r - baseline).collect();

        let exact =
            exact_expected_gradient(&mut generator, &positive, &refs, 1.5, &advantages);
        let estimated =
            reinforce_expected_gradient(&mut generator, &positive, &refs, 1.5, &advantages);
        let err = max_rel_err(&exact, &estimated);
        assert!(err < 1e-6, "C={c}: REINFORCE mismatch {err}");
    }
}

#[test]
fn baseline_does_not_move_the_exact_expected_gradient() {
    let positive = tiny_sample(1);
    let cands: Vec<Sample> = (2..5).map(tiny_sample).collect();
    let refs: Vec<&Sample> = cands.iter().collect();
    let mut generator = ModelParams::init(tiny_dims(), 51).unwrap();
    let rewards = [1.25, -0.4, 0.9];
    let baseline = 0.6180339887;

    // E[grad log p * b] = b * grad sum p = 0, so shifting rewards by the
    // baseline leaves the expectation-weighted estimator unchanged.
    let with_b: Vec<f64> = rewards.iter().map(|r| r - baseline).collect();
    let est_raw =
        reinforce_expected_gradient(&mut generator, &positive, &refs, 2.0, &rewards);
    let est_shifted =
        reinforce_expected_gradient(&mut generator, &positive, &refs, 2.0, &with_b);
    let max_abs = est_raw.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-12);
    let max_diff = est_raw
        .iter()
        .zip(&est_shifted)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max_diff / max_abs < 1e-9, "baseline shifted the gradient by {max_diff}");
}

#[test]
fn centered_rewards_freeze_the_generator() {
    // r == b for every sample: the surrogate has zero gradient, so Adam
    // receives zero gradients and leaves the parameters untouched.
    let positive = tiny_sample(1);
    let cands: Vec<Sample> = (2..5).map(tiny_sample).collect();
    let refs: Vec<&Sample> = cands.iter().collect();
    let mut generator = ModelParams::init(tiny_dims(), 52).unwrap();
    let before: Vec<f64> =
        (0..generator.params().flat_len()).map(|i| generator.params().get_flat(i)).collect();

    let mut tape = Tape::new();
    let graph = policy_graph(&mut tape, &generator, &positive, &refs, 2.0).unwrap();
    let log_probs = tape.log_softmax(graph.logits);
    let lp = tape.index_scalar(log_probs, 1).unwrap();
    let advantage = 0.0; // r - b
    let term = tape.scale_shift(lp, advantage, 0.0);
    tape.backward(term, generator.params_mut()).unwrap();
    let mut adam = AdamState::new(generator.params(), AdamHyper::default());
    adam.step(generator.params_mut());

    for i in 0..before.len() {
        assert_eq!(generator.params().get_flat(i), before[i]);
    }
}

#[test]
fn rewarding_one_candidate_raises_its_probability() {
    let positive = tiny_sample(1);
    let cands: Vec<Sample> = (2..6).map(tiny_sample).collect();
    let refs: Vec<&Sample> = cands.iter().collect();
    let mut generator = ModelParams::init(tiny_dims(), 53).unwrap();
    let temperature = 1.0;
    let target_k = 2;

    let before = policy_distribution(&generator, &positive, &refs, temperature).unwrap();

    let mut tape = Tape::new();
    let graph = policy_graph(&mut tape, &generator, &positive, &refs, temperature).unwrap();
    let log_probs = tape.log_softmax(graph.logits);
    let lp = tape.index_scalar(log_probs, target_k).unwrap();
    // ascend log p of the rewarded candidate: minimize its negation
    let loss = tape.scale_shift(lp, -1.0, 0.0);
    tape.backward(loss, generator.params_mut()).unwrap();
    let mut hyper = AdamHyper::default();
    hyper.alpha = 1e-3;
    let mut adam = AdamState::new(generator.params(), hyper);
    adam.step(generator.params_mut());

    let after = policy_distribution(&generator, &positive, &refs, temperature).unwrap();
    assert!(
        after[target_k] > before[target_k],
        "probability did not increase: {} -> {}",
        before[target_k],
        after[target_k]
    );
}

#[test]
fn one_discriminator_step_widens_an_active_pair_gap() {
    let dims = tiny_dims();
    let mut d = ModelParams::init(dims, 54).unwrap();
    let pos = tiny_sample(10);
    let neg = tiny_sample(11);

    let gap = |d: &ModelParams| {
        d.score_sample(&pos).unwrap() - d.score_sample(&neg).unwrap()
    };
    let before = gap(&d);
    assert!(before < 1.0, "pair must start active for this check");

    let mut tape = Tape::new();
    let pv = d.embed_sample(&mut tape, &pos).unwrap();
    let nv = d.embed_sample(&mut tape, &neg).unwrap();
    let fp = d.score(&mut tape, pv.e_s).unwrap();
    let fneg = d.score(&mut tape, nv.e_s).unwrap();
    let loss = pairwise_hinge(&mut tape, fp, fneg, 1.0).unwrap();
    tape.backward(loss, d.params_mut()).unwrap();
    let mut hyper = AdamHyper::default();
    hyper.alpha = 1e-3;
    let mut adam = AdamState::new(d.params(), hyper);
    adam.step(d.params_mut());

    let after = gap(&d);
    assert!(after > before, "gap did not widen: {before} -> {after}");
}

#[test]
fn inactive_pairs_leave_zero_gradient() {
    let dims = tiny_dims();
    let mut d = ModelParams::init(dims, 55).unwrap();
    let pos = tiny_sample(10);
    let neg = tiny_sample(11);

    let mut tape = Tape::new();
    let pv = d.embed_sample(&mut tape, &pos).unwrap();
    let nv = d.embed_sample(&mut tape, &neg).unwrap();
    let fp = d.score(&mut tape, pv.e_s).unwrap();
    let fneg = d.score(&mut tape, nv.e_s).unwrap();
    // huge synthetic gap: shift the negative score down by a constant
    let shifted = tape.scale_shift(fneg, 1.0, -50.0);
    let loss = pairwise_hinge(&mut tape, fp, shifted, 1.0).unwrap();
    assert_eq!(tape.scalar(loss).unwrap(), 0.0);
    tape.backward(loss, d.params_mut()).unwrap();
    assert!(d.params().flat_grads().iter().all(|&g| g == 0.0));
}
