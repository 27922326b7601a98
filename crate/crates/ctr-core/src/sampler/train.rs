//! Training loops: the adversarial sampler (pre-train D, then alternate one
//! discriminator and one generator step per positive batch, annealing the
//! temperature each epoch) and the baseline samplers behind one entry point.
//!
//! Randomness is split over tagged ChaCha streams derived from the run seed:
//! `init_d` / `init_g` for weight init, `pretrain_draw` for warm-up draws,
//! `train_draw` for candidate draws and policy selections (consumed in batch
//! order, one positive at a time), `tau_random` for the diagnostic
//! permutations, and the minibatch shuffle stream keyed by epoch. Identical
//! configs replay bit-for-bit.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use rand_chacha::ChaCha12Rng;

use crate::adam::{AdamHyper, AdamState};
use crate::data::{Dataset, MinibatchIter, Sample};
use crate::error::{Error, Result};
use crate::evaluation::{auc, kendall_tau, EpochMetrics};
use crate::model::{pairwise_hinge, pointwise_loss, ModelDims, ModelParams};
use crate::rng;
use crate::sampler::{
    compute_penalty, compute_reward, draw_candidates, embed_parts, policy_graph, policy_select,
    under_sample_build, uniform_sample, update_baseline, GeneratorState, ItemPool, RewardConfig,
    RewardMode, SamplerKind, UserIndex,
};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub sampler: SamplerKind,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    /// Both learning rates halve every this many epochs (0 disables).
    pub lr_halve_every: usize,
    pub gamma: f64,
    pub lambda_i: f64,
    pub lambda_h: f64,
    /// Candidate-set size C.
    pub candidates: usize,
    pub t0: f64,
    pub t_decay: f64,
    /// Policy samples per positive, K.
    pub k_samples: usize,
    /// Warm-up epochs for the discriminator before adversarial training.
    pub pre_epochs: usize,
    /// Evaluate the test AUC every this many epochs (0: final epoch only;
    /// the final epoch is always evaluated when test data is present).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Rgan,
            epochs: 50,
            steps_per_epoch: 30,
            lr_d: 0.02,
            lr_g: 0.01,
            lr_halve_every: 10,
            gamma: 1.0,
            lambda_i: 3.0,
            lambda_h: 5.0,
            candidates: 20,
            t0: 20.0,
            t_decay: 0.98,
            k_samples: 1,
            pre_epochs: 2,
            eval_every: 1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_epoch == 0 {
            return Err(Error::Config("steps per epoch must be >= 1".into()));
        }
        if self.lr_d <= 0.0 || self.lr_g <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Config("hinge margin must be positive".into()));
        }
        if self.lambda_i < 0.0 || self.lambda_h < 0.0 {
            return Err(Error::Config("penalty coefficients must be nonnegative".into()));
        }
        if self.candidates == 0 {
            return Err(Error::Config("candidate size must be >= 1".into()));
        }
        if self.k_samples == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if self.t0 <= 0.0 || !(0.0 < self.t_decay && self.t_decay <= 1.0) {
            return Err(Error::Config("temperature must be positive with decay in (0, 1]".into()));
        }
        Ok(())
    }

    fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        if self.lr_halve_every == 0 {
            base
        } else {
            base * 0.5f64.powi((epoch / self.lr_halve_every) as i32)
        }
    }

    fn reward_config(&self) -> RewardConfig {
        match self.sampler {
            SamplerKind::RganScoreOnly => RewardConfig {
                lambda_i: 0.0,
                lambda_h: 0.0,
                mode: RewardMode::WithNegatives,
                include_score: true,
            },
            SamplerKind::RganPenaltyOnly => RewardConfig {
                lambda_i: self.lambda_i,
                lambda_h: self.lambda_h,
                mode: RewardMode::WithNegatives,
                include_score: false,
            },
            SamplerKind::IrganStyle => RewardConfig {
                lambda_i: self.lambda_i,
                lambda_h: self.lambda_h,
                mode: RewardMode::WithoutNegatives,
                include_score: true,
            },
            _ => RewardConfig {
                lambda_i: self.lambda_i,
                lambda_h: self.lambda_h,
                mode: RewardMode::WithNegatives,
                include_score: true,
            },
        }
    }
}

/// One row of the per-step metrics log. Adversarial-only columns are `None`
/// for the baseline samplers; the AUC snapshot is the batch-level AUC of the
/// scores seen by this step's loss, when both classes are present.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub epoch: usize,
    pub step: usize,
    pub d_loss: f64,
    pub g_surrogate: Option<f64>,
    pub mean_reward: Option<f64>,
    pub baseline: Option<f64>,
    pub temperature: Option<f64>,
    pub train_auc_snapshot: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutput {
    /// Final discriminator.
    pub model: ModelParams,
    /// Best test-AUC checkpoint: (epoch, auc, params). Present when test
    /// data was supplied and at least one epoch was evaluated.
    pub best: Option<(usize, f64, ModelParams)>,
    pub steps: Vec<StepRow>,
    pub epochs: Vec<EpochMetrics>,
    pub batch_size: usize,
    pub realized_steps_per_epoch: usize,
}

impl TrainOutput {
    pub fn final_test_auc(&self) -> Option<f64> {
        self.epochs.iter().rev().find_map(|e| e.test_auc)
    }
}

/// Full test-set AUC under the current discriminator.
pub fn evaluate_auc(model: &ModelParams, ds: &Dataset) -> Result<f64> {
    let mut scores = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    for s in ds.positives.iter().chain(&ds.negatives) {
        scores.push(model.score_sample(s)?);
        labels.push(s.label);
    }
    auc(&scores, &labels)
}

/// Train with the configured sampler. `test` drives the per-epoch AUC series
/// and best-checkpoint tracking.
pub fn train(
    train_ds: &Dataset,
    test: Option<&Dataset>,
    dims: &ModelDims,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    dims.validate()?;
    if train_ds.positives.is_empty() || train_ds.negatives.is_empty() {
        return Err(Error::Validation(
            "training needs at least one positive and one negative".into(),
        ));
    }
    match cfg.sampler {
        SamplerKind::Pointwise => train_pointwise(train_ds, test, dims, cfg, false),
        SamplerKind::UnderSample1to5 => train_pointwise(train_ds, test, dims, cfg, true),
        SamplerKind::Uniform | SamplerKind::UserFixed => {
            train_simple_pairwise(train_ds, test, dims, cfg)
        }
        _ => adversarial_train(train_ds, test, dims, cfg),
    }
}

struct Loop<'a> {
    cfg: &'a TrainConfig,
    test: Option<&'a Dataset>,
    adam_d: AdamState,
    steps: Vec<StepRow>,
    epochs: Vec<EpochMetrics>,
    best: Option<(usize, f64, ModelParams)>,
}

impl<'a> Loop<'a> {
    fn new(cfg: &'a TrainConfig, test: Option<&'a Dataset>, d: &ModelParams) -> Self {
        let mut hyper = AdamHyper::default();
        hyper.alpha = cfg.lr_d;
        Self {
            cfg,
            test,
            adam_d: AdamState::new(d.params(), hyper),
            steps: Vec::new(),
            epochs: Vec::new(),
            best: None,
        }
    }

    fn should_eval(&self, epoch: usize) -> bool {
        if self.test.is_none() {
            return false;
        }
        let last = epoch + 1 == self.cfg.epochs;
        last || (self.cfg.eval_every > 0 && (epoch + 1) % self.cfg.eval_every == 0)
    }

    fn finish_epoch(
        &mut self,
        epoch: usize,
        d: &ModelParams,
        mean_reward: Option<f64>,
        tau: Option<f64>,
        tau_random: Option<f64>,
    ) -> Result<()> {
        let epoch_rows: Vec<&StepRow> =
            self.steps.iter().filter(|r| r.epoch == epoch).collect();
        let d_loss = if epoch_rows.is_empty() {
            0.0
        } else {
            epoch_rows.iter().map(|r| r.d_loss).sum::<f64>() / epoch_rows.len() as f64
        };
        let test_auc = if self.should_eval(epoch) {
            let a = evaluate_auc(d, self.test.unwrap())?;
            let better = self.best.as_ref().is_none_or(|(_, b, _)| a > *b);
            if better {
                self.best = Some((epoch, a, d.clone()));
            }
            Some(a)
        } else {
            None
        };
        self.epochs.push(EpochMetrics { epoch, test_auc, d_loss, mean_reward, tau, tau_random });
        Ok(())
    }
}

fn derive_batch(count: usize, steps: usize) -> (usize, usize) {
    let batch = count.div_ceil(steps).max(1);
    let realized = count.div_ceil(batch);
    (batch, realized)
}

/// One discriminator step over (positive, negative) pairs: batch-mean hinge,
/// Adam update. Returns the mean loss and the pre-update scores.
fn d_step(
    d: &mut ModelParams,
    adam: &mut AdamState,
    pairs: &[(&Sample, &Sample)],
    gamma: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let mut hinges = Vec::with_capacity(pairs.len());
    let mut pos_scores = Vec::with_capacity(pairs.len());
    let mut neg_scores = Vec::with_capacity(pairs.len());
    for (pos, neg) in pairs {
        let pv = d.embed_sample(&mut tape, pos)?;
        let nv = d.embed_sample(&mut tape, neg)?;
        let fp = d.score(&mut tape, pv.e_s)?;
        let fneg = d.score(&mut tape, nv.e_s)?;
        pos_scores.push(tape.scalar(fp)?);
        neg_scores.push(tape.scalar(fneg)?);
        hinges.push(pairwise_hinge(&mut tape, fp, fneg, gamma)?);
    }
    let stacked = tape.stack_scalars(&hinges)?;
    let total = tape.sum(stacked);
    let loss = tape.scale_shift(total, 1.0 / pairs.len() as f64, 0.0);
    let loss_value = tape.scalar(loss)?;
    tape.backward(loss, d.params_mut())?;
    adam.step(d.params_mut());
    Ok((loss_value, pos_scores, neg_scores))
}

fn snapshot_auc(pos_scores: &[f64], neg_scores: &[f64]) -> Option<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return None;
    }
    let scores: Vec<f64> = pos_scores.iter().chain(neg_scores).copied().collect();
    let labels: Vec<bool> = core::iter::repeat(true)
        .take(pos_scores.len())
        .chain(core::iter::repeat(false).take(neg_scores.len()))
        .collect();
    auc(&scores, &labels).ok()
}

/// Uniform and user-fixed pairwise training.
fn train_simple_pairwise(
    train_ds: &Dataset,
    test: Option<&Dataset>,
    dims: &ModelDims,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    let mut d = ModelParams::init(dims.clone(), rng::subseed(cfg.seed, "init_d"))?;
    let mut state = Loop::new(cfg, test, &d);
    let mut draw_rng = rng::stream(cfg.seed, "train_draw");
    let user_index = (cfg.sampler == SamplerKind::UserFixed)
        .then(|| UserIndex::build(&train_ds.negatives));

    let (batch_size, realized) = derive_batch(train_ds.positives.len(), cfg.steps_per_epoch);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(cfg.lr_d, epoch);
        state.adam_d.set_alpha(lr);
        for (step, batch) in
            MinibatchIter::new(train_ds.positives.len(), batch_size, cfg.seed, epoch)?.enumerate()
        {
            let mut pairs = Vec::with_capacity(batch.len());
            for &pi in &batch {
                let pos = &train_ds.positives[pi];
                let ni = match &user_index {
                    Some(index) => index.draw(pos, train_ds.negatives.len(), &mut draw_rng)?,
                    None => uniform_sample(train_ds.negatives.len(), &mut draw_rng)?,
                };
                pairs.push((pos, &train_ds.negatives[ni]));
            }
            let (d_loss, ps, ns) = d_step(&mut d, &mut state.adam_d, &pairs, cfg.gamma)?;
            state.steps.push(StepRow {
                epoch,
                step,
                d_loss,
                g_surrogate: None,
                mean_reward: None,
                baseline: None,
                temperature: None,
                train_auc_snapshot: snapshot_auc(&ps, &ns),
            });
        }
        state.finish_epoch(epoch, &d, None, None, None)?;
    }
    Ok(TrainOutput {
        model: d,
        best: state.best,
        steps: state.steps,
        epochs: state.epochs,
        batch_size,
        realized_steps_per_epoch: realized,
    })
}

/// Pointwise training over all samples (optionally 1:5 under-sampled).
fn train_pointwise(
    train_ds: &Dataset,
    test: Option<&Dataset>,
    dims: &ModelDims,
    cfg: &TrainConfig,
    under_sample: bool,
) -> Result<TrainOutput> {
    let working;
    let ds: &Dataset = if under_sample {
        let mut rng = rng::stream(cfg.seed, "under_sample");
        let (reduced, _applied) = under_sample_build(train_ds, 5, &mut rng);
        working = reduced;
        &working
    } else {
        train_ds
    };
    let all: Vec<&Sample> = ds.positives.iter().chain(&ds.negatives).collect();

    let mut d = ModelParams::init(dims.clone(), rng::subseed(cfg.seed, "init_d"))?;
    let mut state = Loop::new(cfg, test, &d);
    let (batch_size, realized) = derive_batch(all.len(), cfg.steps_per_epoch);
    for epoch in 0..cfg.epochs {
        state.adam_d.set_alpha(cfg.lr_at(cfg.lr_d, epoch));
        for (step, batch) in
            MinibatchIter::new(all.len(), batch_size, cfg.seed, epoch)?.enumerate()
        {
            let mut tape = Tape::new();
            let mut scored = Vec::with_capacity(batch.len());
            let mut pos_scores = Vec::new();
            let mut neg_scores = Vec::new();
            for &i in &batch {
                let s = all[i];
                let vars = d.embed_sample(&mut tape, s)?;
                let f = d.score(&mut tape, vars.e_s)?;
                let value = tape.scalar(f)?;
                if s.label {
                    pos_scores.push(value);
                } else {
                    neg_scores.push(value);
                }
                scored.push((f, s.label));
            }
            let sum_loss = pointwise_loss(&mut tape, &scored)?;
            let loss = tape.scale_shift(sum_loss, 1.0 / batch.len() as f64, 0.0);
            let d_loss = tape.scalar(loss)?;
            tape.backward(loss, d.params_mut())?;
            state.adam_d.step(d.params_mut());
            state.steps.push(StepRow {
                epoch,
                step,
                d_loss,
                g_surrogate: None,
                mean_reward: None,
                baseline: None,
                temperature: None,
                train_auc_snapshot: snapshot_auc(&pos_scores, &neg_scores),
            });
        }
        state.finish_epoch(epoch, &d, None, None, None)?;
    }
    Ok(TrainOutput {
        model: d,
        best: state.best,
        steps: state.steps,
        epochs: state.epochs,
        batch_size,
        realized_steps_per_epoch: realized,
    })
}

/// Candidate negatives for one step, either borrowed from the observed
/// negatives or owned target swaps.
enum StepCandidates<'a> {
    Observed(Vec<Vec<usize>>, &'a [Sample]),
    Swapped(Vec<Vec<Sample>>),
}

impl<'a> StepCandidates<'a> {
    fn refs(&self, positive_idx: usize) -> Vec<&Sample> {
        match self {
            StepCandidates::Observed(idx, pool) => {
                idx[positive_idx].iter().map(|&i| &pool[i]).collect()
            }
            StepCandidates::Swapped(owned) => owned[positive_idx].iter().collect(),
        }
    }
}

/// The adversarial training loop: pre-train D with its negative source, then
/// per batch draw candidates, select via the generator policy, step D on the
/// hinge, compute post-update rewards, step G on the REINFORCE surrogate and
/// refresh the baseline; anneal T after every epoch.
pub fn adversarial_train(
    train_ds: &Dataset,
    test: Option<&Dataset>,
    dims: &ModelDims,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    if !cfg.sampler.is_adversarial() {
        return Err(Error::Contract(format!(
            "adversarial_train called with sampler {}",
            cfg.sampler
        )));
    }
    let reward_cfg = cfg.reward_config();
    reward_cfg.validate()?;
    let swaps = cfg.sampler == SamplerKind::IrganStyle;
    let item_pool = swaps.then(|| ItemPool::build(train_ds));

    let mut d = ModelParams::init(dims.clone(), rng::subseed(cfg.seed, "init_d"))?;
    let mut generator = GeneratorState::new(
        ModelParams::init(dims.clone(), rng::subseed(cfg.seed, "init_g"))?,
        cfg.t0,
        cfg.t_decay,
    )?;
    let mut state = Loop::new(cfg, test, &d);
    let mut hyper_g = AdamHyper::default();
    hyper_g.alpha = cfg.lr_g;
    let mut adam_g = AdamState::new(generator.model.params(), hyper_g);

    let (batch_size, realized) = derive_batch(train_ds.positives.len(), cfg.steps_per_epoch);

    // Pre-training: warm the discriminator up on its own negative source so
    // scores and embeddings mean something before they drive rewards.
    {
        let mut pre_rng = rng::stream(cfg.seed, "pretrain_draw");
        for pre_epoch in 0..cfg.pre_epochs {
            state.adam_d.set_alpha(cfg.lr_d);
            let pre_seed = rng::subseed(cfg.seed, "pretrain");
            for batch in
                MinibatchIter::new(train_ds.positives.len(), batch_size, pre_seed, pre_epoch)?
            {
                let mut owned: Vec<Sample> = Vec::new();
                let mut pairs: Vec<(usize, usize)> = Vec::new();
                for &pi in &batch {
                    let pos = &train_ds.positives[pi];
                    match &item_pool {
                        Some(pool) => {
                            owned.push(pool.swap_target(pos, &mut pre_rng));
                            pairs.push((pi, owned.len() - 1));
                        }
                        None => {
                            let ni = uniform_sample(train_ds.negatives.len(), &mut pre_rng)?;
                            pairs.push((pi, ni));
                        }
                    }
                }
                let pair_refs: Vec<(&Sample, &Sample)> = pairs
                    .iter()
                    .map(|&(pi, ni)| {
                        let neg =
                            if swaps { &owned[ni] } else { &train_ds.negatives[ni] };
                        (&train_ds.positives[pi], neg)
                    })
                    .collect();
                d_step(&mut d, &mut state.adam_d, &pair_refs, cfg.gamma)?;
            }
        }
    }

    let mut draw_rng = rng::stream(cfg.seed, "train_draw");
    let mut tau_rng = rng::stream(cfg.seed, "tau_random");

    for epoch in 0..cfg.epochs {
        state.adam_d.set_alpha(cfg.lr_at(cfg.lr_d, epoch));
        adam_g.set_alpha(cfg.lr_at(cfg.lr_g, epoch));
        let mut epoch_rewards: Vec<f64> = Vec::new();
        let mut last_batch: Vec<usize> = Vec::new();
        let mut last_cands: Option<StepCandidates<'_>> = None;

        for (step, batch) in
            MinibatchIter::new(train_ds.positives.len(), batch_size, cfg.seed, epoch)?.enumerate()
        {
            // 1. Candidates and policy selection (generator forward only).
            let cands: StepCandidates<'_> = match &item_pool {
                Some(pool) => StepCandidates::Swapped(
                    batch
                        .iter()
                        .map(|&pi| {
                            (0..cfg.candidates)
                                .map(|_| pool.swap_target(&train_ds.positives[pi], &mut draw_rng))
                                .collect()
                        })
                        .collect(),
                ),
                None => StepCandidates::Observed(
                    batch
                        .iter()
                        .map(|_| {
                            draw_candidates(
                                train_ds.negatives.len(),
                                cfg.candidates,
                                &mut draw_rng,
                            )
                        })
                        .collect::<Result<_>>()?,
                    &train_ds.negatives,
                ),
            };
            let mut selections: Vec<Vec<usize>> = Vec::with_capacity(batch.len());
            for (bi, &pi) in batch.iter().enumerate() {
                let refs = cands.refs(bi);
                let probs = super::policy_distribution(
                    &generator.model,
                    &train_ds.positives[pi],
                    &refs,
                    generator.temperature,
                )?;
                selections.push(
                    (0..cfg.k_samples)
                        .map(|_| policy_select(&probs, &mut draw_rng))
                        .collect(),
                );
            }

            // 2. One discriminator step over all selected pairs.
            let mut pair_refs: Vec<(&Sample, &Sample)> = Vec::new();
            for (bi, &pi) in batch.iter().enumerate() {
                let refs = cands.refs(bi);
                for &k in &selections[bi] {
                    pair_refs.push((&train_ds.positives[pi], refs[k]));
                }
            }
            let (d_loss, ps, ns) = d_step(&mut d, &mut state.adam_d, &pair_refs, cfg.gamma)?;

            // 3. Rewards from the post-update discriminator.
            let mut rewards: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
            for (bi, &pi) in batch.iter().enumerate() {
                let refs = cands.refs(bi);
                let pos_parts = embed_parts(&d, &train_ds.positives[pi])?;
                let mut per_k = Vec::with_capacity(cfg.k_samples);
                for &k in &selections[bi] {
                    let neg_parts = embed_parts(&d, refs[k])?;
                    per_k.push(compute_reward(&reward_cfg, &pos_parts, &neg_parts));
                }
                rewards.push(per_k);
            }

            // 4. Generator step on the REINFORCE surrogate, baseline from the
            //    previous batch, rewards treated as constants.
            let baseline = generator.baseline;
            let mut surrogate_sum = 0.0;
            for (bi, &pi) in batch.iter().enumerate() {
                let refs = cands.refs(bi);
                let mut tape = Tape::new();
                let graph = policy_graph(
                    &mut tape,
                    &generator.model,
                    &train_ds.positives[pi],
                    &refs,
                    generator.temperature,
                )?;
                let log_probs = tape.log_softmax(graph.logits);
                let mut terms = Vec::with_capacity(cfg.k_samples);
                for (ki, &k) in selections[bi].iter().enumerate() {
                    let lp = tape.index_scalar(log_probs, k)?;
                    let advantage = rewards[bi][ki] - baseline;
                    terms.push(tape.scale_shift(lp, advantage, 0.0));
                }
                let stacked = tape.stack_scalars(&terms)?;
                let total = tape.sum(stacked);
                let surrogate = tape.scale_shift(total, 1.0 / cfg.k_samples as f64, 0.0);
                surrogate_sum += tape.scalar(surrogate)?;
                let loss = tape.scale_shift(surrogate, -1.0, 0.0);
                tape.backward(loss, generator.model.params_mut())?;
            }
            adam_g.step(generator.model.params_mut());

            // 5. Baseline refresh for the next batch.
            let flat: Vec<f64> = rewards.iter().flatten().copied().collect();
            let mean_reward = update_baseline(&flat)?;
            generator.baseline = mean_reward;
            epoch_rewards.push(mean_reward);

            state.steps.push(StepRow {
                epoch,
                step,
                d_loss,
                g_surrogate: Some(surrogate_sum / batch.len() as f64),
                mean_reward: Some(mean_reward),
                baseline: Some(baseline),
                temperature: Some(generator.temperature),
                train_auc_snapshot: snapshot_auc(&ps, &ns),
            });
            last_batch = batch;
            last_cands = Some(cands);
        }

        // Epoch diagnostics on the final step's candidates.
        let (tau, tau_random) = match &last_cands {
            Some(cands) => {
                let positives: Vec<&Sample> =
                    last_batch.iter().map(|&pi| &train_ds.positives[pi]).collect();
                let sets: Vec<Vec<&Sample>> =
                    (0..positives.len()).map(|bi| cands.refs(bi)).collect();
                let (t, tr) = tau_diagnostic(&d, &positives, &sets, &reward_cfg, &mut tau_rng)?;
                (Some(t), Some(tr))
            }
            None => (None, None),
        };
        let mean_reward = (!epoch_rewards.is_empty())
            .then(|| epoch_rewards.iter().sum::<f64>() / epoch_rewards.len() as f64);
        state.finish_epoch(epoch, &d, mean_reward, tau, tau_random)?;
        generator.anneal();
    }

    Ok(TrainOutput {
        model: d,
        best: state.best,
        steps: state.steps,
        epochs: state.epochs,
        batch_size,
        realized_steps_per_epoch: realized,
    })
}

/// Batch-averaged Kendall tau between the candidates' discriminator-score
/// ranking and their negative-penalty ranking, plus the same score ranking
/// against a seeded random permutation.
pub fn tau_diagnostic(
    d: &ModelParams,
    positives: &[&Sample],
    candidate_sets: &[Vec<&Sample>],
    reward_cfg: &RewardConfig,
    tau_rng: &mut ChaCha12Rng,
) -> Result<(f64, f64)> {
    if positives.is_empty() || positives.len() != candidate_sets.len() {
        return Err(Error::Contract("tau diagnostic needs aligned, nonempty batches".into()));
    }
    let mut tau_sum = 0.0;
    let mut tau_rand_sum = 0.0;
    for (pos, cands) in positives.iter().zip(candidate_sets) {
        if cands.len() < 2 {
            // a singleton ranking has no pairs; count it as all ties
            continue;
        }
        let pos_parts = embed_parts(d, pos)?;
        let mut scores = Vec::with_capacity(cands.len());
        let mut neg_penalties = Vec::with_capacity(cands.len());
        for c in cands {
            let parts = embed_parts(d, c)?;
            scores.push(parts.score);
            neg_penalties.push(-compute_penalty(reward_cfg, &pos_parts, &parts));
        }
        tau_sum += kendall_tau(&scores, &neg_penalties)?;

        let mut perm: Vec<f64> = (0..cands.len()).map(|i| i as f64).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(tau_rng);
        tau_rand_sum += kendall_tau(&scores, &perm)?;
    }
    let n = positives.len() as f64;
    Ok((tau_sum / n, tau_rand_sum / n))
}
